"""Soft-threshold post-filter driven by a per-cell residual variance estimate.

The variance estimate is the weighted residual statistic that is unbiased for
the variance of the minimum-variance unbiased linear combiner (see
:func:`umvu_weights` and :func:`umvu_variance_estimate`).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .mclp import soft


@dataclass(frozen=True)
class PostfilterParams:
    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("post-filter alpha must be positive")


def estimate_variance(Yhat, W_row, a, S_i):
    """``1/(N-1) * sum_n |W_n| * |Yhat_n - a_n * S_i|^2`` over the last axis of ``Yhat``."""
    Yhat = np.asarray(Yhat, dtype=complex)
    N = Yhat.shape[-1]
    if N < 2:
        raise ConfigError("variance estimate needs at least two channels")
    W_row = np.asarray(W_row)
    a = np.asarray(a)
    if W_row.shape[-1] != N or a.shape[-1] != N:
        raise ConfigError("inconsistent lengths")
    resid = Yhat - a * np.asarray(S_i)[..., None]
    return np.sum(np.abs(W_row) * np.abs(resid) ** 2, axis=-1) / (N - 1)


def postfilter_variances(data, W, steering, separated):
    """Variance grid ``(K, S, F)`` for GSS outputs.

    ``data`` is ``(N, S, F)``, ``W`` is ``(F, K, N)``, ``steering`` is
    ``(F, N, K)`` and ``separated`` is ``(K, S, F)``.
    """
    Y = np.asarray(data).transpose(2, 1, 0)            # (F, S, N)
    K = W.shape[1]
    out = np.empty(np.shape(separated))
    for i in range(K):
        a = steering[:, None, :, i]                    # (F, 1, N)
        Wi = W[:, None, i, :]                          # (F, 1, N)
        Si = np.asarray(separated[i]).T                # (F, S)
        out[i] = estimate_variance(Y, Wi, a, Si).T
    return out


def apply_postfilter(S, variances, params=None):
    """``soft(S, alpha * sqrt(variance))`` cell by cell."""
    params = params or PostfilterParams()
    S = np.asarray(S)
    variances = np.asarray(variances, dtype=float)
    if S.shape != variances.shape:
        raise ConfigError("variance grid must match the separated spectrogram")
    if np.any(variances < 0):
        raise ConfigError("variances must be non-negative")
    return soft(S, params.alpha * np.sqrt(variances))


@dataclass
class UmvuModel:
    """Observations ``Y_n = c_n * gamma + u_n * Z_n`` with ``|c_n| = 1``."""

    c: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=complex)
        self.u = np.asarray(self.u, dtype=complex)
        if self.c.shape != self.u.shape or self.c.ndim != 1:
            raise ConfigError("c and u must be vectors of equal length")
        if not np.allclose(np.abs(self.c), 1.0, atol=1e-12):
            raise ConfigError("c must have unit-modulus entries")
        if np.any(self.u == 0):
            raise ConfigError("noise scales must be non-zero")

    @property
    def beta(self):
        return 1.0 / np.sum(np.abs(self.u) ** -2.0)


def umvu_weights(model):
    return np.conj(model.c) * model.beta * np.abs(model.u) ** -2.0


def umvu_variance_estimate(model, Y):
    """Unbiased estimate of ``var(gamma_hat)`` from observations ``Y`` (..., N)."""
    Y = np.asarray(Y, dtype=complex)
    N = model.c.size
    if N < 2:
        raise ConfigError("need at least two observations")
    w = umvu_weights(model)
    gamma_hat = Y @ w
    return estimate_variance(Y, w, model.c, gamma_hat)


def umvu_estimate(model, Y):
    return np.asarray(Y, dtype=complex) @ umvu_weights(model)
