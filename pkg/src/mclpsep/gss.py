"""Geometric source separation by per-frequency gradient descent.

Cost for one frequency (``W`` is ``K x N``, ``A`` is ``N x K``)::

    C(W) = gamma/2 * ||R_S - diag(R_S)||_F^2 + 1/2 * ||W A - I||_F^2,
    R_S  = W R_Y W^H

Gradients are returned as ``dC/dRe(W) + 1j * dC/dIm(W)`` (twice the
Wirtinger derivative with respect to ``conj(W)``), which is what a central
finite difference over real and imaginary parts measures.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from .errors import ConfigError


def _h(M):
    return np.conj(np.swapaxes(M, -1, -2))


def _offdiag(M):
    K = M.shape[-1]
    return M * (1 - np.eye(K))


@dataclass
class GssState:
    """Demixing ``W`` (..., K, N), steering ``A`` (..., N, K) and input covariance."""

    W: np.ndarray
    A: np.ndarray
    gamma: float
    R_Yhat: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=complex)
        self.A = np.asarray(self.A, dtype=complex)
        self.R_Yhat = np.asarray(self.R_Yhat, dtype=complex)
        K, N = self.W.shape[-2:]
        if self.A.shape[-2:] != (N, K) or self.R_Yhat.shape[-2:] != (N, N):
            raise ConfigError("inconsistent GSS state dimensions")

    @property
    def R_S(self):
        return self.W @ self.R_Yhat @ _h(self.W)


def gss_cost(state):
    E = _offdiag(state.R_S)
    K = state.W.shape[-2]
    M = state.W @ state.A - np.eye(K)
    gamma = np.asarray(state.gamma)
    return 0.5 * gamma * np.sum(np.abs(E) ** 2, axis=(-2, -1)) + \
        0.5 * np.sum(np.abs(M) ** 2, axis=(-2, -1))


def gss_gradient(state):
    E = _offdiag(state.R_S)
    K = state.W.shape[-2]
    M = state.W @ state.A - np.eye(K)
    gamma = np.asarray(state.gamma)[..., None, None]
    return 2 * gamma * (E @ state.W @ state.R_Yhat) + M @ _h(state.A)


@dataclass
class GssResult:
    W: np.ndarray          # (F, K, N)
    separated: np.ndarray  # (K, S, F)
    cost: np.ndarray       # (F,)
    steps: np.ndarray      # (F,)
    warning: bool = False


def gss_solve(data, steering, gamma=0.1, max_steps=500, tol=1e-6, history=False):
    """Per-bin gradient descent from the delay-and-sum start ``A^H / N``.

    Parameters
    ----------
    data : ndarray, shape (N, S, F)
        Multichannel STFT (e.g. MCLP outputs).
    steering : ndarray, shape (F, N, K)
        Manifold vectors of the estimated directions at every bin.
    gamma : float
        Weight of the decorrelation term relative to the geometric term.
        It is divided per bin by ``||R_Y||_F^2`` so the balance does not
        depend on signal level.

    Step sizes follow the Barzilai-Borwein rule, starting from
    ``1 / (lambda_max(A^H A) + 4 gamma ||W0||^2)``. A step that does not
    decrease the cost is rejected and the step size halved, so accepted costs
    never increase; bins whose step size underflows keep their best iterate
    and set the warning flag.
    """
    Y = np.asarray(data, dtype=complex)
    N, S, F = Y.shape
    A = np.asarray(steering, dtype=complex)
    if A.shape[:2] != (F, N):
        raise ConfigError("steering must have shape (F, N, K)")
    K = A.shape[-1]
    if K >= N:
        raise ConfigError("GSS needs fewer sources than microphones")
    Yf = Y.transpose(2, 0, 1)                      # (F, N, S)
    R = Yf @ _h(Yf) / S
    rnorm2 = np.sum(np.abs(R) ** 2, axis=(1, 2))
    g = np.where(rnorm2 > 0, gamma / np.where(rnorm2 > 0, rnorm2, 1.0), 0.0)

    W = _h(A) / N
    state = GssState(W, A, g, R)
    cost = gss_cost(state)
    grad = gss_gradient(state)
    lmax = np.linalg.eigvalsh(_h(A) @ A)[:, -1]
    mu0 = 1.0 / (lmax + 4 * gamma * np.sum(np.abs(W) ** 2, axis=(1, 2)))
    mu = mu0.copy()
    steps = np.zeros(F, dtype=int)
    stalled = np.zeros(F, dtype=bool)
    trace = [cost.copy()] if history else None

    for _ in range(max_steps):
        gnorm = np.sqrt(np.sum(np.abs(grad) ** 2, axis=(1, 2)))
        active = (gnorm > tol) & ~stalled
        if not active.any():
            break
        trial = W - mu[:, None, None] * grad
        tstate = GssState(trial, A, g, R)
        tcost = gss_cost(tstate)
        accept = active & (tcost <= cost)
        tgrad = gss_gradient(tstate)
        # Barzilai-Borwein step for the next iterate of accepted bins
        dW, dG = trial - W, tgrad - grad
        curv = np.sum((np.conj(dW) * dG).real, axis=(1, 2))
        bb = np.sum(np.abs(dW) ** 2, axis=(1, 2)) / np.where(curv > 0, curv, 1.0)
        W = np.where(accept[:, None, None], trial, W)
        cost = np.where(accept, tcost, cost)
        grad = np.where(accept[:, None, None], tgrad, grad)
        steps += accept
        reject = active & ~accept
        mu = np.where(reject, mu / 2, np.where(accept & (curv > 0), bb, mu))
        stalled |= mu < mu0 * 1e-12
        if history:
            trace.append(cost.copy())

    warn = bool(stalled.any())
    if warn:
        warnings.warn(f"GSS step size underflow in {int(stalled.sum())} bins",
                      RuntimeWarning, stacklevel=2)
    separated = (W @ Yf).transpose(1, 2, 0)        # (K, S, F)
    result = GssResult(W, separated, cost, steps, warn)
    if history:
        result.history = np.stack(trace)
    return result
