"""Multichannel linear prediction with a reweighted l1 residual penalty.

For one frequency bin the reference band ``y_r`` is predicted from delayed
copies of all bands,

    y_r(s) - sum_i sum_l y_i(s - d - l) u_i(l),

and the weights ``u`` minimise the weighted l1 norm of that residual. The
problem ``min ||z||_w s.t. z = y_r - X u`` is solved by relaxed
Douglas-Rachford splitting; the weights ``w`` are refreshed every ``M``
iterations as ``eps / (eps + |z|)``.

The data matrix ``X`` contains every channel (the reference included), so it
is shared by all reference choices at a given bin. The solver therefore runs
all references of a bin together as the columns of one right-hand side.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import os

import numpy as np

from .errors import ConfigError, NumericalError
from .stft import ComplexSpectrogram


@dataclass(frozen=True)
class MclpParams:
    """Solver settings; ``lam`` is the relaxation parameter (``lambda``)."""

    d: int = 2
    L: int = 30
    M: int = 50
    alpha: float = 0.05
    lam: float = 0.5
    epsilon: float = None
    max_iters: int = 2000
    tol: float = 1e-7

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.L < 1:
            raise ConfigError("L must be >= 1")
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if not 0 < self.lam < 1:
            raise ConfigError("lambda must lie in (0, 1)")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")

    def taps_for(self, n_frames):
        """Taps actually used for bands of ``n_frames`` samples."""
        if n_frames <= self.d:
            raise ConfigError(
                f"band length {n_frames} must exceed the prediction delay d={self.d}"
            )
        if n_frames <= self.d + self.L:
            return max(1, (n_frames - self.d) // 2)
        return self.L


@dataclass
class MclpSolution:
    weights: np.ndarray      # (N, L)
    residual: np.ndarray     # (S,)
    reference: int
    omega: int = None
    iterations: int = 0
    objective: np.ndarray = field(default=None)


def soft(z, t):
    """Complex soft threshold: shrink ``|z|`` by ``t``, keep the phase."""
    z = np.asarray(z)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("threshold must be non-negative")
    mag = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        gain = np.where(mag > t, 1.0 - t / np.where(mag > 0, mag, 1.0), 0.0)
    out = z * gain
    return out.item() if out.ndim == 0 else out


def weighted_l1(z, w):
    return np.sum(w * np.abs(z), axis=-2)


def build_data_matrix(bands, params):
    """``X[s, i*L + l] = y_i(s - d - l)``; zero outside the band."""
    bands = np.atleast_2d(np.asarray(bands))
    S = bands.shape[-1]
    if S <= params.d:
        raise ConfigError(f"band length {S} must exceed the prediction delay d={params.d}")
    return _data_matrices(bands[None], params.d, params.L)[0]


def _data_matrices(bands, d, L):
    """Batched data matrices: bands ``(F, N, S)`` -> ``(F, S, N*L)``."""
    F, N, S = bands.shape
    X = np.zeros((F, S, N, L), dtype=complex)
    for lag in range(L):
        shift = d + lag
        if shift < S:
            X[:, shift:, :, lag] = bands[:, :, :S - shift].transpose(0, 2, 1)
    return X.reshape(F, S, N * L)


def prediction_residual(bands, weights, r, d):
    """Linear prediction residual ``y_r - X u`` for given per-channel taps ``(N, L)``."""
    bands = np.atleast_2d(np.asarray(bands, dtype=complex))
    weights = np.atleast_2d(np.asarray(weights, dtype=complex))
    X = _data_matrices(bands[None], d, weights.shape[1])[0]
    return bands[r] - X @ weights.reshape(-1)


def _auto_epsilon(Y):
    """``1e-3 * median|y_r|`` per (bin, reference), with fallbacks for sparse bands."""
    mag = np.abs(Y)
    eps = 1e-3 * np.median(mag, axis=1)
    fallback = 1e-3 * np.mean(mag, axis=1)
    eps = np.where(eps > 0, eps, fallback)
    return np.where(eps > 0, eps, 1.0)


def _douglas_rachford(X, Y, params, eps, trace=False, bin_ids=None, ref_ids=None):
    """Run the splitting iterations for a batch.

    X : (F, S, P) data matrices; Y : (F, S, R) reference bands; eps : (F, R).
    Returns ``(u, residual, iterations, objective_trace)``.
    """
    F, S, P = X.shape
    R = Y.shape[-1]
    XH = np.ascontiguousarray(np.conj(X).swapaxes(1, 2))
    gram = XH @ X
    gram[:, np.arange(P), np.arange(P)] += 1.0
    # (I + X^H X) factorised once, inverse reused every iteration
    chol = np.linalg.cholesky(gram)
    chol_inv = np.linalg.inv(chol)
    B = np.conj(chol_inv).swapaxes(1, 2) @ chol_inv

    lam, alpha = params.lam, params.alpha
    eps = eps[:, None, :]
    u = np.zeros((F, P, R), dtype=complex)
    z = Y.copy()
    w = np.ones(Y.shape)
    active = np.ones((F, R), dtype=bool)
    iterations = np.zeros((F, R), dtype=int)
    history = [] if trace else None

    for it in range(1, params.max_iters + 1):
        zt = 2 * soft(z, alpha * w) - z
        ut = B @ (u + XH @ (Y - zt))
        z_new = (1 - lam) * z + lam * (2 * (Y - X @ ut) - zt)
        u_new = (1 - 2 * lam) * u + 2 * lam * ut

        du = np.linalg.norm(u_new - u, axis=1)
        dz = np.linalg.norm(z_new - z, axis=1)
        done = (du <= params.tol * np.linalg.norm(u, axis=1)) & (
            dz <= params.tol * np.linalg.norm(z, axis=1))

        mask = active[:, None, :]
        u = np.where(mask, u_new, u)
        z = np.where(mask, z_new, z)
        iterations[active] = it

        if it % params.M == 0:
            w = np.where(mask, eps / (eps + np.abs(z)), w)
            bad = ~(np.isfinite(z).all(axis=1) & np.isfinite(u).all(axis=1))
            if bad.any():
                f, r = np.argwhere(bad)[0]
                b = int(bin_ids[f]) if bin_ids is not None else int(f)
                ref = int(ref_ids[r]) if ref_ids is not None else int(r)
                raise NumericalError(
                    f"non-finite iterate at iteration {it}, bin {b}, reference {ref}",
                    iteration=it, bin=b, reference=ref)
        if trace:
            history.append(weighted_l1(Y - X @ u, w))
        active &= ~done
        if not active.any():
            break

    residual = soft(z, alpha * w)
    objective = np.stack(history) if trace else None
    return u, residual, iterations, objective


def solve_band(bands, r, params=None, trace=False):
    """Dereverb one frequency band with reference channel ``r``.

    Parameters
    ----------
    bands : array_like, shape (N, S)
        Complex STFT coefficients of every channel at one frequency.
    r : int
        Reference channel index.
    params : MclpParams
    trace : bool
        Record the weighted l1 objective of ``y_r - X u`` at each iteration.
    """
    params = params or MclpParams()
    bands = np.atleast_2d(np.asarray(bands, dtype=complex))
    if not np.all(np.isfinite(bands)):
        raise ConfigError("bands contain non-finite values")
    N, S = bands.shape
    if not 0 <= r < N:
        raise ConfigError(f"reference {r} out of range for {N} channels")
    L = params.taps_for(S)
    out = _solve_batch(bands[None], [r], replace(params, L=L), trace=trace)
    u, residual, iters, obj = out
    return MclpSolution(
        weights=u[0, :, 0].reshape(N, L),
        residual=residual[0, :, 0],
        reference=r,
        iterations=int(iters[0, 0]),
        objective=None if obj is None else obj[:, 0, 0],
    )


def _solve_batch(bands, refs, params, trace=False, bin_ids=None):
    """bands ``(F, N, S)`` -> weights, residuals ``(F, S, R)``, iterations, traces."""
    F, N, S = bands.shape
    refs = list(refs)
    scale = np.sqrt(np.mean(np.abs(bands) ** 2, axis=(1, 2)))
    live = scale > 0
    P = N * params.L
    u = np.zeros((F, P, len(refs)), dtype=complex)
    residual = np.zeros((F, S, len(refs)), dtype=complex)
    iterations = np.zeros((F, len(refs)), dtype=int)
    objective = None
    if live.any():
        norm = bands[live] / scale[live, None, None]
        X = _data_matrices(norm, params.d, params.L)
        Y = np.ascontiguousarray(norm[:, refs, :].transpose(0, 2, 1))
        if params.epsilon is None:
            eps = _auto_epsilon(Y)
        else:
            eps = np.broadcast_to(params.epsilon / scale[live, None], (Y.shape[0], len(refs)))
        ids = None if bin_ids is None else np.asarray(bin_ids)[live]
        u_l, res_l, it_l, obj_l = _douglas_rachford(
            X, Y, params, np.array(eps, dtype=float), trace=trace, bin_ids=ids, ref_ids=refs)
        u[live] = u_l
        residual[live] = res_l * scale[live, None, None]
        iterations[live] = it_l
        if trace:
            objective = np.zeros((obj_l.shape[0], F, len(refs)))
            objective[:, live] = obj_l
    return u, residual, iterations, objective


@dataclass
class DereverbResult:
    spectrogram: ComplexSpectrogram
    weights: np.ndarray = None       # (bins, N_refs, N, L)
    iterations: np.ndarray = None    # (bins, N_refs)
    objective: dict = None           # bin -> (iters, N_refs)


def dereverb_all_refs(spec, params=None, bins=None, refs=None, workers=None,
                      chunk=16, trace=False):
    """Apply MCLP at every bin for every reference microphone.

    Parameters
    ----------
    spec : ComplexSpectrogram
        Multichannel spectrogram, data shape ``(N, S, F)``.
    bins : sequence of int, optional
        Bins to process; the others are copied through unchanged.
    refs : sequence of int, optional
        Reference microphones (default: all). Output channel ``j`` holds the
        residual for ``refs[j]``.
    workers : int, optional
        Threads for bin chunks. Results do not depend on ``workers`` or
        ``chunk``.

    Returns
    -------
    DereverbResult
    """
    params = params or MclpParams()
    data = np.asarray(spec.data)
    if data.ndim != 3:
        raise ConfigError("expected a multichannel spectrogram with shape (N, S, F)")
    N, S, F = data.shape
    refs = list(range(N)) if refs is None else [int(r) for r in refs]
    for r in refs:
        if not 0 <= r < N:
            raise ConfigError(f"reference {r} out of range for {N} channels")
    bins = np.arange(F) if bins is None else np.asarray(sorted(set(int(b) for b in bins)))
    L = params.taps_for(S)
    run = replace(params, L=L)

    out = data[refs].copy()
    weights = np.zeros((F, len(refs), N, L), dtype=complex)
    iterations = np.zeros((F, len(refs)), dtype=int)
    objective = {} if trace else None

    chunks = [bins[i:i + chunk] for i in range(0, len(bins), chunk)]

    def work(idx):
        sub = np.ascontiguousarray(data[:, :, idx].transpose(2, 0, 1))
        try:
            return _solve_batch(sub, refs, run, trace=trace, bin_ids=idx)
        except NumericalError as exc:
            raise NumericalError(f"MCLP failed: {exc}", exc.iteration, exc.bin,
                                 exc.reference) from exc

    if workers is None:
        workers = os.cpu_count() or 1
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    for idx, (u, residual, iters, obj) in zip(chunks, results):
        out[:, :, idx] = residual.transpose(2, 1, 0)
        weights[idx] = u.reshape(len(idx), N, L, len(refs)).transpose(0, 3, 1, 2)
        iterations[idx] = iters
        if trace:
            for j, b in enumerate(idx):
                objective[int(b)] = obj[:, j, :]

    return DereverbResult(spec.with_data(out), weights, iterations, objective)
