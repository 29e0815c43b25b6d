"""Wideband MUSIC (incoherent signal subspace) direction-of-arrival estimation."""

from dataclasses import dataclass, field
import warnings

import numpy as np
from scipy.signal import find_peaks

from .errors import ConfigError
from .geometry import wrap_angle


@dataclass
class CovarianceTracker:
    """Recursively smoothed spatial covariance, one ``N x N`` matrix per bin."""

    R: np.ndarray
    eta: float = 0.95

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ConfigError("eta must lie in [0, 1]")
        self.R = np.asarray(self.R, dtype=complex)

    @classmethod
    def zeros(cls, n_bins, n_mics, eta=0.95):
        return cls(np.zeros((n_bins, n_mics, n_mics), dtype=complex), eta)


def update_covariance(tracker, frame, omega=None):
    """Blend the outer product of ``frame`` into the tracker.

    ``frame`` has shape ``(N,)`` for a single-bin tracker, or ``(F, N)``;
    ``omega`` selects a single bin of a multi-bin tracker.
    """
    frame = np.asarray(frame, dtype=complex)
    R = tracker.R
    if omega is not None:
        R = R[omega]
    if frame.shape[-1] != R.shape[-1]:
        raise ConfigError("frame length must equal the number of microphones")
    outer = frame[..., :, None] * np.conj(frame[..., None, :])
    new = (1 - tracker.eta) * outer + tracker.eta * R
    if omega is None:
        return CovarianceTracker(new, tracker.eta)
    full = tracker.R.copy()
    full[omega] = new
    return CovarianceTracker(full, tracker.eta)


def track_covariances(spec_data, eta=0.95):
    """Covariances for every frame: data ``(N, S, F)`` -> ``(S, F, N, N)``."""
    N, S, F = spec_data.shape
    out = np.empty((S, F, N, N), dtype=complex)
    R = np.zeros((F, N, N), dtype=complex)
    for s in range(S):
        frame = spec_data[:, s, :].T
        R = (1 - eta) * frame[:, :, None] * np.conj(frame[:, None, :]) + eta * R
        out[s] = R
    return out


def noise_projector(R, K, warn_tol=1e-10):
    """Projector onto the ``N - K`` smallest-eigenvalue eigenvectors of ``R``.

    Works on a single matrix or a stack ``(..., N, N)``. Warns when the
    eigenvalue gap across the signal/noise boundary is numerically zero,
    since the subspace is then not well defined.
    """
    R = np.asarray(R, dtype=complex)
    N = R.shape[-1]
    if not 0 <= K < N:
        raise ConfigError(f"need 0 <= K < N (got K={K}, N={N})")
    herm = 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))
    vals, vecs = np.linalg.eigh(herm)
    if K > 0:
        gap = vals[..., N - K] - vals[..., N - K - 1]
        scale = np.maximum(np.abs(vals[..., -1]), np.finfo(float).tiny)
        if np.any(gap <= warn_tol * scale):
            warnings.warn("eigenvalue multiplicity across the signal/noise boundary; "
                          "noise subspace is ill-defined", RuntimeWarning, stacklevel=2)
    En = vecs[..., :, :N - K]
    return En @ np.conj(np.swapaxes(En, -1, -2))


@dataclass
class DoaSpectrum:
    grid: np.ndarray
    values: np.ndarray            # (S, G) per-frame D(s, theta)
    average: np.ndarray = None    # (G,) time average, unit peak
    peaks: list = field(default_factory=list)
    warning: bool = False

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.average is None:
            avg = self.values.mean(axis=0)
            self.average = avg / avg.max()


def doa_function(projectors, steering, ceiling=1e12):
    """MUSIC pseudo-spectrum ``1 / sum_omega a^H P a`` for each frame.

    Parameters
    ----------
    projectors : ndarray, shape (S, F, N, N) or (F, N, N)
        Noise-subspace projectors for the selected bins.
    steering : ndarray, shape (F, N, G)
        Manifold vectors of the same bins on the direction grid.
    ceiling : float
        Upper clamp for vanishing denominators.
    """
    P = np.asarray(projectors)
    single = P.ndim == 3
    if single:
        P = P[None]
    A = np.asarray(steering)
    out = np.empty((P.shape[0], A.shape[-1]))
    for s in range(P.shape[0]):
        PA = P[s] @ A
        den = np.einsum("fng,fng->g", np.conj(A), PA).real
        out[s] = 1.0 / np.maximum(den, 1.0 / ceiling)
    return out[0] if single else out


def pick_peaks(spectrum, K, min_separation=np.deg2rad(10.0)):
    """The ``K`` most prominent circular local maxima of a spectrum over a grid.

    Returns ``(directions, warning)``; ``warning`` is set when fewer than ``K``
    maxima exist.
    """
    if K < 1:
        raise ConfigError("K must be >= 1")
    grid = spectrum.grid if isinstance(spectrum, DoaSpectrum) else np.asarray(spectrum[0])
    values = spectrum.average if isinstance(spectrum, DoaSpectrum) else np.asarray(spectrum[1])
    G = values.size
    step = 2 * np.pi / G
    dist = max(1, int(round(min_separation / step)))
    # tile three periods so maxima near 0 and 2*pi are seen once
    tiled = np.concatenate([values, values, values])
    idx, props = find_peaks(tiled, distance=dist, prominence=0)
    keep = (idx >= G) & (idx < 2 * G)
    idx, prom = idx[keep] - G, props["prominences"][keep]
    order = np.argsort(-prom, kind="stable")
    chosen = []
    for j in order:
        if prom[j] <= 0:
            continue
        sep = [abs(wrap_angle(grid[idx[j]] - grid[c] + np.pi) - np.pi) for c in chosen]
        if all(d >= min_separation - 1e-12 for d in sep):
            chosen.append(idx[j])
        if len(chosen) == K:
            break
    directions = [float(grid[c]) for c in chosen]
    warning = len(directions) < K
    if warning:
        warnings.warn(f"found {len(directions)} of {K} requested peaks", RuntimeWarning,
                      stacklevel=2)
    return directions, warning


def band_bins(cfg, band=(300.0, 4000.0), step=1):
    freqs = cfg.frequencies
    idx = np.flatnonzero((freqs >= band[0]) & (freqs <= band[1]))
    return idx[::step]


def music_spectrum(spec, geom, K, eta=0.95, grid=None, band=(300.0, 4000.0), bin_step=1,
                   min_separation=np.deg2rad(10.0), ceiling=1e12):
    """Time-averaged wideband MUSIC spectrum of a multichannel spectrogram.

    Returns a :class:`DoaSpectrum` with per-frame values, the unit-peak time
    average and the ``K`` picked peaks.
    """
    data = np.asarray(spec.data)
    if data.shape[0] != geom.n_mics:
        raise ConfigError("channel count does not match the array geometry")
    if grid is None:
        grid = np.deg2rad(np.arange(0.0, 360.0, 1.0))
    bins = band_bins(spec.config, band, bin_step)
    if bins.size == 0:
        raise ConfigError("no STFT bins inside the DOA band")
    covs = track_covariances(data[:, :, bins], eta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        proj = noise_projector(covs, K)
    steering = geom.steering(grid, spec.config.omegas[bins])
    values = doa_function(proj, steering, ceiling)
    out = DoaSpectrum(grid, values)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out.peaks, out.warning = pick_peaks(out, K, min_separation)
    return out


def mainlobe_width(grid, values, peak_index=None, level=0.5):
    """Angular width of the lobe around ``peak_index`` above ``level * peak``."""
    values = np.asarray(values, dtype=float)
    G = values.size
    i0 = int(np.argmax(values)) if peak_index is None else int(peak_index)
    thr = level * values[i0]
    left = 0
    while left < G and values[(i0 - left - 1) % G] >= thr:
        left += 1
    right = 0
    while right < G and values[(i0 + right + 1) % G] >= thr:
        right += 1
    step = 2 * np.pi / G
    return min(2 * np.pi, (left + right + 1) * step)
