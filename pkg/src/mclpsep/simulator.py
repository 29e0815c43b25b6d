"""Far-field reverberant mixture synthesis and subband channel fitting.

Each microphone/source pair gets a distance-compensated impulse response
(DCIR): a direct-path tap at lag 0 followed by an exponentially decaying
noise tail. Signals reach microphone ``i`` from direction ``theta_k`` after a
fractional far-field delay, then pass through the DCIR.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigError
from .geometry import ArrayGeometry
from .stft import StftConfig, analyze

FRACTIONAL_DELAY_TAPS = 64


@dataclass
class Dcir:
    taps: np.ndarray

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=float)
        if self.taps.ndim != 1 or self.taps.size == 0:
            raise ConfigError("DCIR taps must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.taps)):
            raise ConfigError("DCIR taps must be finite")
        if self.taps[0] == 0:
            raise ConfigError("DCIR needs a non-zero direct-path tap")

    @property
    def length(self):
        return self.taps.size


def synth_dcir(seed, length, decay, direct_gain=1.0, shared_direct_gain=None,
               tail_gain=0.05, onset=1):
    """Synthetic DCIR with an exponentially decaying Gaussian tail.

    Parameters
    ----------
    seed : int
    length : int
        Number of taps.
    decay : float
        Amplitude decay rate of the tail envelope ``exp(-decay * t)``.
    direct_gain : float
        Lag-0 tap.
    shared_direct_gain : float, optional
        Overrides ``direct_gain`` so that several responses share their
        direct-path tap.
    tail_gain : float
        Standard deviation of the tail at ``t = 0`` (before the envelope).
    onset : int
        First lag carrying tail energy; lags ``1..onset-1`` are zero.
    """
    if length < 1:
        raise ConfigError("DCIR length must be at least 1")
    if decay <= 0:
        raise ConfigError("decay must be positive")
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    taps = rng.standard_normal(length) * tail_gain * np.exp(-decay * t)
    taps[:max(onset, 1)] = 0.0
    taps[0] = direct_gain if shared_direct_gain is None else shared_direct_gain
    return Dcir(taps)


def fractional_delay_kernel(tau, n_taps=FRACTIONAL_DELAY_TAPS):
    """Blackman-windowed sinc approximating a delay of ``tau`` samples.

    Returns ``(kernel, first_lag)`` so that ``y[t] = sum_m kernel[m] x[t - first_lag - m]``.
    """
    half = n_taps // 2
    first = int(np.floor(tau)) - half + 1
    m = first + np.arange(n_taps)
    arg = m - tau
    window = 0.42 + 0.5 * np.cos(np.pi * arg / half) + 0.08 * np.cos(2 * np.pi * arg / half)
    window[np.abs(arg) >= half] = 0.0
    return np.sinc(arg) * window, first


def apply_filter(x, kernel, first_lag=0):
    """``y[t] = sum_m kernel[m] x[t - first_lag - m]`` truncated to ``len(x)``."""
    x = np.asarray(x, dtype=float)
    T = x.shape[-1]
    full = fftconvolve(x, kernel)
    out = np.zeros(T)
    # full[j] corresponds to output time t = j + first_lag
    lo = max(0, first_lag)
    hi = min(T, full.shape[-1] + first_lag)
    if hi > lo:
        out[lo:hi] = full[lo - first_lag:hi - first_lag]
    return out


def fractional_delay(x, tau, n_taps=FRACTIONAL_DELAY_TAPS):
    if abs(tau) >= len(x):
        raise ConfigError(f"delay {tau:.3f} exceeds signal length {len(x)}")
    kernel, first = fractional_delay_kernel(tau, n_taps)
    return apply_filter(x, kernel, first)


@dataclass
class SceneConfig:
    """Sources ``(K, T)``, their directions and per-(mic, source) DCIRs."""

    sources: np.ndarray
    directions: np.ndarray
    dcirs: list
    geometry: ArrayGeometry
    shared_direct: bool = False

    def __post_init__(self):
        self.sources = np.atleast_2d(np.asarray(self.sources, dtype=float))
        self.directions = np.atleast_1d(np.asarray(self.directions, dtype=float))
        K = self.directions.size
        if self.sources.shape[0] != K:
            raise ConfigError("one direction per source required")
        N = self.geometry.n_mics
        if K >= N:
            raise ConfigError(f"need fewer sources ({K}) than microphones ({N})")
        if len(self.dcirs) != N or any(len(row) != K for row in self.dcirs):
            raise ConfigError("dcirs must be an N x K nested list")
        if self.shared_direct and K:
            for k in range(K):
                lag0 = {self.dcirs[i][k].taps[0] for i in range(N)}
                if len(lag0) != 1:
                    raise ConfigError("shared_direct requires equal lag-0 taps across microphones")

    @property
    def n_sources(self):
        return self.directions.size


def _channel_kernel(scene, i, k):
    tau = scene.geometry.delays(scene.directions[k])[i]
    kernel, first = fractional_delay_kernel(tau)
    return np.convolve(kernel, scene.dcirs[i][k].taps), first


def render_images(scene):
    """Per-source microphone images, shape ``(K, N, T)``."""
    K, T = scene.sources.shape
    N = scene.geometry.n_mics
    out = np.zeros((K, N, T))
    for k in range(K):
        for i in range(N):
            tau = scene.geometry.delays(scene.directions[k])[i]
            if abs(tau) >= T:
                raise ConfigError(f"delay {tau:.3f} exceeds signal length {T}")
            kernel, first = _channel_kernel(scene, i, k)
            out[k, i] = apply_filter(scene.sources[k], kernel, first)
    return out


def render_mixture(scene, length=None):
    """Microphone signals ``(N, T)``: sum of the per-source images."""
    if scene.n_sources == 0:
        T = scene.sources.shape[-1] if length is None else length
        return np.zeros((scene.geometry.n_mics, T))
    return render_images(scene).sum(axis=0)


def speechlike(seed, duration, sample_rate=16000):
    """Deterministic voiced-syllable signal: sparse in time-frequency like speech."""
    rng = np.random.default_rng(seed)
    T = int(round(duration * sample_rate))
    f0 = np.zeros(T)
    amp = np.zeros(T)
    f1 = np.zeros(T)
    f2 = np.zeros(T)
    t = int(rng.integers(0, int(0.1 * sample_rate)))
    while t < T:
        seg = int(rng.uniform(0.12, 0.35) * sample_rate)
        gap = int(rng.uniform(0.04, 0.2) * sample_rate)
        end = min(T, t + seg)
        n = end - t
        ramp = np.minimum(1.0, np.minimum(np.arange(n), np.arange(n)[::-1]) / (0.02 * sample_rate))
        start_f0 = rng.uniform(100, 220)
        f0[t:end] = start_f0 * np.exp(np.linspace(0, rng.uniform(-0.25, 0.25), n))
        amp[t:end] = rng.uniform(0.4, 1.0) * np.sin(0.5 * np.pi * ramp) ** 2
        f1[t:end] = rng.uniform(300, 800)
        f2[t:end] = rng.uniform(900, 2300)
        t = end + gap
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    out = np.zeros(T)
    nyq = sample_rate / 2
    for h in range(1, 41):
        freq = h * f0
        gain = (1 + 4 * np.exp(-((freq - f1) / 120) ** 2) + 3 * np.exp(-((freq - f2) / 200) ** 2)) / h
        gain[freq >= 0.95 * nyq] = 0.0
        out += gain * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    out *= amp
    peak = np.max(np.abs(out))
    return out / peak * 0.5 if peak > 0 else out


def scene_dcirs(n_mics, n_sources, seed, length=4096, decay=1e-3, tail_gain=0.05,
                onset=1, direct_gain=1.0, shared_direct=True):
    """N x K grid of DCIRs with independent tails; lag-0 shared per source when ``shared_direct``."""
    ss = np.random.SeedSequence(seed)
    seeds = ss.generate_state(n_mics * n_sources)
    rng = np.random.default_rng(ss.spawn(1)[0])
    grid = []
    for i in range(n_mics):
        row = []
        for k in range(n_sources):
            gain = direct_gain if shared_direct else direct_gain * (1 + 0.3 * rng.standard_normal())
            row.append(synth_dcir(int(seeds[i * n_sources + k]), length, decay,
                                  direct_gain=gain, tail_gain=tail_gain, onset=onset))
        grid.append(row)
    return grid


@dataclass
class SubbandFilter:
    """STFT-domain channel taps ``taps[s, omega]`` and the fit's residual ratio."""

    taps: np.ndarray
    residual_ratio: float = 0.0
    bin_residual_ratio: np.ndarray = field(default=None)

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=complex)
        if not np.all(np.isfinite(self.taps)):
            raise ConfigError("subband filter taps must be finite")

    @property
    def length(self):
        return self.taps.shape[0]


def _lagged(X, taps):
    """Stack ``X(s - l)`` for ``l < taps``: shape ``(taps, S, F)``."""
    S = X.shape[0]
    out = np.zeros((taps,) + X.shape, dtype=X.dtype)
    for lag in range(taps):
        out[lag, lag:] = X[:S - lag]
    return out


def fit_subband_filters(h, cfg=None, taps=1, probe_seconds=30.0, seed=0, ridge=1e-8):
    """Least-squares STFT-domain filter approximating convolution by ``h``.

    A white-noise probe ``x`` is filtered by ``h``; per frequency bin the taps
    minimise ``sum_s |Y(s) - sum_l X(s - l) H(l)|^2``.
    """
    if taps < 1:
        raise ConfigError("taps must be at least 1")
    cfg = cfg or StftConfig()
    hv = h.taps if isinstance(h, Dcir) else np.asarray(h, dtype=float)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(int(probe_seconds * cfg.sample_rate))
    y = fftconvolve(x, hv)[:x.size]
    X = analyze(x, cfg).data
    Y = analyze(y, cfg).data
    lagged = _lagged(X, taps)
    gram = np.einsum("lsf,msf->flm", lagged.conj(), lagged)
    rhs = np.einsum("lsf,sf->fl", lagged.conj(), Y)
    trace = np.trace(gram, axis1=1, axis2=2).real
    gram = gram + (ridge * trace)[:, None, None] * np.eye(taps)
    H = np.linalg.solve(gram, rhs[..., None])[..., 0]
    fit = np.einsum("lsf,fl->sf", lagged, H)
    err = np.sum(np.abs(Y - fit) ** 2, axis=0)
    power = np.sum(np.abs(Y) ** 2, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_bin = np.where(power > 0, err / power, 0.0)
    ratio = float(err.sum() / power.sum()) if power.sum() > 0 else 0.0
    return SubbandFilter(H.T, ratio, per_bin)
