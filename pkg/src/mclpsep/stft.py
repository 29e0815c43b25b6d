"""Self-inverting STFT (tight frame) with a square-root Hann window.

Frames start ``window_length - hop`` samples before the first input sample so
every input sample is covered by the full set of overlapping windows. With that
padding the analysis operator is an exact Parseval frame (count each
interior bin twice, since only non-negative frequencies are stored) and
``synthesize(analyze(x)) == x`` over the whole signal.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class StftConfig:
    window_length: int = 1024
    hop: int = 256
    sample_rate: int = 16000

    def __post_init__(self):
        if self.window_length <= 0 or self.hop <= 0:
            raise ConfigError("window_length and hop must be positive")
        if self.window_length % 2:
            raise ConfigError("window_length must be even")
        if self.window_length % self.hop:
            raise ConfigError(
                f"hop ({self.hop}) must divide window_length ({self.window_length})"
            )
        if self.window_length // self.hop < 2:
            raise ConfigError("a square-root Hann frame needs at least 50% overlap")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")

    @property
    def fft_size(self):
        return self.window_length

    @property
    def n_bins(self):
        return self.fft_size // 2 + 1

    @property
    def omegas(self):
        """Bin centre frequencies in radians per sample."""
        return 2 * np.pi * np.arange(self.n_bins) / self.fft_size

    @property
    def frequencies(self):
        return np.arange(self.n_bins) * self.sample_rate / self.fft_size

    def window(self):
        n = np.arange(self.window_length)
        return np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * n / self.window_length))

    @property
    def overlap_gain(self):
        # sum_m w^2(n - m*hop) for the periodic sqrt-Hann window
        return self.window_length / (2.0 * self.hop)

    @property
    def scale(self):
        return 1.0 / np.sqrt(self.window_length * self.overlap_gain)

    def n_frames(self, length):
        lead = self.window_length - self.hop
        return (length - 1 + lead) // self.hop + 1


@dataclass
class ComplexSpectrogram:
    """Complex STFT coefficients, shape ``(..., frames, bins)``.

    Leading axes (typically microphones) are allowed; ``length`` is the
    number of time samples of the analysed signal.
    """

    data: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    length: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.ndim < 2:
            raise ConfigError("spectrogram data needs at least (frames, bins) axes")
        if self.data.shape[-1] != self.config.n_bins:
            raise ConfigError(
                f"bin count {self.data.shape[-1]} inconsistent with fft_size "
                f"{self.config.fft_size} (expected {self.config.n_bins})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ConfigError("spectrogram contains non-finite entries")
        if self.length <= 0:
            self.length = (self.frames - 1) * self.config.hop + self.config.hop

    @property
    def frames(self):
        return self.data.shape[-2]

    @property
    def bins(self):
        return self.data.shape[-1]

    def with_data(self, data):
        return ComplexSpectrogram(data, self.config, self.length)

    def energy(self):
        """Signal-domain energy represented by the one-sided coefficients."""
        weights = np.full(self.bins, 2.0)
        weights[0] = 1.0
        weights[-1] = 1.0
        return float(np.sum(np.abs(self.data) ** 2 * weights))


def analyze(signal, cfg=None):
    """Forward STFT of a real signal (any leading axes, time last)."""
    cfg = cfg or StftConfig()
    x = np.asarray(signal, dtype=float)
    if x.ndim == 0:
        raise ConfigError("signal must be a sequence")
    if not np.all(np.isfinite(x)):
        raise ConfigError("signal contains non-finite samples")
    length = x.shape[-1]
    if length < cfg.window_length:
        raise ConfigError(
            f"signal has {length} samples, shorter than one window ({cfg.window_length})"
        )
    W, H = cfg.window_length, cfg.hop
    n_frames = cfg.n_frames(length)
    lead = W - H
    total = (n_frames - 1) * H + W
    pad = [(0, 0)] * (x.ndim - 1) + [(lead, total - lead - length)]
    xp = np.pad(x, pad)
    frames = np.lib.stride_tricks.sliding_window_view(xp, W, axis=-1)[..., ::H, :]
    data = np.fft.rfft(frames * cfg.window(), axis=-1) * cfg.scale
    return ComplexSpectrogram(data, cfg, length)


def synthesize(spec):
    """Inverse STFT by weighted overlap-add; left inverse of :func:`analyze`."""
    cfg = spec.config
    if spec.bins != cfg.n_bins:
        raise ConfigError("bin count inconsistent with configuration")
    W, H = cfg.window_length, cfg.hop
    frames = np.fft.irfft(spec.data, n=W, axis=-1) * cfg.window()
    frames /= cfg.scale * cfg.overlap_gain
    lead_shape = frames.shape[:-2]
    S = frames.shape[-2]
    R = W // H
    blocks = frames.reshape(lead_shape + (S, R, H))
    out = np.zeros(lead_shape + (S + R - 1, H))
    for j in range(R):
        out[..., j:j + S, :] += blocks[..., :, j, :]
    out = out.reshape(lead_shape + ((S + R - 1) * H,))
    lead = W - H
    return out[..., lead:lead + spec.length]
