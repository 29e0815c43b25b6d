"""Multichannel WAV input/output at a fixed sample rate."""

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError

FORMATS = ("float32", "pcm16")


def read_wav(path, sample_rate):
    """Return ``(channels, samples)`` float64 data; a rate mismatch is an error."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if rate != sample_rate:
        raise ConfigError(f"{path}: sample rate {rate} Hz, expected {sample_rate} Hz")
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype.kind == "f":
        data = data.astype(np.float64)
    else:
        raise ConfigError(f"{path}: unsupported sample format {data.dtype}")
    return np.atleast_2d(data.T) if data.ndim == 2 else data[None, :]


def write_wav(path, data, sample_rate, fmt="float32"):
    """Write ``(channels, samples)`` or ``(samples,)`` data."""
    if fmt not in FORMATS:
        raise ConfigError(f"unknown WAV format {fmt!r}; choose one of {FORMATS}")
    data = np.asarray(data, dtype=np.float64)
    out = data.T if data.ndim == 2 else data
    if fmt == "pcm16":
        out = np.clip(np.round(out * 32768.0), -32768, 32767).astype(np.int16)
    else:
        out = out.astype(np.float32)
    wavfile.write(path, sample_rate, out)
