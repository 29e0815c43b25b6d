"""Evaluation: SIR, the lag-0 channel-similarity field, spectrogram statistics."""

from dataclasses import dataclass
import warnings

import numpy as np

from .errors import ConfigError

SIR_CAP_DB = 99.0


@dataclass
class VarianceField:
    """Normalised across-microphone variance ``v(s, w) / p(s, w)``; NaN where undefined."""

    values: np.ndarray   # (taps, bins)

    @property
    def db(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return 10 * np.log10(self.values)


def assumption_field(filters):
    """Population variance over microphones divided by total power, per (s, w)."""
    taps = [np.asarray(getattr(f, "taps", f)) for f in filters]
    if len(taps) < 2:
        raise ConfigError("need filters from at least two microphones")
    if len({t.shape for t in taps}) != 1:
        raise ConfigError("filters must share one shape")
    H = np.stack(taps)
    mean = H.mean(axis=0)
    v = np.mean(np.abs(H - mean) ** 2, axis=0)
    p = np.sum(np.abs(H) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(p > 0, v / np.where(p > 0, p, 1.0), np.nan)
    return VarianceField(vals)


def lag0_margin_db(field):
    """Per bin: lag-0 field minus the mean of the later lags, in dB."""
    vals = field.values
    later = np.nanmean(vals[1:], axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 10 * np.log10(vals[0] / later)


def sir(estimates, references):
    """Per-source signal-to-interference ratio in dB (BSS-eval decomposition).

    Silent references give NaN. Perfect estimates are capped at 99 dB.
    """
    from mir_eval.separation import bss_eval_sources

    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    ref = np.atleast_2d(np.asarray(references, dtype=float))
    if est.shape != ref.shape:
        raise ConfigError("estimates and references must have the same shape")
    out = np.full(est.shape[0], np.nan)
    live = np.flatnonzero(np.any(ref != 0, axis=1))
    if live.size == 0:
        return out
    with warnings.catch_warnings(), np.errstate(divide="ignore", invalid="ignore"):
        warnings.simplefilter("ignore")
        _, sirs, _, _ = bss_eval_sources(ref[live], est[live], compute_permutation=False)
    sirs = np.where(np.isnan(sirs), SIR_CAP_DB, sirs)
    out[live] = np.minimum(sirs, SIR_CAP_DB)
    return out


def frame_autocorrelation_decay(data, threshold=np.exp(-1.0), max_lag=None):
    """Frames until the bin-averaged power-envelope autocorrelation drops below ``threshold``.

    ``data`` is a spectrogram array ``(..., S, F)``; leading axes are averaged.
    """
    P = np.abs(np.asarray(data)) ** 2
    P = P.reshape((-1,) + P.shape[-2:])
    S = P.shape[-2]
    max_lag = max_lag or S - 1
    P = P - P.mean(axis=-2, keepdims=True)
    denom = np.sum(P * P, axis=(0, 1))
    keep = denom > 0
    if not keep.any():
        return 0.0
    rho = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        num = np.sum(P[:, lag:, keep] * P[:, :S - lag, keep], axis=(0, 1))
        rho[lag] = np.mean(num / denom[keep])
    below = np.flatnonzero(rho < threshold)
    if below.size == 0:
        return float(max_lag)
    j = below[0]
    # linear interpolation between the straddling lags
    return float(j - 1 + (rho[j - 1] - threshold) / (rho[j - 1] - rho[j]))


def relative_error(estimate, truth):
    truth = np.asarray(truth)
    return float(np.linalg.norm(np.asarray(estimate) - truth) / np.linalg.norm(truth))
