"""Multichannel linear prediction as a front end for array source separation."""

__version__ = "0.1.0"

from .stft import StftConfig, ComplexSpectrogram, analyze, synthesize
from .geometry import ArrayGeometry, circular_array, delay_samples, manifold
from .mclp import MclpParams, soft, solve_band, dereverb_all_refs
from .doa import music_spectrum, pick_peaks
from .gss import GssState, gss_cost, gss_gradient, gss_solve
from .postfilter import PostfilterParams, apply_postfilter, estimate_variance
from .config import PipelineConfig, load_config
from .pipeline import separate

__all__ = [
    "StftConfig",
    "ComplexSpectrogram",
    "analyze",
    "synthesize",
    "ArrayGeometry",
    "circular_array",
    "delay_samples",
    "manifold",
    "MclpParams",
    "soft",
    "solve_band",
    "dereverb_all_refs",
    "music_spectrum",
    "pick_peaks",
    "GssState",
    "gss_cost",
    "gss_gradient",
    "gss_solve",
    "PostfilterParams",
    "apply_postfilter",
    "estimate_variance",
    "PipelineConfig",
    "load_config",
    "separate",
]
