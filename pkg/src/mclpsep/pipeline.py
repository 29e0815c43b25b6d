"""End-to-end chain: MCLP dereverberation, MUSIC, GSS and the post-filter.

The four evaluation variants are named after the stages they use: ``G``
(GSS only), ``G+P`` (with post-filter), and ``LP+G`` / ``LP+G+P`` with MCLP
in front.
"""

from dataclasses import dataclass, field
import time
import warnings

import numpy as np
from scipy.optimize import linear_sum_assignment

from .doa import music_spectrum
from .geometry import wrap_angle
from .gss import gss_solve
from .mclp import dereverb_all_refs
from .metrics import sir
from .postfilter import apply_postfilter, postfilter_variances
from .simulator import SceneConfig, render_images, scene_dcirs, speechlike
from .stft import analyze, synthesize

VARIANTS = ("G", "G+P", "LP+G", "LP+G+P")


def angular_distance(a, b):
    return np.abs(wrap_angle(np.asarray(a) - np.asarray(b) + np.pi) - np.pi)


@dataclass
class SeparationResult:
    outputs: np.ndarray            # (K, T), post-filtered unless skipped
    unfiltered: np.ndarray         # (K, T) GSS outputs
    directions: list
    doa: object
    gss: object
    dereverbed: object = None      # DereverbResult or None
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def dereverb(spec, cfg, workers=None, trace=False, refs=None):
    return dereverb_all_refs(spec, cfg.mclp, refs=refs, workers=workers, trace=trace)


def estimate_doa(spec, cfg, n_sources=None):
    p = cfg.doa
    return music_spectrum(spec, cfg.geometry, n_sources or cfg.n_sources, eta=p.eta,
                          grid=p.grid, band=p.band, bin_step=p.bin_step,
                          min_separation=np.deg2rad(p.min_separation_deg),
                          ceiling=p.ceiling)


def separate_spectrogram(spec, cfg, workers=None, trace=False, skip_mclp=None,
                         skip_postfilter=None):
    """Run the chain on a multichannel spectrogram; returns a :class:`SeparationResult`."""
    skip_mclp = cfg.skip_mclp if skip_mclp is None else skip_mclp
    skip_pf = cfg.skip_postfilter if skip_postfilter is None else skip_postfilter
    timings, notes = {}, []

    t = time.perf_counter()
    der = None
    work = spec
    if not skip_mclp:
        der = dereverb(spec, cfg, workers=workers, trace=trace)
        work = der.spectrogram
    timings["mclp"] = time.perf_counter() - t

    t = time.perf_counter()
    doa = estimate_doa(work, cfg)
    timings["doa"] = time.perf_counter() - t
    directions = list(doa.peaks)
    if doa.warning:
        notes.append(f"found {len(directions)} of {cfg.n_sources} DOA peaks")
    if not directions:
        # flat spectrum: fall back to its maximum so GSS still has a target
        directions = [float(doa.grid[int(np.argmax(doa.average))])]

    t = time.perf_counter()
    A = cfg.geometry.steering(np.asarray(directions), work.config.omegas)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        g = gss_solve(work.data, A, gamma=cfg.gss.gamma, max_steps=cfg.gss.max_steps,
                      tol=cfg.gss.tol)
    notes.extend(str(w.message) for w in caught)
    timings["gss"] = time.perf_counter() - t

    t = time.perf_counter()
    sep = g.separated
    unfiltered = synthesize(work.with_data(sep))
    if skip_pf:
        outputs = unfiltered
    else:
        var = postfilter_variances(work.data, g.W, A, sep)
        outputs = synthesize(work.with_data(apply_postfilter(sep, var, cfg.postfilter)))
    timings["postfilter"] = time.perf_counter() - t
    return SeparationResult(outputs, unfiltered, directions, doa, g, der, timings, notes)


def separate(signals, cfg, workers=None, trace=False, **kw):
    """Separate a ``(N, T)`` recording."""
    return separate_spectrogram(analyze(np.asarray(signals, dtype=float), cfg.stft), cfg,
                                workers=workers, trace=trace, **kw)


# Synthetic scenes -----------------------------------------------------------

@dataclass
class Scene:
    images: np.ndarray          # (K, N, T) per-source solo renderings
    directions: list
    sources: np.ndarray         # (K, T)

    @property
    def mixture(self):
        if self.images.shape[0] == 0:
            return np.zeros(self.images.shape[1:])
        return self.images.sum(axis=0)


def make_scene(cfg, seed=None):
    """Speech-like sources in a synthetic room, equal direct paths enforced."""
    seed = cfg.seed if seed is None else seed
    sp = cfg.scene
    fs = cfg.stft.sample_rate
    K = len(sp.directions_deg)
    N = cfg.geometry.n_mics
    T = int(round(sp.duration * fs))
    if K == 0:
        return Scene(np.zeros((0, N, T)), [], np.zeros((0, T)))
    sources = np.stack([speechlike(2 * seed + k, sp.duration, fs) for k in range(K)])
    dcirs = scene_dcirs(N, K, seed + 1000, length=sp.dcir_length, decay=sp.decay,
                        tail_gain=sp.tail_gain, onset=sp.onset)
    directions = [float(np.deg2rad(t)) for t in sp.directions_deg]
    scene = SceneConfig(sources, directions, dcirs, cfg.geometry, shared_direct=True)
    return Scene(render_images(scene), directions, sources)


def match_directions(estimated, truth):
    """Index into ``estimated`` for each true direction (minimum total angular error)."""
    if not len(estimated):
        return [None] * len(truth)
    cost = angular_distance(np.asarray(truth)[:, None], np.asarray(estimated)[None, :])
    rows, cols = linear_sum_assignment(cost)
    out = [None] * len(truth)
    for r, c in zip(rows, cols):
        out[r] = int(c)
    return out


def _reorder(outputs, order, T):
    est = np.zeros((len(order), T))
    for k, j in enumerate(order):
        if j is not None:
            est[k] = outputs[j][:T]
    return est


def evaluate_scene(scene, cfg, workers=None, ref_mic=0):
    """Per-source SIR for the four variants.

    References are the solo renderings at ``ref_mic``; for the MCLP variants
    they are passed through MCLP with the same settings first.
    """
    T = scene.images.shape[-1]
    table, info = {}, {}
    refs_raw = scene.images[:, ref_mic, :]
    refs_lp = np.stack([
        synthesize(dereverb_all_refs(analyze(img, cfg.stft), cfg.mclp, refs=[ref_mic],
                                     workers=workers).spectrogram)[0]
        for img in scene.images
    ])
    for lp in (False, True):
        res = separate(scene.mixture, cfg, workers=workers, skip_mclp=not lp,
                       skip_postfilter=False)
        order = match_directions(res.directions, scene.directions)
        refs = refs_lp if lp else refs_raw
        pre = "LP+" if lp else ""
        table[pre + "G"] = sir(_reorder(res.unfiltered, order, T), refs).tolist()
        table[pre + "G+P"] = sir(_reorder(res.outputs, order, T), refs).tolist()
        info[pre + "directions_deg"] = np.rad2deg(res.directions).tolist()
        info[pre + "timings"] = res.timings
    return table, info
