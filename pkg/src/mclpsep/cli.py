"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 theory verification failure.
"""

import argparse
import csv
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .config import dump_config, load_config
from .errors import ConfigError, NumericalError
from .pipeline import VARIANTS, Scene, dereverb, estimate_doa, evaluate_scene, make_scene, separate
from .poly_oracle import run_all
from .stft import analyze, synthesize
from .wavio import read_wav, write_wav

log = logging.getLogger("mclpsep")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4


def _out_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _read_input(path, cfg):
    data = read_wav(path, cfg.stft.sample_rate)
    if data.shape[0] != cfg.geometry.n_mics:
        raise ConfigError(f"{path} has {data.shape[0]} channels; the array has "
                          f"{cfg.geometry.n_mics} microphones")
    return data


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)


def cmd_simulate(args, cfg):
    out = _out_dir(args.out)
    scene = make_scene(cfg, args.seed)
    fs = cfg.stft.sample_rate
    write_wav(out / "mixture.wav", scene.mixture, fs, args.format)
    for k, img in enumerate(scene.images):
        write_wav(out / f"image_{k}.wav", img, fs, "float32")
    _write_json(out / "truth.json", {
        "seed": cfg.seed if args.seed is None else args.seed,
        "directions_rad": scene.directions,
        "directions_deg": np.rad2deg(scene.directions).tolist(),
        "n_mics": cfg.geometry.n_mics,
        "sample_rate": fs,
        "images": [f"image_{k}.wav" for k in range(len(scene.directions))],
    })
    dump_config(cfg, out / "config.yaml")
    return EXIT_OK


def cmd_dereverb(args, cfg):
    data = _read_input(args.input, cfg)
    out = _out_dir(args.out)
    res = dereverb(analyze(data, cfg.stft), cfg, workers=args.workers,
                   trace=args.trace is not None)
    signals = synthesize(res.spectrogram)
    for r, sig in enumerate(signals):
        write_wav(out / f"dereverbed_{r}.wav", sig, cfg.stft.sample_rate, args.format)
    if args.trace is not None:
        _write_json(args.trace, {str(b): v.tolist() for b, v in res.objective.items()})
    return EXIT_OK


def cmd_doa(args, cfg):
    data = _read_input(args.input, cfg)
    out = _out_dir(args.out)
    spec = analyze(data, cfg.stft)
    if not cfg.skip_mclp:
        spec = dereverb(spec, cfg, workers=args.workers).spectrogram
    d = estimate_doa(spec, cfg)
    with open(out / "doa.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta_rad", "theta_deg", "D"])
        for th, v in zip(d.grid, d.average):
            w.writerow([f"{th:.6f}", f"{np.rad2deg(th):.3f}", f"{v:.8g}"])
    if args.per_frame:
        np.savetxt(out / "doa_frames.csv", d.values, delimiter=",", fmt="%.8g")
    _write_json(out / "peaks.json", {"peaks_rad": d.peaks,
                                     "peaks_deg": np.rad2deg(d.peaks).tolist(),
                                     "warning": d.warning})
    return EXIT_OK


def cmd_separate(args, cfg):
    data = _read_input(args.input, cfg)
    out = _out_dir(args.out)
    res = separate(data, cfg, workers=args.workers, trace=args.trace)
    for k, sig in enumerate(res.outputs):
        write_wav(out / f"source_{k}.wav", sig, cfg.stft.sample_rate, args.format)
    report = {
        "directions_rad": res.directions,
        "directions_deg": np.rad2deg(res.directions).tolist(),
        "doa_warning": bool(res.doa.warning),
        "timings": res.timings,
        "warnings": res.warnings,
        "gss_steps_median": float(np.median(res.gss.steps)),
        "postfilter": not cfg.skip_postfilter,
        "mclp": not cfg.skip_mclp,
    }
    if res.dereverbed is not None and args.trace:
        report["mclp_objective"] = {str(b): v.tolist()
                                    for b, v in res.dereverbed.objective.items()}
    if args.dump_weights:
        np.save(out / "gss_weights.npy", res.gss.W)
    _write_json(out / "report.json", report)
    for w in res.warnings:
        log.warning(w)
    return EXIT_OK


def cmd_eval(args, cfg):
    src = Path(args.scene)
    try:
        with open(src / "truth.json") as fh:
            truth = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {src / 'truth.json'}: {exc}") from exc
    images = np.stack([_read_input(src / name, cfg) for name in truth["images"]])
    scene = Scene(images, list(truth["directions_rad"]), None)
    table, info = evaluate_scene(scene, cfg, workers=args.workers)
    out = _out_dir(args.out)
    _write_json(out / "sir.json", {"sir_db": table, "mean_sir_db":
                                   {k: float(np.nanmean(v)) for k, v in table.items()},
                                   **info})
    with open(out / "sir.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", *VARIANTS])
        for k in range(len(scene.directions)):
            w.writerow([k, *(f"{table[v][k]:.3f}" for v in VARIANTS)])
        w.writerow(["mean", *(f"{np.nanmean(table[v]):.3f}" for v in VARIANTS)])
    return EXIT_OK


def cmd_verify_theory(args, cfg):
    report = run_all(args.seed if args.seed is not None else cfg.seed)
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def build_parser():
    p = argparse.ArgumentParser(prog="mclpsep", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="threads for per-bin work (default: all cores)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("-v", "--verbose", action="store_true")
    audio = argparse.ArgumentParser(add_help=False)
    audio.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common, audio], help="render a synthetic scene")
    s.add_argument("--out", required=True)
    s.add_argument("--preset", choices=("two-source", "single", "silent"), default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("dereverb", parents=[common, audio], help="MCLP for every reference")
    s.add_argument("input")
    s.add_argument("--out", required=True)
    s.add_argument("--trace", help="JSON file for per-bin objective traces")
    s.set_defaults(func=cmd_dereverb)

    s = sub.add_parser("doa", parents=[common], help="wideband MUSIC spectrum")
    s.add_argument("input")
    s.add_argument("--out", required=True)
    s.add_argument("--no-mclp", action="store_true")
    s.add_argument("--per-frame", action="store_true")
    s.set_defaults(func=cmd_doa)

    s = sub.add_parser("separate", parents=[common, audio], help="full separation chain")
    s.add_argument("input")
    s.add_argument("--out", required=True)
    s.add_argument("--no-mclp", action="store_true")
    s.add_argument("--no-postfilter", action="store_true")
    s.add_argument("--trace", action="store_true", help="include MCLP objective traces")
    s.add_argument("--dump-weights", action="store_true")
    s.add_argument("-K", "--sources", type=int, default=None)
    s.set_defaults(func=cmd_separate)

    s = sub.add_parser("eval", parents=[common], help="SIR table for a simulated scene")
    s.add_argument("scene", help="directory written by 'simulate'")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("verify-theory", parents=[common], help="exact-arithmetic theory suites")
    s.add_argument("--out", help="JSON report path (default: stdout)")
    s.set_defaults(func=cmd_verify_theory)
    return p


_PRESETS = {"two-source": (90.0, 315.0), "single": (90.0,), "silent": ()}


def _configure(args):
    """Load and validate the whole configuration before any audio is touched."""
    cfg = load_config(args.config)
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if getattr(args, "no_mclp", False):
        kw["skip_mclp"] = True
    if getattr(args, "no_postfilter", False):
        kw["skip_postfilter"] = True
    if getattr(args, "sources", None) is not None:
        kw["n_sources"] = args.sources
    preset = getattr(args, "preset", None)
    if preset is not None:
        from dataclasses import replace
        kw["scene"] = replace(cfg.scene, directions_deg=_PRESETS[preset])
    if args.workers is not None and args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    return cfg.with_overrides(**kw) if kw else cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _configure(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
