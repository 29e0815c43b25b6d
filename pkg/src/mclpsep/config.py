"""Pipeline configuration with full defaulting, read from and written to YAML.

Parameters keep their usual symbols: ``d, L, M, alpha, lambda, epsilon`` for
MCLP, ``eta`` for the covariance smoother, ``gamma`` for GSS and ``alpha``
for the post-filter.
"""

from dataclasses import asdict, dataclass, field, fields, replace
import math
import re

import yaml

from .errors import ConfigError
from .geometry import ArrayGeometry, circular_array
from .mclp import MclpParams
from .postfilter import PostfilterParams
from .stft import StftConfig


@dataclass(frozen=True)
class DoaParams:
    eta: float = 0.95
    grid_step_deg: float = 1.0
    band: tuple = (300.0, 4000.0)
    bin_step: int = 1
    min_separation_deg: float = 10.0
    ceiling: float = 1e12

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ConfigError("doa.eta must lie in [0, 1]")
        if not 0 < self.grid_step_deg <= 90:
            raise ConfigError("doa.grid_step_deg must lie in (0, 90]")
        band = tuple(float(b) for b in self.band)
        if len(band) != 2 or not 0 <= band[0] < band[1]:
            raise ConfigError("doa.band must be an increasing pair of frequencies")
        object.__setattr__(self, "band", band)
        if self.bin_step < 1:
            raise ConfigError("doa.bin_step must be >= 1")
        if self.ceiling <= 0:
            raise ConfigError("doa.ceiling must be positive")

    @property
    def grid(self):
        import numpy as np
        n = int(round(360.0 / self.grid_step_deg))
        return np.deg2rad(np.arange(n) * 360.0 / n)


@dataclass(frozen=True)
class GssParams:
    gamma: float = 0.1
    max_steps: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError("gss.gamma must be non-negative")
        if self.max_steps < 1:
            raise ConfigError("gss.max_steps must be >= 1")
        if self.tol <= 0:
            raise ConfigError("gss.tol must be positive")


@dataclass(frozen=True)
class SceneParams:
    """Synthetic room for ``simulate``: sources on the array's horizontal plane."""

    directions_deg: tuple = (90.0, 315.0)
    duration: float = 4.0
    dcir_length: int = 6000
    decay: float = 1e-3
    tail_gain: float = 0.03
    onset: int = 160

    def __post_init__(self):
        dirs = tuple(float(t) for t in self.directions_deg)
        object.__setattr__(self, "directions_deg", dirs)
        if self.duration <= 0:
            raise ConfigError("scene.duration must be positive")
        if self.dcir_length < 1 or self.onset < 1 or self.onset >= self.dcir_length:
            raise ConfigError("scene.onset must lie in [1, dcir_length)")
        if self.decay <= 0 or self.tail_gain < 0:
            raise ConfigError("scene.decay must be positive and tail_gain non-negative")


_MCLP_KEYS = {"d": "d", "L": "L", "M": "M", "alpha": "alpha", "lambda": "lam",
              "epsilon": "epsilon", "max_iters": "max_iters", "tol": "tol"}


@dataclass(frozen=True)
class PipelineConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    geometry: ArrayGeometry = field(default_factory=lambda: circular_array(8, 0.05))
    mclp: MclpParams = field(default_factory=MclpParams)
    doa: DoaParams = field(default_factory=DoaParams)
    gss: GssParams = field(default_factory=GssParams)
    postfilter: PostfilterParams = field(default_factory=PostfilterParams)
    scene: SceneParams = field(default_factory=SceneParams)
    n_sources: int = 2
    skip_mclp: bool = False
    skip_postfilter: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.geometry.sample_rate != self.stft.sample_rate:
            raise ConfigError("geometry and STFT sample rates differ")
        if not 1 <= self.n_sources < self.geometry.n_mics:
            raise ConfigError("need 1 <= n_sources < number of microphones")

    def with_overrides(self, **kw):
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw or {})
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kw = {}
        try:
            if "stft" in raw:
                kw["stft"] = StftConfig(**_section(raw["stft"], StftConfig, "stft"))
            if "geometry" in raw:
                g = dict(raw["geometry"])
                g.setdefault("sample_rate", kw.get("stft", StftConfig()).sample_rate)
                kw["geometry"] = ArrayGeometry.from_dict(g)
            elif "stft" in raw:
                kw["geometry"] = circular_array(8, 0.05, sample_rate=kw["stft"].sample_rate)
            if "mclp" in raw:
                m = dict(raw["mclp"] or {})
                bad = set(m) - set(_MCLP_KEYS)
                if bad:
                    raise ConfigError(f"unknown mclp keys: {sorted(bad)}")
                kw["mclp"] = MclpParams(**{_MCLP_KEYS[k]: v for k, v in m.items()})
            for name, typ in (("doa", DoaParams), ("gss", GssParams),
                              ("postfilter", PostfilterParams), ("scene", SceneParams)):
                if name in raw:
                    kw[name] = typ(**_section(raw[name], typ, name))
            for name in ("n_sources", "skip_mclp", "skip_postfilter", "seed"):
                if name in raw:
                    kw[name] = raw[name]
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(**kw)

    def to_dict(self):
        mclp = {k: getattr(self.mclp, a) for k, a in _MCLP_KEYS.items()}
        doa = asdict(self.doa)
        doa["band"] = list(doa["band"])
        scene = asdict(self.scene)
        scene["directions_deg"] = list(scene["directions_deg"])
        return {
            "stft": {"window_length": self.stft.window_length, "hop": self.stft.hop,
                     "sample_rate": self.stft.sample_rate},
            "geometry": self.geometry.to_dict(),
            "mclp": mclp,
            "doa": doa,
            "gss": asdict(self.gss),
            "postfilter": asdict(self.postfilter),
            "scene": scene,
            "n_sources": self.n_sources,
            "skip_mclp": self.skip_mclp,
            "skip_postfilter": self.skip_postfilter,
            "seed": self.seed,
        }


def _section(raw, typ, name):
    raw = dict(raw or {})
    allowed = {f.name for f in fields(typ)}
    bad = set(raw) - allowed
    if bad:
        raise ConfigError(f"unknown {name} keys: {sorted(bad)}")
    for k, v in raw.items():
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"{name}.{k} must be finite")
    return raw


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-6`` style numbers (no dot) as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"))


def load_config(path=None):
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as fh:
            raw = yaml.load(fh, Loader=_Loader)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping")
    return PipelineConfig.from_dict(raw)


def dump_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
