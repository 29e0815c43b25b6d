"""Microphone array geometry, far-field delays and manifold vectors.

Directions are planar azimuths in radians, measured counterclockwise from the
x axis. The circular preset places microphone 1 on the x axis (theta = 0) and
numbers the remaining microphones clockwise, so that for eight microphones
microphone 7 sits at theta = pi/2.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SPEED_OF_SOUND = 343.0


def wrap_angle(theta):
    """Map angles to [0, 2*pi)."""
    out = np.mod(theta, 2 * np.pi)
    # tiny negative inputs round up to exactly 2*pi
    out = np.where(out >= 2 * np.pi, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def unit_vector(theta, dim=2):
    theta = np.asarray(theta, dtype=float)
    u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if dim == 3:
        u = np.concatenate([u, np.zeros(u.shape[:-1] + (1,))], axis=-1)
    return u


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    positions: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND
    sample_rate: int = 16000

    def __eq__(self, other):
        if not isinstance(other, ArrayGeometry):
            return NotImplemented
        return (self.speed_of_sound == other.speed_of_sound
                and self.sample_rate == other.sample_rate
                and np.array_equal(self.positions, other.positions))

    __hash__ = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] not in (2, 3):
            raise ConfigError("positions must be an (N, 2) or (N, 3) array in meters")
        if pos.shape[0] < 2:
            raise ConfigError("an array needs at least two microphones")
        if np.linalg.norm(pos.mean(axis=0)) > 1e-9:
            raise ConfigError("microphone positions must be centred on the array origin")
        if self.speed_of_sound <= 0 or self.sample_rate <= 0:
            raise ConfigError("speed_of_sound and sample_rate must be positive")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n_mics(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]

    def delays(self, theta):
        """Delays in samples for every microphone, shape ``theta.shape + (N,)``."""
        u = unit_vector(theta, self.dim)
        return -(u @ self.positions.T) / self.speed_of_sound * self.sample_rate

    def steering(self, thetas, omegas):
        """Manifold vectors for a grid: shape ``(len(omegas), N, len(thetas))``."""
        tau = self.delays(np.asarray(thetas, dtype=float))  # (G, N)
        om = np.asarray(omegas, dtype=float)
        return np.exp(-1j * om[:, None, None] * tau.T[None, :, :])

    @classmethod
    def from_dict(cls, cfg):
        cfg = dict(cfg)
        preset = cfg.pop("preset", None)
        c = float(cfg.pop("speed_of_sound", SPEED_OF_SOUND))
        fs = int(cfg.pop("sample_rate", 16000))
        if preset is not None:
            if preset != "circular8":
                raise ConfigError(f"unknown array preset {preset!r}")
            n, radius = 8, 0.05
            n = int(cfg.pop("n_mics", n))
            radius = float(cfg.pop("radius", radius))
            if cfg:
                raise ConfigError(f"unknown array keys: {sorted(cfg)}")
            return circular_array(n, radius, speed_of_sound=c, sample_rate=fs)
        if "positions" not in cfg:
            raise ConfigError("array config needs 'preset' or 'positions'")
        positions = cfg.pop("positions")
        if cfg:
            raise ConfigError(f"unknown array keys: {sorted(cfg)}")
        return cls(np.asarray(positions, dtype=float), c, fs)

    def to_dict(self):
        return {
            "positions": self.positions.tolist(),
            "speed_of_sound": self.speed_of_sound,
            "sample_rate": self.sample_rate,
        }


def circular_array(n_mics, radius, speed_of_sound=SPEED_OF_SOUND, sample_rate=16000):
    """Uniform circular array; mic 1 on the x axis, indices increasing clockwise."""
    if n_mics < 2:
        raise ConfigError("n_mics must be at least 2")
    if radius <= 0:
        raise ConfigError("radius must be positive")
    angles = -2 * np.pi * np.arange(n_mics) / n_mics
    pos = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    # exact zeros keep the centroid check tight
    pos[np.abs(pos) < 1e-15] = 0.0
    pos -= pos.mean(axis=0)
    return ArrayGeometry(pos, speed_of_sound, sample_rate)


def delay_samples(geom, mic, theta):
    """Signed fractional delay of ``mic`` for a far-field source at ``theta``.

    Negative values are advances: the wavefront reaches that microphone
    before the array centre.
    """
    if not 0 <= mic < geom.n_mics:
        raise IndexError(f"mic index {mic} out of range for {geom.n_mics} microphones")
    return float(geom.delays(theta)[mic])


def manifold(geom, theta, omega):
    """Manifold vector ``exp(-1j * tau_i * omega)`` for one direction and frequency."""
    if not 0 <= omega <= np.pi + 1e-12:
        raise ConfigError("omega must lie in [0, pi] radians per sample")
    return np.exp(-1j * geom.delays(theta) * omega)
