"""
Uniform linear array manifold and angular group-sparse user channels.

Angles are kept in radians inside (0, pi); the cosine domain only shows up in
separation checks and in the spectrum code.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from bagod_backend.errors import ConfigurationError

logger = logging.getLogger(__name__)

DEFAULT_SPREAD_WIDTH = math.pi / 12


@dataclass(frozen=True)
class ArrayConfig:
    """
    ULA geometry: N antennas spaced ``spacing_ratio`` wavelengths apart.
    """
    n_antennas: int
    spacing_ratio: float = 0.5

    def __post_init__(self):
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 2:
            raise ConfigurationError(f"n_antennas must be an integer >= 2, got {self.n_antennas!r}")
        object.__setattr__(self, 'n_antennas', int(self.n_antennas))
        if not (self.spacing_ratio > 0 and math.isfinite(self.spacing_ratio)):
            raise ConfigurationError(f"spacing_ratio must be > 0, got {self.spacing_ratio!r}")


@dataclass(frozen=True, order=True)
class AngleOfArrival:
    """
    Direction of arrival in radians, strictly inside (0, pi).
    """
    theta: float

    def __post_init__(self):
        theta = float(self.theta)
        if not (0.0 < theta < math.pi):
            raise ConfigurationError(f"angle of arrival must lie in (0, pi), got {theta!r}")
        object.__setattr__(self, 'theta', theta)

    @classmethod
    def from_degrees(cls, degrees: float) -> 'AngleOfArrival':
        return cls(math.radians(degrees))

    @property
    def degrees(self) -> float:
        return math.degrees(self.theta)

    @property
    def cosine(self) -> float:
        return math.cos(self.theta)

    def __float__(self):
        return self.theta


AngleLike = Union[AngleOfArrival, float]


def as_angle(value: AngleLike) -> AngleOfArrival:
    if isinstance(value, AngleOfArrival):
        return value
    return AngleOfArrival(float(value))


@dataclass(frozen=True)
class UserChannel:
    """
    Multipath channel of one user: L paths with complex gains, all angles
    inside a narrow angular spread (theta_min, theta_max).
    """
    angles: tuple
    gains: np.ndarray
    spread: tuple
    max_spread: float = field(default=DEFAULT_SPREAD_WIDTH, compare=False)

    def __post_init__(self):
        angles = tuple(as_angle(a) for a in self.angles)
        gains = np.array(self.gains, dtype=complex).reshape(-1)
        gains.setflags(write=False)
        object.__setattr__(self, 'angles', angles)
        object.__setattr__(self, 'gains', gains)

        if not angles:
            raise ConfigurationError("a user channel needs at least one path")
        if len(angles) != gains.size:
            raise ConfigurationError(
                f"{len(angles)} angles but {gains.size} gains; lengths must match")

        lo, hi = (float(v) for v in self.spread)
        object.__setattr__(self, 'spread', (lo, hi))
        if not lo <= hi:
            raise ConfigurationError(f"spread bounds out of order: {self.spread}")
        if hi - lo > self.max_spread + 1e-12:
            raise ConfigurationError(
                f"spread width {hi - lo:.4f} rad exceeds the limit {self.max_spread:.4f} rad")
        for angle in angles:
            if not lo - 1e-12 <= angle.theta <= hi + 1e-12:
                raise ConfigurationError(
                    f"angle {angle.theta:.4f} outside spread ({lo:.4f}, {hi:.4f})")

    @property
    def n_paths(self) -> int:
        return len(self.angles)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([a.theta for a in self.angles])

    @property
    def los_angle(self) -> AngleOfArrival:
        """The dominant-amplitude path."""
        return self.angles[int(np.argmax(np.abs(self.gains)))]

    def validate_for(self, config: ArrayConfig, l_max: int = None):
        limit = config.n_antennas if l_max is None else min(l_max, config.n_antennas)
        if self.n_paths > limit:
            raise ConfigurationError(
                f"{self.n_paths} paths exceed L_max={limit} for N={config.n_antennas}")


def steering_matrix(config: ArrayConfig, thetas) -> np.ndarray:
    """
    Stack of array responses, one column per angle (N x len(thetas)).

    No range check on the angles so grid code can evaluate the closed
    interval limits.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    n = np.arange(config.n_antennas)[:, None]
    phase = -2j * np.pi * config.spacing_ratio * n * np.cos(thetas)[None, :]
    return np.exp(phase) / np.sqrt(config.n_antennas)


def steering_vector(config: ArrayConfig, theta: AngleLike) -> np.ndarray:
    return steering_matrix(config, as_angle(theta).theta)[:, 0]


def synthesize_channel(config: ArrayConfig, channel: UserChannel) -> np.ndarray:
    """h = sum_l alpha_l a(theta_l)"""
    channel.validate_for(config)
    return steering_matrix(config, channel.thetas) @ channel.gains


def circular_distance(x: float, y: float, period: float = 1.0) -> float:
    """Distance between two points on a circle of circumference ``period``."""
    d = abs(x - y) % period
    return min(d, period - d)


def min_separation(all_channels: Iterable[UserChannel]) -> float:
    """
    Smallest intra-user separation between path cosines, measured on the unit
    circle, e.g. cosines 0.2 and 0.8 are 0.4 apart. Users with a single path
    do not contribute; with no pair at all the result is +inf.
    """
    best = math.inf
    for channel in all_channels:
        cosines = [a.cosine for a in channel.angles]
        for i in range(len(cosines)):
            for q in range(i + 1, len(cosines)):
                best = min(best, circular_distance(cosines[i], cosines[q]))
    return best


def separation_guaranteed(config: ArrayConfig, channels: Sequence[UserChannel]) -> bool:
    """Unique-identification condition Delta > 1/N."""
    return min_separation(channels) > 1.0 / config.n_antennas
