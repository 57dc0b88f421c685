"""
Ground-truth world and observation containers.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from django.db import models

from arrays.manifold import ArrayConfig, UserChannel
from bagod_backend.errors import ConfigurationError


class Mobility(models.TextChoices):
    STATIONARY = 'stationary', 'Stationary'
    MOBILE = 'mobile', 'Mobile'


class NoiseKind(models.TextChoices):
    GAUSSIAN = 'gaussian', 'Complex Gaussian'
    UNIFORM = 'uniform', 'Complex uniform'


def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class UserProfile:
    """
    One user of the population, active or not.

    ``registered_los`` is the angle the base station keeps on file: the LoS
    angle of a stationary user, the last known LoS angle of a mobile user.
    ``sector`` and ``preamble_index`` are only set for mobile users.
    """
    user_id: int
    mobility: str
    channel: UserChannel
    preamble: np.ndarray
    delay: float = 0.0
    gain_error: Optional[np.ndarray] = None
    active: bool = False
    registered_los: float = None
    sector: Optional[int] = None
    preamble_index: Optional[int] = None

    def __post_init__(self):
        if self.mobility not in Mobility.values:
            raise ConfigurationError(f"unknown mobility {self.mobility!r}")
        preamble = _frozen_array(self.preamble, float).reshape(-1)
        object.__setattr__(self, 'preamble', preamble)
        if np.any(preamble < -1e-12):
            raise ConfigurationError(f"user {self.user_id}: preamble must be nonnegative")
        if abs(np.linalg.norm(preamble) - 1.0) > 1e-9:
            raise ConfigurationError(f"user {self.user_id}: preamble must have unit l2 norm")

        gain_error = np.zeros(preamble.size) if self.gain_error is None else self.gain_error
        gain_error = _frozen_array(gain_error, float).reshape(-1)
        object.__setattr__(self, 'gain_error', gain_error)
        if gain_error.size != preamble.size:
            raise ConfigurationError(f"user {self.user_id}: gain error length must equal T")

        if not self.delay >= 0:
            raise ConfigurationError(f"user {self.user_id}: delay must be nonnegative")
        if self.registered_los is None:
            object.__setattr__(self, 'registered_los', self.channel.los_angle.theta)

    @property
    def is_mobile(self) -> bool:
        return self.mobility == Mobility.MOBILE


@dataclass(frozen=True)
class Scenario:
    """
    Full ground truth of one coherence block.

    ``omega`` holds 0-based antenna indices. ``snr_db=None`` means noiseless.
    ``noise_bound`` overrides the realized noise norm as eta when given.
    """
    array: ArrayConfig
    users: tuple
    t_len: int
    tau_max: float = 0.0
    zeta: float = 0.0
    omega: np.ndarray = None
    snr_db: Optional[float] = None
    noise_bound: Optional[float] = None
    eta_multiplier: float = 1.0
    noise: str = NoiseKind.GAUSSIAN
    strict: bool = False
    n_sectors: int = 4
    mobile_codebook: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, 'users', tuple(self.users))
        n = self.array.n_antennas
        omega = np.arange(n) if self.omega is None else np.asarray(self.omega, dtype=int).reshape(-1)
        omega = _frozen_array(omega, int)
        object.__setattr__(self, 'omega', omega)

        if self.t_len < 1:
            raise ConfigurationError("T must be a positive integer")
        if omega.size == 0:
            raise ConfigurationError("omega must not be empty")
        if np.any(np.diff(omega) <= 0):
            raise ConfigurationError("omega must be strictly increasing")
        if omega[0] < 0 or omega[-1] >= n:
            raise ConfigurationError(f"omega indices must lie in [0, {n})")
        if not 0 <= self.tau_max < self.t_len:
            raise ConfigurationError("tau_max must satisfy 0 <= tau_max < T")
        if self.zeta < 0:
            raise ConfigurationError("zeta must be nonnegative")
        if self.eta_multiplier < 1.0:
            raise ConfigurationError("eta_multiplier must be >= 1")
        if self.noise not in NoiseKind.values:
            raise ConfigurationError(f"unknown noise kind {self.noise!r}")

        seen = set()
        for user in self.users:
            if user.user_id in seen:
                raise ConfigurationError(f"duplicate user id {user.user_id}")
            seen.add(user.user_id)
            if user.preamble.size != self.t_len:
                raise ConfigurationError(f"user {user.user_id}: preamble length must equal T")
            if np.max(np.abs(user.gain_error), initial=0.0) > self.zeta + 1e-12:
                raise ConfigurationError(f"user {user.user_id}: gain error exceeds zeta={self.zeta}")
            if user.delay > self.tau_max + 1e-12:
                raise ConfigurationError(f"user {user.user_id}: delay exceeds tau_max={self.tau_max}")
            user.channel.validate_for(self.array)

        if self.mobile_codebook is not None:
            object.__setattr__(self, 'mobile_codebook', _frozen_array(self.mobile_codebook, float))

    # population views

    @property
    def active_users(self) -> tuple:
        return tuple(u for u in self.users if u.active)

    @property
    def active_ids(self) -> frozenset:
        return frozenset(u.user_id for u in self.users if u.active)

    @property
    def stationary_ids(self) -> frozenset:
        return frozenset(u.user_id for u in self.users if not u.is_mobile)

    @property
    def mobile_ids(self) -> frozenset:
        return frozenset(u.user_id for u in self.users if u.is_mobile)

    @property
    def k(self) -> int:
        return len(self.users)

    @property
    def k_a(self) -> int:
        return len(self.active_ids)

    @property
    def k_s(self) -> int:
        return len(self.stationary_ids)

    @property
    def k_m(self) -> int:
        return len(self.mobile_ids)

    @property
    def k_a_s(self) -> int:
        return len(self.active_ids & self.stationary_ids)

    @property
    def k_a_m(self) -> int:
        return len(self.active_ids & self.mobile_ids)

    @property
    def m(self) -> int:
        return int(self.omega.size)

    @property
    def c_e(self) -> float:
        """C_e = 1 + zeta"""
        return 1.0 + self.zeta

    def user(self, user_id: int) -> UserProfile:
        for candidate in self.users:
            if candidate.user_id == user_id:
                return candidate
        raise KeyError(user_id)

    def with_active(self, active_ids) -> 'Scenario':
        """Same world with a different active set."""
        active_ids = set(active_ids)
        users = tuple(replace(u, active=u.user_id in active_ids) for u in self.users)
        return replace(self, users=users)


@dataclass(frozen=True)
class ReceivedSignal:
    """
    Observation Y_Omega (M x T) with the antenna set and the noise bound eta.

    ``clean`` keeps the noiseless part P_Omega(X) and ``sigma`` the per-entry
    noise standard deviation used to draw the noise; both are diagnostics.
    """
    y: np.ndarray
    omega: np.ndarray
    noise_bound: float
    n_antennas: int
    sigma: float = 0.0
    clean: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        y = _frozen_array(self.y, complex)
        if y.ndim != 2:
            raise ConfigurationError("received signal must be a matrix")
        omega = _frozen_array(self.omega, int).reshape(-1)
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'omega', omega)
        if y.shape[0] != omega.size:
            raise ConfigurationError(
                f"Y has {y.shape[0]} rows but omega selects {omega.size} antennas")
        if omega.size and (omega.min() < 0 or omega.max() >= self.n_antennas):
            raise ConfigurationError("omega index out of range")
        if self.noise_bound < 0 or math.isnan(self.noise_bound):
            raise ConfigurationError("noise bound must be nonnegative")

    @property
    def m(self) -> int:
        return self.y.shape[0]

    @property
    def t_len(self) -> int:
        return self.y.shape[1]
