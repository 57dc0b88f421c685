"""
Random ground-truth worlds built from a flat parameter set.

Stationary users are numbered 1..K_S, mobile users K_S+1..K_S+K_M. Active
users get LoS angles at least ``min_user_gap`` apart; inactive stationary
users fill a lattice of registered angles kept clear of the active ones.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from arrays.manifold import ArrayConfig, DEFAULT_SPREAD_WIDTH, UserChannel, min_separation
from bagod_backend.errors import ConfigurationError, ScenarioError
from identification.registry import (
    default_codebook_size, nonnegative_codebook, sector_bounds, sector_of,
)
from .types import Mobility, NoiseKind, Scenario, UserProfile

logger = logging.getLogger(__name__)

PLACEMENT_RESTARTS = 100
PLACEMENT_ATTEMPTS = 200
PATH_ATTEMPTS = 200

# sweep variable name -> parameter field
SWEEP_FIELDS = {
    'K_aM': 'k_a_m',
    'K_aS': 'k_a_s',
    'K_M': 'k_m',
    'K_S': 'k_s',
    'T': 't_len',
    'N': 'n_antennas',
    'SNR': 'snr_db',
}


@dataclass(frozen=True)
class ScenarioParams:
    """
    Everything needed to draw a scenario. Angles in radians, ``omega``
    0-based. ``m`` picks a random antenna subset when ``omega`` is not given.
    """
    n_antennas: int = 32
    t_len: int = 2
    k_s: int = 2
    k_m: int = 1
    k_a_s: int = 2
    k_a_m: int = 1
    l_max: int = 3
    m: Optional[int] = None
    omega: Optional[tuple] = None
    snr_db: Optional[float] = None
    tau_max: float = 0.0
    zeta: float = 0.0
    spread_width: float = DEFAULT_SPREAD_WIDTH
    spacing_ratio: float = 0.5
    los_boost: float = 2.0
    min_user_gap: Optional[float] = None
    guaranteed_recovery: bool = False
    separation_factor: float = 1.0
    integer_delays: bool = True
    gain_error_users: str = Mobility.MOBILE
    mobile_drift_deg: float = 0.5
    angle_margin_deg: float = 10.0
    registry_clearance_deg: float = 2.0
    n_sectors: int = 4
    n_preambles: Optional[int] = None
    noise: str = NoiseKind.GAUSSIAN
    noise_bound: Optional[float] = None
    eta_multiplier: float = 1.0
    strict: bool = False

    def __post_init__(self):
        if self.k_a_s > self.k_s or self.k_a_m > self.k_m:
            raise ConfigurationError("active counts cannot exceed population counts")
        if min(self.k_s, self.k_m, self.k_a_s, self.k_a_m) < 0:
            raise ConfigurationError("user counts must be nonnegative")
        if not 1 <= self.l_max <= self.n_antennas:
            raise ConfigurationError("L_max must satisfy 1 <= L_max <= N")
        if self.m is not None and not 1 <= self.m <= self.n_antennas:
            raise ConfigurationError("M must satisfy 1 <= M <= N")
        if self.gain_error_users not in ('mobile', 'all'):
            raise ConfigurationError("gain_error_users must be 'mobile' or 'all'")
        if not 0 < self.spread_width < math.pi:
            raise ConfigurationError("spread width must lie in (0, pi)")
        if not 0 <= self.angle_margin_deg < 90:
            raise ConfigurationError("angle margin must lie in [0, 90) degrees")

    @property
    def k_a(self) -> int:
        return self.k_a_s + self.k_a_m

    @property
    def user_gap(self) -> float:
        return 3.0 * self.spread_width if self.min_user_gap is None else self.min_user_gap

    @property
    def domain(self) -> tuple:
        """Admissible LoS range, away from end-fire."""
        margin = math.radians(self.angle_margin_deg) + self.spread_width / 2.0
        return margin, math.pi - margin

    def with_sweep(self, variable: str, value) -> 'ScenarioParams':
        """Copy with one sweep variable set; sweeping N keeps M = N unless M is fixed."""
        try:
            name = SWEEP_FIELDS[variable]
        except KeyError:
            raise ConfigurationError(f"unknown sweep variable {variable!r}") from None
        if name != 'snr_db':
            value = int(value)
        return replace(self, **{name: value})


def _place_active_angles(params: ScenarioParams, rng: np.random.Generator) -> np.ndarray:
    lo, hi = params.domain
    gap = params.user_gap
    for _ in range(PLACEMENT_RESTARTS):
        chosen = []
        for _ in range(PLACEMENT_ATTEMPTS * max(params.k_a, 1)):
            if len(chosen) == params.k_a:
                return np.array(chosen)
            candidate = rng.uniform(lo, hi)
            if all(abs(candidate - other) >= gap for other in chosen):
                chosen.append(candidate)
        if len(chosen) == params.k_a:
            return np.array(chosen)
    raise ScenarioError(
        f"could not place {params.k_a} active users {math.degrees(gap):.1f} deg apart "
        f"inside ({math.degrees(lo):.1f}, {math.degrees(hi):.1f}) deg")


def _draw_channel(params: ScenarioParams, los: float, rng: np.random.Generator) -> UserChannel:
    """
    LoS path at ``los`` with gain magnitude ``los_boost``; the other paths
    sit uniformly inside the spread with unit magnitude and random phase.
    """
    half = params.spread_width / 2.0
    spread = (los - half, los + half)
    n_paths = int(rng.integers(1, params.l_max + 1))
    threshold = params.separation_factor / params.n_antennas

    while True:
        for _ in range(PATH_ATTEMPTS):
            others = rng.uniform(spread[0], spread[1], n_paths - 1)
            angles = np.concatenate([[los], others])
            phases = rng.uniform(0.0, 2.0 * math.pi, n_paths)
            magnitudes = np.ones(n_paths)
            magnitudes[0] = params.los_boost
            channel = UserChannel(tuple(angles), magnitudes * np.exp(1j * phases), spread,
                                  max_spread=params.spread_width)
            if not params.guaranteed_recovery or min_separation([channel]) > threshold:
                return channel
        logger.debug("no %d-path set with separation > %.4f at %.2f deg, dropping a path",
                     n_paths, threshold, math.degrees(los))
        n_paths -= 1


def _random_preamble(t_len: int, rng: np.random.Generator) -> np.ndarray:
    preamble = rng.uniform(0.0, 1.0, t_len)
    return preamble / np.linalg.norm(preamble)


def _stationary_lattice(params: ScenarioParams, active_angles, count: int,
                        rng: np.random.Generator) -> np.ndarray:
    """``count`` lattice angles, none within the clearance of an active LoS."""
    if count == 0:
        return np.empty(0)
    lo, hi = params.domain
    clearance = math.radians(params.registry_clearance_deg)
    slots = max(2 * count, 64)
    for _ in range(16):
        lattice = np.linspace(lo, hi, slots)
        if len(active_angles):
            distance = np.min(np.abs(lattice[:, None] - np.asarray(active_angles)[None, :]), axis=1)
            lattice = lattice[distance > clearance]
        if lattice.size >= count:
            return rng.permutation(rng.choice(lattice, size=count, replace=False))
        slots *= 2
    raise ScenarioError(f"no room for {count} inactive stationary users")


def _mobile_los(last_known_sector: tuple, theta: float, drift: float,
                rng: np.random.Generator) -> float:
    lo, hi = last_known_sector
    inset = 1e-9
    return float(np.clip(theta + rng.uniform(-drift, drift), lo + inset, hi - inset))


def _impairments(params: ScenarioParams, mobility: str, rng: np.random.Generator):
    if params.integer_delays:
        delay = float(rng.integers(0, int(math.floor(params.tau_max)) + 1))
    else:
        delay = float(rng.uniform(0.0, params.tau_max))
    if params.zeta > 0 and (params.gain_error_users == 'all' or mobility == Mobility.MOBILE):
        gain_error = rng.uniform(-params.zeta, params.zeta, params.t_len)
    else:
        gain_error = np.zeros(params.t_len)
    return delay, gain_error


def _choose_omega(params: ScenarioParams, rng: np.random.Generator):
    if params.omega is not None:
        return np.asarray(params.omega, dtype=int)
    if params.m is None or params.m == params.n_antennas:
        return None
    return np.sort(rng.choice(params.n_antennas, size=params.m, replace=False))


def generate_scenario(params: ScenarioParams, rng: np.random.Generator) -> Scenario:
    """
    Draw a complete world: population, registry angles, active set,
    channels, preambles and impairments.
    """
    array = ArrayConfig(params.n_antennas, params.spacing_ratio)
    n_preambles = params.n_preambles or default_codebook_size(params.t_len, params.tau_max)
    codebook = nonnegative_codebook(params.t_len, n_preambles)
    sectors = sector_bounds(params.n_sectors)
    drift = math.radians(params.mobile_drift_deg)

    stationary_ids = list(range(1, params.k_s + 1))
    mobile_ids = list(range(params.k_s + 1, params.k_s + params.k_m + 1))
    active_stationary = set(rng.choice(stationary_ids, size=params.k_a_s, replace=False).tolist()) \
        if params.k_a_s else set()
    active_mobile = set(rng.choice(mobile_ids, size=params.k_a_m, replace=False).tolist()) \
        if params.k_a_m else set()

    active_angles = _place_active_angles(params, rng)
    rng.shuffle(active_angles)
    stationary_angles = iter(active_angles[:params.k_a_s])
    mobile_angles = iter(active_angles[params.k_a_s:])
    lattice = iter(_stationary_lattice(params, active_angles, params.k_s - params.k_a_s, rng))

    users = []
    for user_id in stationary_ids:
        active = user_id in active_stationary
        los = next(stationary_angles) if active else next(lattice)
        delay, gain_error = _impairments(params, Mobility.STATIONARY, rng) if active else (0.0, None)
        users.append(UserProfile(
            user_id=user_id,
            mobility=Mobility.STATIONARY,
            channel=_draw_channel(params, los, rng),
            preamble=_random_preamble(params.t_len, rng),
            delay=delay,
            gain_error=gain_error,
            active=active,
            registered_los=los,
        ))

    # active mobiles first so they get distinct preambles inside a sector
    used = set()
    lo, hi = params.domain
    ordered = sorted(mobile_ids, key=lambda uid: uid not in active_mobile)
    for user_id in ordered:
        active = user_id in active_mobile
        if active:
            los = float(next(mobile_angles))
            sector, _ = sector_of(los, params.n_sectors)
            free = [p for p in range(n_preambles) if (sector, p) not in used]
            if not free:
                message = f"sector {sector + 1} has more active mobile users than preambles"
                if params.strict:
                    raise ScenarioError(message)
                logger.warning("%s; reusing a preamble", message)
                free = list(range(n_preambles))
            index = int(rng.choice(free))
            registered = _mobile_los(sectors[sector], los, drift, rng)
        else:
            pairs = [(s, p) for s in range(params.n_sectors) for p in range(n_preambles)
                     if (s, p) not in used]
            if pairs:
                sector, index = pairs[int(rng.integers(len(pairs)))]
            else:
                sector, index = int(rng.integers(params.n_sectors)), int(rng.integers(n_preambles))
            s_lo, s_hi = sectors[sector]
            if max(s_lo, lo) < min(s_hi, hi):
                los = float(rng.uniform(max(s_lo, lo), min(s_hi, hi)))
            else:
                los = float(np.clip((s_lo + s_hi) / 2.0, lo, hi))
            registered = los
        used.add((sector, index))
        delay, gain_error = _impairments(params, Mobility.MOBILE, rng) if active else (0.0, None)
        users.append(UserProfile(
            user_id=user_id,
            mobility=Mobility.MOBILE,
            channel=_draw_channel(params, los, rng),
            preamble=codebook[:, index],
            delay=delay,
            gain_error=gain_error,
            active=active,
            registered_los=registered,
            sector=sector,
            preamble_index=index,
        ))
    users.sort(key=lambda u: u.user_id)

    scenario = Scenario(
        array=array,
        users=tuple(users),
        t_len=params.t_len,
        tau_max=params.tau_max,
        zeta=params.zeta,
        omega=_choose_omega(params, rng),
        snr_db=params.snr_db,
        noise_bound=params.noise_bound,
        eta_multiplier=params.eta_multiplier,
        noise=params.noise,
        strict=params.strict,
        n_sectors=params.n_sectors,
        mobile_codebook=codebook,
    )
    if params.guaranteed_recovery:
        channels = [u.channel for u in scenario.active_users]
        if min_separation(channels) <= params.separation_factor / params.n_antennas:
            raise ScenarioError("active channels violate the separation condition")
    logger.debug("generated scenario: K=%d, K_a=%d, T=%d, N=%d",
                 scenario.k, scenario.k_a, scenario.t_len, params.n_antennas)
    return scenario
