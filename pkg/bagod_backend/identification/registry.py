"""
What the base station knows before a coherence block: stationary users by
their LoS angle, mobile users by (sector, preamble index) with a last known
LoS angle.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings

from bagod_backend.errors import ConfigurationError

logger = logging.getLogger(__name__)

BOUNDARY_TOLERANCE = 1e-12
CROWDED_FLAG = 'registry_crowded'


def default_codebook_size(t_len: int, tau_max: float = 0.0) -> int:
    """P = T // (ceil(tau_max) + 1), at least one column."""
    return max(1, t_len // (int(math.ceil(tau_max)) + 1))


def nonnegative_codebook(t_len: int, n_columns: int = None) -> np.ndarray:
    """
    T x P matrix of nonnegative orthonormal columns.

    Column p is flat on the p-th of P contiguous blocks of the time axis and
    zero elsewhere; P = T gives the standard basis.
    """
    n_columns = t_len if n_columns is None else int(n_columns)
    if not 1 <= n_columns <= t_len:
        raise ConfigurationError(f"codebook size must lie in [1, T={t_len}], got {n_columns}")
    codebook = np.zeros((t_len, n_columns))
    for p, block in enumerate(np.array_split(np.arange(t_len), n_columns)):
        codebook[block, p] = 1.0 / math.sqrt(block.size)
    return codebook


def sector_bounds(n_sectors: int) -> tuple:
    """Equal-width angular sectors partitioning (0, pi)."""
    if n_sectors < 1:
        raise ConfigurationError("at least one sector is required")
    edges = np.linspace(0.0, math.pi, n_sectors + 1)
    return tuple((float(edges[s]), float(edges[s + 1])) for s in range(n_sectors))


def sector_of(theta: float, n_sectors: int) -> tuple:
    """
    0-based sector index of ``theta`` and whether it sits on a boundary.
    Boundary angles go to the lower-indexed sector.
    """
    width = math.pi / n_sectors
    position = float(theta) / width
    nearest = round(position)
    on_boundary = 0 < nearest < n_sectors and abs(position - nearest) * width <= BOUNDARY_TOLERANCE
    if on_boundary:
        return nearest - 1, True
    return min(max(int(math.floor(position)), 0), n_sectors - 1), False


@dataclass(frozen=True)
class Registry:
    """
    ``stationary`` maps user id to registered LoS angle (radians).
    ``mobile_los`` maps mobile user id to its last known LoS angle and
    ``mobile_assignment`` maps (sector, preamble index) to candidate ids.
    """
    stationary: dict
    sectors: tuple
    mobile_codebook: np.ndarray
    mobile_assignment: dict
    mobile_los: dict = field(default_factory=dict)

    @property
    def n_sectors(self) -> int:
        return len(self.sectors)

    @property
    def n_preambles(self) -> int:
        return self.mobile_codebook.shape[1]

    @property
    def mobile_ids(self) -> frozenset:
        return frozenset(uid for ids in self.mobile_assignment.values() for uid in ids)

    def candidates(self, sector: int, preamble_index: int) -> frozenset:
        return self.mobile_assignment.get((sector, preamble_index), frozenset())

    def min_stationary_gap(self) -> float:
        angles = np.sort(np.fromiter(self.stationary.values(), dtype=float))
        if angles.size < 2:
            return math.inf
        return float(np.min(np.diff(angles)))

    def check_separation(self, angle_tol: float) -> bool:
        """Registered stationary LoS angles at least 2 * angle_tol apart."""
        return self.min_stationary_gap() >= 2.0 * angle_tol


def warn_if_crowded(registry: Registry, angle_tol: float = None) -> bool:
    """Log a warning when stationary users sit closer than twice the matching tolerance."""
    angle_tol = math.radians(settings.BAGOD['ANGLE_TOLERANCE_DEG']) if angle_tol is None else angle_tol
    if registry.check_separation(angle_tol):
        return False
    logger.warning("registered stationary angles %.3g deg apart, tolerance %.3g deg can match two users",
                   math.degrees(registry.min_stationary_gap()), math.degrees(angle_tol))
    return True


def _assign(entries) -> dict:
    assignment = {}
    for sector, index, user_id in entries:
        assignment.setdefault((sector, index), set()).add(user_id)
    return {key: frozenset(ids) for key, ids in assignment.items()}


def build_registry(scenario) -> Registry:
    """Registry as the base station would hold it for ``scenario``."""
    codebook = scenario.mobile_codebook
    if codebook is None:
        codebook = nonnegative_codebook(scenario.t_len, default_codebook_size(scenario.t_len, scenario.tau_max))
    stationary, mobile_los, entries = {}, {}, []
    for user in scenario.users:
        if user.is_mobile:
            sector = user.sector
            if sector is None:
                sector, _ = sector_of(user.registered_los, scenario.n_sectors)
            if user.preamble_index is None:
                raise ConfigurationError(f"mobile user {user.user_id} has no preamble index")
            mobile_los[user.user_id] = float(user.registered_los)
            entries.append((sector, user.preamble_index, user.user_id))
        else:
            stationary[user.user_id] = float(user.registered_los)
    return Registry(
        stationary=stationary,
        sectors=sector_bounds(scenario.n_sectors),
        mobile_codebook=codebook,
        mobile_assignment=_assign(entries),
        mobile_los=mobile_los,
    )


def load_registry(source, t_len: int, n_sectors: int = 4, n_preambles: int = None,
                  angle_tol: float = None) -> Registry:
    """
    Registry from JSON entries ``{user_id, type, los_angle_deg, sector,
    preamble_index}``; ``source`` is a path or an already parsed list.
    Sectors in the file are 1-based like the angular ranges they name.
    """
    from .serializers import RegistryEntrySerializer

    if isinstance(source, (str, Path)):
        with open(source) as handle:
            source = json.load(handle)
    serializer = RegistryEntrySerializer(data=source, many=True)
    serializer.is_valid(raise_exception=True)

    codebook = nonnegative_codebook(t_len, n_preambles)
    stationary, mobile_los, entries = {}, {}, []
    for entry in serializer.validated_data:
        theta = math.radians(entry['los_angle_deg'])
        if entry['type'] == 'stationary':
            stationary[entry['user_id']] = theta
            continue
        if entry['preamble_index'] >= codebook.shape[1]:
            raise ConfigurationError(
                f"user {entry['user_id']}: preamble index {entry['preamble_index']} "
                f"outside a codebook of {codebook.shape[1]} columns")
        sector = entry.get('sector')
        sector = sector_of(theta, n_sectors)[0] if sector is None else sector - 1
        if not 0 <= sector < n_sectors:
            raise ConfigurationError(f"user {entry['user_id']}: sector out of range")
        mobile_los[entry['user_id']] = theta
        entries.append((sector, entry['preamble_index'], entry['user_id']))

    logger.info("loaded registry: %d stationary, %d mobile users", len(stationary), len(mobile_los))
    registry = Registry(
        stationary=stationary,
        sectors=sector_bounds(n_sectors),
        mobile_codebook=codebook,
        mobile_assignment=_assign(entries),
        mobile_los=mobile_los,
    )
    warn_if_crowded(registry, angle_tol)
    return registry
