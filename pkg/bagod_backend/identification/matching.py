"""
Turn detected clusters into user identities.

Stationary users are recognised by their registered LoS angle. Whatever is
left is treated as a mobile user and identified by the codebook column its
recovered preamble correlates with, inside the sector of its LoS angle.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from bagod_backend.errors import ConfigurationError
from .registry import CROWDED_FLAG, sector_of

logger = logging.getLogger(__name__)


def default_angle_tolerance() -> float:
    return math.radians(settings.BAGOD['ANGLE_TOLERANCE_DEG'])


def default_correlation_threshold() -> float:
    return settings.BAGOD['CORRELATION_THRESHOLD']


@dataclass(frozen=True)
class StationaryMatches:
    """``matched`` maps cluster index to user id."""
    matched: dict
    unmatched: tuple
    flags: tuple = ()


@dataclass(frozen=True)
class MobileMatch:
    cluster: int
    user_id: int
    preamble_index: int
    shift: int
    correlation: float
    sector: int


@dataclass(frozen=True)
class MobileMatches:
    matched: dict
    unidentified: tuple
    details: dict = field(default_factory=dict)
    flags: tuple = ()


def match_stationary(clusters, registry, angle_tol: float = None) -> StationaryMatches:
    """
    Greedy nearest-first assignment of clusters to registered stationary
    users within ``angle_tol`` radians of their LoS angle. Every cluster and
    every user is used at most once; the order of clusters does not matter.
    """
    angle_tol = default_angle_tolerance() if angle_tol is None else angle_tol
    if angle_tol < 0:
        raise ConfigurationError("angle tolerance must be nonnegative")

    los = [angle.theta for angle in clusters.los_angles]
    pairs = []
    for index, theta in enumerate(los):
        for user_id, registered in registry.stationary.items():
            distance = abs(theta - registered)
            if distance <= angle_tol:
                pairs.append((distance, user_id, theta, index))
    pairs.sort(key=lambda pair: pair[:3])

    matched, taken, flags = {}, set(), []
    claims = {}
    for _, user_id, _, index in pairs:
        claims.setdefault(user_id, set()).add(index)
        if index in matched or user_id in taken:
            continue
        matched[index] = user_id
        taken.add(user_id)

    for user_id, indices in sorted(claims.items()):
        if len(indices) > 1:
            flags.append(f'stationary_conflict:{user_id}')
            logger.warning("%d clusters fall within tolerance of stationary user %d", len(indices), user_id)
    unmatched = tuple(i for i in range(len(los)) if i not in matched)
    return StationaryMatches(matched=matched, unmatched=unmatched, flags=tuple(flags))


def codebook_correlation(preamble: np.ndarray, codebook: np.ndarray, max_shift: int = 0) -> tuple:
    """
    Best |<roll(preamble, -s), c_p>| over columns p and shifts 0..max_shift.
    Returns (p, s, correlation); ties go to the smallest shift, then column.
    """
    preamble = np.asarray(preamble, dtype=float)
    norm = np.linalg.norm(preamble)
    if norm == 0:
        return 0, 0, 0.0
    preamble = preamble / norm
    best = (0, 0, -1.0)
    for shift in range(int(max_shift) + 1):
        scores = np.abs(codebook.T @ np.roll(preamble, -shift))
        column = int(np.argmax(scores))
        if scores[column] > best[2] + 1e-12:
            best = (column, shift, float(scores[column]))
    return best


def _nearest_candidate(candidates, theta: float, registry) -> int:
    return min(candidates, key=lambda uid: (abs(registry.mobile_los.get(uid, math.inf) - theta), uid))


def match_mobile(unmatched, clusters, am, registry, corr_threshold: float = None,
                 max_shift: int = 0) -> MobileMatches:
    """
    Identify each unmatched cluster by (sector of its LoS angle, codebook
    column of its recovered preamble). Clusters whose best correlation is
    below ``corr_threshold`` or with no registered candidate stay
    unidentified. ``am`` preambles are indexed by cluster.
    """
    corr_threshold = default_correlation_threshold() if corr_threshold is None else corr_threshold
    matched, details, unidentified, flags = {}, {}, [], []

    for index in unmatched:
        theta = clusters.los_angles[index].theta
        column, shift, correlation = codebook_correlation(am.preamble(index), registry.mobile_codebook, max_shift)
        sector, on_boundary = sector_of(theta, registry.n_sectors)
        if on_boundary:
            flags.append(f'sector_boundary:{index}')
        if correlation < corr_threshold:
            unidentified.append(index)
            flags.append(f'low_correlation:{index}')
            continue
        candidates = registry.candidates(sector, column)
        if not candidates:
            unidentified.append(index)
            flags.append(f'no_mobile_candidate:{index}')
            continue
        user_id = _nearest_candidate(candidates, theta, registry)
        details[index] = MobileMatch(index, user_id, column, shift, correlation, sector)

    # one cluster per user, the best correlated wins
    by_user = {}
    for index, match in details.items():
        by_user.setdefault(match.user_id, []).append(match)
    for user_id, matches in sorted(by_user.items()):
        matches.sort(key=lambda m: (-m.correlation, m.cluster))
        matched[matches[0].cluster] = user_id
        for loser in matches[1:]:
            unidentified.append(loser.cluster)
            flags.append(f'mobile_conflict:{user_id}')

    if unidentified:
        logger.info("%d clusters detected but not identified", len(unidentified))
    return MobileMatches(matched=matched, unidentified=tuple(sorted(unidentified)),
                         details=details, flags=tuple(flags))


@dataclass(frozen=True)
class DetectionReport:
    """
    Estimated active set split by class, with the cluster behind every
    identified user and the AM factors when they were computed.
    """
    est_active_stationary: frozenset
    est_active_mobile: frozenset
    clusters: object = None
    stationary_clusters: dict = field(default_factory=dict)
    mobile_clusters: dict = field(default_factory=dict)
    unmatched: tuple = ()
    am: object = None
    flags: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'est_active_stationary', frozenset(self.est_active_stationary))
        object.__setattr__(self, 'est_active_mobile', frozenset(self.est_active_mobile))
        if self.est_active_stationary & self.est_active_mobile:
            raise ConfigurationError("a user cannot be detected as both stationary and mobile")

    @property
    def est_active(self) -> frozenset:
        return self.est_active_stationary | self.est_active_mobile

    @property
    def k_hat(self) -> int:
        return 0 if self.clusters is None else self.clusters.k_hat

    def cluster_of(self, user_id: int) -> int:
        if user_id in self.stationary_clusters:
            return self.stationary_clusters[user_id]
        return self.mobile_clusters[user_id]

    def preamble(self, user_id: int) -> np.ndarray:
        if self.am is None:
            raise ConfigurationError("no AM estimate in this report")
        return self.am.preamble(self.cluster_of(user_id))

    def to_dict(self) -> dict:
        return {
            'est_active': sorted(self.est_active),
            'est_active_stationary': sorted(self.est_active_stationary),
            'est_active_mobile': sorted(self.est_active_mobile),
            'k_hat': self.k_hat,
            'l_hat': [] if self.clusters is None else self.clusters.l_hat,
            'unmatched': list(self.unmatched),
            'flags': list(self.flags),
        }


def identify(clusters, registry, am=None, angle_tol: float = None, corr_threshold: float = None,
             max_shift: int = 0) -> DetectionReport:
    """
    Stationary matching first, then mobile matching on what is left. A
    registry whose stationary users sit closer than twice ``angle_tol`` is
    flagged since one cluster can then fit two of them.
    """
    angle_tol = default_angle_tolerance() if angle_tol is None else angle_tol
    stationary = match_stationary(clusters, registry, angle_tol)
    flags = [] if registry.check_separation(angle_tol) else [CROWDED_FLAG]
    flags.extend(stationary.flags)
    leftovers = stationary.unmatched
    mobile_clusters, unmatched = {}, leftovers

    if leftovers and am is None:
        flags.append('no_am_estimate')
    elif leftovers:
        mobile = match_mobile(leftovers, clusters, am, registry, corr_threshold, max_shift)
        flags.extend(mobile.flags)
        mobile_clusters = {uid: index for index, uid in mobile.matched.items()}
        unmatched = mobile.unidentified
    if am is not None:
        flags.extend(am.flags)

    return DetectionReport(
        est_active_stationary=frozenset(stationary.matched.values()),
        est_active_mobile=frozenset(mobile_clusters),
        clusters=clusters,
        stationary_clusters={uid: index for index, uid in stationary.matched.items()},
        mobile_clusters=mobile_clusters,
        unmatched=tuple(unmatched),
        am=am,
        flags=tuple(flags),
    )
