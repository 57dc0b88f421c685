"""
Group detected angles into users by jump points in the sorted angle list.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from arrays.manifold import DEFAULT_SPREAD_WIDTH, as_angle
from bagod_backend.errors import ConfigurationError
from .peaks import Peak

logger = logging.getLogger(__name__)


def default_gap_threshold(spread_width: float = DEFAULT_SPREAD_WIDTH, grid_size: int = 8192) -> float:
    """max(2 * spread width, 4 pi / grid size)"""
    return max(2.0 * spread_width, 4.0 * math.pi / grid_size)


@dataclass(frozen=True)
class ClusterResult:
    """
    ``clusters`` holds one ascending tuple of angles per detected user,
    ``los_angles`` the strongest angle of each cluster.
    """
    clusters: tuple
    los_angles: tuple
    strengths: tuple = ()

    @property
    def k_hat(self) -> int:
        return len(self.clusters)

    @property
    def l_hat(self) -> list:
        return [len(cluster) for cluster in self.clusters]

    @property
    def n_angles(self) -> int:
        return sum(self.l_hat)

    def thetas(self, index: int) -> np.ndarray:
        return np.array([angle.theta for angle in self.clusters[index]])

    def all_thetas(self) -> np.ndarray:
        return np.array([angle.theta for cluster in self.clusters for angle in cluster])


def cluster_angles(peaks, gap_threshold: float = None, weights=None) -> ClusterResult:
    """
    Split the sorted ``peaks`` wherever consecutive angles are more than
    ``gap_threshold`` radians apart. The LoS angle of a cluster is the one
    with the largest weight: ``weights`` when given, else the peak values.
    """
    peaks = list(peaks)
    if not peaks:
        return ClusterResult(clusters=(), los_angles=())
    gap_threshold = default_gap_threshold() if gap_threshold is None else gap_threshold
    if gap_threshold <= 0:
        raise ConfigurationError("gap threshold must be positive")

    angles = [p.angle if isinstance(p, Peak) else as_angle(p) for p in peaks]
    if weights is None:
        weights = [p.value if isinstance(p, Peak) else 1.0 for p in peaks]
    weights = np.asarray(weights, dtype=float)
    if weights.size != len(angles):
        raise ConfigurationError("one weight per peak is required")
    thetas = np.array([a.theta for a in angles])
    if np.any(np.diff(thetas) < 0):
        raise ConfigurationError("peaks must be sorted by angle")

    breaks = np.flatnonzero(np.diff(thetas) > gap_threshold) + 1
    clusters, los_angles, strengths = [], [], []
    for members in np.split(np.arange(thetas.size), breaks):
        clusters.append(tuple(angles[i] for i in members))
        strongest = members[int(np.argmax(weights[members]))]
        los_angles.append(angles[strongest])
        strengths.append(float(weights[strongest]))
    logger.debug("clustered %d angles into %d users", thetas.size, len(clusters))
    return ClusterResult(clusters=tuple(clusters), los_angles=tuple(los_angles), strengths=tuple(strengths))
