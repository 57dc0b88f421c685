"""
Peak picking on a sampled dual polynomial.
"""
import logging
from dataclasses import dataclass

import numpy as np
from django.conf import settings
from scipy import signal as sps

from arrays.manifold import AngleOfArrival, ArrayConfig, steering_matrix
from bagod_backend.errors import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class Peak:
    angle: AngleOfArrival
    value: float
    index: int = -1

    @property
    def theta(self) -> float:
        return self.angle.theta


def parabolic_vertex(values: np.ndarray, index: int) -> tuple:
    """
    Vertex (offset, height) of the parabola through samples index-1..index+1;
    the offset is in samples relative to ``index`` and lies in [-0.5, 0.5].
    """
    left, centre, right = values[index - 1], values[index], values[index + 1]
    curvature = left - 2.0 * centre + right
    if curvature >= 0:
        return 0.0, float(centre)
    offset = 0.5 * (left - right) / curvature
    return float(offset), float(centre - 0.25 * (left - right) * offset)


def find_peaks(spectrum, rel_threshold: float = None, refine: bool = True) -> list:
    """
    Strict local maxima of ``spectrum.values`` at or above
    ``rel_threshold * max``; optionally refined by a three-point parabola.
    Returns peaks sorted by angle.
    """
    rel_threshold = settings.BAGOD['PEAK_REL_THRESHOLD'] if rel_threshold is None else rel_threshold
    if not 0.0 < rel_threshold < 1.0:
        raise ConfigurationError("rel_threshold must lie in (0, 1)")
    values, grid = spectrum.values, spectrum.grid
    top = spectrum.peak_value
    if top <= 0.0 or values.size < 3:
        return []

    candidates, _ = sps.find_peaks(values, height=rel_threshold * top)
    peaks = []
    for index in candidates:
        if not (values[index] > values[index - 1] and values[index] > values[index + 1]):
            continue
        theta, height = grid[index], float(values[index])
        if refine:
            offset, height = parabolic_vertex(values, index)
            neighbour = index + 1 if offset >= 0 else index - 1
            theta = grid[index] + abs(offset) * (grid[neighbour] - grid[index])
        peaks.append(Peak(AngleOfArrival(theta), height, int(index)))
    logger.debug("found %d peaks above %.3g", len(peaks), rel_threshold * top)
    return peaks


def peak_strengths(y: np.ndarray, omega, n_antennas: int, thetas,
                   spacing_ratio: float = 0.5) -> np.ndarray:
    """
    Row norms of the least-squares fit Y ~ P_Omega(A(thetas)) W: how much
    received energy each detected path carries.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.size == 0:
        return np.empty(0)
    basis = steering_matrix(ArrayConfig(n_antennas, spacing_ratio), thetas)[np.asarray(omega), :]
    weights, *_ = np.linalg.lstsq(basis, np.asarray(y), rcond=None)
    return np.linalg.norm(weights, axis=1)
