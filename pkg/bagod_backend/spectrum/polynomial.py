"""
Goal-oriented dual polynomial q_G(theta) = (P_Omega^adj(V*))^H a(theta).
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from django.conf import settings
from scipy import fft

from arrays.manifold import ArrayConfig, steering_matrix
from bagod_backend.errors import ConfigurationError
from solvers.feasibility import theta_grid
from solvers.problem import adjoint_expand

logger = logging.getLogger(__name__)

GRID_KINDS = ('theta', 'cosine')
CHUNK = 4096


@dataclass(frozen=True)
class AngularSpectrum:
    """
    ||q_G(theta)||_2 sampled on a strictly increasing grid inside (0, pi).
    """
    grid: np.ndarray
    values: np.ndarray
    c1: float = 1.0
    kind: str = 'theta'

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        values = np.array(self.values, dtype=float)
        if grid.shape != values.shape or grid.ndim != 1:
            raise ConfigurationError("grid and values must be vectors of equal length")
        if np.any(np.diff(grid) <= 0):
            raise ConfigurationError("spectrum grid must be strictly increasing")
        if np.any(values < 0):
            raise ConfigurationError("spectrum values must be nonnegative")
        for array in (grid, values):
            array.setflags(write=False)
        object.__setattr__(self, 'grid', grid)
        object.__setattr__(self, 'values', values)

    def __len__(self):
        return self.grid.size

    @property
    def peak_value(self) -> float:
        return float(self.values.max(initial=0.0))

    @property
    def scaled(self) -> np.ndarray:
        """c1 ||q_G||_2, bounded by 1 for a feasible solution."""
        return self.c1 * self.values

    def value_at(self, thetas) -> np.ndarray:
        return np.interp(np.asarray(thetas, dtype=float), self.grid, self.values)


def _direct(expanded: np.ndarray, thetas: np.ndarray, spacing_ratio: float) -> np.ndarray:
    config = ArrayConfig(expanded.shape[0], spacing_ratio)
    adjoint = expanded.conj().T
    values = np.empty(thetas.size)
    for start in range(0, thetas.size, CHUNK):
        block = thetas[start:start + CHUNK]
        values[start:start + CHUNK] = np.linalg.norm(adjoint @ steering_matrix(config, block), axis=0)
    return values


def _dft_angles(grid_size: int, spacing_ratio: float):
    """DFT bins with d cos(theta) = k / grid_size inside (-1, 1), and their angles."""
    cosines = fft.fftfreq(grid_size) / spacing_ratio
    keep = np.abs(cosines) < 1.0
    return keep, np.arccos(cosines[keep])


def cosine_grid(grid_size: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Angles hit by a length-``grid_size`` DFT, sorted, end-fire excluded."""
    return np.sort(_dft_angles(grid_size, spacing_ratio)[1])


def _zero_padded(expanded: np.ndarray, grid_size: int, spacing_ratio: float):
    n = expanded.shape[0]
    if grid_size < n:
        raise ConfigurationError("FFT grid must be at least N points")
    # column t holds sum_n conj(A[n, t]) exp(-j 2 pi n k / P)
    transform = fft.fft(expanded.conj(), n=grid_size, axis=0) / math.sqrt(n)
    keep, thetas = _dft_angles(grid_size, spacing_ratio)
    values = np.linalg.norm(transform[keep, :], axis=1)
    order = np.argsort(thetas)
    return thetas[order], values[order]


def eval_dual_polynomial(sol, omega, grid_size: int = None, c1: float = 1.0,
                         spacing_ratio: float = 0.5, kind: str = 'theta') -> AngularSpectrum:
    """
    Sample ||q_G||_2 of ``sol.v``. ``kind='theta'`` uses a uniform grid in
    theta with direct evaluation; ``kind='cosine'`` a uniform grid in
    spatial frequency with one zero-padded FFT (needs d/lambda <= 1/2).
    The FFT grid thins out towards end-fire, so peak finding and the
    exported tables default to the uniform theta grid.
    """
    grid_size = settings.BAGOD['SPECTRUM_GRID'] if grid_size is None else grid_size
    if kind not in GRID_KINDS:
        raise ConfigurationError(f"unknown grid kind {kind!r}")
    n = sol.q.shape[0]
    if grid_size < 4 * n:
        logger.warning("spectrum grid of %d points is below 4N=%d", grid_size, 4 * n)
    expanded = adjoint_expand(sol.v, omega, n)

    if kind == 'theta':
        grid = theta_grid(grid_size)
        values = _direct(expanded, grid, spacing_ratio)
    else:
        if spacing_ratio > 0.5:
            raise ConfigurationError("cosine grid needs d/lambda <= 0.5 to avoid aliasing")
        grid, values = _zero_padded(expanded, grid_size, spacing_ratio)
    return AngularSpectrum(grid=grid, values=values, c1=c1, kind=kind)


def direct_spectrum(sol, omega, grid, c1: float = 1.0, spacing_ratio: float = 0.5) -> AngularSpectrum:
    """Direct evaluation on an arbitrary increasing grid."""
    n = sol.q.shape[0]
    grid = np.asarray(grid, dtype=float)
    return AngularSpectrum(grid=grid, values=_direct(adjoint_expand(sol.v, omega, n), grid, spacing_ratio),
                           c1=c1, kind='direct')
