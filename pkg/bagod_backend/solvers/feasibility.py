"""
Post-hoc checks of an SDP solution against the dual constraint.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from arrays.manifold import ArrayConfig, steering_matrix
from .problem import SdpProblem

logger = logging.getLogger(__name__)


def theta_grid(grid_size: int) -> np.ndarray:
    """Cell centres of a uniform grid on (0, pi)."""
    return math.pi * (np.arange(grid_size) + 0.5) / grid_size


def dual_polynomial_norms(x: np.ndarray, thetas, spacing_ratio: float = 0.5) -> np.ndarray:
    """||X^H a(theta)||_2 for every theta; ``x`` is N x T."""
    x = np.asarray(x)
    steering = steering_matrix(ArrayConfig(x.shape[0], spacing_ratio), thetas)
    return np.linalg.norm(x.conj().T @ steering, axis=0)


def dual_atomic_norm_grid(x, c1: float, grid_size: int, spacing_ratio: float = 0.5) -> float:
    """Grid approximation of max_theta c1 ||X^H a(theta)||_2."""
    x = np.asarray(x)
    if grid_size < 2 * x.shape[0]:
        logger.warning("grid of %d points is coarse for N=%d", grid_size, x.shape[0])
    return float(c1 * np.max(dual_polynomial_norms(x, theta_grid(grid_size), spacing_ratio)))


@dataclass(frozen=True)
class FeasibilityReport:
    """
    ``dual_bound`` is max c1 ||q_G||_2 over the grid and ``tight_bound`` the
    same scaled by sqrt(N); both are at most 1 for a feasible solution.
    """
    schur_min_eigenvalue: float
    toeplitz_violation: float
    dual_bound: float
    tight_bound: float
    q_min_eigenvalue: float
    tolerance: float
    grid_size: int

    @property
    def feasible(self) -> bool:
        return (self.schur_min_eigenvalue >= -self.tolerance
                and self.q_min_eigenvalue >= -self.tolerance
                and self.toeplitz_violation <= self.tolerance
                and self.dual_bound <= 1.0 + self.tolerance
                and self.tight_bound <= 1.0 + self.tolerance)


def check_feasibility(sol, problem: SdpProblem, grid_size: int = None,
                      tolerance: float = 1e-3, spacing_ratio: float = 0.5) -> FeasibilityReport:
    grid_size = settings.BAGOD['FEASIBILITY_GRID'] if grid_size is None else grid_size
    block = problem.schur_block(sol.v, sol.q)
    schur_min = float(np.linalg.eigvalsh((block + block.conj().T) / 2.0)[0])
    q_min = float(np.linalg.eigvalsh((sol.q + sol.q.conj().T) / 2.0)[0])
    bound = dual_atomic_norm_grid(problem.expand(sol.v), problem.c1, grid_size, spacing_ratio)
    report = FeasibilityReport(
        schur_min_eigenvalue=schur_min,
        toeplitz_violation=problem.constraints.max_violation(sol.q),
        dual_bound=bound,
        tight_bound=math.sqrt(problem.n) * bound,
        q_min_eigenvalue=q_min,
        tolerance=tolerance,
        grid_size=grid_size,
    )
    if not report.feasible:
        logger.warning("infeasible SDP solution: %s", report)
    return report
