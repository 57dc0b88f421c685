"""
ADMM for the goal-oriented SDP.

The PSD block is split off as a consensus variable Z:

    (V, Q) <- argmin  f(V) + (rho/2) ||B(V, Q) - Z + Lambda/rho||^2,  Q Toeplitz-feasible
    Z      <- Proj_PSD(B(V, Q) + Lambda/rho)
    Lambda <- Lambda + rho (B(V, Q) - Z)

with f(V) = -Re<V, Y> + ||V||^2 / (2 gamma). Both the (V, Q) step and the Z
step are exact: V has a closed form per entry, Q is an affine projection
and Z an eigenvalue clip.

The iterates themselves are infeasible until convergence, so the recorded
history is the best objective over feasible points rescaled from them.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from django.conf import settings
from scipy.linalg import solve_triangular

from bagod_backend.errors import ConvergenceError
from .problem import SdpProblem, hermitian_part

logger = logging.getLogger(__name__)

RHO_RATIO = 10.0
RHO_SCALE = 2.0
# weights of I/N mixed into Q when certifying an iterate
CERTIFICATE_MIX = (1e-6, 1e-3, 1.0)


@dataclass(frozen=True)
class AdmmOptions:
    tolerance: float = 1e-4
    max_iter: int = 5000
    rho: float = 1.0
    adapt_rho: bool = True
    log_every: int = 500

    @classmethod
    def from_settings(cls, **overrides) -> 'AdmmOptions':
        conf = settings.BAGOD
        values = {
            'tolerance': conf['ADMM_TOLERANCE'],
            'max_iter': conf['ADMM_MAX_ITER'],
            'rho': conf['ADMM_RHO'],
            'adapt_rho': conf['ADMM_ADAPT_RHO'],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class SdpSolution:
    """
    Output of either solver. ``v`` is the dual matrix V* (M x T), ``q`` the
    Hermitian Gram-like matrix (N x N).
    """
    v: np.ndarray
    q: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    solver: str = 'admm'
    rho: Optional[float] = None
    # non-decreasing lower bounds on the optimum, one per iteration
    history: list = field(default_factory=list, repr=False)

    @property
    def lower_bound(self) -> Optional[float]:
        return self.history[-1] if self.history else None

    def require_converged(self) -> 'SdpSolution':
        if not self.converged:
            raise ConvergenceError(
                f"{self.solver} stopped after {self.iterations} iterations "
                f"(primal {self.primal_residual:.2e}, dual {self.dual_residual:.2e})")
        return self


def psd_project(matrix: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm: clip negative eigenvalues."""
    values, vectors = np.linalg.eigh(hermitian_part(matrix))
    values = np.clip(values, 0.0, None)
    return (vectors * values) @ vectors.conj().T


def feasible_scale(q_matrix: np.ndarray, a: np.ndarray) -> float:
    """Largest s with Q - s^2 A A^H >= 0; zero when Q is not positive definite."""
    try:
        chol = np.linalg.cholesky(hermitian_part(q_matrix))
    except np.linalg.LinAlgError:
        return 0.0
    norm = float(np.linalg.norm(solve_triangular(chol, a, lower=True), 2))
    return np.inf if norm == 0.0 else 1.0 / norm


def feasible_objective(v, q_matrix, y, gamma: float, c1: float, omega, n: int) -> float:
    """
    Objective of the best feasible point s V, s >= 0, certified by Q mixed
    with I/N. Mixing keeps the trace functionals exact, so any such point is
    feasible and its objective bounds the optimum from below.
    """
    energy = float(np.linalg.norm(v) ** 2)
    if energy == 0.0:
        return 0.0
    a = np.zeros((n, v.shape[1]), dtype=complex)
    a[omega, :] = c1 * v
    identity = np.eye(n) / n
    s_max = max(feasible_scale((1.0 - mix) * q_matrix + mix * identity, a) for mix in CERTIFICATE_MIX)
    linear = float(np.real(np.vdot(v, y)))
    s = min(max(linear * gamma / energy, 0.0), s_max)
    return s * linear - s ** 2 * energy / (2.0 * gamma)


def zero_signal_solution(problem: SdpProblem) -> SdpSolution:
    return SdpSolution(
        v=np.zeros((problem.m, problem.t), dtype=complex),
        q=np.eye(problem.n, dtype=complex) / problem.n,
        objective=0.0,
        primal_residual=0.0,
        dual_residual=0.0,
        iterations=0,
        converged=True,
    )


def solve_admm(problem: SdpProblem, opts: AdmmOptions = None) -> SdpSolution:
    """
    Solve the goal-oriented SDP. Y is scaled to unit Frobenius norm with
    gamma scaled along, which leaves V unchanged; the objective is scaled
    back at the end. Non-convergence is logged and reported, never raised.
    """
    opts = AdmmOptions.from_settings() if opts is None else opts
    scale = float(np.linalg.norm(problem.y))
    if scale == 0.0:
        return zero_signal_solution(problem)

    n, t, c1 = problem.n, problem.t, problem.c1
    omega = problem.omega
    y = problem.y / scale
    gamma = problem.gamma * scale
    toeplitz = problem.constraints
    eye_t = np.eye(t)
    size = n + t

    v = np.zeros((problem.m, t), dtype=complex)
    q = np.eye(n, dtype=complex) / n
    block = problem.schur_block(v, q)
    z = block.copy()
    dual = np.zeros((size, size), dtype=complex)
    rho = opts.rho
    history = []
    best = 0.0
    primal = dual_res = np.inf
    converged = False

    iteration = 0
    for iteration in range(1, opts.max_iter + 1):
        w = z - dual / rho

        q = toeplitz.project(hermitian_part(w[:n, :n]))
        w12 = (w[:n, n:] + w[n:, :n].conj().T) / 2.0
        v = (y + 2.0 * rho * c1 * w12[omega, :]) / (1.0 / gamma + 2.0 * rho * c1 ** 2)

        a = np.zeros((n, t), dtype=complex)
        a[omega, :] = c1 * v
        block = np.block([[q, a], [a.conj().T, eye_t]])

        z_prev = z
        z = psd_project(block + dual / rho)
        dual = dual + rho * (block - z)

        primal = np.linalg.norm(block - z) / max(1.0, np.linalg.norm(block))
        dual_res = rho * np.linalg.norm(z - z_prev) / max(1.0, np.linalg.norm(dual))
        objective = float(np.real(np.vdot(v, y)) - np.linalg.norm(v) ** 2 / (2.0 * gamma))
        best = max(best, feasible_objective(v, q, y, gamma, c1, omega, n))
        history.append(best * scale)

        if iteration % opts.log_every == 0:
            logger.debug("admm iter %d: obj %.6g primal %.2e dual %.2e rho %.3g",
                         iteration, objective * scale, primal, dual_res, rho)

        if primal <= opts.tolerance and dual_res <= opts.tolerance:
            converged = True
            break

        if opts.adapt_rho:
            if primal > RHO_RATIO * dual_res:
                rho *= RHO_SCALE
            elif dual_res > RHO_RATIO * primal:
                rho /= RHO_SCALE

    if not converged:
        logger.warning("admm did not converge in %d iterations (primal %.2e, dual %.2e)",
                       opts.max_iter, primal, dual_res)

    return SdpSolution(
        v=v,
        q=q,
        objective=problem.objective(v),
        primal_residual=float(primal),
        dual_residual=float(dual_res),
        iterations=iteration,
        converged=converged,
        rho=rho,
        history=history,
    )
