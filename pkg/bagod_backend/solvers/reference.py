"""
Small-instance reference solver: the same program handed to a conic solver
through cvxpy. Used to cross-check the ADMM.
"""
import logging

import cvxpy as cp
import numpy as np
from django.conf import settings

from bagod_backend.errors import SolverError
from .admm import SdpSolution, zero_signal_solution
from .problem import SdpProblem

logger = logging.getLogger(__name__)

PREFERRED_SOLVERS = ('CLARABEL', 'SCS')


def _selection_matrix(problem: SdpProblem) -> np.ndarray:
    selection = np.zeros((problem.n, problem.m))
    selection[problem.omega, np.arange(problem.m)] = 1.0
    return selection


def _solve(program: cp.Problem):
    installed = cp.installed_solvers()
    last_error = None
    for name in PREFERRED_SOLVERS:
        if name not in installed:
            continue
        try:
            if name == 'SCS':
                program.solve(solver=name, eps=1e-9, max_iters=200000)
            else:
                program.solve(solver=name)
        except cp.SolverError as exc:
            last_error = exc
            logger.warning("reference solver %s failed: %s", name, exc)
            continue
        if program.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return name
    raise SolverError(f"no conic solver could solve the reference program ({last_error or program.status})")


def solve_reference(problem: SdpProblem, max_n: int = None) -> SdpSolution:
    """
    Solve the goal-oriented SDP with a generic conic solver. Raises
    SolverError above ``max_n`` antennas (``BAGOD['REFERENCE_MAX_N']``).
    """
    max_n = settings.BAGOD['REFERENCE_MAX_N'] if max_n is None else max_n
    if problem.n > max_n:
        raise SolverError(f"reference solver is limited to N <= {max_n}, got N={problem.n}")
    if np.linalg.norm(problem.y) == 0.0:
        solution = zero_signal_solution(problem)
        solution.solver = 'reference'
        return solution

    n, t = problem.n, problem.t
    v = cp.Variable((problem.m, t), complex=True)
    q = cp.Variable((n, n), hermitian=True)
    z = cp.Variable((n + t, n + t), hermitian=True)
    selection = _selection_matrix(problem)

    constraints = [
        z >> 0,
        z[:n, :n] == q,
        z[:n, n:] == problem.c1 * (selection @ v),
        z[n:, n:] == np.eye(t),
    ]
    for lag in range(n):
        target = 1.0 if lag == 0 else 0.0
        constraints.append(cp.trace(np.eye(n, k=-lag) @ q) == target)

    y = problem.y
    fit = cp.sum(cp.multiply(np.real(y), cp.real(v)) + cp.multiply(np.imag(y), cp.imag(v)))
    energy = cp.sum_squares(cp.real(v)) + cp.sum_squares(cp.imag(v))
    program = cp.Problem(cp.Maximize(fit - energy / (2.0 * problem.gamma)), constraints)
    name = _solve(program)

    v_value = np.asarray(v.value, dtype=complex)
    q_value = np.asarray(q.value, dtype=complex)
    block = problem.schur_block(v_value, q_value)
    min_eig = float(np.linalg.eigvalsh((block + block.conj().T) / 2.0)[0])
    violation = problem.constraints.max_violation(q_value)
    stats = program.solver_stats
    logger.debug("reference (%s): status %s, objective %.8g", name, program.status, program.value)
    return SdpSolution(
        v=v_value,
        q=q_value,
        objective=problem.objective(v_value),
        primal_residual=max(violation, max(0.0, -min_eig)),
        dual_residual=0.0,
        iterations=int(stats.num_iters or 0) if stats is not None else 0,
        converged=program.status == cp.OPTIMAL,
        solver=f'reference:{name.lower()}',
    )
