import math
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings as hypothesis_settings, strategies as st
from numpy.testing import assert_allclose

from arrays.manifold import ArrayConfig, steering_vector
from bagod_backend.errors import ConfigurationError, ConvergenceError, SolverError
from scenarios.types import ReceivedSignal
from .admm import AdmmOptions, feasible_objective, psd_project, solve_admm
from .feasibility import check_feasibility, dual_atomic_norm_grid, dual_polynomial_norms, theta_grid
from .problem import SdpProblem, ToeplitzConstraintSet, adjoint_expand, build_problem
from .reference import solve_reference

TIGHT = AdmmOptions(tolerance=1e-7, max_iter=50000)


def planted_signal(n, t, thetas, seed=0, noise=0.0, eta=None):
    rng = np.random.default_rng(seed)
    config = ArrayConfig(n)
    y = np.zeros((n, t), dtype=complex)
    for theta in thetas:
        row = rng.standard_normal(t) + 1j * rng.standard_normal(t)
        y += np.outer(steering_vector(config, theta), row)
    y += noise * (rng.standard_normal((n, t)) + 1j * rng.standard_normal((n, t)))
    bound = noise * math.sqrt(2 * n * t) if eta is None else eta
    return ReceivedSignal(y=y, omega=np.arange(n), noise_bound=bound, n_antennas=n)


class AdjointExpandTests(SimpleTestCase):
    def test_full_set_is_identity(self):
        v = np.arange(6).reshape(3, 2) + 1j
        assert_allclose(adjoint_expand(v, [0, 1, 2], 3), v)

    def test_single_row(self):
        expanded = adjoint_expand(np.array([[1 + 2j, 3.0]]), [1], 3)
        assert_allclose(expanded, [[0, 0], [1 + 2j, 3.0], [0, 0]])

    @hypothesis_settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_selection_undoes_expansion(self, seed):
        rng = np.random.default_rng(seed)
        omega = np.sort(rng.choice(10, size=4, replace=False))
        v = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        assert_allclose(adjoint_expand(v, omega, 10)[omega], v)

    def test_index_out_of_range(self):
        with self.assertRaises(ConfigurationError):
            adjoint_expand(np.ones((1, 2)), [3], 3)


class ToeplitzConstraintTests(SimpleTestCase):
    def setUp(self):
        self.constraints = ToeplitzConstraintSet(5)
        rng = np.random.default_rng(1)
        x = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        self.matrix = x + x.conj().T

    def test_zero_lag_is_trace(self):
        values = self.constraints.functionals(self.matrix)
        self.assertAlmostEqual(values[4], np.trace(self.matrix))
        self.assertEqual(values.size, 9)

    def test_functionals_match_basis_inner_products(self):
        values = self.constraints.functionals(self.matrix)
        for index, lag in enumerate(self.constraints.lags):
            basis = self.constraints.basis(lag)
            self.assertAlmostEqual(values[index], np.trace(basis.conj().T @ self.matrix))

    def test_scaled_identity_is_feasible(self):
        self.assertAlmostEqual(self.constraints.max_violation(np.eye(5) / 5), 0.0)

    def test_projection(self):
        projected = self.constraints.project(self.matrix)
        self.assertLess(self.constraints.max_violation(projected), 1e-12)
        assert_allclose(projected, projected.conj().T, atol=1e-12)
        assert_allclose(self.constraints.project(projected), projected, atol=1e-12)

    def test_psd_projection(self):
        projected = psd_project(self.matrix)
        self.assertGreaterEqual(np.linalg.eigvalsh(projected)[0], -1e-12)
        assert_allclose(psd_project(projected), projected, atol=1e-10)


class BuildProblemTests(SimpleTestCase):
    def signal(self, eta, n=64):
        return ReceivedSignal(y=np.ones((n, 2)), omega=np.arange(n), noise_bound=eta, n_antennas=n)

    def test_reference_constants(self):
        problem = build_problem(self.signal(0.1), zeta=0.0)
        self.assertAlmostEqual(problem.gamma, 10.0)
        self.assertAlmostEqual(problem.c1, 1.0 / 8.0)

    def test_gain_error_bound_scales_c1(self):
        self.assertAlmostEqual(build_problem(self.signal(0.1), zeta=0.5).c1, 1.5 / 8.0)

    def test_beta_scales_c1(self):
        problem = build_problem(self.signal(0.1), zeta=0.0, beta=2.0 * np.ones(3))
        self.assertAlmostEqual(problem.c1, 1.0 / 16.0)

    def test_zero_noise_uses_floor(self):
        self.assertAlmostEqual(build_problem(self.signal(0.0), zeta=0.0, eta_floor=1e-2).gamma, 100.0)
        self.assertAlmostEqual(build_problem(self.signal(0.0), zeta=0.0).gamma, 1e3)

    def test_rejects_nonpositive_beta(self):
        with self.assertRaises(ConfigurationError):
            build_problem(self.signal(0.1), zeta=0.0, beta=0.0)


class AdmmTests(SimpleTestCase):
    def test_zero_signal(self):
        signal = ReceivedSignal(y=np.zeros((8, 2)), omega=np.arange(8), noise_bound=0.1, n_antennas=8)
        problem = build_problem(signal, zeta=0.0)
        solution = solve_admm(problem)
        assert_allclose(solution.v, 0.0)
        assert_allclose(solution.q, np.eye(8) / 8)
        self.assertEqual(solution.objective, 0.0)
        self.assertTrue(solution.converged)
        self.assertTrue(check_feasibility(solution, problem).feasible)
        self.assertEqual(check_feasibility(solution, problem).dual_bound, 0.0)

    def test_random_instance_is_feasible(self):
        problem = build_problem(planted_signal(8, 2, [1.0, 2.2], seed=3, noise=0.05), zeta=0.0)
        solution = solve_admm(problem, AdmmOptions(tolerance=1e-6, max_iter=20000))
        self.assertTrue(solution.converged)
        self.assertLessEqual(solution.objective, problem.objective_bound() + 1e-9)
        report = check_feasibility(solution, problem, grid_size=4096)
        self.assertTrue(report.feasible, report)
        self.assertLessEqual(report.dual_bound, 1.0 + 1e-3)

    def test_planted_single_source_peak(self):
        theta = 1.3
        problem = build_problem(planted_signal(16, 2, [theta], seed=5), zeta=0.0)
        solution = solve_admm(problem, AdmmOptions(tolerance=1e-6, max_iter=20000))
        grid = theta_grid(8192)
        values = dual_polynomial_norms(problem.expand(solution.v), grid)
        self.assertLess(abs(grid[np.argmax(values)] - theta), math.radians(0.5))

        doubled = replace(solution, v=2.0 * solution.v)
        self.assertFalse(check_feasibility(doubled, problem).feasible)

    def test_history_is_non_decreasing(self):
        opts = AdmmOptions(tolerance=1e-6, max_iter=20000)
        problem = build_problem(planted_signal(8, 2, [1.0, 2.2], seed=3, noise=0.05), zeta=0.1)
        solution = solve_admm(problem, opts)
        history = np.asarray(solution.history)
        self.assertEqual(history.size, solution.iterations)
        self.assertTrue(np.all(np.diff(history) >= -opts.tolerance))
        self.assertGreaterEqual(history[0], 0.0)
        self.assertLessEqual(solution.lower_bound, problem.objective_bound() + 1e-9)

    def test_feasible_objective_certifies_scaled_point(self):
        n = 8
        rng = np.random.default_rng(2)
        y = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
        v = 10.0 * y
        value = feasible_objective(v, np.eye(n) / n, y, gamma=100.0, c1=1.0, omega=np.arange(n), n=n)
        s = 1.0 / (math.sqrt(n) * np.linalg.norm(v, 2))
        linear = float(np.real(np.vdot(v, y)))
        expected = s * linear - s ** 2 * np.linalg.norm(v) ** 2 / 200.0
        self.assertAlmostEqual(value, expected, places=10)
        self.assertEqual(feasible_objective(0 * v, np.eye(n) / n, y, 1.0, 1.0, np.arange(n), n), 0.0)

    def test_non_convergence_is_reported(self):
        problem = build_problem(planted_signal(8, 2, [1.0], seed=1), zeta=0.0)
        solution = solve_admm(problem, AdmmOptions(tolerance=1e-12, max_iter=3))
        self.assertFalse(solution.converged)
        self.assertEqual(solution.iterations, 3)
        with self.assertRaises(ConvergenceError):
            solution.require_converged()

    def test_options_from_settings(self):
        opts = AdmmOptions.from_settings(max_iter=10)
        self.assertEqual(opts.max_iter, 10)
        self.assertEqual(opts.tolerance, 1e-4)


class ReferenceSolverTests(SimpleTestCase):
    def test_zero_signal(self):
        signal = ReceivedSignal(y=np.zeros((4, 2)), omega=np.arange(4), noise_bound=0.1, n_antennas=4)
        self.assertEqual(solve_reference(build_problem(signal, zeta=0.0)).objective, 0.0)

    def test_size_guard(self):
        problem = build_problem(planted_signal(20, 1, [1.0]), zeta=0.0)
        with self.assertRaises(SolverError):
            solve_reference(problem)

    def test_agrees_with_admm(self):
        for seed in range(10):
            signal = planted_signal(8, 2, [0.9, 2.0], seed=seed, noise=0.1)
            problem = build_problem(signal, zeta=0.1)
            reference = solve_reference(problem)
            admm = solve_admm(problem, TIGHT)
            scale = max(1.0, abs(reference.objective))
            self.assertLess(abs(admm.objective - reference.objective) / scale, 1e-4, f"seed {seed}")
            self.assertLess(reference.primal_residual, 1e-6)
            self.assertLessEqual(admm.lower_bound, reference.objective + 1e-5 * scale, f"seed {seed}")

    def test_subsampled_antennas(self):
        rng = np.random.default_rng(4)
        y = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
        problem = SdpProblem(y=y, omega=[0, 2, 3, 5, 7], gamma=2.0, c1=1.0 / math.sqrt(8), n=8)
        reference = solve_reference(problem)
        admm = solve_admm(problem, TIGHT)
        self.assertLess(abs(admm.objective - reference.objective) / max(1.0, abs(reference.objective)), 1e-4)


class DualAtomicNormTests(SimpleTestCase):
    def test_rank_one_atom(self):
        u = np.array([3.0, 4.0j])
        x = np.outer(steering_vector(ArrayConfig(8), 1.0), u.conj())
        self.assertAlmostEqual(dual_atomic_norm_grid(x, 0.5, 8192), 2.5, places=4)

    def test_zero(self):
        self.assertEqual(dual_atomic_norm_grid(np.zeros((8, 2)), 1.0, 64), 0.0)

    def test_grid_refinement(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((8, 2)) + 1j * rng.standard_normal((8, 2))
        coarse = dual_atomic_norm_grid(x, 1.0, 8192)
        fine = dual_atomic_norm_grid(x, 1.0, 65536)
        self.assertLess(abs(fine - coarse), 1e-3)
