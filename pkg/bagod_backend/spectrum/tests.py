import math
from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from arrays.manifold import ArrayConfig, steering_vector
from bagod_backend.errors import ConfigurationError
from solvers.feasibility import theta_grid
from .clustering import cluster_angles, default_gap_threshold
from .peaks import find_peaks, parabolic_vertex, peak_strengths
from .polynomial import AngularSpectrum, cosine_grid, direct_spectrum, eval_dual_polynomial


def solution_for(v, n):
    return SimpleNamespace(v=np.asarray(v), q=np.eye(n) / n)


def lobes(centres, width=0.05, size=2000):
    grid = theta_grid(size)
    values = sum(np.exp(-((grid - c) / width) ** 2) for c in centres)
    return AngularSpectrum(grid=grid, values=values)


class DualPolynomialTests(SimpleTestCase):
    def test_zero_dual_matrix(self):
        spectrum = eval_dual_polynomial(solution_for(np.zeros((8, 2)), 8), np.arange(8), grid_size=256)
        self.assertEqual(spectrum.peak_value, 0.0)
        self.assertEqual(len(spectrum), 256)

    def test_rank_one_peaks_at_atom(self):
        theta, u = 1.2, np.array([1.0 + 1j, 2.0])
        v = np.outer(steering_vector(ArrayConfig(16), theta), u.conj())
        spectrum = eval_dual_polynomial(solution_for(v, 16), np.arange(16), grid_size=8192)
        self.assertLess(abs(spectrum.grid[np.argmax(spectrum.values)] - theta), math.pi / 8192)
        self.assertAlmostEqual(spectrum.peak_value, np.linalg.norm(u), places=4)

    def test_fft_matches_direct_evaluation(self):
        rng = np.random.default_rng(0)
        omega = np.array([0, 1, 3, 6, 7, 9])
        v = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
        sol = solution_for(v, 10)
        fast = eval_dual_polynomial(sol, omega, grid_size=1024, kind='cosine')
        slow = direct_spectrum(sol, omega, fast.grid)
        self.assertLessEqual(np.max(np.abs(fast.values - slow.values)), 1e-10)
        assert_allclose(fast.grid, cosine_grid(1024))

    def test_cosine_grid_needs_half_wavelength(self):
        with self.assertRaises(ConfigurationError):
            eval_dual_polynomial(solution_for(np.ones((4, 1)), 4), np.arange(4),
                                 grid_size=64, spacing_ratio=0.8, kind='cosine')

    def test_rejects_unsorted_grid(self):
        with self.assertRaises(ConfigurationError):
            AngularSpectrum(grid=[0.2, 0.1], values=[1.0, 1.0])


class PeakTests(SimpleTestCase):
    def test_single_lobe(self):
        peaks = find_peaks(lobes([1.0]), rel_threshold=0.5)
        self.assertEqual(len(peaks), 1)
        self.assertAlmostEqual(peaks[0].theta, 1.0, places=3)

    def test_two_steering_lobes(self):
        config = ArrayConfig(16)
        x = np.column_stack([steering_vector(config, 1.0), steering_vector(config, 2.0)])
        spectrum = eval_dual_polynomial(solution_for(x, 16), np.arange(16), grid_size=4096)
        peaks = find_peaks(spectrum, rel_threshold=0.9)
        self.assertEqual(len(peaks), 2)
        assert_allclose([p.theta for p in peaks], [1.0, 2.0], atol=1e-2)

    def test_flat_zero_spectrum(self):
        self.assertEqual(find_peaks(AngularSpectrum(theta_grid(64), np.zeros(64)), 0.5), [])

    def test_plateau_is_not_a_strict_maximum(self):
        values = np.array([0.0, 1.0, 1.0, 0.0, 0.5, 0.0])
        spectrum = AngularSpectrum(theta_grid(6), values)
        peaks = find_peaks(spectrum, rel_threshold=0.3, refine=False)
        self.assertEqual([p.index for p in peaks], [4])

    def test_rejects_threshold_out_of_range(self):
        with self.assertRaises(ConfigurationError):
            find_peaks(lobes([1.0]), rel_threshold=1.0)

    def test_parabolic_vertex(self):
        offset, height = parabolic_vertex(np.array([2.0, 3.0, 1.0, 6.0, 4.0]), 3)
        self.assertAlmostEqual(offset, 0.2142857142857143)
        self.assertAlmostEqual(height, 6.160714285714286)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_peak_count_bounded_by_local_maxima(self, seed):
        values = np.random.default_rng(seed).uniform(0.0, 1.0, 200)
        spectrum = AngularSpectrum(theta_grid(200), values)
        strict = np.sum((values[1:-1] > values[:-2]) & (values[1:-1] > values[2:]))
        self.assertLessEqual(len(find_peaks(spectrum, 0.1)), strict)

    def test_peak_strengths_follow_gains(self):
        config = ArrayConfig(32)
        y = np.outer(2.0 * steering_vector(config, 1.0) + steering_vector(config, 1.1), [1.0, 0.5j])
        strengths = peak_strengths(y, np.arange(32), 32, [1.0, 1.1])
        assert_allclose(strengths, [2.0 * math.sqrt(1.25), math.sqrt(1.25)], rtol=1e-8)


class ClusteringTests(SimpleTestCase):
    def test_jump_points(self):
        result = cluster_angles([math.radians(d) for d in (10, 11, 12, 50, 51)], math.radians(5))
        self.assertEqual(result.k_hat, 2)
        self.assertEqual(result.l_hat, [3, 2])

    def test_single_angle(self):
        result = cluster_angles([1.0], 0.1)
        self.assertEqual((result.k_hat, result.l_hat), (1, [1]))

    def test_empty(self):
        self.assertEqual(cluster_angles([], 0.1).k_hat, 0)

    def test_los_is_strongest(self):
        result = cluster_angles([1.0, 1.05, 1.1, 2.0], 0.2, weights=[0.3, 0.9, 0.1, 1.0])
        self.assertEqual([a.theta for a in result.los_angles], [1.05, 2.0])

    def test_rejects_unsorted(self):
        with self.assertRaises(ConfigurationError):
            cluster_angles([1.0, 0.5], 0.1)

    @settings(max_examples=50, deadline=None)
    @given(angles=st.lists(st.floats(0.01, 3.1), min_size=1, max_size=30),
           duplicate=st.integers(0, 29))
    def test_duplicates_do_not_change_grouping(self, angles, duplicate):
        angles = sorted(angles)
        base = cluster_angles(angles, 0.1)
        extra = sorted(angles + [angles[duplicate % len(angles)]])
        doubled = cluster_angles(extra, 0.1)
        self.assertEqual(base.k_hat, doubled.k_hat)
        self.assertEqual(sum(doubled.l_hat), len(extra))

    def test_default_gap_threshold(self):
        self.assertAlmostEqual(default_gap_threshold(0.1, 8192), 0.2)
        self.assertAlmostEqual(default_gap_threshold(1e-5, 1024), 4 * math.pi / 1024)
