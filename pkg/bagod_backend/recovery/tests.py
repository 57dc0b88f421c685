import math

import numpy as np
from django.test import SimpleTestCase, override_settings
from django.conf import settings as django_settings
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import fft

from arrays.manifold import ArrayConfig, steering_vector
from bagod_backend.errors import ConfigurationError
from scenarios.types import ReceivedSignal
from spectrum.clustering import cluster_angles
from .alternating import (
    AmEstimate, AmOptions, align_to_reference, am_solve, cluster_bases, extract_delay, gauge_fix,
    phase_ramp, structured_delay_gain, update_delay_gain, update_gains, update_preamble, user_blocks,
)


def unit(values):
    values = np.asarray(values, dtype=float)
    return values / np.linalg.norm(values)


def planted(n, thetas, gains, preambles, delay_gains):
    """Noiseless Y for one single-path user per angle, full array."""
    config = ArrayConfig(n)
    y = sum(
        np.outer(gain * steering_vector(config, theta), np.conj(fft.fft(phi, norm='ortho')) * e)
        for theta, gain, phi, e in zip(thetas, gains, preambles, delay_gains)
    )
    return ReceivedSignal(y, np.arange(n), 0.0, n)


TIGHT = AmOptions(tolerance=1e-14, max_iter=500)


class SingleUserRecoveryTests(SimpleTestCase):
    phi = unit([0.2, 0.5, 0.1, 0.8])

    def test_recovers_shifted_preamble_in_one_pass(self):
        signal = planted(16, [1.0], [1.0 + 0.5j], [self.phi], [phase_ramp(1.0, 4)])
        estimate = am_solve(signal, cluster_angles([1.0], 0.1), c_e=1.0, opts=TIGHT)
        self.assertTrue(estimate.converged)
        assert_allclose(estimate.preamble(0), np.roll(self.phi, 1), atol=1e-8)
        assert_allclose(estimate.delay_gain[0], np.ones(4), atol=1e-8)
        self.assertLess(estimate.residual, 1e-10)

    def test_alignment_moves_shift_into_delay(self):
        signal = planted(16, [1.0], [2.0], [self.phi], [phase_ramp(1.0, 4)])
        estimate = am_solve(signal, cluster_angles([1.0], 0.1), c_e=1.0, opts=TIGHT)
        shift, correlation, adjusted = align_to_reference(estimate.preamble(0), estimate.delay_gain[0], self.phi)
        self.assertEqual(shift, 1)
        self.assertAlmostEqual(correlation, 1.0, places=8)
        self.assertAlmostEqual(extract_delay(adjusted), 1.0, places=6)

    def test_truth_is_a_fixed_point(self):
        e = phase_ramp(1.0, 4) * (1.0 + np.array([0.05, -0.02, 0.08, 0.0]))
        signal = planted(16, [1.0], [1.0 - 1j], [self.phi], [e])
        init = AmEstimate(gains=[np.array([1.0 - 1j])], preambles=self.phi[:, None],
                          delay_gain=e[None, :], residual=0.0, iterations=0)
        estimate = am_solve(signal, cluster_angles([1.0], 0.1), c_e=1.1, opts=TIGHT, init=init)
        assert_allclose(estimate.preamble(0), self.phi, atol=1e-10)
        assert_allclose(estimate.delay_gain[0], e, atol=1e-10)
        assert_allclose(estimate.gains[0], [1.0 - 1j], atol=1e-10)

    def test_rejects_bad_inputs(self):
        signal = planted(8, [1.0], [1.0], [self.phi], [np.ones(4)])
        with self.assertRaises(ConfigurationError):
            am_solve(signal, cluster_angles([], 0.1), c_e=1.0)
        with self.assertRaises(ConfigurationError):
            am_solve(signal, cluster_angles([1.0], 0.1), c_e=0.5)


class TwoUserRecoveryTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(3)
        self.thetas = [0.9, 2.0]
        self.gains = [1.0 + 0.2j, 0.7 - 0.4j]
        self.preambles = [unit(rng.uniform(0.1, 1.0, 4)) for _ in range(2)]
        self.delays = [phase_ramp(0.0, 4), phase_ramp(2.0, 4)]
        self.signal = planted(32, self.thetas, self.gains, self.preambles, self.delays)
        self.clusters = cluster_angles(self.thetas, 0.1)

    def test_user_blocks_match_planted(self):
        estimate = am_solve(self.signal, self.clusters, c_e=1.0, opts=TIGHT)
        self.assertLess(estimate.residual, 1e-6 * np.linalg.norm(self.signal.y))
        bases = cluster_bases(self.clusters, self.signal.omega, 32)
        recovered = user_blocks(bases, estimate.gains, estimate.preambles, estimate.delay_gain)
        truth = user_blocks(bases, [np.array([g]) for g in self.gains],
                            np.column_stack(self.preambles), np.vstack(self.delays))
        for got, want in zip(recovered, truth):
            self.assertLess(np.linalg.norm(got - want), 1e-4 * np.linalg.norm(want))

    def test_preambles_stay_feasible(self):
        estimate = am_solve(self.signal, self.clusters, c_e=1.0, opts=AmOptions(max_iter=5))
        self.assertTrue(np.all(estimate.preambles >= 0))
        assert_allclose(np.linalg.norm(estimate.preambles, axis=0), [1.0, 1.0])
        self.assertTrue(np.all(np.abs(estimate.delay_gain) <= 1.0 + 1e-12))
        assert_allclose(estimate.delay_gain[:, 0].imag, [0.0, 0.0], atol=1e-12)


class ResidualMonotoneTests(SimpleTestCase):
    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_residual_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
        signal = ReceivedSignal(y, np.arange(8), 1.0, 8)
        clusters = cluster_angles([0.8, 0.9, 2.2], 0.3)
        estimate = am_solve(signal, clusters, c_e=1.2, opts=AmOptions(tolerance=1e-12, max_iter=15))
        history = np.array(estimate.residual_history)
        self.assertTrue(np.all(history[1:] <= history[:-1] * (1 + 1e-9) + 1e-12))


class UpdateStepTests(SimpleTestCase):
    def test_duplicate_angles_fall_back_to_ridge(self):
        clusters = cluster_angles([1.0, 1.0], 0.1)
        bases = cluster_bases(clusters, np.arange(8), 8)
        y = np.outer(steering_vector(ArrayConfig(8), 1.0), np.ones(4))
        gains, ridge_used = update_gains(y, bases, np.full((4, 1), 0.5), np.ones((1, 4), dtype=complex))
        self.assertTrue(ridge_used)
        self.assertEqual(gains[0].shape, (2,))

    def test_negative_target_stalls_preamble(self):
        bases = cluster_bases(cluster_angles([1.0], 0.1), np.arange(8), 8)
        flat = np.full((4, 1), 0.5)
        ones = np.ones((1, 4), dtype=complex)
        gains = [np.array([1.0 + 0j])]
        y = -user_blocks(bases, gains, flat, ones)[0]
        _, preambles, stalled = update_preamble(y, bases, gains, flat, ones)
        self.assertEqual(stalled, {0})
        assert_allclose(preambles, flat)

    def test_delay_gain_is_clipped(self):
        bases = cluster_bases(cluster_angles([1.0], 0.1), np.arange(8), 8)
        phi = unit([1.0, 2.0, 3.0, 4.0])[:, None]
        gains = [np.array([1.0 + 0j])]
        ones = np.ones((1, 4), dtype=complex)
        y = 3.0 * user_blocks(bases, gains, phi, ones)[0]
        assert_allclose(update_delay_gain(y, bases, gains, phi, ones, c_e=1.5), np.full((1, 4), 1.5))

    def test_zero_regressor_bins_keep_previous(self):
        bases = cluster_bases(cluster_angles([1.0], 0.1), np.arange(8), 8)
        flat = np.full((4, 1), 0.5)
        gains = [np.array([1.0 + 0j])]
        y = 2.0 * user_blocks(bases, gains, flat, np.ones((1, 4), dtype=complex))[0]
        previous = np.array([[1.0, 0.5, 0.5j, -1.0]])
        updated = update_delay_gain(y, bases, gains, flat, previous, c_e=3.0)
        assert_allclose(updated, [[2.0, 0.5, 0.5j, -1.0]], atol=1e-12)

    def test_gauge_fix_keeps_product(self):
        gains, e = gauge_fix([np.array([1.0 + 0j])], np.array([[2j, 1.0, -1.0]]))
        assert_allclose(e, [[2.0, -1j, 1j]])
        assert_allclose(gains[0], [1j])
        assert_allclose(gains[0][0] * e[0], 1.0 * np.array([2j, 1.0, -1.0]))


class DelayModelTests(SimpleTestCase):
    def test_extract_delay_from_phase_slope(self):
        g = np.random.default_rng(1).uniform(-0.05, 0.05, 8)
        self.assertAlmostEqual(extract_delay(phase_ramp(1.7, 8) * (1 + g)), 1.7, places=9)

    def test_extract_delay_single_bin(self):
        self.assertEqual(extract_delay(np.array([1.0 + 0j])), 0.0)

    def test_structured_fit_on_grid(self):
        target = phase_ramp(1.5, 8) * 1.05
        fitted = structured_delay_gain(target, np.ones(8), tau_max=2.0, zeta=0.1, steps=5)
        assert_allclose(fitted, target, atol=1e-12)

    def test_structured_fit_clips_magnitude(self):
        fitted = structured_delay_gain(np.full(4, 2.0 + 0j), np.ones(4), tau_max=0.0, zeta=0.2, steps=8)
        assert_allclose(fitted, np.full(4, 1.2))

    def test_phase_ramp_model_recovers_delay(self):
        phi = unit([0.2, 0.5, 0.1, 0.8, 0.3, 0.6])
        signal = planted(16, [1.2], [1.0], [phi], [phase_ramp(0.0, 6)])
        opts = AmOptions(tolerance=1e-14, max_iter=100, delay_model='phase_ramp', tau_max=2.0, zeta=0.1)
        estimate = am_solve(signal, cluster_angles([1.2], 0.1), c_e=1.1, opts=opts)
        self.assertLess(estimate.residual, 1e-8)
        self.assertTrue(np.all(np.abs(np.abs(estimate.delay_gain) - 1.0) <= 0.1 + 1e-12))


class AmOptionsTests(SimpleTestCase):
    def test_unknown_delay_model(self):
        with self.assertRaises(ConfigurationError):
            AmOptions(delay_model='spline')

    @override_settings(BAGOD={**django_settings.BAGOD, 'AM_MAX_ITER': 7})
    def test_from_settings(self):
        opts = AmOptions.from_settings(tolerance=1e-3)
        self.assertEqual((opts.max_iter, opts.tolerance), (7, 1e-3))

    def test_flags(self):
        estimate = AmEstimate(gains=[], preambles=np.zeros((2, 1)), delay_gain=np.zeros((1, 2)),
                              residual=1.0, iterations=3, ridge_used=True, stalled={0})
        self.assertEqual(estimate.flags, ['am_not_converged', 'am_ridge_fallback', 'am_preamble_stall:0'])
