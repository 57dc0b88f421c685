import math

import numpy as np
from django.conf import settings as django_settings
from django.test import SimpleTestCase, override_settings
from numpy.testing import assert_allclose

from arrays.manifold import ArrayConfig, UserChannel, synthesize_channel
from bagod_backend.errors import ConfigurationError
from scenarios.synthesis import delay_gain_vector
from scenarios.types import Mobility, Scenario, UserProfile
from .amp import (
    AmpConfig, amp_detect, bernoulli_gaussian_denoiser, gaussian_pilots, matched_filter_statistics,
    synthesize_pilot_domain,
)


def complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def small_scenario(delay=0.0, snr_db=None):
    users = []
    for uid, (theta, active) in enumerate([(0.8, True), (1.6, False), (2.3, True)], start=1):
        channel = UserChannel((theta,), [1.0 + 0.5j], (theta, theta))
        users.append(UserProfile(user_id=uid, mobility=Mobility.STATIONARY, channel=channel,
                                 preamble=np.full(4, 0.5), delay=delay if uid == 1 else 0.0, active=active))
    return Scenario(array=ArrayConfig(8), users=users, t_len=4, tau_max=1.0, snr_db=snr_db)


class GaussianPilotTests(SimpleTestCase):
    def test_unit_norm_columns(self):
        pilots = gaussian_pilots(8, 30, np.random.default_rng(0))
        self.assertEqual(pilots.shape, (8, 30))
        assert_allclose(np.linalg.norm(pilots, axis=0), np.ones(30))


class PilotDomainTests(SimpleTestCase):
    def test_rows_and_snr(self):
        scenario = small_scenario(snr_db=10.0)
        pilots = gaussian_pilots(4, 3, np.random.default_rng(1))
        signal = synthesize_pilot_domain(scenario, pilots, rng_seed=2)
        self.assertEqual(signal.y.shape, (4, 8))
        self.assertEqual(signal.user_ids, (1, 2, 3))
        assert_allclose(signal.x[1], np.zeros(8))
        assert_allclose(signal.x[0], synthesize_channel(scenario.array, scenario.user(1).channel))
        clean = pilots @ signal.x
        noise = signal.y - clean
        realized = 10 * math.log10(np.linalg.norm(clean) ** 2 / (clean.size * signal.noise_var))
        self.assertAlmostEqual(realized, 10.0)
        self.assertAlmostEqual(np.linalg.norm(noise) ** 2, signal.noise_var * clean.size)

    def test_impaired_pilots_carry_delay(self):
        scenario = small_scenario(delay=1.0)
        pilots = gaussian_pilots(4, 3, np.random.default_rng(3))
        nominal = synthesize_pilot_domain(scenario, pilots, 0)
        impaired = synthesize_pilot_domain(scenario, pilots, 0, impaired=True)
        expected = nominal.y + np.outer(pilots[:, 0] * (delay_gain_vector(1.0, None, 4) - 1.0), nominal.x[0])
        assert_allclose(impaired.y, expected, atol=1e-12)

    def test_rejects_wrong_pilot_shape(self):
        with self.assertRaises(ConfigurationError):
            synthesize_pilot_domain(small_scenario(), np.ones((4, 2)), 0)


class AmpDetectTests(SimpleTestCase):
    def test_orthogonal_noiseless_support(self):
        rng = np.random.default_rng(4)
        pilots = np.eye(8, dtype=complex)
        x = np.zeros((8, 16), dtype=complex)
        x[[1, 4]] = complex_normal(rng, (2, 16))
        result = amp_detect(pilots @ x, pilots, noise_var=0.0, k_active=2, channel_var=1.0,
                            config=AmpConfig(max_iter=30))
        self.assertEqual(result.detected, frozenset({1, 4}))
        self.assertTrue(np.all(result.state.activity[[1, 4]] > 0.9))
        self.assertTrue(np.all(np.delete(result.state.activity, [1, 4]) < 0.1))

    def test_first_iteration_is_matched_filter(self):
        rng = np.random.default_rng(5)
        pilots = gaussian_pilots(6, 20, rng)
        y = complex_normal(rng, (6, 4))
        result = amp_detect(y, pilots, noise_var=0.1, k_active=3, channel_var=1.0, config=AmpConfig(max_iter=1))
        assert_allclose(result.state.statistics, matched_filter_statistics(y, pilots))

    def test_no_active_users(self):
        y = complex_normal(np.random.default_rng(6), (8, 4))
        pilots = gaussian_pilots(8, 10, np.random.default_rng(7))
        for mode in ('top_k', 'threshold'):
            result = amp_detect(y, pilots, noise_var=0.5, k_active=0, channel_var=1.0,
                                config=AmpConfig(detection=mode))
            self.assertEqual(result.detected, frozenset())
        self.assertTrue(np.all(result.state.activity == 0.0))

    def test_single_user_statistic_stands_out(self):
        rng = np.random.default_rng(8)
        pilots = gaussian_pilots(8, 100, rng)
        clean = np.outer(pilots[:, 17], complex_normal(rng, 64))
        noise_var = np.linalg.norm(clean) ** 2 / (clean.size * 100.0)
        y = clean + math.sqrt(noise_var) * complex_normal(rng, clean.shape)
        result = amp_detect(y, pilots, noise_var=noise_var, k_active=1, channel_var=1.0)
        self.assertEqual(int(np.argmax(result.state.statistics)), 17)
        self.assertEqual(result.detected, frozenset({17}))

    def test_divergence_is_flagged(self):
        rng = np.random.default_rng(9)
        pilots = gaussian_pilots(6, 20, rng)
        y = complex_normal(rng, (6, 4))
        result = amp_detect(y, pilots, noise_var=0.1, k_active=2,
                            config=AmpConfig(divergence_factor=1e-6))
        self.assertTrue(result.state.diverged)
        self.assertEqual(result.state.iterations, 1)
        self.assertIn('amp_diverged', result.state.flags)
        assert_allclose(result.state.statistics, matched_filter_statistics(y, pilots))

    def test_needs_activity_information(self):
        with self.assertRaises(ConfigurationError):
            amp_detect(np.ones((4, 2)), np.ones((4, 3)), noise_var=0.1)


class DenoiserTests(SimpleTestCase):
    def test_zero_row_is_inactive(self):
        r = np.vstack([np.zeros(4), 3.0 * np.ones(4)]).astype(complex)
        estimates, activity, _ = bernoulli_gaussian_denoiser(r, tau2=0.1, prior=0.5, channel_var=1.0)
        self.assertLess(activity[0], 0.01)
        self.assertGreater(activity[1], 0.99)
        assert_allclose(estimates[0], np.zeros(4))

    def test_certain_activity_is_wiener_filter(self):
        r = np.array([[1.0 + 1j, 2.0]])
        estimates, activity, jacobian = bernoulli_gaussian_denoiser(r, tau2=1.0, prior=1.0, channel_var=3.0)
        assert_allclose(activity, [1.0])
        assert_allclose(estimates, 0.75 * r)
        assert_allclose(jacobian, 0.75 * np.eye(2))


class AmpConfigTests(SimpleTestCase):
    def test_rejects_bad_values(self):
        with self.assertRaises(ConfigurationError):
            AmpConfig(damping=0.0)
        with self.assertRaises(ConfigurationError):
            AmpConfig(detection='majority')

    @override_settings(BAGOD={**django_settings.BAGOD, 'AMP_DAMPING': 0.4})
    def test_from_settings(self):
        self.assertEqual(AmpConfig.from_settings(max_iter=3).damping, 0.4)
