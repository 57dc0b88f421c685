import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import fft

from arrays.manifold import ArrayConfig, UserChannel, min_separation, synthesize_channel
from bagod_backend.errors import ConfigurationError, ScenarioError
from identification.registry import sector_of
from .generation import ScenarioParams, generate_scenario
from .serializers import ScenarioConfigSerializer
from .synthesis import (
    compute_snr, delay_gain_vector, noiseless_signal, synthesize_received, time_domain_oracle,
)
from .types import Mobility, Scenario, UserProfile


def make_user(user_id, theta, preamble, delay=0.0, gain_error=None, active=True,
              mobility=Mobility.STATIONARY):
    channel = UserChannel((theta,), [1.0 + 0.5j], (theta, theta))
    preamble = np.asarray(preamble, dtype=float)
    return UserProfile(user_id=user_id, mobility=mobility, channel=channel,
                       preamble=preamble / np.linalg.norm(preamble), delay=delay,
                       gain_error=gain_error, active=active)


class DelayGainVectorTests(SimpleTestCase):
    def test_identity_case(self):
        assert_allclose(delay_gain_vector(0.0, np.zeros(5), 5), np.ones(5))

    def test_unit_delay_ramp(self):
        assert_allclose(delay_gain_vector(1.0, None, 4), [1, 1j, -1, -1j], atol=1e-15)

    def test_gain_error_reaches_bound(self):
        e = delay_gain_vector(0.0, np.full(6, 0.3), 6, zeta=0.3)
        self.assertAlmostEqual(np.linalg.norm(np.diag(e), 2), 1.3)

    def test_rejects_gain_error_over_bound(self):
        with self.assertRaises(ConfigurationError):
            delay_gain_vector(0.0, np.full(4, 0.2), 4, zeta=0.1)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), zeta=st.floats(0.0, 0.9))
    def test_spectral_norm_bounded(self, seed, zeta):
        rng = np.random.default_rng(seed)
        g = rng.uniform(-zeta, zeta, 8)
        e = delay_gain_vector(rng.uniform(0, 7), g, 8, zeta=zeta)
        self.assertLessEqual(np.max(np.abs(e)), 1.0 + zeta + 1e-12)


class SynthesisTests(SimpleTestCase):
    def setUp(self):
        self.array = ArrayConfig(8)

    def test_single_user_noiseless(self):
        user = make_user(1, 1.2, [0.2, 0.5, 0.1, 0.7])
        scenario = Scenario(self.array, [user], t_len=4)
        signal = synthesize_received(scenario, rng_seed=0)
        h = synthesize_channel(self.array, user.channel)
        expected = np.outer(h, np.conj(fft.fft(user.preamble, norm='ortho')))
        assert_allclose(signal.y, expected, atol=1e-14)
        self.assertEqual(signal.noise_bound, 0.0)

    def test_no_active_users(self):
        user = make_user(1, 1.2, [1, 1], active=False)
        signal = synthesize_received(Scenario(self.array, [user], t_len=2, snr_db=10.0), rng_seed=0)
        assert_allclose(signal.y, np.zeros((8, 2)))

    def test_strict_mode_rejects_empty_active_set(self):
        user = make_user(1, 1.2, [1, 1], active=False)
        with self.assertRaises(ScenarioError):
            synthesize_received(Scenario(self.array, [user], t_len=2, strict=True), rng_seed=0)

    def test_superposition(self):
        users = [make_user(1, 0.9, [1, 2, 3, 4], delay=1.0),
                 make_user(2, 2.0, [4, 1, 0, 1], delay=2.0, mobility=Mobility.MOBILE)]
        joint = noiseless_signal(Scenario(self.array, users, t_len=4, tau_max=2.0))
        parts = sum(noiseless_signal(Scenario(self.array, [u], t_len=4, tau_max=2.0)) for u in users)
        assert_allclose(joint, parts, atol=1e-12)

    def test_row_selection(self):
        user = make_user(1, 1.2, [1, 2])
        full = noiseless_signal(Scenario(self.array, [user], t_len=2))
        sub = noiseless_signal(Scenario(self.array, [user], t_len=2, omega=[1, 4, 6]))
        assert_allclose(sub, full[[1, 4, 6], :])

    def test_noise_respects_snr_and_bound(self):
        users = [make_user(1, 1.0, [1, 2, 3, 4]), make_user(2, 2.0, [2, 2, 1, 0])]
        for noise in ('gaussian', 'uniform'):
            scenario = Scenario(self.array, users, t_len=4, snr_db=10.0, noise=noise, eta_multiplier=1.5)
            signal = synthesize_received(scenario, rng_seed=3)
            noise_norm = np.linalg.norm(signal.y - signal.clean)
            self.assertAlmostEqual(compute_snr(signal.clean, signal.sigma), 10.0, places=9)
            self.assertAlmostEqual(noise_norm, signal.sigma * math.sqrt(32), places=9)
            self.assertLessEqual(noise_norm, signal.noise_bound)
            self.assertAlmostEqual(signal.noise_bound, 1.5 * noise_norm, places=9)

    def test_same_seed_same_signal(self):
        scenario = Scenario(self.array, [make_user(1, 1.0, [1, 2])], t_len=2, snr_db=5.0)
        assert_allclose(synthesize_received(scenario, 7).y, synthesize_received(scenario, 7).y)

    def test_configured_noise_bound_wins(self):
        scenario = Scenario(self.array, [make_user(1, 1.0, [1, 2])], t_len=2, snr_db=5.0, noise_bound=2.5)
        self.assertEqual(synthesize_received(scenario, 0).noise_bound, 2.5)


class TimeDomainOracleTests(SimpleTestCase):
    def test_zero_delay_matches(self):
        user = make_user(1, 1.3, [3, 1, 2, 5])
        scenario = Scenario(ArrayConfig(6), [user], t_len=4, tau_max=3.0)
        assert_allclose(time_domain_oracle(scenario).y, noiseless_signal(scenario), atol=1e-12)

    def test_constant_preamble_unit_delay(self):
        user = make_user(1, 1.3, np.ones(4), delay=1.0)
        scenario = Scenario(ArrayConfig(6), [user], t_len=4, tau_max=1.0)
        assert_allclose(time_domain_oracle(scenario).y, noiseless_signal(scenario), atol=1e-10)

    def test_delay_at_tau_max(self):
        user = make_user(1, 1.3, [1, 2, 3, 4, 5], delay=4.0, gain_error=np.full(5, 0.1))
        scenario = Scenario(ArrayConfig(6), [user], t_len=5, tau_max=4.0, zeta=0.1)
        assert_allclose(time_domain_oracle(scenario).y, noiseless_signal(scenario), atol=1e-10)

    def test_rejects_fractional_delay(self):
        user = make_user(1, 1.3, [1, 2, 3, 4], delay=0.5)
        with self.assertRaises(ScenarioError):
            time_domain_oracle(Scenario(ArrayConfig(6), [user], t_len=4, tau_max=1.0))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_matches_phase_ramp_model(self, seed):
        rng = np.random.default_rng(seed)
        t_len = int(rng.integers(4, 12))
        params = ScenarioParams(n_antennas=8, t_len=t_len, k_s=2, k_m=1, k_a_s=1, k_a_m=1, l_max=2,
                                tau_max=float(rng.integers(0, t_len)), zeta=0.2, n_sectors=2,
                                gain_error_users='all')
        scenario = generate_scenario(params, rng)
        assert_allclose(time_domain_oracle(scenario).y, noiseless_signal(scenario), atol=1e-10)


class ComputeSnrTests(SimpleTestCase):
    def test_reference_levels(self):
        x = np.ones((4, 2))
        self.assertAlmostEqual(compute_snr(x, 1.0), 0.0)
        self.assertAlmostEqual(compute_snr(math.sqrt(10.0) * x, 1.0), 10.0)

    def test_zero_signal(self):
        self.assertEqual(compute_snr(np.zeros((3, 3)), 1.0), -math.inf)

    def test_rejects_nonpositive_sigma(self):
        with self.assertRaises(ConfigurationError):
            compute_snr(np.ones((2, 2)), 0.0)


class GenerationTests(SimpleTestCase):
    def test_population_counts(self):
        params = ScenarioParams(n_antennas=16, t_len=4, k_s=30, k_m=10, k_a_s=2, k_a_m=2,
                                spread_width=math.radians(5.0))
        scenario = generate_scenario(params, np.random.default_rng(1))
        self.assertEqual((scenario.k_s, scenario.k_m, scenario.k_a_s, scenario.k_a_m), (30, 10, 2, 2))
        self.assertEqual(sorted(u.user_id for u in scenario.users), list(range(1, 41)))

    def test_active_users_are_separated(self):
        params = ScenarioParams(n_antennas=16, t_len=4, k_s=5, k_m=5, k_a_s=2, k_a_m=2,
                                spread_width=math.radians(5.0))
        scenario = generate_scenario(params, np.random.default_rng(2))
        los = sorted(u.channel.los_angle.theta for u in scenario.active_users)
        self.assertTrue(np.all(np.diff(los) >= params.user_gap - 1e-12))

    def test_mobile_users_carry_codebook_preambles(self):
        params = ScenarioParams(n_antennas=16, t_len=4, k_s=1, k_m=6, k_a_s=0, k_a_m=3)
        scenario = generate_scenario(params, np.random.default_rng(3))
        for user in scenario.users:
            if user.is_mobile:
                assert_allclose(user.preamble, scenario.mobile_codebook[:, user.preamble_index])
                self.assertEqual(sector_of(user.registered_los, 4)[0], user.sector)
        active = [(u.sector, u.preamble_index) for u in scenario.active_users]
        self.assertEqual(len(active), len(set(active)))

    def test_active_mobile_los_stays_near_registered_angle(self):
        params = ScenarioParams(n_antennas=16, t_len=4, k_s=0, k_m=3, k_a_s=0, k_a_m=3)
        scenario = generate_scenario(params, np.random.default_rng(4))
        for user in scenario.active_users:
            drift = abs(user.channel.los_angle.theta - user.registered_los)
            self.assertLessEqual(drift, math.radians(params.mobile_drift_deg) + 1e-9)

    def test_guaranteed_recovery_separation(self):
        params = ScenarioParams(n_antennas=32, t_len=2, guaranteed_recovery=True, separation_factor=2.0)
        for seed in range(5):
            scenario = generate_scenario(params, np.random.default_rng(seed))
            channels = [u.channel for u in scenario.active_users]
            self.assertGreater(min_separation(channels), 2.0 / 32)

    def test_deterministic_from_seed(self):
        params = ScenarioParams(n_antennas=16, t_len=4, tau_max=2.0, zeta=0.1)
        first = generate_scenario(params, np.random.default_rng(9))
        second = generate_scenario(params, np.random.default_rng(9))
        for a, b in zip(first.users, second.users):
            assert_allclose(a.preamble, b.preamble)
            assert_allclose(a.channel.gains, b.channel.gains)
            self.assertEqual(a.delay, b.delay)

    def test_impossible_placement(self):
        params = ScenarioParams(n_antennas=16, t_len=2, k_s=20, k_a_s=20, k_m=0, k_a_m=0)
        with self.assertRaises(ScenarioError):
            generate_scenario(params, np.random.default_rng(0))

    def test_random_antenna_subset(self):
        params = ScenarioParams(n_antennas=16, t_len=2, m=5)
        scenario = generate_scenario(params, np.random.default_rng(0))
        self.assertEqual(scenario.m, 5)

    def test_sweep_copy(self):
        params = ScenarioParams().with_sweep('N', 64)
        self.assertEqual(params.n_antennas, 64)
        with self.assertRaises(ConfigurationError):
            params.with_sweep('L', 2)


class ScenarioConfigSerializerTests(SimpleTestCase):
    def config(self, **overrides):
        data = {'N': 16, 'T': 4, 'K_S': 3, 'K_M': 2, 'K_aS': 1, 'K_aM': 1,
                'L_max': 2, 'tau_max': 1, 'zeta': 0.1, 'snr_db': 20, 'seed': 5}
        data.update(overrides)
        return data

    def test_to_params(self):
        serializer = ScenarioConfigSerializer(data=self.config(omega=[3, 1, 16]))
        self.assertTrue(serializer.is_valid(), serializer.errors)
        params = serializer.to_params()
        self.assertEqual(params.omega, (0, 2, 15))
        self.assertAlmostEqual(params.spread_width, math.pi / 12)
        self.assertEqual(serializer.validated_data['seed'], 5)

    def test_rejects_active_over_population(self):
        serializer = ScenarioConfigSerializer(data=self.config(K_aS=4))
        self.assertFalse(serializer.is_valid())

    def test_rejects_tau_max_beyond_window(self):
        self.assertFalse(ScenarioConfigSerializer(data=self.config(tau_max=4)).is_valid())

    def test_rejects_omega_out_of_range(self):
        self.assertFalse(ScenarioConfigSerializer(data=self.config(omega=[0, 2])).is_valid())
        self.assertFalse(ScenarioConfigSerializer(data=self.config(omega=[2, 17])).is_valid())
