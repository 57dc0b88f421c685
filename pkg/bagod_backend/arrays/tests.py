import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from bagod_backend.errors import ConfigurationError
from .manifold import (
    AngleOfArrival, ArrayConfig, UserChannel, circular_distance, min_separation,
    separation_guaranteed, steering_matrix, steering_vector, synthesize_channel,
)


def channel_with_cosines(cosines, gains=None):
    thetas = [math.acos(c) for c in cosines]
    gains = np.ones(len(thetas)) if gains is None else gains
    return UserChannel(tuple(thetas), gains, (min(thetas), max(thetas)), max_spread=math.pi)


class ArrayConfigTests(SimpleTestCase):
    def test_rejects_single_antenna(self):
        with self.assertRaises(ConfigurationError):
            ArrayConfig(1)

    def test_rejects_nonpositive_spacing(self):
        with self.assertRaises(ConfigurationError):
            ArrayConfig(4, spacing_ratio=0.0)

    def test_angle_range(self):
        for bad in (0.0, math.pi, -0.1, 4.0):
            with self.assertRaises(ConfigurationError):
                AngleOfArrival(bad)
        self.assertAlmostEqual(AngleOfArrival.from_degrees(30.0).degrees, 30.0)


class SteeringVectorTests(SimpleTestCase):
    def test_broadside(self):
        a = steering_vector(ArrayConfig(4), math.pi / 2)
        assert_allclose(a, 0.5 * np.ones(4), atol=1e-15)

    def test_endfire_limit(self):
        a = steering_matrix(ArrayConfig(2), [0.0])[:, 0]
        assert_allclose(a, np.array([1.0, -1.0]) / math.sqrt(2.0), atol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(n=st.integers(min_value=2, max_value=128),
           theta=st.floats(min_value=1e-6, max_value=math.pi - 1e-6),
           ratio=st.floats(min_value=0.1, max_value=2.0))
    def test_unit_norm(self, n, theta, ratio):
        a = steering_vector(ArrayConfig(n, ratio), theta)
        self.assertAlmostEqual(np.linalg.norm(a), 1.0, delta=1e-12)


class ChannelTests(SimpleTestCase):
    def setUp(self):
        self.config = ArrayConfig(16)

    def test_single_path_is_steering_vector(self):
        channel = UserChannel((1.0,), [1.0], (1.0, 1.0))
        assert_allclose(synthesize_channel(self.config, channel), steering_vector(self.config, 1.0))

    def test_two_paths_against_scalar_loop(self):
        thetas, gains = (1.0, 1.1), np.array([2.0 + 1j, -0.5j])
        channel = UserChannel(thetas, gains, (1.0, 1.1))
        expected = np.zeros(16, dtype=complex)
        for n in range(16):
            for theta, alpha in zip(thetas, gains):
                expected[n] += alpha * np.exp(-2j * math.pi * 0.5 * n * math.cos(theta)) / 4.0
        assert_allclose(synthesize_channel(self.config, channel), expected, atol=1e-14)

    def test_zero_gains(self):
        channel = UserChannel((1.0, 1.05), [0.0, 0.0], (1.0, 1.05))
        assert_allclose(synthesize_channel(self.config, channel), np.zeros(16))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_additive_in_gains(self, seed):
        rng = np.random.default_rng(seed)
        thetas = tuple(np.sort(rng.uniform(1.0, 1.2, 3)))
        alpha = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        beta = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        spread = (thetas[0], thetas[-1])
        h = lambda g: synthesize_channel(self.config, UserChannel(thetas, g, spread))
        assert_allclose(h(alpha + beta), h(alpha) + h(beta), atol=1e-12)

    def test_los_angle_is_strongest_path(self):
        channel = UserChannel((1.0, 1.1), [1.0, 3.0], (1.0, 1.1))
        self.assertEqual(channel.los_angle.theta, 1.1)

    def test_rejects_mismatched_lengths(self):
        with self.assertRaises(ConfigurationError):
            UserChannel((1.0, 1.1), [1.0], (1.0, 1.1))

    def test_rejects_wide_spread(self):
        with self.assertRaises(ConfigurationError):
            UserChannel((1.0, 1.5), [1.0, 1.0], (1.0, 1.5))

    def test_rejects_angle_outside_spread(self):
        with self.assertRaises(ConfigurationError):
            UserChannel((1.0, 1.2), [1.0, 1.0], (1.0, 1.1))

    def test_rejects_more_paths_than_antennas(self):
        thetas = tuple(np.linspace(1.0, 1.2, 3))
        channel = UserChannel(thetas, np.ones(3), (1.0, 1.2))
        with self.assertRaises(ConfigurationError):
            synthesize_channel(ArrayConfig(2), channel)


class SeparationTests(SimpleTestCase):
    def test_wraps_around_the_circle(self):
        self.assertAlmostEqual(min_separation([channel_with_cosines([0.2, 0.8])]), 0.4)

    def test_single_path_is_infinite(self):
        self.assertEqual(min_separation([channel_with_cosines([0.3])]), math.inf)
        self.assertEqual(min_separation([]), math.inf)

    def test_pairwise_minimum(self):
        self.assertAlmostEqual(min_separation([channel_with_cosines([0.0, 0.5, 0.6])]), 0.1)

    def test_minimum_over_users(self):
        channels = [channel_with_cosines([0.0, 0.5]), channel_with_cosines([0.1, 0.3])]
        self.assertAlmostEqual(min_separation(channels), 0.2)

    def test_circular_distance(self):
        self.assertAlmostEqual(circular_distance(0.95, 0.05), 0.1)
        self.assertAlmostEqual(circular_distance(-0.9, 0.9), 0.2)

    def test_guarantee_condition(self):
        channels = [channel_with_cosines([0.0, 0.5])]
        self.assertTrue(separation_guaranteed(ArrayConfig(4), channels))
        self.assertFalse(separation_guaranteed(ArrayConfig(2), channels))
