import math
from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from rest_framework.exceptions import ValidationError

from arrays.manifold import AngleOfArrival
from bagod_backend.errors import ConfigurationError
from scenarios.generation import ScenarioParams, generate_scenario
from spectrum.clustering import ClusterResult, cluster_angles
from .matching import DetectionReport, codebook_correlation, identify, match_mobile, match_stationary
from .metrics import Metrics, compute_metrics, detection_rates, mean_metrics
from .registry import (
    CROWDED_FLAG, Registry, build_registry, default_codebook_size, load_registry, nonnegative_codebook,
    sector_bounds, sector_of, warn_if_crowded,
)

TOL = math.radians(0.5)


def clusters_at(*degrees):
    return cluster_angles([math.radians(d) for d in sorted(degrees)], math.radians(0.1))


def registry(stationary=None, assignment=None, mobile_los=None, t_len=4, n_preambles=None):
    return Registry(
        stationary={uid: math.radians(d) for uid, d in (stationary or {}).items()},
        sectors=sector_bounds(4),
        mobile_codebook=nonnegative_codebook(t_len, n_preambles),
        mobile_assignment={key: frozenset(ids) for key, ids in (assignment or {}).items()},
        mobile_los={uid: math.radians(d) for uid, d in (mobile_los or {}).items()},
    )


def fake_am(*preambles):
    return SimpleNamespace(preamble=lambda k: np.asarray(preambles[k], dtype=float), flags=[])


def population(stationary, mobile, active):
    users = [SimpleNamespace(user_id=uid) for uid in (*stationary, *mobile)]
    return SimpleNamespace(users=users, active_ids=frozenset(active),
                           stationary_ids=frozenset(stationary), mobile_ids=frozenset(mobile))


class CodebookTests(SimpleTestCase):
    @settings(max_examples=40, deadline=None)
    @given(t_len=st.integers(1, 24), data=st.data())
    def test_columns_orthonormal_and_nonnegative(self, t_len, data):
        n_columns = data.draw(st.integers(1, t_len))
        codebook = nonnegative_codebook(t_len, n_columns)
        assert_allclose(codebook.T @ codebook, np.eye(n_columns), atol=1e-12)
        self.assertTrue(np.all(codebook >= 0))

    def test_full_size_is_standard_basis(self):
        assert_allclose(nonnegative_codebook(4), np.eye(4))

    def test_rejects_oversized_codebook(self):
        with self.assertRaises(ConfigurationError):
            nonnegative_codebook(4, 5)

    def test_default_size_leaves_room_for_delay(self):
        self.assertEqual(default_codebook_size(8, 1), 4)
        self.assertEqual(default_codebook_size(8, 0), 8)
        self.assertEqual(default_codebook_size(2, 1.5), 1)


class SectorTests(SimpleTestCase):
    def test_interior_angle(self):
        self.assertEqual(sector_of(1.0, 4), (1, False))

    def test_boundary_goes_to_lower_sector(self):
        self.assertEqual(sector_of(math.pi / 4, 4), (0, True))

    def test_bounds_partition(self):
        bounds = sector_bounds(3)
        self.assertEqual(len(bounds), 3)
        self.assertAlmostEqual(bounds[-1][1], math.pi)


class RegistryLoadingTests(SimpleTestCase):
    entries = [
        {'user_id': 1, 'type': 'stationary', 'los_angle_deg': 30.0},
        {'user_id': 2, 'type': 'mobile', 'los_angle_deg': 100.0, 'preamble_index': 1},
        {'user_id': 3, 'type': 'mobile', 'los_angle_deg': 50.0, 'sector': 2, 'preamble_index': 0},
    ]

    def test_load_from_list(self):
        loaded = load_registry(self.entries, t_len=4)
        self.assertAlmostEqual(loaded.stationary[1], math.radians(30.0))
        self.assertEqual(loaded.candidates(2, 1), frozenset({2}))
        self.assertEqual(loaded.candidates(1, 0), frozenset({3}))
        self.assertEqual(loaded.mobile_ids, frozenset({2, 3}))

    def test_mobile_needs_preamble_index(self):
        with self.assertRaises(ValidationError):
            load_registry([{'user_id': 2, 'type': 'mobile', 'los_angle_deg': 100.0}], t_len=4)

    def test_rejects_angle_out_of_range(self):
        with self.assertRaises(ValidationError):
            load_registry([{'user_id': 1, 'type': 'stationary', 'los_angle_deg': 180.0}], t_len=4)

    def test_rejects_index_outside_codebook(self):
        with self.assertRaises(ConfigurationError):
            load_registry([{'user_id': 2, 'type': 'mobile', 'los_angle_deg': 100.0, 'preamble_index': 4}],
                          t_len=4)

    def test_separation_check(self):
        reg = registry({1: 30.0, 2: 31.5})
        self.assertTrue(reg.check_separation(math.radians(0.5)))
        self.assertFalse(reg.check_separation(math.radians(1.0)))

    def test_crowded_file_is_warned(self):
        entries = [
            {'user_id': 1, 'type': 'stationary', 'los_angle_deg': 30.0},
            {'user_id': 2, 'type': 'stationary', 'los_angle_deg': 30.5},
        ]
        with self.assertLogs('identification.registry', 'WARNING'):
            loaded = load_registry(entries, t_len=4, angle_tol=math.radians(1.0))
        self.assertTrue(warn_if_crowded(loaded, math.radians(0.3)))
        self.assertFalse(warn_if_crowded(loaded, math.radians(0.2)))

    def test_build_from_generated_scenario(self):
        params = ScenarioParams(n_antennas=16, t_len=4, k_s=5, k_m=4, k_a_s=2, k_a_m=2,
                                spread_width=math.radians(5.0))
        scenario = generate_scenario(params, np.random.default_rng(5))
        reg = build_registry(scenario)
        self.assertEqual(set(reg.stationary), set(scenario.stationary_ids))
        self.assertEqual(reg.mobile_ids, scenario.mobile_ids)
        for uid in scenario.mobile_ids:
            user = scenario.user(uid)
            self.assertIn(uid, reg.candidates(user.sector, user.preamble_index))


class StationaryMatchingTests(SimpleTestCase):
    def test_match_within_tolerance(self):
        matches = match_stationary(clusters_at(30.1), registry({7: 30.0}), TOL)
        self.assertEqual(matches.matched, {0: 7})

    def test_no_entry_in_tolerance(self):
        matches = match_stationary(clusters_at(45.0), registry({7: 30.0}), TOL)
        self.assertEqual((matches.matched, matches.unmatched), ({}, (0,)))

    def test_nearest_user_wins(self):
        matches = match_stationary(clusters_at(30.2), registry({1: 30.0, 2: 30.6}), TOL)
        self.assertEqual(matches.matched, {0: 1})

    def test_conflict_is_flagged(self):
        matches = match_stationary(clusters_at(29.8, 30.1), registry({7: 30.0}), TOL)
        self.assertEqual(matches.matched, {1: 7})
        self.assertEqual(matches.unmatched, (0,))
        self.assertIn('stationary_conflict:7', matches.flags)

    @settings(max_examples=50, deadline=None)
    @given(angles=st.lists(st.floats(10.0, 170.0), min_size=1, max_size=8), data=st.data())
    def test_cluster_order_does_not_matter(self, angles, data):
        reg = registry({uid: 10.0 + 4.0 * uid for uid in range(41)})
        order = data.draw(st.permutations(range(len(angles))))

        def result(sequence):
            los = tuple(AngleOfArrival(math.radians(a)) for a in sequence)
            clusters = ClusterResult(clusters=tuple((a,) for a in los), los_angles=los)
            return frozenset(match_stationary(clusters, reg, math.radians(1.0)).matched.values())

        self.assertEqual(result(angles), result([angles[i] for i in order]))


class MobileMatchingTests(SimpleTestCase):
    def test_codebook_column_in_sector(self):
        reg = registry(assignment={(1, 3): {20}}, mobile_los={20: 60.0})
        matches = match_mobile([0], clusters_at(60.0), fake_am(np.eye(4)[3]), reg, 0.8)
        self.assertEqual(matches.matched, {0: 20})
        self.assertAlmostEqual(matches.details[0].correlation, 1.0)

    def test_orthogonal_preamble_is_unidentified(self):
        reg = registry(assignment={(1, 0): {20}}, mobile_los={20: 60.0}, n_preambles=2)
        preamble = np.array([1.0, -1.0, 0.0, 0.0]) / math.sqrt(2)
        matches = match_mobile([0], clusters_at(60.0), fake_am(preamble), reg, 0.8)
        self.assertEqual(matches.unidentified, (0,))
        self.assertIn('low_correlation:0', matches.flags)

    def test_small_perturbation_keeps_column(self):
        rng = np.random.default_rng(0)
        preamble = np.eye(4)[1] + 0.01 * rng.uniform(0, 1, 4)
        preamble /= np.linalg.norm(preamble)
        column, shift, correlation = codebook_correlation(preamble, nonnegative_codebook(4))
        self.assertEqual((column, shift), (1, 0))
        self.assertGreater(correlation, 0.999)

    def test_shift_search(self):
        codebook = nonnegative_codebook(8, 4)
        shifted = np.roll(codebook[:, 1], 1)
        self.assertEqual(codebook_correlation(shifted, codebook, max_shift=1)[:2], (1, 1))
        self.assertAlmostEqual(codebook_correlation(shifted, codebook, max_shift=0)[2], 0.5)

    def test_nearest_registered_candidate(self):
        reg = registry(assignment={(1, 0): {20, 21}}, mobile_los={20: 50.0, 21: 80.0})
        matches = match_mobile([0], clusters_at(78.0), fake_am(np.eye(4)[0]), reg, 0.8)
        self.assertEqual(matches.matched, {0: 21})

    def test_no_candidate(self):
        reg = registry(assignment={(2, 0): {20}}, mobile_los={20: 100.0})
        matches = match_mobile([0], clusters_at(60.0), fake_am(np.eye(4)[0]), reg, 0.8)
        self.assertIn('no_mobile_candidate:0', matches.flags)

    def test_one_cluster_per_user(self):
        reg = registry(assignment={(1, 0): {20}}, mobile_los={20: 60.0})
        weaker = np.array([0.9, 0.1, 0.1, 0.0])
        matches = match_mobile([0, 1], clusters_at(50.0, 70.0),
                               fake_am(np.eye(4)[0], weaker / np.linalg.norm(weaker)), reg, 0.8)
        self.assertEqual(matches.matched, {0: 20})
        self.assertEqual(matches.unidentified, (1,))


class IdentifyTests(SimpleTestCase):
    def test_mixed_population(self):
        reg = registry({7: 30.0}, assignment={(2, 2): {20}}, mobile_los={20: 120.0})
        clusters = clusters_at(30.05, 121.0)
        report = identify(clusters, reg, fake_am(np.eye(4)[0], np.eye(4)[2]), angle_tol=TOL,
                          corr_threshold=0.8)
        self.assertEqual(report.est_active_stationary, frozenset({7}))
        self.assertEqual(report.est_active_mobile, frozenset({20}))
        self.assertEqual(report.est_active, frozenset({7, 20}))
        self.assertEqual(report.cluster_of(20), 1)
        assert_allclose(report.preamble(20), np.eye(4)[2])

    def test_without_am_leftovers_are_unmatched(self):
        report = identify(clusters_at(45.0), registry({7: 30.0}), angle_tol=TOL)
        self.assertEqual(report.unmatched, (0,))
        self.assertIn('no_am_estimate', report.flags)

    def test_crowded_registry_is_flagged(self):
        reg = registry({7: 30.0, 8: 30.5})
        report = identify(clusters_at(30.0), reg, angle_tol=math.radians(1.0))
        self.assertIn(CROWDED_FLAG, report.flags)
        self.assertEqual(report.est_active_stationary, frozenset({7}))
        report = identify(clusters_at(30.0), reg, angle_tol=math.radians(0.2))
        self.assertNotIn(CROWDED_FLAG, report.flags)

    def test_class_subsets_disjoint(self):
        with self.assertRaises(ConfigurationError):
            DetectionReport(est_active_stationary={1}, est_active_mobile={1})


class MetricsTests(SimpleTestCase):
    def test_definition_example(self):
        p_d, p_fa, flags = detection_rates({1, 2, 3}, {1, 2, 4}, range(1, 101))
        self.assertAlmostEqual(p_d, 2 / 3)
        self.assertAlmostEqual(p_fa, 1 / 97)
        self.assertEqual(flags, [])

    def test_perfect_and_empty_estimates(self):
        truth = population(range(1, 6), range(6, 11), {1, 2, 7})
        perfect = compute_metrics({1, 2, 7}, truth)
        self.assertEqual((perfect.p_d, perfect.p_fa), (1.0, 0.0))
        empty = compute_metrics(set(), truth)
        self.assertEqual((empty.p_d, empty.p_fa), (0.0, 0.0))

    def test_class_rates(self):
        truth = population(range(1, 6), range(6, 11), {1, 2, 7})
        metrics = compute_metrics(DetectionReport({1, 3}, {7, 8}), truth)
        self.assertEqual((metrics.p_d_s, metrics.p_fa_s), (0.5, 1 / 3))
        self.assertEqual((metrics.p_d_m, metrics.p_fa_m), (1.0, 0.25))

    def test_guarded_denominators(self):
        truth = population([1, 2], [], {1, 2})
        metrics = compute_metrics({1}, truth)
        self.assertEqual((metrics.p_d_m, metrics.p_fa), (1.0, 0.0))
        self.assertIn('no_active_mobile', metrics.flags)
        self.assertIn('no_inactive', metrics.flags)

    @settings(max_examples=60, deadline=None)
    @given(active=st.sets(st.integers(1, 20), min_size=1), estimated=st.sets(st.integers(1, 20)))
    def test_overall_rate_decomposes_by_class(self, active, estimated):
        truth = population(range(1, 11), range(11, 21), active)
        metrics = compute_metrics(estimated, truth)
        k_a_s = len(active & set(range(1, 11)))
        k_a_m = len(active) - k_a_s
        combined = k_a_s * (metrics.p_d_s if k_a_s else 0.0) + k_a_m * (metrics.p_d_m if k_a_m else 0.0)
        self.assertAlmostEqual(len(active) * metrics.p_d, combined)

    def test_mean_and_round_trip(self):
        a = Metrics(1.0, 0.0, 1.0, 0.0, 1.0, 0.0)
        b = Metrics(0.5, 0.1, 0.0, 0.2, 1.0, 0.0, flags=('x',))
        mean = mean_metrics([a, b])
        self.assertAlmostEqual(mean.p_d, 0.75)
        self.assertEqual(mean.flags, ('x',))
        self.assertEqual(Metrics.from_dict(b.as_dict()), b)

    def test_rejects_out_of_range(self):
        with self.assertRaises(ConfigurationError):
            Metrics(1.5, 0, 0, 0, 0, 0)
