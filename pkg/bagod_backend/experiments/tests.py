import json
import math
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase
from rest_framework.exceptions import ValidationError
from rest_framework.test import APIClient

from bagod_backend.errors import ConfigurationError, SolverError
from identification.metrics import Metrics
from identification.registry import CROWDED_FLAG
from scenarios.generation import SWEEP_FIELDS, ScenarioParams
from scenarios.serializers import ScenarioConfigSerializer
from spectrum.polynomial import AngularSpectrum
from .models import ExperimentRun, TrialRecord
from .output import build_metadata, emit_dat, render_dat, render_spectrum_dat
from .pipeline import PipelineOptions, TrialOutcome, run_trial
from .runner import ExperimentSpec, ResultRow, ResultsTable, aggregate_row, monotone_flags, run_experiment
from .storage import save_run

NARROW = math.radians(5.0)
SPEC_DIR = Path(__file__).resolve().parent / 'specs'

SCENARIO_CONFIG = {
    'N': 16, 'T': 4, 'K_S': 10, 'K_M': 0, 'K_aS': 2, 'K_aM': 0,
    'L_max': 2, 'snr_db': 20.0, 'spread_width': 5.0,
}


def perfect(p_fa=0.0, p_d=1.0):
    return Metrics(p_d, p_fa, p_d, p_fa, 1.0, 0.0)


def amp_spec(**changes):
    config = {'name': 'amp_only', 'sweep': 'N', 'values': [16, 32], 'trials': 2, 'seed': 3,
              'methods': ['amp'], 'scenario': dict(SCENARIO_CONFIG)}
    config.update(changes)
    return config


class PipelineOptionsTests(SimpleTestCase):
    def test_overrides_win(self):
        options = PipelineOptions.from_settings(admm={'tolerance': 1e-6}, spectrum_grid=512, amp_mode='impaired')
        self.assertEqual(options.admm.tolerance, 1e-6)
        self.assertEqual(options.spectrum_grid, 512)
        self.assertEqual(options.amp_mode, 'impaired')
        self.assertAlmostEqual(options.angle_tol, math.radians(1.0))

    def test_rejects_unknown_modes(self):
        with self.assertRaises(ConfigurationError):
            PipelineOptions.from_settings(amp_mode='oracle')
        with self.assertRaises(ConfigurationError):
            PipelineOptions.from_settings(unconverged_policy='ignore')


class RunTrialTests(SimpleTestCase):
    def test_noiseless_easy_scenario_is_detected(self):
        params = ScenarioParams(n_antennas=32, t_len=2, k_s=2, k_m=0, k_a_s=2, k_a_m=0, l_max=1,
                                spread_width=NARROW)
        outcome = run_trial(params, (1, 0, 0), 0, methods=('bagod',))
        self.assertEqual(outcome.failures, {})
        self.assertEqual(outcome.metrics['bagod'].p_d, 1.0)
        self.assertEqual(outcome.metrics['bagod'].p_fa, 0.0)
        self.assertIn('solver', outcome.diagnostics['bagod'])

    def test_same_seed_same_record(self):
        params = ScenarioParams(n_antennas=16, t_len=4, k_s=10, k_m=0, k_a_s=2, k_a_m=0, l_max=2,
                                snr_db=10.0, spread_width=NARROW)
        first = run_trial(params, (5, 1, 2), 2, methods=('amp',))
        second = run_trial(params, (5, 1, 2), 2, methods=('amp',))
        self.assertEqual(first.metrics, second.metrics)
        self.assertEqual(first.diagnostics, second.diagnostics)

    def test_scenario_failure_is_recorded(self):
        params = ScenarioParams(n_antennas=16, t_len=2, k_s=3, k_m=0, k_a_s=3, k_a_m=0, l_max=1,
                                spread_width=NARROW, min_user_gap=2.0)
        outcome = run_trial(params, (0, 0, 0), 0, methods=('amp',))
        self.assertTrue(outcome.failed)
        self.assertEqual(outcome.metrics, {})

    def test_method_failure_counts_as_missed(self):
        params = ScenarioParams(n_antennas=16, t_len=4, k_s=10, k_m=0, k_a_s=2, k_a_m=0, l_max=2,
                                spread_width=NARROW)
        with mock.patch('experiments.pipeline.detect_amp', side_effect=SolverError('boom')):
            outcome = run_trial(params, (0, 0, 0), 0, methods=('amp',))
        self.assertIn('SolverError', outcome.failures['amp'])
        self.assertEqual(outcome.metrics['amp'].p_d, 0.0)
        self.assertIn('trial_failed', outcome.metrics['amp'].flags)


class AggregationTests(SimpleTestCase):
    def outcomes(self):
        good = TrialOutcome(0, (0,), metrics={'bagod': perfect()}, wall_time=1.0)
        failed = TrialOutcome(1, (1,), metrics={'bagod': Metrics(0.0, 0.0, 0.0, 0.0, 1.0, 0.0, ('trial_failed',))},
                              failures={'bagod': 'SolverError: x'}, wall_time=1.0)
        broken = TrialOutcome(2, (2,), scenario_failure='no room')
        return [good, failed, broken]

    def test_failures_count_as_missed_by_default(self):
        row = aggregate_row(10.0, self.outcomes(), ('bagod',))
        self.assertEqual(row.metrics['bagod'].p_d, 0.5)
        self.assertEqual(row.trials_used['bagod'], 2)
        self.assertEqual(row.failures['bagod'], 1)
        self.assertEqual(row.scenario_failures, 1)
        self.assertIn('scenario_failures:1', row.flags)
        self.assertIn('bagod_failures:1', row.flags)

    def test_excluding_failures(self):
        row = aggregate_row(10.0, self.outcomes(), ('bagod',), exclude_failures=True)
        self.assertEqual(row.metrics['bagod'].p_d, 1.0)
        self.assertEqual(row.trials_used['bagod'], 1)

    def test_missing_method_has_no_metrics(self):
        row = aggregate_row(10.0, self.outcomes()[2:], ('bagod',))
        self.assertIsNone(row.metrics['bagod'])

    def test_crowded_registry_trials_are_counted(self):
        crowded = {'bagod': {'report': {'flags': [CROWDED_FLAG]}}}
        outcomes = [TrialOutcome(i, (i,), metrics={'bagod': perfect()}, diagnostics=crowded if i else {})
                    for i in range(3)]
        with self.assertLogs('experiments.runner', 'WARNING'):
            row = aggregate_row(64, outcomes, ('bagod',))
        self.assertIn(f'bagod_{CROWDED_FLAG}:2', row.flags)

    def test_order_does_not_matter(self):
        outcomes = [TrialOutcome(i, (i,), metrics={'amp': perfect(p_d=p)}) for i, p in enumerate([0.1, 0.7, 0.4])]
        forward = aggregate_row(0, outcomes, ('amp',)).metrics['amp']
        backward = aggregate_row(0, outcomes[::-1], ('amp',)).metrics['amp']
        self.assertAlmostEqual(forward.p_d, backward.p_d, places=15)

    def test_snr_monotone_flag(self):
        table = ResultsTable('SNR', ('bagod',), rows=[
            ResultRow(0.0, {'bagod': perfect(p_d=0.9)}),
            ResultRow(10.0, {'bagod': perfect(p_d=0.8)}),
        ])
        self.assertEqual(monotone_flags(table), ['bagod_p_d_decreases_at_snr:10'])
        table.sweep = 'N'
        self.assertEqual(monotone_flags(table), [])


class DatOutputTests(SimpleTestCase):
    def table(self):
        return ResultsTable('N', ('bagod', 'amp'), rows=[
            ResultRow(16, {'bagod': perfect(), 'amp': perfect(p_d=0.5, p_fa=0.25)}),
            ResultRow(32, {'bagod': perfect(), 'amp': None}),
        ])

    def test_header_and_legend_order(self):
        lines = render_dat(self.table()).splitlines()
        self.assertEqual(len(lines), 3)
        self.assertEqual(lines[0], 't y1 y2 y3 y4 y5 y6 y7 y8')
        self.assertEqual(lines[1].split(), ['16', '0.5', '0.25', '1', '0', '1', '0', '1', '0'])
        self.assertEqual(lines[2].split()[:3], ['32', 'nan', 'nan'])

    def test_perfect_columns(self):
        rows = [line.split() for line in render_dat(self.table()).splitlines()[1:]]
        self.assertEqual([float(r[3]) for r in rows], [1.0, 1.0])
        self.assertEqual([float(r[4]) for r in rows], [0.0, 0.0])

    def test_empty_table_rejected(self):
        with self.assertRaises(ConfigurationError):
            render_dat(ResultsTable('N', ('bagod',)))

    def test_emit_writes_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = emit_dat(self.table(), Path(tmp) / 'nested' / 'out.dat')
            self.assertEqual(path.read_text(), render_dat(self.table()))

    def test_spectrum_marks(self):
        spectrum = AngularSpectrum(grid=np.array([0.5, 1.0, 1.5]), values=np.array([0.2, 0.9, 0.1]),
                                   c1=1.0, kind='theta')
        lines = render_spectrum_dat(spectrum, estimated=[1.01], truth=[1.5], scale=2.0).splitlines()
        self.assertEqual(lines[0], 'x1 y1 y2 y3')
        self.assertEqual(lines[1].split()[1:], ['0.4', 'nan', 'nan'])
        self.assertEqual(lines[2].split()[1:], ['1.8', '1.8', 'nan'])
        self.assertEqual(lines[3].split()[1:], ['0.2', 'nan', '0.2'])

    def test_spectrum_two_columns(self):
        spectrum = AngularSpectrum(grid=np.array([0.5, 1.0]), values=np.array([0.2, 0.9]), c1=1.0, kind='theta')
        lines = render_spectrum_dat(spectrum, estimated=[1.0], scale=2.0, marks=False).splitlines()
        self.assertEqual(lines[0], 'x1 y1')
        self.assertEqual([len(line.split()) for line in lines], [2, 2, 2])
        self.assertEqual(lines[2].split()[1], '1.8')


class ExperimentSpecTests(SimpleTestCase):
    def test_from_config(self):
        spec = ExperimentSpec.from_config(amp_spec(pipeline={'angle_tol_deg': 2.0, 'amp_damping': 0.5}))
        self.assertEqual(spec.values, (16, 32))
        self.assertEqual(spec.methods, ('amp',))
        self.assertEqual(spec.scenario.t_len, 4)
        options = spec.options()
        self.assertAlmostEqual(options.angle_tol, math.radians(2.0))
        self.assertEqual(options.amp.damping, 0.5)

    def test_overrides(self):
        spec = ExperimentSpec.from_config(amp_spec()).with_overrides(seed=9, trials=1, output='x.dat')
        self.assertEqual((spec.seed, spec.trials, spec.output), (9, 1, Path('x.dat')))

    def test_invalid_configs(self):
        with self.assertRaises(ValidationError):
            ExperimentSpec.from_config(amp_spec(sweep='L_max'))
        with self.assertRaises(ValidationError):
            ExperimentSpec.from_config(amp_spec(values=[16.5]))
        with self.assertRaises(ValidationError):
            ExperimentSpec.from_config(amp_spec(trials=0))
        with self.assertRaises(ValidationError):
            ExperimentSpec.from_config(amp_spec(methods=['omp']))

    def test_direct_construction_is_checked(self):
        with self.assertRaises(ConfigurationError):
            ExperimentSpec(sweep='N', values=(), scenario=ScenarioParams())


class ShippedSpecTests(SimpleTestCase):
    def experiment_files(self):
        return sorted(p for p in SPEC_DIR.glob('*.json') if p.stem != 'dual_poly')

    def test_every_experiment_validates_at_every_sweep_point(self):
        files = self.experiment_files()
        self.assertEqual(len(files), 7)
        for path in files:
            with self.subTest(spec=path.name):
                spec = ExperimentSpec.from_config(json.loads(path.read_text()))
                self.assertEqual(spec.name, path.stem)
                for value in spec.values:
                    params = spec.params_for(value)
                    self.assertEqual(getattr(params, SWEEP_FIELDS[spec.sweep]), value)
                    self.assertLessEqual(params.l_max, params.n_antennas)

    def test_dual_poly_config_validates(self):
        serializer = ScenarioConfigSerializer(data=json.loads((SPEC_DIR / 'dual_poly.json').read_text()))
        self.assertTrue(serializer.is_valid(), serializer.errors)


class RunExperimentTests(SimpleTestCase):
    def test_one_row_per_value_and_deterministic(self):
        spec = ExperimentSpec.from_config(amp_spec())
        first = run_experiment(spec)
        self.assertEqual(len(first), 2)
        self.assertEqual([row.value for row in first.rows], [16, 32])
        self.assertEqual(len(first.outcomes), 4)
        self.assertEqual(render_dat(first), render_dat(run_experiment(spec)))

    def test_metadata_is_json(self):
        spec = ExperimentSpec.from_config(amp_spec(values=[16], trials=1))
        table = run_experiment(spec)
        metadata = build_metadata(spec, table, spec.options())
        decoded = json.loads(json.dumps(metadata))
        self.assertEqual(decoded['resolved']['sweep'], 'N')
        self.assertIn('numpy', decoded['versions'])
        self.assertEqual(decoded['rows'][0]['trials_used'], {'amp': 1})


class ApiTests(TestCase):
    def setUp(self):
        spec = ExperimentSpec.from_config(amp_spec(trials=1))
        table = run_experiment(spec)
        self.dat = render_dat(table)
        self.run = save_run(spec, table, self.dat, build_metadata(spec, table, spec.options()), 'out.dat')
        self.client = APIClient()

    def test_records_stored(self):
        self.assertEqual(TrialRecord.objects.filter(run=self.run).count(), 2)
        self.assertEqual(self.run.failure_count, 0)

    def test_list_runs(self):
        response = self.client.get('/api/runs/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['count'], 1)
        self.assertEqual(response.data['results'][0]['name'], 'amp_only')

    def test_dat_and_metadata_actions(self):
        response = self.client.get(f'/api/runs/{self.run.pk}/dat/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.content.decode(), self.dat)
        response = self.client.get(f'/api/runs/{self.run.pk}/metadata/')
        self.assertEqual(response.data['resolved']['trials'], 1)

    def test_dat_missing(self):
        run = ExperimentRun.objects.create(name='empty', sweep_variable='N')
        self.assertEqual(self.client.get(f'/api/runs/{run.pk}/dat/').status_code, 404)

    def test_trial_filters(self):
        response = self.client.get('/api/trials/', {'run': self.run.pk, 'sweep_value': 32})
        self.assertEqual(response.data['count'], 1)
        self.assertEqual(response.data['results'][0]['method'], 'amp')
        self.assertEqual(self.client.get('/api/trials/', {'failed': True}).data['count'], 0)

    def test_read_only(self):
        self.assertIn(self.client.delete(f'/api/runs/{self.run.pk}/').status_code, (403, 405))

    def test_root_and_health(self):
        self.assertEqual(self.client.get('/').json()['endpoints']['runs'], '/api/runs/')
        self.assertEqual(self.client.get('/health/').json()['database'], 'connected')


class CommandTests(TestCase):
    def test_run_writes_table_and_metadata(self):
        with tempfile.TemporaryDirectory() as tmp:
            spec_path = Path(tmp) / 'spec.json'
            spec_path.write_text(json.dumps(amp_spec()))
            out = Path(tmp) / 'result.dat'
            call_command('run', str(spec_path), '--trials', '1', '--out', str(out), stdout=StringIO())
            self.assertEqual(len(out.read_text().splitlines()), 3)
            self.assertIn('versions', json.loads(out.with_suffix('.json').read_text()))
        self.assertEqual(ExperimentRun.objects.get().trials, 1)

    def test_run_no_save(self):
        with tempfile.TemporaryDirectory() as tmp:
            spec_path = Path(tmp) / 'spec.json'
            spec_path.write_text(json.dumps(amp_spec(values=[16])))
            call_command('run', str(spec_path), '--trials', '1', '--out', str(Path(tmp) / 'r.dat'),
                         '--no-save', stdout=StringIO())
        self.assertFalse(ExperimentRun.objects.exists())

    def test_run_rejects_bad_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            spec_path = Path(tmp) / 'spec.json'
            spec_path.write_text(json.dumps(amp_spec(trials=0)))
            with self.assertRaises(CommandError):
                call_command('run', str(spec_path), stdout=StringIO())
            with self.assertRaises(CommandError):
                call_command('run', str(Path(tmp) / 'missing.json'), stdout=StringIO())

    def test_dual_poly(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = Path(tmp) / 'scenario.json'
            config.write_text(json.dumps({**SCENARIO_CONFIG, 'T': 2, 'snr_db': None}))
            out = Path(tmp) / 'spectrum.dat'
            call_command('dual_poly', str(config), '--grid', '256', '--out', str(out), stdout=StringIO())
            lines = out.read_text().splitlines()
        self.assertEqual(lines[0], 'x1 y1 y2 y3')
        self.assertEqual(len(lines), 257)

    def test_dual_poly_two_columns(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = Path(tmp) / 'scenario.json'
            config.write_text(json.dumps({**SCENARIO_CONFIG, 'T': 2, 'snr_db': None}))
            out = Path(tmp) / 'spectrum.dat'
            call_command('dual_poly', str(config), '--grid', '256', '--out', str(out), '--two-column',
                         stdout=StringIO())
            lines = out.read_text().splitlines()
        self.assertEqual(lines[0], 'x1 y1')
        self.assertEqual(len(lines), 257)
        self.assertTrue(all(len(line.split()) == 2 for line in lines))

    def test_validate_quick_suite(self):
        call_command('validate', '--suite', 'metrics', '--suite', 'amp_orthogonal', stdout=StringIO())

    def test_validate_reports_failure(self):
        with mock.patch.dict('experiments.checks.SUITES', {'metrics': lambda seed: (False, 'forced')}):
            with self.assertRaises(CommandError):
                call_command('validate', '--suite', 'metrics', stdout=StringIO())
