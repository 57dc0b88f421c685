"""
Monte-Carlo sweeps: every sweep value runs ``trials`` seeded trials and the
single-trial metrics are averaged into one row per value.
"""
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from django.conf import settings
from joblib import Parallel, delayed

from bagod_backend.errors import ConfigurationError
from identification.metrics import mean_metrics
from identification.registry import CROWDED_FLAG
from scenarios.generation import SWEEP_FIELDS, ScenarioParams
from .pipeline import METHODS, PipelineOptions, run_trial

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentSpec:
    """A validated sweep; ``config`` keeps the raw file contents for metadata."""
    sweep: str
    values: tuple
    scenario: ScenarioParams
    trials: int = 50
    seed: int = 0
    methods: tuple = METHODS
    name: str = 'experiment'
    output: Optional[Path] = None
    threads: int = 1
    exclude_failures: bool = False
    pipeline: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("an experiment needs at least one trial")
        if self.sweep not in SWEEP_FIELDS:
            raise ConfigurationError(f"unknown sweep variable {self.sweep!r}")
        if not self.values:
            raise ConfigurationError("the sweep needs at least one value")
        if not self.methods or set(self.methods) - set(METHODS):
            raise ConfigurationError(f"methods must be a non-empty subset of {METHODS}")

    @classmethod
    def from_config(cls, data: dict) -> 'ExperimentSpec':
        from .serializers import ExperimentSpecSerializer

        serializer = ExperimentSpecSerializer(data=data)
        serializer.is_valid(raise_exception=True)
        return serializer.to_spec()

    def with_overrides(self, seed=None, trials=None, threads=None, output=None) -> 'ExperimentSpec':
        changes = {'seed': seed, 'trials': trials, 'threads': threads,
                   'output': None if output is None else Path(output)}
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def params_for(self, value) -> ScenarioParams:
        return self.scenario.with_sweep(self.sweep, value)

    def options(self) -> PipelineOptions:
        conf = dict(self.pipeline)
        return PipelineOptions.from_settings(admm=conf.pop('admm', None), am=conf.pop('am', None),
                                             amp=conf.pop('amp', None), **conf)


@dataclass
class ResultRow:
    value: float
    metrics: dict = field(default_factory=dict)
    trials_used: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    scenario_failures: int = 0
    wall_time: float = 0.0
    flags: list = field(default_factory=list)


@dataclass
class ResultsTable:
    sweep: str
    methods: tuple
    rows: list = field(default_factory=list)
    outcomes: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, method: str, name: str) -> list:
        """One metric over the sweep; ``nan`` where the method has no trials."""
        return [getattr(row.metrics[method], name) if row.metrics.get(method) else math.nan
                for row in self.rows]


def report_flags(outcome, method: str) -> tuple:
    return tuple(outcome.diagnostics.get(method, {}).get('report', {}).get('flags', ()))


def aggregate_row(value, outcomes, methods, exclude_failures: bool = False) -> ResultRow:
    """Average the trials of one sweep value in trial order."""
    row = ResultRow(value=value)
    usable = [o for o in outcomes if not o.failed]
    row.scenario_failures = len(outcomes) - len(usable)
    if row.scenario_failures:
        row.flags.append(f'scenario_failures:{row.scenario_failures}')
    row.wall_time = sum(o.wall_time for o in outcomes)

    for method in methods:
        failed = sum(1 for o in usable if method in o.failures)
        row.failures[method] = failed
        if failed:
            row.flags.append(f'{method}_failures:{failed}')
        crowded = sum(1 for o in usable if CROWDED_FLAG in report_flags(o, method))
        if crowded:
            row.flags.append(f'{method}_{CROWDED_FLAG}:{crowded}')
            logger.warning("%d %s trials at %s matched against stationary users closer than "
                           "twice the angle tolerance", crowded, method, value)
        items = [o.metrics[method] for o in usable
                 if method in o.metrics and not (exclude_failures and method in o.failures)]
        row.trials_used[method] = len(items)
        row.metrics[method] = mean_metrics(items) if items else None
        if not items:
            logger.warning("no usable %s trials at %s", method, value)
    return row


def monotone_flags(table: ResultsTable, tolerance: float = 1e-12) -> list:
    """Sanity flags where P_d drops while the SNR grows."""
    if table.sweep != 'SNR':
        return []
    flags = []
    rows = sorted(table.rows, key=lambda r: r.value)
    for method in table.methods:
        for before, after in zip(rows, rows[1:]):
            if before.metrics.get(method) is None or after.metrics.get(method) is None:
                continue
            if after.metrics[method].p_d < before.metrics[method].p_d - tolerance:
                flags.append(f'{method}_p_d_decreases_at_snr:{after.value:g}')
    for flag in flags:
        logger.warning("sanity flag %s", flag)
    return flags


def run_experiment(spec: ExperimentSpec, options: PipelineOptions = None) -> ResultsTable:
    """
    Trial ``i`` of sweep value ``j`` is seeded by (seed, j, i), so the table
    does not depend on the number of workers.
    """
    options = spec.options() if options is None else options
    table = ResultsTable(sweep=spec.sweep, methods=tuple(spec.methods))
    logger.info("experiment %s: sweep %s over %s, %d trials, %d workers",
                spec.name, spec.sweep, list(spec.values), spec.trials, spec.threads)

    with Parallel(n_jobs=spec.threads) as parallel:
        for index, value in enumerate(spec.values):
            start = time.perf_counter()
            params = spec.params_for(value)
            outcomes = parallel(
                delayed(run_trial)(params, (spec.seed, index, trial), trial, spec.methods, options)
                for trial in range(spec.trials)
            )
            row = aggregate_row(value, outcomes, spec.methods, spec.exclude_failures)
            row.wall_time = time.perf_counter() - start
            table.rows.append(row)
            table.outcomes.extend((index, value, outcome) for outcome in outcomes)
            logger.info("%s=%s done in %.1fs", spec.sweep, value, row.wall_time)

    table.flags = monotone_flags(table)
    return table


def default_output_dir() -> Path:
    return Path(settings.BAGOD['OUTPUT_DIR'])
