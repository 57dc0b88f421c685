import logging

from django.db import transaction
from django.utils import timezone

from .models import ExperimentRun, TrialRecord
from .output import jsonable

logger = logging.getLogger(__name__)


@transaction.atomic
def save_run(spec, table, dat_text: str, metadata: dict, output_path: str = '') -> ExperimentRun:
    """Store a finished sweep with one TrialRecord per (trial, method)."""
    run = ExperimentRun.objects.create(
        name=spec.name,
        sweep_variable=spec.sweep,
        spec=jsonable(spec.config),
        seed=spec.seed,
        trials=spec.trials,
        methods=list(spec.methods),
        status='completed',
        dat_text=dat_text,
        metadata=metadata,
        output_path=str(output_path),
        wall_time=sum(row.wall_time for row in table.rows),
        completed_at=timezone.now(),
    )
    records = []
    for sweep_index, value, outcome in table.outcomes:
        methods = spec.methods if not outcome.failed else ()
        for method in methods:
            metrics = outcome.metrics.get(method)
            records.append(TrialRecord(
                run=run,
                sweep_index=sweep_index,
                sweep_value=float(value),
                trial_index=outcome.index,
                seed=list(outcome.seed),
                method=method,
                metrics=metrics.as_dict() if metrics else {},
                p_d=metrics.p_d if metrics else None,
                p_fa=metrics.p_fa if metrics else None,
                failed=method in outcome.failures,
                failure=outcome.failures.get(method, ''),
                diagnostics=jsonable(outcome.diagnostics.get(method, {})),
                wall_time=outcome.wall_time,
            ))
        if outcome.failed:
            for method in spec.methods:
                records.append(TrialRecord(
                    run=run, sweep_index=sweep_index, sweep_value=float(value), trial_index=outcome.index,
                    seed=list(outcome.seed), method=method, failed=True,
                    failure=f"scenario: {outcome.scenario_failure}", wall_time=outcome.wall_time,
                ))
    TrialRecord.objects.bulk_create(records)
    logger.info("stored run %s with %d trial records", run.pk, len(records))
    return run
