import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from bagod_backend.errors import BagodError
from experiments.output import build_metadata, emit_dat, emit_metadata, render_dat
from experiments.runner import ExperimentSpec, default_output_dir, run_experiment
from experiments.storage import save_run


class Command(BaseCommand):
    help = "Run a Monte-Carlo sweep from an experiment file and write its .dat table"

    def add_arguments(self, parser):
        parser.add_argument('spec', help="experiment JSON file")
        parser.add_argument('--seed', type=int)
        parser.add_argument('--trials', type=int)
        parser.add_argument('--threads', type=int)
        parser.add_argument('--out', help=".dat path; the metadata lands next to it")
        parser.add_argument('--no-save', action='store_true', help="skip storing the run in the database")

    def handle(self, *args, **options):
        try:
            config = json.loads(Path(options['spec']).read_text())
            spec = ExperimentSpec.from_config(config).with_overrides(
                seed=options['seed'], trials=options['trials'], threads=options['threads'], output=options['out'])
            pipeline = spec.options()
            table = run_experiment(spec, pipeline)
        except (OSError, json.JSONDecodeError) as exc:
            raise CommandError(f"cannot read {options['spec']}: {exc}") from exc
        except ValidationError as exc:
            raise CommandError(f"invalid experiment file: {exc.detail}") from exc
        except BagodError as exc:
            raise CommandError(str(exc)) from exc

        path = spec.output or default_output_dir() / f'{spec.name}.dat'
        metadata = build_metadata(spec, table, pipeline)
        try:
            emit_dat(table, path)
            emit_metadata(metadata, Path(path).with_suffix('.json'))
        except OSError as exc:
            raise CommandError(f"cannot write results: {exc}") from exc

        for row in table.rows:
            used = ', '.join(f"{m}={row.trials_used[m]}" for m in spec.methods)
            self.stdout.write(f"{spec.sweep}={row.value:g}: trials used {used} ({row.wall_time:.1f}s)")
        for flag in table.flags:
            self.stdout.write(self.style.WARNING(f"sanity flag: {flag}"))
        if not options['no_save']:
            run = save_run(spec, table, render_dat(table), metadata, str(path))
            self.stdout.write(f"stored as run {run.pk}")
        self.stdout.write(self.style.SUCCESS(f"wrote {path}"))
