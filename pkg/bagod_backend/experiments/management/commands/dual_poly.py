import json
import math
from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from bagod_backend.errors import BagodError
from experiments.output import emit_spectrum_dat
from experiments.pipeline import PipelineOptions
from experiments.runner import default_output_dir
from scenarios.generation import generate_scenario
from scenarios.serializers import ScenarioConfigSerializer
from scenarios.synthesis import synthesize_received
from solvers.admm import solve_admm
from solvers.problem import build_problem
from spectrum.peaks import find_peaks
from spectrum.polynomial import GRID_KINDS, eval_dual_polynomial


class Command(BaseCommand):
    help = "Solve one scenario and write its goal-oriented dual polynomial as a .dat table"

    def add_arguments(self, parser):
        parser.add_argument('config', help="scenario JSON file")
        parser.add_argument('--seed', type=int, help="overrides the seed of the file")
        parser.add_argument('--out')
        parser.add_argument('--grid', type=int)
        parser.add_argument('--kind', choices=GRID_KINDS, default='theta')
        parser.add_argument('--two-column', action='store_true', help="write only angle and value")

    def handle(self, *args, **options):
        try:
            data = json.loads(Path(options['config']).read_text())
            if options['seed'] is not None:
                data['seed'] = options['seed']
            serializer = ScenarioConfigSerializer(data=data)
            serializer.is_valid(raise_exception=True)
            params = serializer.to_params()
            seed = serializer.validated_data['seed']
            pipeline = PipelineOptions.from_settings(spectrum_grid=options['grid'])

            rng = np.random.default_rng(seed)
            scenario = generate_scenario(params, rng)
            signal = synthesize_received(scenario, rng)
            problem = build_problem(signal, zeta=scenario.zeta)
            solution = solve_admm(problem, pipeline.admm)
            spectrum = eval_dual_polynomial(solution, signal.omega, pipeline.spectrum_grid, problem.c1,
                                            scenario.array.spacing_ratio, kind=options['kind'])
            peaks = find_peaks(spectrum, pipeline.peak_threshold)
        except (OSError, json.JSONDecodeError) as exc:
            raise CommandError(f"cannot read {options['config']}: {exc}") from exc
        except ValidationError as exc:
            raise CommandError(f"invalid scenario file: {exc.detail}") from exc
        except BagodError as exc:
            raise CommandError(str(exc)) from exc

        if not solution.converged:
            self.stdout.write(self.style.WARNING(f"ADMM stopped after {solution.iterations} iterations"))
        truth = np.concatenate([scenario.user(uid).channel.thetas for uid in sorted(scenario.active_ids)]) \
            if scenario.k_a else []
        path = options['out'] or default_output_dir() / f'dual_poly_seed{seed}.dat'
        # normalised so the dual constraint reads max <= 1
        scale = problem.c1 * math.sqrt(signal.n_antennas)
        try:
            emit_spectrum_dat(spectrum, path, [p.theta for p in peaks], truth, scale=scale,
                              marks=not options['two_column'])
        except OSError as exc:
            raise CommandError(f"cannot write {path}: {exc}") from exc
        for peak in peaks:
            self.stdout.write(f"peak at {peak.angle.degrees:.3f} deg, value {scale * peak.value:.4f}")
        self.stdout.write(self.style.SUCCESS(f"wrote {path}"))
