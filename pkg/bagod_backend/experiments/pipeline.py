"""
One Monte-Carlo trial: draw a scenario, observe it, run every requested
detector and score it against the truth.
"""
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np
from django.conf import settings

from arrays.manifold import DEFAULT_SPREAD_WIDTH
from baselines.amp import AmpConfig, amp_detect, gaussian_pilots, synthesize_pilot_domain
from bagod_backend.errors import BagodError, ConfigurationError
from identification.matching import DetectionReport, identify
from identification.metrics import compute_metrics
from identification.registry import build_registry
from recovery.alternating import AmOptions, am_solve
from scenarios.generation import generate_scenario
from scenarios.synthesis import synthesize_received
from solvers.admm import AdmmOptions, solve_admm
from solvers.feasibility import check_feasibility
from solvers.problem import build_problem
from spectrum.clustering import cluster_angles, default_gap_threshold
from spectrum.peaks import find_peaks, peak_strengths
from spectrum.polynomial import eval_dual_polynomial

logger = logging.getLogger(__name__)

METHODS = ('bagod', 'amp')
AMP_MODES = ('synchronized', 'impaired')
UNCONVERGED_POLICIES = ('missed', 'keep')


@dataclass(frozen=True)
class PipelineOptions:
    """Every knob of the detectors; ``angle_tol`` is in radians."""
    admm: AdmmOptions
    am: AmOptions
    amp: AmpConfig
    spectrum_grid: int = 8192
    peak_threshold: float = 0.5
    angle_tol: float = math.radians(1.0)
    corr_threshold: float = 0.8
    gap_threshold: Optional[float] = None
    amp_mode: str = 'synchronized'
    unconverged_policy: str = 'missed'
    check_feasibility: bool = False

    def __post_init__(self):
        if self.amp_mode not in AMP_MODES:
            raise ConfigurationError(f"unknown AMP mode {self.amp_mode!r}")
        if self.unconverged_policy not in UNCONVERGED_POLICIES:
            raise ConfigurationError(f"unknown non-convergence policy {self.unconverged_policy!r}")

    @classmethod
    def from_settings(cls, admm=None, am=None, amp=None, **overrides) -> 'PipelineOptions':
        conf = settings.BAGOD
        values = {
            'spectrum_grid': conf['SPECTRUM_GRID'],
            'peak_threshold': conf['PEAK_REL_THRESHOLD'],
            'angle_tol': math.radians(conf['ANGLE_TOLERANCE_DEG']),
            'corr_threshold': conf['CORRELATION_THRESHOLD'],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(
            admm=AdmmOptions.from_settings(**(admm or {})),
            am=AmOptions.from_settings(**(am or {})),
            amp=AmpConfig.from_settings(**(amp or {})),
            **values,
        )

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class BagodDetection:
    report: DetectionReport
    solution: object = None
    spectrum: object = None
    peaks: list = field(default_factory=list)
    feasibility: object = None

    def diagnostics(self) -> dict:
        data = {'report': self.report.to_dict(), 'n_peaks': len(self.peaks)}
        if self.solution is not None:
            data['solver'] = {
                'name': self.solution.solver,
                'iterations': self.solution.iterations,
                'converged': self.solution.converged,
                'objective': self.solution.objective,
                'lower_bound': self.solution.lower_bound,
                'primal_residual': self.solution.primal_residual,
                'dual_residual': self.solution.dual_residual,
            }
        am = self.report.am
        if am is not None:
            data['am'] = {'iterations': am.iterations, 'converged': am.converged, 'residual': am.residual}
        if self.feasibility is not None:
            data['feasibility'] = asdict(self.feasibility)
        data['peaks_deg'] = [p.angle.degrees for p in self.peaks]
        return data


def detect_bagod(signal, scenario, registry, options: PipelineOptions,
                 spread_width: float = DEFAULT_SPREAD_WIDTH) -> BagodDetection:
    """SDP, dual polynomial, peaks, clusters, AM recovery and identification."""
    spacing = scenario.array.spacing_ratio
    problem = build_problem(signal, zeta=scenario.zeta)
    solution = solve_admm(problem, options.admm)
    feasibility = None
    if options.check_feasibility:
        feasibility = check_feasibility(solution, problem, spacing_ratio=spacing)

    spectrum = eval_dual_polynomial(solution, signal.omega, options.spectrum_grid, problem.c1, spacing)
    peaks = find_peaks(spectrum, options.peak_threshold)
    strengths = peak_strengths(signal.y, signal.omega, signal.n_antennas, [p.theta for p in peaks], spacing)
    gap = options.gap_threshold or default_gap_threshold(spread_width, options.spectrum_grid)
    clusters = cluster_angles(peaks, gap, weights=strengths if peaks else None)

    if not solution.converged and options.unconverged_policy == 'missed':
        logger.warning("SDP did not converge, counting the trial as missed")
        report = DetectionReport(frozenset(), frozenset(), clusters=clusters,
                                 unmatched=tuple(range(clusters.k_hat)), flags=('solver_not_converged',))
        return BagodDetection(report, solution, spectrum, peaks, feasibility)

    am = None
    if clusters.k_hat:
        am_opts = replace(options.am, tau_max=scenario.tau_max, zeta=scenario.zeta)
        am = am_solve(signal, clusters, scenario.c_e, am_opts, spacing)
    report = identify(clusters, registry, am, options.angle_tol, options.corr_threshold,
                      max_shift=int(math.ceil(scenario.tau_max)))
    if not solution.converged:
        report = replace(report, flags=report.flags + ('solver_not_converged',))
    return BagodDetection(report, solution, spectrum, peaks, feasibility)


def detect_amp(scenario, rng: np.random.Generator, options: PipelineOptions) -> tuple:
    """Genie-aided AMP on the pilot-domain version of ``scenario``; returns (ids, state)."""
    pilots = gaussian_pilots(scenario.t_len, scenario.k, rng)
    signal = synthesize_pilot_domain(scenario, pilots, rng, impaired=options.amp_mode == 'impaired')
    result = amp_detect(signal.y, pilots, signal.noise_var, k_active=scenario.k_a,
                        channel_var=signal.channel_var or None, config=options.amp)
    return frozenset(signal.user_ids[i] for i in result.detected), result.state


@dataclass
class TrialOutcome:
    """
    Result of one trial. A method that raised keeps a missed-detection
    entry in ``metrics`` and its reason in ``failures``.
    """
    index: int
    seed: tuple
    metrics: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    scenario_failure: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.scenario_failure is not None


def run_trial(params, seed, index: int, methods=METHODS, options: PipelineOptions = None) -> TrialOutcome:
    """
    ``seed`` is the entropy of a ``SeedSequence``; scenario, noise and AMP
    pilots draw from independent children of it.
    """
    options = PipelineOptions.from_settings() if options is None else options
    start = time.perf_counter()
    outcome = TrialOutcome(index=index, seed=tuple(seed))
    scenario_seed, noise_seed, amp_seed = np.random.SeedSequence(list(seed)).spawn(3)

    try:
        scenario = generate_scenario(params, np.random.default_rng(scenario_seed))
    except BagodError as exc:
        logger.warning("trial %d: scenario generation failed: %s", index, exc)
        outcome.scenario_failure = str(exc)
        outcome.wall_time = time.perf_counter() - start
        return outcome
    outcome.diagnostics['truth'] = {
        'active': sorted(scenario.active_ids),
        'angles_deg': {uid: [math.degrees(t) for t in scenario.user(uid).channel.thetas]
                       for uid in sorted(scenario.active_ids)},
    }

    for method in methods:
        try:
            if method == 'bagod':
                signal = synthesize_received(scenario, noise_seed)
                detection = detect_bagod(signal, scenario, build_registry(scenario), options, params.spread_width)
                outcome.metrics[method] = compute_metrics(detection.report, scenario)
                outcome.diagnostics[method] = detection.diagnostics()
            elif method == 'amp':
                detected, state = detect_amp(scenario, np.random.default_rng(amp_seed), options)
                outcome.metrics[method] = compute_metrics(detected, scenario)
                outcome.diagnostics[method] = {'iterations': state.iterations, 'converged': state.converged,
                                               'flags': state.flags, 'detected': sorted(detected)}
            else:
                raise ConfigurationError(f"unknown method {method!r}")
        except (BagodError, np.linalg.LinAlgError) as exc:
            logger.warning("trial %d: %s failed: %s", index, method, exc)
            outcome.failures[method] = f"{type(exc).__name__}: {exc}"
            missed = compute_metrics(frozenset(), scenario)
            outcome.metrics[method] = replace(missed, flags=missed.flags + ('trial_failed',))

    outcome.wall_time = time.perf_counter() - start
    return outcome
