"""
Acceptance suites run by ``manage.py validate``.

The default suites are quick invariant checks; the trend suites sweep
50 Monte-Carlo trials per point and take minutes.
"""
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from arrays.manifold import ArrayConfig, UserChannel
from baselines.amp import amp_detect
from bagod_backend.errors import BagodError
from identification.metrics import compute_metrics, detection_rates
from identification.registry import build_registry
from recovery.alternating import AmOptions, align_to_reference, am_solve, extract_delay
from scenarios.generation import ScenarioParams, generate_scenario
from scenarios.synthesis import noiseless_signal, synthesize_received, time_domain_oracle
from scenarios.types import Mobility, ReceivedSignal, Scenario, UserProfile
from solvers.admm import AdmmOptions, solve_admm
from solvers.feasibility import check_feasibility
from solvers.problem import build_problem
from solvers.reference import solve_reference
from spectrum.clustering import cluster_angles
from .pipeline import PipelineOptions, detect_bagod
from .runner import ExperimentSpec, run_experiment

logger = logging.getLogger(__name__)

NARROW_SPREAD = math.radians(5.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    elapsed: float = 0.0


def check_metrics(seed: int = 0) -> tuple:
    p_d, p_fa, _ = detection_rates({1, 2, 3}, {1, 2, 4}, range(1, 101))
    return p_d == 2 / 3 and p_fa == 1 / 97, f"P_d={p_d!r}, P_fa={p_fa!r}"


def check_synthesis_oracle(seed: int = 0, count: int = 100) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        t_len = int(rng.integers(2, 12))
        params = ScenarioParams(n_antennas=8, t_len=t_len, k_s=2, k_m=1, k_a_s=1, k_a_m=1, l_max=2,
                                tau_max=float(rng.integers(0, t_len)), zeta=0.1, n_sectors=2,
                                gain_error_users='all')
        scenario = generate_scenario(params, rng)
        worst = max(worst, float(np.max(np.abs(time_domain_oracle(scenario).y - noiseless_signal(scenario)))))
    return worst <= 1e-10, f"max deviation {worst:.2e} over {count} scenarios"


def _random_instance(rng: np.random.Generator) -> ReceivedSignal:
    n = int(rng.integers(4, 17))
    t_len = int(rng.integers(1, 5))
    m = int(rng.integers(max(2, n // 2), n + 1))
    omega = np.sort(rng.choice(n, size=m, replace=False))
    y = rng.standard_normal((m, t_len)) + 1j * rng.standard_normal((m, t_len))
    return ReceivedSignal(y=y, omega=omega, noise_bound=0.1 * float(np.linalg.norm(y)), n_antennas=n)


def check_solver_agreement(seed: int = 0, count: int = 10) -> tuple:
    rng = np.random.default_rng(seed)
    tight = AdmmOptions(tolerance=1e-7, max_iter=50000)
    worst_gap, worst_violation = 0.0, 0.0
    for _ in range(count):
        problem = build_problem(_random_instance(rng), zeta=float(rng.uniform(0.0, 0.2)))
        admm = solve_admm(problem, tight)
        reference = solve_reference(problem)
        gap = abs(admm.objective - reference.objective) / max(1.0, abs(reference.objective))
        violation = max(problem.constraints.max_violation(sol.q) for sol in (admm, reference))
        worst_gap, worst_violation = max(worst_gap, gap), max(worst_violation, violation)
    passed = worst_gap <= 1e-4 and worst_violation <= 1e-6
    return passed, f"objective gap {worst_gap:.2e}, Toeplitz violation {worst_violation:.2e}"


def check_dual_feasibility(seed: int = 0, count: int = 10) -> tuple:
    rng = np.random.default_rng(seed)
    worst, converged = 0.0, 0
    for _ in range(count):
        problem = build_problem(_random_instance(rng), zeta=0.1)
        solution = solve_admm(problem, AdmmOptions(tolerance=1e-6, max_iter=20000))
        if not solution.converged:
            continue
        converged += 1
        worst = max(worst, check_feasibility(solution, problem, grid_size=4096).dual_bound)
    return converged > 0 and worst <= 1.0 + 1e-3, f"max c1 ||q_G|| {worst:.6f} over {converged} converged"


def _single_user_scenario(rng: np.random.Generator, t_len: int, zeta: float) -> Scenario:
    theta = float(rng.uniform(0.5, math.pi - 0.5))
    channel = UserChannel((theta,), [complex(rng.standard_normal(), rng.standard_normal())], (theta, theta))
    preamble = rng.uniform(0.1, 1.0, t_len)
    gain_error = rng.uniform(-zeta, zeta, t_len) if zeta else None
    user = UserProfile(user_id=1, mobility=Mobility.STATIONARY, channel=channel,
                       preamble=preamble / np.linalg.norm(preamble),
                       delay=float(rng.integers(0, t_len)), gain_error=gain_error, active=True)
    return Scenario(ArrayConfig(16), [user], t_len=t_len, tau_max=float(t_len - 1), zeta=zeta)


def check_am_recovery(seed: int = 0, count: int = 20) -> tuple:
    """
    Planted single users with known angles. Without gain errors the
    preamble and the delay must come back exactly; with gain errors only
    the user block is identifiable, so its fit is checked instead.
    """
    rng = np.random.default_rng(seed)
    opts = AmOptions(tolerance=1e-14, max_iter=500)
    worst_preamble, worst_block, delay_errors, rises = 0.0, 0.0, 0, 0
    for trial in range(count):
        zeta = 0.0 if trial % 2 == 0 else 0.1
        scenario = _single_user_scenario(rng, int(rng.integers(3, 8)), zeta)
        user = scenario.users[0]
        signal = synthesize_received(scenario, trial)
        estimate = am_solve(signal, cluster_angles(list(user.channel.thetas), 0.1), scenario.c_e, opts)
        history = estimate.residual_history
        rises += sum(1 for a, b in zip(history, history[1:]) if b > a * (1.0 + 1e-9) + 1e-14)
        worst_block = max(worst_block, estimate.residual / max(float(np.linalg.norm(signal.y)), 1e-300))
        if zeta:
            continue
        shift, _, adjusted = align_to_reference(estimate.preamble(0), estimate.delay_gain[0], user.preamble)
        error = np.linalg.norm(estimate.preamble(0) - np.roll(user.preamble, shift))
        worst_preamble = max(worst_preamble, float(error))
        # unwrapping aliases delays above T/2, so compare modulo T
        t_len = scenario.t_len
        offset = (extract_delay(adjusted) - user.delay + t_len / 2.0) % t_len - t_len / 2.0
        delay_errors += int(abs(offset) > 1e-6)
    passed = worst_preamble <= 1e-3 and worst_block <= 1e-3 and delay_errors == 0 and rises == 0
    return passed, (f"preamble error {worst_preamble:.2e}, relative residual {worst_block:.2e}, "
                    f"delay errors {delay_errors}, residual rises {rises}")


def check_noiseless_recovery(seed: int = 0, trials: int = 20) -> tuple:
    params = ScenarioParams(n_antennas=32, t_len=2, k_s=2, k_m=1, k_a_s=2, k_a_m=1, l_max=3,
                            spread_width=NARROW_SPREAD, guaranteed_recovery=True, separation_factor=2.0)
    options = PipelineOptions.from_settings(admm={'tolerance': 1e-6, 'max_iter': 20000})
    cell = math.pi / options.spectrum_grid
    misses, angle_errors = 0, 0
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        scenario = generate_scenario(params, rng)
        signal = synthesize_received(scenario, rng)
        detection = detect_bagod(signal, scenario, build_registry(scenario), options, params.spread_width)
        metrics = compute_metrics(detection.report, scenario)
        misses += int(metrics.p_d != 1.0 or metrics.p_fa != 0.0)
        truth = np.concatenate([scenario.user(uid).channel.thetas for uid in scenario.active_ids])
        for peak in detection.peaks:
            angle_errors += int(np.min(np.abs(truth - peak.theta)) > cell)
    return misses == 0 and angle_errors == 0, f"{misses} imperfect trials, {angle_errors} angles off-grid-cell"


def check_amp_orthogonal(seed: int = 0) -> tuple:
    rng = np.random.default_rng(seed)
    pilots = np.eye(16, dtype=complex)
    x = np.zeros((16, 8), dtype=complex)
    support = sorted(rng.choice(16, size=3, replace=False).tolist())
    x[support] = rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))
    result = amp_detect(pilots @ x, pilots, noise_var=0.0, k_active=3, channel_var=1.0)
    return result.detected == frozenset(support), f"support {support}, detected {sorted(result.detected)}"


def _trend_spec(sweep, values, scenario: ScenarioParams, seed: int, methods=('bagod',), trials: int = 50):
    return ExperimentSpec(sweep=sweep, values=tuple(values), scenario=scenario, trials=trials,
                          seed=seed, methods=methods, name=f'trend_{sweep}')


def check_trend_antennas(seed: int = 0) -> tuple:
    scenario = ScenarioParams(n_antennas=16, t_len=4, k_s=20, k_m=10, k_a_s=2, k_a_m=1, l_max=3,
                              snr_db=20.0, tau_max=1.0, zeta=0.05, spread_width=NARROW_SPREAD)
    table = run_experiment(_trend_spec('N', (16, 32, 64), scenario, seed))
    p_d = table.column('bagod', 'p_d')
    passed = all(b >= a for a, b in zip(p_d, p_d[1:])) and p_d[-1] >= 0.9
    return passed, f"P_d over N=16,32,64: {', '.join(f'{v:.3f}' for v in p_d)}"


def check_trend_inactive_population(seed: int = 0) -> tuple:
    scenario = ScenarioParams(n_antennas=32, t_len=4, k_s=100, k_m=10, k_a_s=2, k_a_m=1, l_max=3,
                              snr_db=20.0, tau_max=1.0, zeta=0.05, spread_width=NARROW_SPREAD)
    table = run_experiment(_trend_spec('K_S', (100, 1000), scenario, seed))
    low, high = table.column('bagod', 'p_d')
    return abs(low - high) <= 0.05, f"P_d at K_S=100: {low:.3f}, at K_S=1000: {high:.3f}"


def check_amp_gaussian(seed: int = 0) -> tuple:
    scenario = ScenarioParams(n_antennas=32, t_len=8, k_s=100, k_m=0, k_a_s=3, k_a_m=0, l_max=3,
                              snr_db=20.0, spread_width=NARROW_SPREAD)
    table = run_experiment(_trend_spec('SNR', (20.0,), scenario, seed, methods=('amp',)))
    p_d = table.column('amp', 'p_d')[0]
    return p_d >= 0.9, f"AMP P_d {p_d:.3f}"


SUITES = {
    'metrics': check_metrics,
    'synthesis_oracle': check_synthesis_oracle,
    'solver_agreement': check_solver_agreement,
    'dual_feasibility': check_dual_feasibility,
    'am_recovery': check_am_recovery,
    'noiseless_recovery': check_noiseless_recovery,
    'amp_orthogonal': check_amp_orthogonal,
}
TREND_SUITES = {
    'trend_antennas': check_trend_antennas,
    'trend_inactive_population': check_trend_inactive_population,
    'trend_amp_gaussian': check_amp_gaussian,
}


def run_checks(names, seed: int = 0) -> list:
    """Run the named suites; an exception fails its suite instead of the run."""
    available = {**SUITES, **TREND_SUITES}
    results = []
    for name in names:
        start = time.perf_counter()
        try:
            passed, detail = available[name](seed)
        except (BagodError, np.linalg.LinAlgError) as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        elapsed = time.perf_counter() - start
        logger.info("check %s: %s (%s)", name, 'passed' if passed else 'FAILED', detail)
        results.append(CheckResult(name, bool(passed), detail, elapsed))
    return results
