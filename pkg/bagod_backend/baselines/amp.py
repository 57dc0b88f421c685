"""
MMV-AMP activity detection on the pilot-domain model Y_p = Phi X + W.

Rows of X are the effective channels of the users (zero when inactive), the
columns of Phi their unit-norm Gaussian pilots. The denoiser is the MMSE
estimator for a Bernoulli-Gaussian row prior with known activity probability
and channel variance.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy import special

from arrays.manifold import synthesize_channel
from bagod_backend.errors import ConfigurationError
from scenarios.synthesis import delay_gain_vector, draw_noise

logger = logging.getLogger(__name__)

DETECTION_MODES = ('top_k', 'threshold')
EARLY_ITERATIONS = 5


@dataclass(frozen=True)
class AmpConfig:
    max_iter: int = 50
    damping: float = 0.7
    activity_threshold: float = 0.5
    detection: str = 'top_k'
    tolerance: float = 1e-6
    divergence_factor: float = 1e3

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigurationError("AMP needs at least one iteration")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigurationError("damping must lie in (0, 1]")
        if self.detection not in DETECTION_MODES:
            raise ConfigurationError(f"unknown detection mode {self.detection!r}")

    @classmethod
    def from_settings(cls, **overrides) -> 'AmpConfig':
        conf = settings.BAGOD
        values = {
            'max_iter': conf['AMP_MAX_ITER'],
            'damping': conf['AMP_DAMPING'],
            'activity_threshold': conf['AMP_ACTIVITY_THRESHOLD'],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class AmpState:
    """
    ``estimates`` is K x M, ``residual`` T x M. ``statistics`` are the row
    energies of the last pseudo-observation Phi^H Z + X and ``activity`` the
    posterior activity probabilities.
    """
    estimates: np.ndarray
    residual: np.ndarray
    statistics: np.ndarray
    activity: np.ndarray
    iterations: int = 0
    converged: bool = False
    diverged: bool = False
    residual_history: list = field(default_factory=list)
    residual_increase: bool = False

    @property
    def flags(self) -> list:
        flags = []
        if self.diverged:
            flags.append('amp_diverged')
        if self.residual_increase:
            flags.append('amp_residual_increase')
        if not (self.converged or self.diverged):
            flags.append('amp_not_converged')
        return flags


@dataclass(frozen=True)
class AmpResult:
    detected: frozenset
    state: AmpState


@dataclass(frozen=True)
class PilotSignal:
    """Pilot-domain observation with the genie parameters of the trial."""
    y: np.ndarray
    pilots: np.ndarray
    user_ids: tuple
    x: np.ndarray
    noise_var: float
    channel_var: float


def gaussian_pilots(t_len: int, n_users: int, rng: np.random.Generator) -> np.ndarray:
    """T x K complex Gaussian pilots with unit-norm columns."""
    pilots = rng.standard_normal((t_len, n_users)) + 1j * rng.standard_normal((t_len, n_users))
    return pilots / np.linalg.norm(pilots, axis=0)


def synthesize_pilot_domain(scenario, pilots: np.ndarray, rng_seed, impaired: bool = False) -> PilotSignal:
    """
    Y_p = Phi_A X_A + W over the selected antennas, with the SNR rule of the
    frequency-domain block. ``impaired`` multiplies each active pilot by its
    user's delay-gain vector; the receiver still only knows the nominal pilots.
    """
    rng = np.random.default_rng(rng_seed)
    user_ids = tuple(sorted(user.user_id for user in scenario.users))
    if pilots.shape != (scenario.t_len, len(user_ids)):
        raise ConfigurationError(f"pilot matrix must be T x K = {scenario.t_len} x {len(user_ids)}")
    position = {uid: i for i, uid in enumerate(user_ids)}

    x = np.zeros((len(user_ids), scenario.m), dtype=complex)
    clean = np.zeros((scenario.t_len, scenario.m), dtype=complex)
    for user in scenario.active_users:
        row = synthesize_channel(scenario.array, user.channel)[scenario.omega]
        column = pilots[:, position[user.user_id]]
        if impaired:
            column = column * delay_gain_vector(user.delay, user.gain_error, scenario.t_len)
        x[position[user.user_id]] = row
        clean += np.outer(column, row)

    noise_var = 0.0
    y = clean
    energy = float(np.linalg.norm(clean) ** 2)
    if scenario.snr_db is not None and math.isfinite(scenario.snr_db) and energy > 0:
        noise_var = energy / (clean.size * 10.0 ** (scenario.snr_db / 10.0))
        noise = draw_noise(clean.shape, scenario.noise, rng)
        noise *= math.sqrt(noise_var * clean.size) / np.linalg.norm(noise)
        y = clean + noise

    active_rows = x[[position[uid] for uid in scenario.active_ids]] if scenario.k_a else x[:0]
    channel_var = float(np.mean(np.abs(active_rows) ** 2)) if active_rows.size else 0.0
    return PilotSignal(y=y, pilots=pilots, user_ids=user_ids, x=x, noise_var=noise_var, channel_var=channel_var)


def matched_filter_statistics(y: np.ndarray, pilots: np.ndarray) -> np.ndarray:
    """Squared row norms of Phi^H Y."""
    return np.sum(np.abs(pilots.conj().T @ y) ** 2, axis=1)


def bernoulli_gaussian_denoiser(r: np.ndarray, tau2: float, prior: float, channel_var: float) -> tuple:
    """
    Row-wise MMSE estimate under (1 - prior) delta_0 + prior CN(0, channel_var I)
    observed in CN(0, tau2 I) noise. Returns (estimates, activity, summed
    Jacobian of the estimator).
    """
    m = r.shape[1]
    energy = np.sum(np.abs(r) ** 2, axis=1)
    gap = 1.0 / tau2 - 1.0 / (tau2 + channel_var)
    if prior <= 0.0:
        activity = np.zeros(r.shape[0])
    elif prior >= 1.0:
        activity = np.ones(r.shape[0])
    else:
        llr = m * math.log(tau2 / (tau2 + channel_var)) + energy * gap + math.log(prior / (1.0 - prior))
        activity = special.expit(llr)
    shrink = channel_var / (channel_var + tau2)
    estimates = (activity * shrink)[:, None] * r
    weights = activity * (1.0 - activity) * gap * shrink
    jacobian = shrink * float(np.sum(activity)) * np.eye(m) + (r.conj().T * weights) @ r
    return estimates, activity, jacobian


def amp_detect(y: np.ndarray, pilots: np.ndarray, noise_var: float, k_active: int = None,
               activity_prior: float = None, channel_var: float = None,
               config: AmpConfig = None) -> AmpResult:
    """
    Damped MMV-AMP with Onsager correction. Detection takes the ``k_active``
    largest statistics (``top_k``) or thresholds the posterior activity.
    Returns indices into the pilot columns.
    """
    config = AmpConfig.from_settings() if config is None else config
    y = np.asarray(y, dtype=complex)
    t_len, m = y.shape
    n_users = pilots.shape[1]
    if pilots.shape[0] != t_len:
        raise ConfigurationError("pilots and observation disagree on T")
    if activity_prior is None:
        if k_active is None:
            raise ConfigurationError("need k_active or an activity prior")
        activity_prior = k_active / n_users
    scale = float(np.linalg.norm(y) ** 2) / y.size or 1.0
    if channel_var is None:
        channel_var = max((scale * t_len - t_len * noise_var) / max(activity_prior * n_users, 1e-12), 0.0)
    channel_var = max(channel_var, 1e-12 * scale)
    floor = max(noise_var, 1e-12 * scale)

    x = np.zeros((n_users, m), dtype=complex)
    z = y.copy()
    state = AmpState(estimates=x, residual=z, statistics=np.zeros(n_users), activity=np.zeros(n_users))
    y_norm = max(float(np.linalg.norm(y)), 1e-300)

    for iteration in range(1, config.max_iter + 1):
        tau2 = max(float(np.linalg.norm(z) ** 2) / z.size, floor)
        r = pilots.conj().T @ z + x
        statistics = np.sum(np.abs(r) ** 2, axis=1)
        denoised, activity, jacobian = bernoulli_gaussian_denoiser(r, tau2, activity_prior, channel_var)
        z_new = y - pilots @ denoised + (z @ jacobian) / t_len
        x_new = config.damping * denoised + (1.0 - config.damping) * x
        z_new = config.damping * z_new + (1.0 - config.damping) * z

        if not np.all(np.isfinite(z_new)) or np.linalg.norm(z_new) > config.divergence_factor * y_norm:
            logger.warning("AMP diverged at iteration %d, keeping the previous iterate", iteration)
            state.diverged = True
            if iteration == 1:
                state.statistics, state.activity = statistics, activity
            state.iterations = iteration
            break

        residual = float(np.linalg.norm(y - pilots @ x_new))
        history = state.residual_history
        if (iteration <= EARLY_ITERATIONS and config.damping <= 0.5 and history
                and residual > history[-1] * (1.0 + 1e-9)):
            state.residual_increase = True
            logger.warning("AMP residual rose at iteration %d", iteration)
        history.append(residual)

        change = float(np.linalg.norm(x_new - x)) / max(float(np.linalg.norm(x_new)), 1e-300)
        x, z = x_new, z_new
        state.estimates, state.residual = x, z
        state.statistics, state.activity, state.iterations = statistics, activity, iteration
        if change < config.tolerance:
            state.converged = True
            break

    if config.detection == 'threshold':
        detected = frozenset(int(i) for i in np.flatnonzero(state.activity >= config.activity_threshold))
    else:
        if k_active is None:
            raise ConfigurationError("top_k detection needs k_active")
        order = np.argsort(-state.statistics, kind='stable')
        detected = frozenset(int(i) for i in order[:k_active])
    logger.debug("AMP: %d iterations, %d users detected", state.iterations, len(detected))
    return AmpResult(detected=detected, state=state)
