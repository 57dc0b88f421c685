"""
Alternating minimization over path gains, preambles and delay-gain vectors
with the detected angles held fixed.

Model: Y ~ sum_k B_k alpha_k r_k^T with B_k = P_Omega A(theta_k) and
r_k = conj(F phi_k) * e_k. A cyclic shift of phi_k and a phase ramp in e_k
give the same r_k, so preambles are only defined up to a cyclic shift;
``align_to_reference`` resolves it when a reference preamble is known.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy import fft, linalg, optimize

from arrays.manifold import ArrayConfig, steering_matrix
from bagod_backend.errors import ConfigurationError

logger = logging.getLogger(__name__)

DELAY_MODELS = ('free', 'phase_ramp')
MONOTONE_SLACK = 1e-9
HALVING_STEPS = 10


@dataclass(frozen=True)
class AmOptions:
    tolerance: float = 1e-8
    max_iter: int = 200
    ridge: float = 1e-9
    delay_model: str = 'free'
    tau_max: float = 0.0
    zeta: float = 0.0
    delay_grid: int = 64

    def __post_init__(self):
        if self.delay_model not in DELAY_MODELS:
            raise ConfigurationError(f"unknown delay model {self.delay_model!r}")

    @classmethod
    def from_settings(cls, **overrides) -> 'AmOptions':
        conf = settings.BAGOD
        values = {
            'tolerance': conf['AM_TOLERANCE'],
            'max_iter': conf['AM_MAX_ITER'],
            'ridge': conf['AM_RIDGE'],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class AmEstimate:
    """
    Recovered factors per cluster. ``preambles`` is T x K with nonnegative
    unit-norm columns, ``delay_gain`` is K x T with |entries| <= C_e.
    """
    gains: list
    preambles: np.ndarray
    delay_gain: np.ndarray
    residual: float
    iterations: int
    converged: bool = False
    residual_history: list = field(default_factory=list)
    ridge_used: bool = False
    stalled: set = field(default_factory=set)

    @property
    def n_users(self) -> int:
        return self.preambles.shape[1]

    def preamble(self, k: int) -> np.ndarray:
        return self.preambles[:, k]

    def delay(self, k: int) -> float:
        return extract_delay(self.delay_gain[k])

    @property
    def flags(self) -> list:
        flags = []
        if not self.converged:
            flags.append('am_not_converged')
        if self.ridge_used:
            flags.append('am_ridge_fallback')
        flags.extend(f'am_preamble_stall:{k}' for k in sorted(self.stalled))
        return flags


def cluster_bases(clusters, omega, n_antennas: int, spacing_ratio: float = 0.5) -> list:
    """P_Omega A(theta_k) per cluster."""
    config = ArrayConfig(n_antennas, spacing_ratio)
    omega = np.asarray(omega)
    return [steering_matrix(config, clusters.thetas(k))[omega, :] for k in range(clusters.k_hat)]


def frequency_rows(preambles: np.ndarray, delay_gain: np.ndarray) -> np.ndarray:
    """r_k = conj(F phi_k) * e_k, one row per user."""
    spectra = fft.fft(preambles, axis=0, norm='ortho').T
    return np.conj(spectra) * delay_gain


def user_blocks(bases, gains, preambles, delay_gain) -> list:
    rows = frequency_rows(preambles, delay_gain)
    return [np.outer(basis @ alpha, row) for basis, alpha, row in zip(bases, gains, rows)]


def model_signal(shape, bases, gains, preambles, delay_gain) -> np.ndarray:
    total = np.zeros(shape, dtype=complex)
    for block in user_blocks(bases, gains, preambles, delay_gain):
        total += block
    return total


def _residual(y, bases, gains, preambles, delay_gain) -> float:
    return float(np.linalg.norm(y - model_signal(y.shape, bases, gains, preambles, delay_gain)))


def update_gains(y, bases, preambles, delay_gain, ridge: float = 1e-9) -> tuple:
    """
    Joint least squares over every path gain. Returns (gains, ridge_used);
    a rank-deficient design falls back to ridge regression.
    """
    rows = frequency_rows(preambles, delay_gain)
    m, t = y.shape
    columns = [np.einsum('ml,t->mtl', basis, row).reshape(m * t, basis.shape[1])
               for basis, row in zip(bases, rows)]
    design = np.concatenate(columns, axis=1)
    target = y.reshape(-1)
    solution, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    ridge_used = rank < design.shape[1]
    if ridge_used:
        gram = design.conj().T @ design
        scale = max(1.0, float(np.real(np.trace(gram))) / gram.shape[0])
        solution = np.linalg.solve(gram + ridge * scale * np.eye(gram.shape[0]), design.conj().T @ target)
        logger.warning("gain design has rank %d < %d, using ridge %.1e", rank, design.shape[1], ridge)
    splits = np.cumsum([basis.shape[1] for basis in bases])[:-1]
    return [np.asarray(part) for part in np.split(solution, splits)], ridge_used


def _others(y, bases, gains, preambles, delay_gain, k) -> np.ndarray:
    """Residual with every user but k removed."""
    blocks = user_blocks(bases, gains, preambles, delay_gain)
    return y - sum((block for j, block in enumerate(blocks) if j != k), np.zeros_like(y))


def _nonnegative_fit(z: np.ndarray, delay_gain: np.ndarray) -> np.ndarray:
    """argmin_{phi >= 0} ||diag(e) conj(F) phi - z||_2"""
    t_len = z.size
    operator = delay_gain[:, None] * np.conj(linalg.dft(t_len, scale='sqrtn'))
    stacked = np.vstack([operator.real, operator.imag])
    phi, _ = optimize.nnls(stacked, np.concatenate([z.real, z.imag]))
    return phi


def update_preamble(y, bases, gains, preambles, delay_gain) -> tuple:
    """
    Per-user nonnegative least squares in the time domain, then unit-norm
    rescaling with the norm moved into the gains. A step that would raise
    the residual is halved toward the previous iterate. Returns
    (gains, preambles, stalled user indices).
    """
    gains = [g.copy() for g in gains]
    preambles = preambles.copy()
    stalled = set()
    for k, basis in enumerate(bases):
        h = basis @ gains[k]
        energy = float(np.real(np.vdot(h, h)))
        if energy <= 0.0:
            stalled.add(k)
            continue
        r_k = _others(y, bases, gains, preambles, delay_gain, k)
        z = (h.conj() @ r_k) / energy
        candidate = _nonnegative_fit(z, delay_gain[k])
        norm = float(np.linalg.norm(candidate))
        if norm <= 0.0:
            logger.warning("preamble update of user %d projected to zero, keeping previous", k)
            stalled.add(k)
            continue

        before = _residual(y, bases, gains, preambles, delay_gain)
        previous = preambles[:, k].copy()
        step = 1.0
        for _ in range(HALVING_STEPS):
            # scaled space: gains * phi is what the model sees
            mixed = (1.0 - step) * previous + step * candidate
            scale = float(np.linalg.norm(mixed))
            trial_gains = list(gains)
            trial_gains[k] = gains[k] * scale
            trial = preambles.copy()
            trial[:, k] = mixed / scale
            if _residual(y, bases, trial_gains, trial, delay_gain) <= before * (1.0 + MONOTONE_SLACK) + 1e-15:
                gains, preambles = trial_gains, trial
                break
            step /= 2.0
        else:
            stalled.add(k)
    return gains, preambles, stalled


def update_delay_gain(y, bases, gains, preambles, delay_gain, c_e: float) -> np.ndarray:
    """
    Per-bin scalar least squares for every e_k[t], clipped to modulus C_e
    with the phase kept. Bins with a zero regressor keep the previous value.
    """
    delay_gain = delay_gain.copy()
    spectra = np.conj(fft.fft(preambles, axis=0, norm='ortho').T)
    for k, basis in enumerate(bases):
        h = basis @ gains[k]
        energy = float(np.real(np.vdot(h, h)))
        r_k = _others(y, bases, gains, preambles, delay_gain, k)
        projection = h.conj() @ r_k
        weights = energy * np.abs(spectra[k]) ** 2
        usable = weights > 1e-14 * max(1.0, float(weights.max(initial=0.0)))
        estimate = np.zeros_like(projection)
        estimate[usable] = projection[usable] / (energy * spectra[k][usable])
        delay_gain[k, usable] = clip_modulus(estimate[usable], c_e)
    return delay_gain


def clip_modulus(values: np.ndarray, bound: float) -> np.ndarray:
    magnitude = np.abs(values)
    factor = np.where(magnitude > bound, bound / np.maximum(magnitude, 1e-300), 1.0)
    return values * factor


def phase_ramp(delay: float, t_len: int) -> np.ndarray:
    return np.exp(2j * math.pi * delay * np.arange(t_len) / t_len)


def structured_delay_gain(estimate: np.ndarray, weights: np.ndarray, tau_max: float,
                          zeta: float, steps: int) -> np.ndarray:
    """
    Closest exp(j 2 pi tau t / T) m_t to ``estimate`` in weighted least
    squares, tau on a grid over [0, tau_max] and m_t in [1 - zeta, 1 + zeta].
    """
    t_len = estimate.size
    best, best_cost = None, math.inf
    for tau in np.linspace(0.0, tau_max, max(steps, 1) if tau_max > 0 else 1):
        ramp = phase_ramp(tau, t_len)
        magnitude = np.clip(np.real(estimate * np.conj(ramp)), 1.0 - zeta, 1.0 + zeta)
        candidate = ramp * magnitude
        cost = float(np.sum(weights * np.abs(candidate - estimate) ** 2))
        if cost < best_cost:
            best, best_cost = candidate, cost
    return best


def _structure(y, bases, gains, preambles, free, previous, opts: AmOptions) -> np.ndarray:
    spectra = np.conj(fft.fft(preambles, axis=0, norm='ortho').T)
    structured = previous.copy()
    for k, basis in enumerate(bases):
        h = basis @ gains[k]
        weights = float(np.real(np.vdot(h, h))) * np.abs(spectra[k]) ** 2
        structured[k] = structured_delay_gain(free[k], weights, opts.tau_max, opts.zeta, opts.delay_grid)
    if _residual(y, bases, gains, preambles, structured) <= _residual(y, bases, gains, preambles, previous):
        return structured
    return previous


def gauge_fix(gains, delay_gain) -> tuple:
    """Rotate each e_k so that e_k[0] is real positive; gains take the conjugate phase."""
    gains = [g.copy() for g in gains]
    delay_gain = delay_gain.copy()
    for k in range(delay_gain.shape[0]):
        first = delay_gain[k, 0]
        if abs(first) > 0:
            unit = first / abs(first)
            delay_gain[k] *= np.conj(unit)
            gains[k] = gains[k] * unit
    return gains, delay_gain


def extract_delay(delay_gain: np.ndarray) -> float:
    """Delay in samples from the slope of the unwrapped phase, 2 pi tau / T per bin."""
    t_len = delay_gain.size
    if t_len < 2:
        return 0.0
    phase = np.unwrap(np.angle(delay_gain))
    slope = np.polyfit(np.arange(t_len), phase, 1)[0]
    return float(slope * t_len / (2.0 * math.pi))


def align_to_reference(preamble: np.ndarray, delay_gain: np.ndarray, reference: np.ndarray,
                       max_shift: int = None) -> tuple:
    """
    Undo the shift ambiguity against a known preamble: find s with
    preamble ~ roll(reference, s) and move the shift into the delay-gain
    vector. Returns (shift, correlation, adjusted delay-gain vector).
    """
    t_len = reference.size
    shifts = range(t_len if max_shift is None else min(max_shift, t_len - 1) + 1)
    scores = [float(np.dot(np.roll(reference, s), preamble)) for s in shifts]
    shift = int(np.argmax(scores))
    return shift, scores[shift], delay_gain * phase_ramp(shift, t_len)


def am_solve(signal, clusters, c_e: float, opts: AmOptions = None, spacing_ratio: float = 0.5,
             init: AmEstimate = None) -> AmEstimate:
    """
    Cyclic minimization of ||Y - sum_k B_k alpha_k r_k^T||_F over gains,
    preambles and delay-gain vectors. Starts from E_k = 1 and flat
    preambles unless ``init`` is given.
    """
    opts = AmOptions.from_settings() if opts is None else opts
    if clusters.k_hat == 0:
        raise ConfigurationError("alternating minimization needs at least one cluster")
    if c_e < 1.0:
        raise ConfigurationError("C_e must be at least 1")
    y = np.asarray(signal.y)
    t_len = y.shape[1]
    bases = cluster_bases(clusters, signal.omega, signal.n_antennas, spacing_ratio)
    k_hat = clusters.k_hat

    if init is None:
        preambles = np.full((t_len, k_hat), 1.0 / math.sqrt(t_len))
        delay_gain = np.ones((k_hat, t_len), dtype=complex)
        gains, ridge_used = update_gains(y, bases, preambles, delay_gain, opts.ridge)
    else:
        preambles = np.array(init.preambles, dtype=float)
        delay_gain = np.array(init.delay_gain, dtype=complex)
        gains = [np.asarray(g, dtype=complex) for g in init.gains]
        ridge_used = False

    residual = _residual(y, bases, gains, preambles, delay_gain)
    history = [residual]
    stalled = set()
    converged = False
    scale = max(float(np.linalg.norm(y)), 1e-300)
    iteration = 0

    for iteration in range(1, opts.max_iter + 1):
        gains, used = update_gains(y, bases, preambles, delay_gain, opts.ridge)
        ridge_used = ridge_used or used
        gains, preambles, stalls = update_preamble(y, bases, gains, preambles, delay_gain)
        stalled |= stalls
        free = update_delay_gain(y, bases, gains, preambles, delay_gain, c_e)
        if opts.delay_model == 'phase_ramp':
            delay_gain = _structure(y, bases, gains, preambles, free, delay_gain, opts)
        else:
            delay_gain = free
        gains, delay_gain = gauge_fix(gains, delay_gain)

        current = _residual(y, bases, gains, preambles, delay_gain)
        if current > residual * (1.0 + MONOTONE_SLACK) + 1e-12 * scale:
            logger.warning("AM residual rose from %.6g to %.6g at cycle %d", residual, current, iteration)
        history.append(current)
        change = abs(residual - current) / max(residual, 1e-300)
        residual = current
        if change < opts.tolerance or current <= 1e-13 * scale:
            converged = True
            break

    if not converged:
        logger.warning("AM stopped after %d cycles, residual %.3g", iteration, residual)
    logger.debug("AM: %d users, %d cycles, relative residual %.3g", k_hat, iteration, residual / scale)
    return AmEstimate(
        gains=gains,
        preambles=preambles,
        delay_gain=delay_gain,
        residual=residual,
        iterations=iteration,
        converged=converged,
        residual_history=history,
        ridge_used=ridge_used,
        stalled=stalled,
    )


