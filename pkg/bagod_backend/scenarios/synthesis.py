"""
Forward model: received frequency-domain block at the base station.

Y = sum_{k active} P_Omega(h_k (F phi_k)^H E_k) + N, with E_k = diag(e_k) the
delay-gain matrix of user k. The permutation of the delayed preamble is folded
into E_k as a phase ramp; ``time_domain_oracle`` rebuilds the same block from
the delayed time-domain preamble for integer delays.
"""
import logging
import math

import numpy as np
from scipy import fft

from bagod_backend.errors import ConfigurationError, ScenarioError
from arrays.manifold import synthesize_channel
from .types import NoiseKind, ReceivedSignal, Scenario, UserProfile

logger = logging.getLogger(__name__)


def delay_gain_vector(delay: float, gain_error, t_len: int, zeta: float = None) -> np.ndarray:
    """
    e[t] = exp(j 2 pi delay t / T) (1 + g[t]); |e[t]| <= 1 + zeta.
    """
    gain_error = np.zeros(t_len) if gain_error is None else np.asarray(gain_error, dtype=float)
    if gain_error.shape != (t_len,):
        raise ConfigurationError(f"gain error must have length T={t_len}")
    if zeta is not None and np.max(np.abs(gain_error), initial=0.0) > zeta + 1e-12:
        raise ConfigurationError(f"gain error exceeds the bound zeta={zeta}")
    t = np.arange(t_len)
    return np.exp(2j * np.pi * delay * t / t_len) * (1.0 + gain_error)


def preamble_spectrum(preamble) -> np.ndarray:
    """Unitary DFT of a preamble."""
    return fft.fft(np.asarray(preamble, dtype=float), norm='ortho')


def user_row(user: UserProfile, t_len: int) -> np.ndarray:
    """(F phi)^H E as a length-T row."""
    e = delay_gain_vector(user.delay, user.gain_error, t_len)
    return np.conj(preamble_spectrum(user.preamble)) * e


def user_block(scenario: Scenario, user: UserProfile) -> np.ndarray:
    """X_k = h_k (F phi_k)^H E_k over all N antennas."""
    h = synthesize_channel(scenario.array, user.channel)
    return np.outer(h, user_row(user, scenario.t_len))


def noiseless_signal(scenario: Scenario) -> np.ndarray:
    y = np.zeros((scenario.m, scenario.t_len), dtype=complex)
    for user in scenario.active_users:
        y += user_block(scenario, user)[scenario.omega, :]
    return y


def draw_noise(shape, kind: str, rng: np.random.Generator) -> np.ndarray:
    if kind == NoiseKind.UNIFORM:
        return rng.uniform(-1.0, 1.0, shape) + 1j * rng.uniform(-1.0, 1.0, shape)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def compute_snr(signal_part, sigma: float) -> float:
    """
    SNR in dB of an already row-selected signal: ||X_Omega||_F^2 / (M T sigma^2).
    A zero signal reports -inf.
    """
    if not sigma > 0:
        raise ConfigurationError("sigma must be positive")
    signal_part = np.asarray(signal_part)
    m, t_len = signal_part.shape
    energy = float(np.linalg.norm(signal_part) ** 2)
    if energy == 0.0:
        return -math.inf
    return 10.0 * math.log10(energy / (m * t_len * sigma ** 2))


def synthesize_received(scenario: Scenario, rng_seed) -> ReceivedSignal:
    """
    Draw one observation of ``scenario``.

    Noise is scaled so that its energy is exactly M T sigma^2, hence the
    realized SNR equals ``snr_db``. eta is the realized noise norm times
    ``eta_multiplier`` unless the scenario fixes ``noise_bound``.
    """
    if scenario.strict and scenario.k_a == 0:
        raise ScenarioError("scenario has no active users")

    rng = np.random.default_rng(rng_seed)
    clean = noiseless_signal(scenario)
    shape = clean.shape
    signal_energy = float(np.linalg.norm(clean) ** 2)

    noise = np.zeros(shape, dtype=complex)
    sigma = 0.0
    if scenario.snr_db is not None and math.isfinite(scenario.snr_db):
        if signal_energy == 0.0:
            logger.warning("no signal energy, SNR undefined; returning a noiseless block")
        else:
            sigma = math.sqrt(signal_energy / (shape[0] * shape[1] * 10.0 ** (scenario.snr_db / 10.0)))
            noise = draw_noise(shape, scenario.noise, rng)
            noise *= sigma * math.sqrt(shape[0] * shape[1]) / np.linalg.norm(noise)

    if scenario.noise_bound is not None:
        eta = float(scenario.noise_bound)
        if eta < np.linalg.norm(noise):
            logger.warning("configured noise bound %.3g is below the realized noise norm %.3g",
                           eta, np.linalg.norm(noise))
    else:
        eta = scenario.eta_multiplier * float(np.linalg.norm(noise))

    return ReceivedSignal(
        y=clean + noise,
        omega=scenario.omega,
        noise_bound=eta,
        n_antennas=scenario.array.n_antennas,
        sigma=sigma,
        clean=clean,
    )


def _integer_delay(user: UserProfile) -> int:
    delay = int(round(user.delay))
    if abs(user.delay - delay) > 1e-12:
        raise ScenarioError(f"user {user.user_id}: time-domain oracle needs integer delays, got {user.delay}")
    return delay


def time_domain_oracle(scenario: Scenario) -> ReceivedSignal:
    """
    Noiseless Y built in the time domain.

    Each preamble is sent behind a cyclic prefix of ceil(tau_max) samples,
    delayed and zero padded; the receiver keeps the last T samples, takes the
    unitary DFT and applies the gain error.
    """
    t_len = scenario.t_len
    prefix = int(math.ceil(scenario.tau_max))
    y = np.zeros((scenario.m, t_len), dtype=complex)
    for user in scenario.active_users:
        delay = _integer_delay(user)
        phi = user.preamble
        with_prefix = np.concatenate([phi[t_len - prefix:], phi])
        padded = np.zeros(t_len + prefix)
        padded[delay:] = with_prefix[:t_len + prefix - delay]
        window = padded[prefix:]
        row = np.conj(fft.fft(window, norm='ortho')) * (1.0 + user.gain_error)
        h = synthesize_channel(scenario.array, user.channel)
        y += np.outer(h[scenario.omega], row)
    return ReceivedSignal(y=y, omega=scenario.omega, noise_bound=0.0,
                          n_antennas=scenario.array.n_antennas, clean=y)
