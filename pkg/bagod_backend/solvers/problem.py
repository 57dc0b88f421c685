"""
Goal-oriented SDP data: the dual program in V (M x T) and Q (N x N),

    maximize   Re<V, Y> - ||V||_F^2 / (2 gamma)
    subject to [[Q, c1 A], [c1 A^H, I_T]] >= 0,  A = P_Omega^adj(V)
               <T(e_q), Q> = delta_q,  q = -N+1 .. N-1
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from bagod_backend.errors import ConfigurationError

logger = logging.getLogger(__name__)


def adjoint_expand(v, omega, n: int) -> np.ndarray:
    """P_Omega^adj: scatter the rows of ``v`` to antennas ``omega`` of an N x T zero matrix."""
    v = np.atleast_2d(np.asarray(v))
    omega = np.asarray(omega, dtype=int).reshape(-1)
    if v.shape[0] != omega.size:
        raise ConfigurationError(f"{v.shape[0]} rows but omega selects {omega.size} antennas")
    if omega.size and (omega.min() < 0 or omega.max() >= n):
        raise ConfigurationError(f"omega indices must lie in [0, {n})")
    expanded = np.zeros((n, v.shape[1]), dtype=complex)
    expanded[omega, :] = v
    return expanded


def hermitian_part(matrix: np.ndarray) -> np.ndarray:
    return (matrix + matrix.conj().T) / 2.0


@dataclass(frozen=True)
class ToeplitzConstraintSet:
    """
    The 2N-1 trace functionals <T(e_q), Q> = sum_i Q[i, i+q] with targets
    delta_q (1 on the main diagonal, 0 elsewhere).
    """
    order: int
    _offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order < 1:
            raise ConfigurationError("Toeplitz order must be positive")
        idx = np.arange(self.order)
        object.__setattr__(self, '_offsets', idx[None, :] - idx[:, None] + self.order - 1)

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.order + 1, self.order)

    @property
    def targets(self) -> np.ndarray:
        return (self.lags == 0).astype(float)

    @property
    def counts(self) -> np.ndarray:
        """Entries on each diagonal, N - |q|."""
        return self.order - np.abs(self.lags)

    def functionals(self, q_matrix: np.ndarray) -> np.ndarray:
        """Diagonal sums, indexed by lag -N+1 .. N-1."""
        q_matrix = np.asarray(q_matrix, dtype=complex)
        flat = self._offsets.ravel()
        size = 2 * self.order - 1
        real = np.bincount(flat, weights=q_matrix.real.ravel(), minlength=size)
        imag = np.bincount(flat, weights=q_matrix.imag.ravel(), minlength=size)
        return real + 1j * imag

    def residuals(self, q_matrix: np.ndarray) -> np.ndarray:
        return self.functionals(q_matrix) - self.targets

    def max_violation(self, q_matrix: np.ndarray) -> float:
        return float(np.max(np.abs(self.residuals(q_matrix))))

    def project(self, q_matrix: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the affine set: shift each diagonal by its mean excess."""
        correction = self.residuals(q_matrix) / self.counts
        return np.asarray(q_matrix, dtype=complex) - correction[self._offsets]

    def basis(self, lag: int) -> np.ndarray:
        """T(e_q) such that <T(e_q), Q> = trace(T(e_q)^H Q) picks diagonal ``lag``."""
        return np.eye(self.order, k=lag)


@dataclass(frozen=True)
class SdpProblem:
    """
    One instance of the dual program. ``omega`` is 0-based.
    """
    y: np.ndarray
    omega: np.ndarray
    gamma: float
    c1: float
    n: int
    eta: float = 0.0
    zeta: float = 0.0

    def __post_init__(self):
        y = np.array(self.y, dtype=complex)
        y.setflags(write=False)
        object.__setattr__(self, 'y', y)
        omega = np.array(self.omega, dtype=int).reshape(-1)
        omega.setflags(write=False)
        object.__setattr__(self, 'omega', omega)
        if y.ndim != 2 or y.shape[0] != omega.size:
            raise ConfigurationError("Y must be |omega| x T")
        if not (self.gamma > 0 and self.c1 > 0):
            raise ConfigurationError("gamma and c1 must be positive")

    @property
    def t(self) -> int:
        return self.y.shape[1]

    @property
    def m(self) -> int:
        return self.y.shape[0]

    @property
    def constraints(self) -> ToeplitzConstraintSet:
        return ToeplitzConstraintSet(self.n)

    def expand(self, v: np.ndarray) -> np.ndarray:
        return adjoint_expand(v, self.omega, self.n)

    def schur_block(self, v: np.ndarray, q_matrix: np.ndarray) -> np.ndarray:
        """[[Q, c1 A], [c1 A^H, I_T]]"""
        a = self.c1 * self.expand(v)
        return np.block([[q_matrix, a], [a.conj().T, np.eye(self.t)]])

    def objective(self, v: np.ndarray) -> float:
        return float(np.real(np.vdot(v, self.y)) - np.linalg.norm(v) ** 2 / (2.0 * self.gamma))

    def objective_bound(self) -> float:
        """(gamma / 2) ||Y||_F^2, the unconstrained maximum."""
        return self.gamma * np.linalg.norm(self.y) ** 2 / 2.0


def build_problem(signal, zeta: float, beta=1.0, preamble_norm: float = 1.0,
                  eta_floor: float = None) -> SdpProblem:
    """
    gamma = 1/eta and c1 = C_e max||phi|| / (min beta sqrt(N)), C_e = 1 + zeta.
    A zero noise bound falls back to ``eta_floor`` (``BAGOD['ETA_FLOOR']``).
    """
    if zeta < 0:
        raise ConfigurationError("zeta must be nonnegative")
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.size == 0 or np.any(beta <= 0):
        raise ConfigurationError("beta must be positive")

    eta = float(signal.noise_bound)
    if eta <= 0:
        eta = settings.BAGOD['ETA_FLOOR'] if eta_floor is None else eta_floor
        logger.debug("zero noise bound, using eta floor %.3g", eta)
    c_e = 1.0 + zeta
    c1 = c_e * preamble_norm / (float(beta.min()) * math.sqrt(signal.n_antennas))
    return SdpProblem(
        y=signal.y,
        omega=signal.omega,
        gamma=1.0 / eta,
        c1=c1,
        n=signal.n_antennas,
        eta=eta,
        zeta=zeta,
    )
