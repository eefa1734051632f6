r"""Open quantum harmonic oscillator models and their linear state space.

An oscillator is specified by its CCR matrix :math:`\Theta`, energy matrix
:math:`R` and coupling matrix :math:`M`.  The Hamiltonian is
:math:`\tfrac12 X^T R X`, the coupling operators are :math:`MX`, and the
system variables obey :math:`dX = AX\,dt + B\,dW` with

.. math::

    A = 2\Theta(R + M^T J M), \qquad B = 2\Theta M^T, \qquad C = 2JM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .numerics import HURWITZ_MARGIN, as_square


def ccr_position_momentum(n: int) -> np.ndarray:
    r"""CCR matrix :math:`\tfrac12 [[0, 1], [-1, 0]] \otimes I_{n/2}` for ``X = (q, p)``."""
    if n < 2 or n % 2:
        raise InvalidInputError(f"n must be a positive even integer, got {n}")
    return 0.5 * np.kron(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.eye(n // 2))


def ito_coupling_matrix(m: int) -> np.ndarray:
    r"""Imaginary part :math:`J` of the quantum Ito matrix :math:`\Omega = I_m + iJ`."""
    if m < 2 or m % 2:
        raise InvalidInputError(f"m must be a positive even integer, got {m}")
    return np.kron(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.eye(m // 2))


@dataclass(frozen=True)
class OqhoModel:
    """CCR matrix ``theta``, energy matrix ``R`` and coupling matrix ``M``."""

    theta: np.ndarray
    R: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        theta = as_square(self.theta, "theta")
        R = as_square(self.R, "R")
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        n = theta.shape[0]
        if R.shape != (n, n):
            raise InvalidInputError(f"R must be {n}x{n} to match theta, got {R.shape}")
        if M.ndim != 2 or M.shape[1] != n:
            raise InvalidInputError(f"M must have {n} columns, got shape {M.shape}")
        if not np.all(np.isfinite(M)):
            raise InvalidInputError("M has non-finite entries")
        if n % 2 or M.shape[0] % 2:
            raise InvalidInputError("n and m must be even")
        scale = 1.0 + np.max(np.abs(theta))
        if np.max(np.abs(theta + theta.T)) > 1e-12 * scale:
            raise InvalidInputError("theta must be antisymmetric")
        if abs(np.linalg.det(theta)) < 1e-12 * scale**n:
            raise InvalidInputError("theta must be nonsingular")
        if np.max(np.abs(R - R.T)) > 1e-12 * (1.0 + np.max(np.abs(R))):
            raise InvalidInputError("R must be symmetric")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "M", M)

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def m(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class StateSpace:
    """Matrices ``A, B, C`` of the linear QSDE plus ``J`` and ``omega = I + iJ``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    J: np.ndarray
    omega: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.J.shape[0]


def build_state_space(model: OqhoModel) -> StateSpace:
    """Assemble ``A, B, C`` from the energy and coupling matrices."""
    theta, R, M = model.theta, model.R, model.M
    J = ito_coupling_matrix(model.m)
    A = 2.0 * theta @ (R + M.T @ J @ M)
    B = 2.0 * theta @ M.T
    C = 2.0 * J @ M
    return StateSpace(A=A, B=B, C=C, J=J, omega=np.eye(model.m) + 1j * J)


@dataclass(frozen=True)
class PRReport:
    """Residuals of the two physical-realizability identities."""

    drift_residual: float
    coupling_residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.drift_residual <= self.tolerance and self.coupling_residual <= self.tolerance


def check_physical_realizability(ss: StateSpace, theta) -> PRReport:
    r"""Max-abs residuals of :math:`A\Theta + \Theta A^T + BJB^T` and :math:`\Theta C^T + BJ`.

    The tolerance is ``1e-9 * (1 + largest input magnitude)``.
    """
    theta = np.asarray(theta, dtype=float)
    A, B, C, J = ss.A, ss.B, ss.C, ss.J
    r1 = A @ theta + theta @ A.T + B @ J @ B.T
    r2 = theta @ C.T + B @ J
    scale = max(np.max(np.abs(x)) for x in (A, B, C, theta))
    return PRReport(
        drift_residual=float(np.max(np.abs(r1))),
        coupling_residual=float(np.max(np.abs(r2))),
        tolerance=1e-9 * (1.0 + scale),
    )


def is_hurwitz(A) -> tuple[bool, float]:
    """Return ``(hurwitz, spectral_abscissa)``; Hurwitz means abscissa < -1e-10."""
    A = as_square(A, "A")
    a = float(np.max(np.linalg.eigvals(A).real))
    return a < -HURWITZ_MARGIN, a
