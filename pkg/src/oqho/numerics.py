r"""Dense numerical kernels shared by the rest of the package.

Matrix exponentials, Lyapunov solvers, Gauss quadrature rules and a
counter-based Gaussian sampler.  System orders handled here are small
(n <= 8 in practice), so everything is dense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from .errors import (
    DecompositionError,
    InvalidInputError,
    NumericalError,
    ShiftTooLargeError,
    StabilityError,
)

#: Absolute margin used to call a matrix Hurwitz.
HURWITZ_MARGIN = 1e-10


def as_square(A, name="matrix", dtype=float) -> np.ndarray:
    """Return ``A`` as a finite square 2-D array or raise InvalidInputError."""
    A = np.asarray(A, dtype=dtype)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise InvalidInputError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def spectral_abscissa(A) -> float:
    """Largest real part of the eigenvalues of ``A``."""
    A = as_square(A, "A")
    return float(np.max(np.linalg.eigvals(A).real))


def require_hurwitz(A) -> float:
    """Return the spectral abscissa of ``A``; raise StabilityError unless Hurwitz."""
    a = spectral_abscissa(A)
    if not a < -HURWITZ_MARGIN:
        raise StabilityError(f"matrix is not Hurwitz (spectral abscissa {a:.6g})")
    return a


def matrix_exponential(A, t=1.0) -> np.ndarray:
    r"""Compute :math:`e^{tA}`.

    ``t`` may be a scalar or a 1-D array of times, in which case a stack of
    shape ``(len(t), n, n)`` is returned.  Uses scaling and squaring with a
    degree-13 Pade approximant (``scipy.linalg.expm``).
    """
    A = as_square(A, "A")
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise InvalidInputError("t must be finite")
    if t.ndim == 0:
        return sla.expm(float(t) * A)
    return sla.expm(t[:, None, None] * A[None, :, :])


@lru_cache(maxsize=32)
def _kron_lu(key: bytes, n: int):
    A = np.frombuffer(key, dtype=float).reshape(n, n)
    eye = np.eye(n)
    K = np.kron(A, eye) + np.kron(eye, A)
    lu, piv = sla.lu_factor(K, check_finite=False)
    return lu, piv, np.linalg.cond(K)


def solve_lyapunov(A, Q) -> np.ndarray:
    r"""Solve :math:`AX + XA^T + Q = 0` for Hurwitz ``A``.

    Uses the Kronecker-vectorised :math:`n^2 \times n^2` linear system.  ``Q``
    may carry leading batch dimensions; the factorisation is shared across the
    batch.  The result is symmetrised when ``Q`` is symmetric.

    Raises
    ------
    StabilityError
        If ``A`` is not Hurwitz.
    NumericalError
        If the Kronecker system is numerically singular.
    """
    A = as_square(A, "A")
    require_hurwitz(A)
    n = A.shape[0]
    Q = np.asarray(Q)
    if Q.shape[-2:] != (n, n):
        raise InvalidInputError(f"Q must have trailing shape {(n, n)}, got {Q.shape}")
    lu, piv, cond = _kron_lu(np.ascontiguousarray(A).tobytes(), n)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(f"Kronecker Lyapunov system is singular (cond {cond:.3g})")
    batch = Q.shape[:-2]
    rhs = -Q.reshape(-1, n * n).T
    if np.iscomplexobj(rhs):
        X = sla.lu_solve((lu, piv), rhs.real) + 1j * sla.lu_solve((lu, piv), rhs.imag)
    else:
        X = sla.lu_solve((lu, piv), rhs)
    X = X.T.reshape(*batch, n, n)
    Qt = np.swapaxes(Q, -1, -2)
    if np.allclose(Q, Qt, rtol=0, atol=1e-14 * (1 + np.max(np.abs(Q), initial=0))):
        X = 0.5 * (X + np.swapaxes(X, -1, -2))
    return X


def solve_shifted_lyapunov(A, lam: float) -> np.ndarray:
    r"""Return :math:`\Gamma \succ 0` with :math:`(A+\lambda I)\Gamma + \Gamma(A+\lambda I)^T = -I`.

    Such a :math:`\Gamma` satisfies :math:`A\Gamma + \Gamma A^T + 2\lambda\Gamma = -I \preceq 0`.
    """
    A = as_square(A, "A")
    a = require_hurwitz(A)
    if not lam > 0:
        raise InvalidInputError("lambda must be positive")
    if lam >= abs(a) - HURWITZ_MARGIN:
        raise ShiftTooLargeError(
            f"shift {lam:.6g} must stay below |spectral abscissa| = {abs(a):.6g}"
        )
    n = A.shape[0]
    return solve_lyapunov(A + lam * np.eye(n), np.eye(n))


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and positive weights of a one-dimensional quadrature rule."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape:
            raise InvalidInputError("nodes and weights must have equal length")

    def __len__(self):
        return len(self.nodes)

    def integrate(self, values) -> np.ndarray:
        """Weighted sum over the leading axis of ``values``."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def gauss_legendre(order: int, a: float = -1.0, b: float = 1.0) -> QuadratureRule:
    """Gauss-Legendre rule on ``[a, b]``, exact for polynomials of degree ``2*order - 1``."""
    if order < 1:
        raise InvalidInputError("order must be >= 1")
    if not a < b:
        raise InvalidInputError("need a < b")
    x, w = leggauss(order)
    half = 0.5 * (b - a)
    return QuadratureRule(half * x + 0.5 * (a + b), half * w, "gauss-legendre")


def gauss_hermite(order: int) -> QuadratureRule:
    r"""Gauss-Hermite rule for the weight :math:`e^{-x^2}` on the real line."""
    if order < 1:
        raise InvalidInputError("order must be >= 1")
    x, w = hermgauss(order)
    return QuadratureRule(x, w, "gauss-hermite")


def tensor_gauss_hermite(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    r"""Tensor-product Gauss-Hermite nodes ``(order**dim, dim)`` and weights for :math:`e^{-|x|^2}`."""
    rule = gauss_hermite(order)
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
    wgrids = np.meshgrid(*([rule.weights] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def graded_time_rule(
    t_end: float,
    panel_width: float,
    order: int = 16,
    first_panel: float = 1e-5,
) -> QuadratureRule:
    """Composite Gauss-Legendre rule on ``[0, t_end]``.

    Panels grow geometrically (ratio 2) from ``first_panel`` until they reach
    ``panel_width``, then stay uniform.  The grading resolves the fast initial
    layer that integrands like ``exp(-|u|^2_{Sigma(t)}/2)`` develop at large
    frequencies.
    """
    if not t_end > 0:
        raise InvalidInputError("t_end must be positive")
    breaks = [0.0]
    h = min(first_panel, panel_width)
    while breaks[-1] + h < t_end:
        breaks.append(breaks[-1] + h)
        h = min(2.0 * h, panel_width)
    breaks.append(float(t_end))
    x, w = leggauss(order)
    lo = np.asarray(breaks[:-1])[:, None]
    hi = np.asarray(breaks[1:])[:, None]
    nodes = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w[None, :]
    return QuadratureRule(nodes.ravel(), weights.ravel(), "gauss-legendre")


@dataclass(frozen=True)
class SeededSampler:
    """Identity of a reproducible random stream (Philox counter-based generator)."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and 0 <= v < 2**64):
                raise InvalidInputError(f"{name} must be an unsigned 64-bit integer")


_TWO53 = 2.0**-53


def standard_normal_draws(sampler: SeededSampler, dim: int, count: int, start: int = 0) -> np.ndarray:
    """Standard normal vectors with index ``start .. start+count-1`` of the stream.

    Each draw owns a fixed block of Philox counters, so draw ``i`` is the same
    whether produced alone or as part of any batch.
    """
    if count < 0 or start < 0:
        raise InvalidInputError("count and start must be nonnegative")
    if count == 0:
        return np.zeros((0, dim))
    pairs = (dim + 1) // 2
    blocks = (2 * pairs + 3) // 4
    bitgen = np.random.Philox(key=[sampler.seed, sampler.stream], counter=[start * blocks, 0, 0, 0])
    raw = bitgen.random_raw(count * blocks * 4).reshape(count, blocks * 4)[:, : 2 * pairs]
    u = ((raw >> np.uint64(11)).astype(float) + 0.5) * _TWO53
    u1, u2 = u[:, 0::2], u[:, 1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty((count, 2 * pairs))
    z[:, 0::2] = r * np.cos(2.0 * math.pi * u2)
    z[:, 1::2] = r * np.sin(2.0 * math.pi * u2)
    return z[:, :dim]


def gaussian_draws(sampler: SeededSampler, covariance, count: int, start: int = 0) -> np.ndarray:
    """Zero-mean Gaussian vectors with the given covariance, shape ``(count, dim)``."""
    cov = as_square(covariance, "covariance")
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("covariance is not positive definite") from exc
    z = standard_normal_draws(sampler, cov.shape[0], count, start)
    return z @ L.T
