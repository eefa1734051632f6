r"""Gaussian states of the nominal oscillator.

The invariant state of a Hurwitz oscillator is Gaussian with zero mean and
real covariance :math:`P` solving :math:`AP + PA^T + BB^T = 0`.  Its QCF is
:math:`\Phi_*(u) = e^{-\frac12 u^T P u}`.  The unperturbed QCF evolves by

.. math::

    e^{t\mathfrak{A}}(\varphi)(u) = \varphi(e^{tA^T}u)\, e^{-\frac12 u^T\Sigma(t)u},

with :math:`\Sigma(t)` the finite-horizon controllability Gramian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, InvalidInputError
from .model import StateSpace
from .numerics import (
    gauss_legendre,
    matrix_exponential,
    require_hurwitz,
    solve_lyapunov,
)

GRAMIAN_ORDER = 64


@dataclass(frozen=True)
class GaussianState:
    """Mean vector ``mu`` and real part ``sigma`` of the quantum covariance matrix."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (mu.size, mu.size):
            raise InvalidInputError("sigma must be square with the dimension of mu")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


def invariant_covariance(ss: StateSpace) -> np.ndarray:
    """Infinite-horizon controllability Gramian ``P`` of ``(A, B)``."""
    return solve_lyapunov(ss.A, ss.B @ ss.B.T)


def is_controllable(ss: StateSpace) -> bool:
    """Rank test on ``[B, AB, ..., A^{n-1}B]`` with relative threshold 1e-10."""
    n = ss.n
    blocks = [ss.B]
    for _ in range(n - 1):
        blocks.append(ss.A @ blocks[-1])
    s = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return False
    return int(np.sum(s > 1e-10 * s[0])) == n


def heisenberg_residual(P, theta) -> float:
    r"""Smallest eigenvalue of the Hermitian matrix :math:`P + i\Theta`."""
    H = np.asarray(P, dtype=float) + 1j * np.asarray(theta, dtype=float)
    return float(np.linalg.eigvalsh(H)[0])


def _gramian_increment(A, BBt, h: float) -> np.ndarray:
    a = abs(float(np.max(np.linalg.eigvals(A).real)))
    panels = max(1, math.ceil(a * h))
    edges = np.linspace(0.0, h, panels + 1)
    out = np.zeros_like(BBt)
    for lo, hi in zip(edges[:-1], edges[1:]):
        rule = gauss_legendre(GRAMIAN_ORDER, lo, hi)
        E = matrix_exponential(A, rule.nodes)
        out += np.einsum("k,kij,jl,kml->im", rule.weights, E, BBt, E)
    return out


def finite_gramian(ss: StateSpace, t):
    r"""Finite-horizon Gramian :math:`\Sigma(t) = \int_0^t e^{sA}BB^Te^{sA^T}ds`.

    ``t`` may be a scalar or an array of times.  For arrays the integral is
    accumulated over consecutive increments using
    :math:`\Sigma(t+h) = \Sigma(t) + e^{tA}\Sigma(h)e^{tA^T}`, each increment
    being integrated by Gauss-Legendre quadrature.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or not np.all(np.isfinite(t_arr)):
        raise InvalidInputError("t must be finite and nonnegative")
    A, BBt = ss.A, ss.B @ ss.B.T
    if t_arr.ndim == 0:
        if t_arr == 0:
            return np.zeros_like(BBt)
        return _gramian_increment(A, BBt, float(t_arr))
    flat = t_arr.ravel()
    order = np.argsort(flat, kind="stable")
    out = np.empty((flat.size,) + BBt.shape)
    acc = np.zeros_like(BBt)
    prev = 0.0
    for idx in order:
        ti = flat[idx]
        if ti > prev:
            E = matrix_exponential(A, prev)
            acc = acc + E @ _gramian_increment(A, BBt, ti - prev) @ E.T
            prev = ti
        out[idx] = acc
    return out.reshape(t_arr.shape + BBt.shape)


class GramianPair:
    """Infinite-horizon Gramian ``P`` together with ``Sigma(t)`` on demand."""

    def __init__(self, ss: StateSpace):
        self.ss = ss
        self.P = invariant_covariance(ss)
        self.controllable = is_controllable(ss)

    def sigma_t(self, t):
        return finite_gramian(self.ss, t)


def gaussian_qcf(state: GaussianState, u) -> np.ndarray:
    r"""Gaussian QCF :math:`e^{i\mu^Tu - \frac12 u^T\Sigma u}` at ``u`` of shape ``(..., n)``."""
    u = np.asarray(u, dtype=float)
    quad = np.einsum("...i,ij,...j->...", u, state.sigma, u)
    return np.exp(1j * (u @ state.mu) - 0.5 * quad)


def gaussian_qpdf(state: GaussianState, x) -> np.ndarray:
    """Multivariate normal density of the Gaussian state at ``x`` of shape ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    n = state.mu.size
    sign, logdet = np.linalg.slogdet(state.sigma)
    if sign <= 0 or logdet < -700:
        raise DegeneracyError("covariance is singular; the QPDF does not exist")
    d = x - state.mu
    sol = np.linalg.solve(state.sigma, d.reshape(-1, n).T).T.reshape(d.shape)
    quad = np.sum(d * sol, axis=-1)
    return np.exp(-0.5 * quad - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi))


def invariant_state(ss: StateSpace) -> GaussianState:
    """Zero-mean Gaussian invariant state of a Hurwitz oscillator."""
    require_hurwitz(ss.A)
    return GaussianState(np.zeros(ss.n), invariant_covariance(ss))


def semigroup_apply(ss: StateSpace, t: float, phi, u) -> np.ndarray:
    r"""Evaluate :math:`e^{t\mathfrak{A}}(\varphi)(u) = \varphi(e^{tA^T}u)e^{-\frac12 u^T\Sigma(t)u}`.

    ``phi`` is a callable accepting frequency arrays of shape ``(..., n)``.
    """
    if t < 0:
        raise InvalidInputError("t must be nonnegative")
    u = np.asarray(u, dtype=float)
    if t == 0:
        return np.asarray(phi(u))
    E = matrix_exponential(ss.A, t)
    sig = finite_gramian(ss, t)
    quad = np.einsum("...i,ij,...j->...", u, sig, u)
    return np.asarray(phi(u @ E)) * np.exp(-0.5 * quad)


def evolve_moments(ss: StateSpace, mu0, sigma0, t: float) -> GaussianState:
    """Mean and covariance at time ``t`` from a Gaussian initial state."""
    if t < 0:
        raise InvalidInputError("t must be nonnegative")
    mu0 = np.asarray(mu0, dtype=float)
    sigma0 = np.asarray(sigma0, dtype=float)
    if t == 0:
        return GaussianState(mu0.copy(), sigma0.copy())
    E = matrix_exponential(ss.A, t)
    return GaussianState(E @ mu0, E @ sigma0 @ E.T + finite_gramian(ss, t))
