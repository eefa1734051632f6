r"""Weyl-variation strength functions.

A Weyl variation perturbs the Hamiltonian by :math:`\int \Psi(w)\,\mathcal{W}_{S^Tw}\,dw`
and the coupling operators by :math:`\int \Upsilon(w)\,\mathcal{W}_{S^Tw}\,dw`, where
``S`` picks ``d`` of the ``n`` system variables.  Three representations are
supported for each strength function:

* ``GaussianMixture``: sum of terms
  :math:`\alpha\sqrt{\det\Lambda}(2\pi)^{-d/2}e^{-iw^T\gamma - \frac12 w^T\Lambda w}`,
  the Fourier image of the potential :math:`\alpha e^{-\frac12|q-\gamma|^2_{\Lambda^{-1}}}`;
* ``ZeroStrength``;
* ``TabulatedStrength``: complex samples on a regular grid, linearly interpolated.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import DivergenceError, InvalidInputError, UnsupportedRepresentationError
from .numerics import tensor_gauss_hermite

HERMITIAN_WARN = 1e-6


@dataclass(frozen=True)
class GaussianTerm:
    """One Gaussian bump (``alpha > 0``) or well (``alpha < 0``)."""

    alpha: float
    gamma: np.ndarray
    Lambda: np.ndarray

    def __post_init__(self):
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        Lam = np.atleast_2d(np.asarray(self.Lambda, dtype=float))
        d = gamma.size
        if Lam.shape != (d, d):
            raise InvalidInputError(f"Lambda must be {d}x{d} to match gamma, got {Lam.shape}")
        if not (math.isfinite(self.alpha) and np.all(np.isfinite(gamma)) and np.all(np.isfinite(Lam))):
            raise InvalidInputError("gaussian term has non-finite parameters")
        if np.max(np.abs(Lam - Lam.T)) > 1e-12 * (1 + np.max(np.abs(Lam))):
            raise InvalidInputError("Lambda must be symmetric")
        Lam = 0.5 * (Lam + Lam.T)
        if np.linalg.eigvalsh(Lam)[0] <= 0:
            raise InvalidInputError("Lambda must be positive definite")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "Lambda", Lam)

    @property
    def d(self) -> int:
        return self.gamma.size

    @property
    def scale(self) -> float:
        r""":math:`\alpha\sqrt{\det\Lambda}/(2\pi)^{d/2}`."""
        return self.alpha * math.sqrt(np.linalg.det(self.Lambda)) / (2 * math.pi) ** (self.d / 2)

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        quad = np.einsum("...i,ij,...j->...", w, self.Lambda, w)
        return self.scale * np.exp(-1j * (w @ self.gamma) - 0.5 * quad)


class StrengthFunction:
    """Scalar complex function on ``R^d`` with Hermitian symmetry ``f(-w) = conj(f(w))``."""

    d: int

    def __call__(self, w) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False

    def quadrature(self, G, order: int = 40):
        r"""Nodes and complex weights for :math:`\int f(w)h(w)e^{-\frac12 w^TGw}dw \approx \sum_j c_j h(w_j)`.

        ``G`` must be positive semidefinite; ``h`` should be smooth and of at
        most polynomial growth.
        """
        raise NotImplementedError  # pragma: no cover

    def scaled(self, factor: float) -> "StrengthFunction":
        raise NotImplementedError  # pragma: no cover


@dataclass(frozen=True)
class ZeroStrength(StrengthFunction):
    d: int

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return np.zeros(w.shape[:-1], dtype=complex)

    @property
    def is_zero(self):
        return True

    def quadrature(self, G, order=40):
        return np.zeros((0, self.d)), np.zeros(0, dtype=complex)

    def scaled(self, factor):
        return self


@dataclass(frozen=True)
class GaussianMixture(StrengthFunction):
    terms: tuple

    def __post_init__(self):
        terms = tuple(t if isinstance(t, GaussianTerm) else GaussianTerm(**t) for t in self.terms)
        if not terms:
            raise InvalidInputError("a gaussian mixture needs at least one term (use ZeroStrength)")
        if len({t.d for t in terms}) != 1:
            raise InvalidInputError("all mixture terms must share the dimension d")
        object.__setattr__(self, "terms", terms)

    @property
    def d(self) -> int:
        return self.terms[0].d

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return sum(t(w) for t in self.terms)

    def quadrature(self, G, order=40):
        G = np.asarray(G, dtype=float)
        x, wx = tensor_gauss_hermite(order, self.d)
        nodes, weights = [], []
        for t in self.terms:
            Xi = G + t.Lambda
            L = np.linalg.cholesky(Xi)
            # w = sqrt(2) L^{-T} x turns w^T Xi w / 2 into |x|^2
            T = math.sqrt(2.0) * np.linalg.inv(L).T
            w = x @ T.T
            jac = abs(np.linalg.det(T))
            nodes.append(w)
            weights.append(t.scale * jac * wx * np.exp(-1j * (w @ t.gamma)))
        return np.concatenate(nodes), np.concatenate(weights)

    def scaled(self, factor):
        return GaussianMixture(tuple(GaussianTerm(factor * t.alpha, t.gamma, t.Lambda) for t in self.terms))


def _trapezoid_weights(axes) -> np.ndarray:
    ws = []
    for ax in axes:
        h = np.diff(ax)
        w = np.zeros_like(ax)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        ws.append(w)
    out = ws[0]
    for w in ws[1:]:
        out = np.multiply.outer(out, w)
    return out


class TabulatedStrength(StrengthFunction):
    """Complex samples on a rectilinear grid symmetric about the origin.

    Values are Hermitian-symmetrised on construction by averaging ``f(w)`` and
    ``conj(f(-w))``; a warning is issued when the raw data deviate by more
    than 1e-6.  Outside the grid the function is zero.
    """

    def __init__(self, axes: Sequence, values):
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        values = np.asarray(values, dtype=complex)
        if values.shape != tuple(a.size for a in axes):
            raise InvalidInputError("values shape must match the axis lengths")
        for a in axes:
            if a.size < 2 or np.any(np.diff(a) <= 0):
                raise InvalidInputError("grid axes must be strictly increasing with >= 2 points")
            if np.max(np.abs(a + a[::-1])) > 1e-9 * (1 + np.max(np.abs(a))):
                raise InvalidInputError("grid axes must be symmetric about 0")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("tabulated values must be finite")
        mirrored = np.conj(values[(slice(None, None, -1),) * values.ndim])
        dev = float(np.max(np.abs(values - mirrored))) if values.size else 0.0
        if dev > HERMITIAN_WARN:
            warnings.warn(
                f"tabulated strength deviates from Hermitian symmetry by {dev:.3g}; symmetrising",
                stacklevel=2,
            )
        self.axes = axes
        self.values = 0.5 * (values + mirrored)
        self._interp = RegularGridInterpolator(axes, self.values, bounds_error=False, fill_value=0.0)

    @property
    def d(self) -> int:
        return len(self.axes)

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return self._interp(w.reshape(-1, self.d)).reshape(w.shape[:-1])

    def grid_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid points ``(K, d)`` and trapezoid weights ``(K,)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        return nodes, _trapezoid_weights(self.axes).ravel()

    def quadrature(self, G, order=40):
        G = np.asarray(G, dtype=float)
        nodes, tw = self.grid_nodes()
        gauss = np.exp(-0.5 * np.einsum("ki,ij,kj->k", nodes, G, nodes))
        return nodes, tw * self.values.ravel() * gauss

    def scaled(self, factor):
        return TabulatedStrength(self.axes, factor * self.values)

    @classmethod
    def from_csv(cls, path) -> "TabulatedStrength":
        """Read columns ``w_1..w_d, re, im`` (header row required)."""
        with open(Path(path), newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = np.array([[float(x) for x in r] for r in reader if r])
        d = len(header) - 2
        expected = [f"w_{i + 1}" for i in range(d)] + ["re", "im"]
        if d < 1 or header != expected:
            raise InvalidInputError(f"{path}: expected columns {expected}, got {header}")
        axes = [np.unique(rows[:, i]) for i in range(d)]
        shape = tuple(a.size for a in axes)
        if rows.shape[0] != math.prod(shape):
            raise InvalidInputError(f"{path}: samples do not form a complete rectilinear grid")
        idx = tuple(np.searchsorted(a, rows[:, i]) for i, a in enumerate(axes))
        values = np.zeros(shape, dtype=complex)
        values[idx] = rows[:, d] + 1j * rows[:, d + 1]
        return cls(axes, values)


@dataclass(frozen=True)
class WeylVariation:
    """Selector ``S`` (d x n row selection), scalar ``psi`` and m-list ``upsilon``."""

    S: np.ndarray
    psi: StrengthFunction
    upsilon: tuple = field(default=())

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        d, n = S.shape
        if d > n or not np.all((S == 0) | (S == 1)):
            raise InvalidInputError("S must be a 0/1 row-selection matrix")
        if np.any(S.sum(axis=1) != 1) or np.any(S.sum(axis=0) > 1):
            raise InvalidInputError("S must have one unit entry per row in distinct columns")
        ups = tuple(self.upsilon)
        for f in (self.psi, *ups):
            if not isinstance(f, StrengthFunction):
                raise InvalidInputError("strength functions must be StrengthFunction instances")
            if f.d != d:
                raise InvalidInputError(f"strength function dimension {f.d} does not match S ({d} rows)")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "upsilon", ups)

    @classmethod
    def from_indices(cls, indices, n: int, psi, upsilon=()):
        S = np.zeros((len(indices), n))
        S[np.arange(len(indices)), list(indices)] = 1.0
        return cls(S, psi, tuple(upsilon))

    @property
    def d(self) -> int:
        return self.S.shape[0]

    @property
    def n(self) -> int:
        return self.S.shape[1]

    def upsilon_list(self, m: int) -> tuple:
        """Coupling strengths padded to length ``m`` with zeros."""
        if len(self.upsilon) > m:
            raise InvalidInputError(f"upsilon has {len(self.upsilon)} components but m = {m}")
        return self.upsilon + (ZeroStrength(self.d),) * (m - len(self.upsilon))

    def scaled(self, factor: float) -> "WeylVariation":
        return WeylVariation(self.S, self.psi.scaled(factor), tuple(f.scaled(factor) for f in self.upsilon))

    @property
    def is_zero(self) -> bool:
        return self.psi.is_zero and all(f.is_zero for f in self.upsilon)


def eval_psi(variation: WeylVariation, w) -> np.ndarray:
    """Hamiltonian strength at ``w`` of shape ``(..., d)``."""
    return variation.psi(np.asarray(w, dtype=float))


def eval_upsilon(variation: WeylVariation, w, m: int | None = None) -> np.ndarray:
    """Coupling strengths at ``w``, shape ``(..., m)``."""
    w = np.asarray(w, dtype=float)
    ups = variation.upsilon if m is None else variation.upsilon_list(m)
    if not ups:
        return np.zeros(w.shape[:-1] + (0,), dtype=complex)
    return np.stack([f(w) for f in ups], axis=-1)


def weighted_norm(f: StrengthFunction, theta_weight: float) -> float:
    r"""Weighted norm :math:`(\int |f(w)|^2 e^{\theta|w|^2}dw)^{1/2}`.

    Closed form for gaussian mixtures, which requires ``theta`` below the
    smallest eigenvalue of every ``Lambda``; trapezoid quadrature on the grid
    for tabulated functions.
    """
    th = float(theta_weight)
    if not (th >= 0 and math.isfinite(th)):
        raise InvalidInputError("theta_weight must be finite and nonnegative")
    if f.is_zero:
        return 0.0
    if isinstance(f, GaussianMixture):
        d = f.d
        for t in f.terms:
            if th >= np.linalg.eigvalsh(t.Lambda)[0]:
                raise DivergenceError(
                    f"weighted norm diverges: theta {th:.6g} >= smallest Lambda eigenvalue"
                )
        total = 0.0
        eye = np.eye(d)
        for ti in f.terms:
            for tj in f.terms:
                Mij = ti.Lambda + tj.Lambda - 2 * th * eye
                g = ti.gamma - tj.gamma
                total += (
                    ti.scale
                    * tj.scale
                    * (2 * math.pi) ** (d / 2)
                    / math.sqrt(np.linalg.det(Mij))
                    * math.exp(-0.5 * g @ np.linalg.solve(Mij, g))
                )
        return math.sqrt(max(total, 0.0))
    if isinstance(f, TabulatedStrength):
        nodes, tw = f.grid_nodes()
        vals = np.abs(f.values.ravel()) ** 2 * np.exp(th * np.sum(nodes**2, axis=-1))
        return math.sqrt(float(np.sum(tw * vals)))
    raise UnsupportedRepresentationError(type(f).__name__)


def l1_bound(f: StrengthFunction, theta_weight: float) -> float:
    r"""Upper bound :math:`(\pi/\theta)^{d/4}|||f|||_\theta` on :math:`\int|f|`."""
    if not theta_weight > 0:
        raise InvalidInputError("theta_weight must be positive")
    return (math.pi / theta_weight) ** (f.d / 4) * weighted_norm(f, theta_weight)


def _mixture_psi(variation: WeylVariation) -> GaussianMixture | None:
    if isinstance(variation.psi, GaussianMixture):
        return variation.psi
    if variation.psi.is_zero:
        return None
    raise UnsupportedRepresentationError("the classical potential needs a gaussian-mixture psi")


def potential_value(variation: WeylVariation, q) -> np.ndarray:
    r"""Classical potential :math:`\sum\alpha e^{-\frac12|q-\gamma|^2_{\Lambda^{-1}}}` at ``q`` of shape ``(..., d)``."""
    q = np.asarray(q, dtype=float)
    mix = _mixture_psi(variation)
    out = np.zeros(q.shape[:-1])
    if mix is None:
        return out
    for t in mix.terms:
        r = q - t.gamma
        out = out + t.alpha * np.exp(-0.5 * np.sum(r * np.linalg.solve(t.Lambda, r[..., None])[..., 0], axis=-1))
    return out


def potential_gradient(variation: WeylVariation, q) -> np.ndarray:
    r"""Gradient :math:`\sum\varphi_k(q)\Lambda_k^{-1}(\gamma_k - q)`."""
    q = np.asarray(q, dtype=float)
    mix = _mixture_psi(variation)
    out = np.zeros(q.shape)
    if mix is None:
        return out
    for t in mix.terms:
        r = t.gamma - q
        s = np.linalg.solve(t.Lambda, r[..., None])[..., 0]
        out = out + t.alpha * np.exp(-0.5 * np.sum(r * s, axis=-1))[..., None] * s
    return out


def potential_hessian_at_center(term: GaussianTerm) -> np.ndarray:
    r"""Hessian :math:`-\alpha\Lambda^{-1}` of a single term at its centre (the well stiffness)."""
    return -term.alpha * np.linalg.inv(term.Lambda)
