r"""Sensitivity bounds for the invariant-state corrections.

A Lyapunov pair :math:`(\lambda, \Gamma)` with
:math:`A\Gamma + \Gamma A^T + 2\lambda\Gamma \preceq 0` certifies the
contraction :math:`\|\Gamma^{-1/2}e^{tA}\Gamma^{1/2}\| \le e^{-\lambda t}`.  It
yields pointwise bounds on the influence functions ``F`` and ``G``, and,
integrated against Gaussian weights, Monte-Carlo bounds on their weighted
:math:`L^2` norms.  Those combine with the weighted norms of the strength
functions into a Hilbert-Schmidt bound on the QCF correction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DegeneracyError, DivergenceError, InvalidInputError
from .model import StateSpace
from .numerics import (
    SeededSampler,
    gaussian_draws,
    require_hurwitz,
    solve_shifted_lyapunov,
)
from .perturb import PerturbationContext
from .weyl import weighted_norm

DEFAULT_FRACTION = 0.9
DEFAULT_MC_COUNT = 100_000


@dataclass(frozen=True)
class LyapunovPair:
    lam: float
    Gamma: np.ndarray

    @property
    def Gamma_inv(self) -> np.ndarray:
        return np.linalg.inv(self.Gamma)

    def sqrt(self) -> np.ndarray:
        """Symmetric square root of ``Gamma``."""
        vals, vecs = np.linalg.eigh(self.Gamma)
        return (vecs * np.sqrt(vals)) @ vecs.T

    def inv_sqrt(self) -> np.ndarray:
        vals, vecs = np.linalg.eigh(self.Gamma)
        return (vecs / np.sqrt(vals)) @ vecs.T

    def contraction(self, A, t: float) -> float:
        r""":math:`\|\Gamma^{-1/2}e^{tA}\Gamma^{1/2}\|_2`."""
        E = sla.expm(t * np.asarray(A, dtype=float))
        return float(np.linalg.norm(self.inv_sqrt() @ E @ self.sqrt(), 2))


def find_lyapunov_pair(ss: StateSpace, fraction: float = DEFAULT_FRACTION) -> LyapunovPair:
    r"""``lambda = fraction * |abscissa|`` and ``Gamma`` solving :math:`(A+\lambda I)\Gamma + \Gamma(A+\lambda I)^T = -I`."""
    if not 0 < fraction < 1:
        raise InvalidInputError("fraction must lie in (0, 1)")
    a = require_hurwitz(ss.A)
    lam = fraction * abs(a)
    return LyapunovPair(lam, solve_shifted_lyapunov(ss.A, lam))


def tau_factor(pair: LyapunovPair, theta, P, S) -> float:
    r"""Largest ratio :math:`\|\Theta S^Tw\|_{\Gamma^{-1}}/\|PS^Tw\|_{\Gamma^{-1}}` over ``w``."""
    Gi = pair.Gamma_inv
    ThS = np.asarray(theta) @ np.asarray(S).T
    PS = np.asarray(P) @ np.asarray(S).T
    num = ThS.T @ Gi @ ThS
    den = PS.T @ Gi @ PS
    den = 0.5 * (den + den.T)
    if np.linalg.eigvalsh(den)[0] <= 1e-14 * max(1.0, float(np.max(np.abs(den)))):
        raise DegeneracyError("S P Gamma^{-1} P S^T is singular")
    ev = sla.eigh(0.5 * (num + num.T), den, eigvals_only=True)
    return math.sqrt(max(float(ev[-1]), 0.0))


def _norm_w(x, N):
    return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", x, N, x), 0.0))


def _gauss_expm1(g, x):
    """``exp(g) * (exp(x) - 1)`` for ``x >= 0`` without overflow."""
    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.exp(g + x + np.log(-np.expm1(-x)))
    return np.where(x > 0, out, 0.0)


@dataclass(frozen=True)
class _BoundData:
    tau: float
    lam: float
    Gamma: np.ndarray
    Gamma_inv: np.ndarray
    D_norm: float
    MTh_norm: float


def _bound_data(pair: LyapunovPair, ctx: PerturbationContext) -> _BoundData:
    Gih = pair.inv_sqrt()
    return _BoundData(
        tau=tau_factor(pair, ctx.theta, ctx.P, ctx.S),
        lam=pair.lam,
        Gamma=pair.Gamma,
        Gamma_inv=pair.Gamma_inv,
        D_norm=float(np.linalg.norm(ctx.D @ Gih, 2)),
        MTh_norm=float(np.linalg.norm(ctx.M @ ctx.theta @ Gih, 2)),
    )


def bound_F(pair: LyapunovPair, ctx: PerturbationContext, u, w) -> np.ndarray:
    r""":math:`\frac{2\tau}{\lambda}e^{-\frac12(|u|_P^2+|S^Tw|_P^2)}(e^{\|u\|_\Gamma\|PS^Tw\|_{\Gamma^{-1}}}-1)`; broadcasts over leading axes."""
    bd = _bound_data(pair, ctx)
    return _bound_F(bd, ctx, u, w)


def _bound_F(bd, ctx, u, w):
    u = np.asarray(u, dtype=float)
    SW = np.asarray(w, dtype=float) @ ctx.S
    g = -0.5 * (_norm_w(u, ctx.P) ** 2 + _norm_w(SW, ctx.P) ** 2)
    z = _norm_w(u, bd.Gamma)
    c = _norm_w(SW @ ctx.P, bd.Gamma_inv)
    return (2 * bd.tau / bd.lam) * _gauss_expm1(g, z * c)


def bound_G(pair: LyapunovPair, ctx: PerturbationContext, u, w) -> np.ndarray:
    """Pointwise bound on ``|G(u, w)|``; the ``w = 0`` limit is taken analytically."""
    bd = _bound_data(pair, ctx)
    return _bound_G(bd, ctx, u, w)


def _bound_G(bd, ctx, u, w):
    u = np.asarray(u, dtype=float)
    SW = np.asarray(w, dtype=float) @ ctx.S
    g = -0.5 * (_norm_w(u, ctx.P) ** 2 + _norm_w(SW, ctx.P) ** 2)
    z = _norm_w(u, bd.Gamma)
    c = _norm_w(SW @ ctx.P, bd.Gamma_inv)
    DSw = np.linalg.norm(SW @ ctx.D.T, axis=-1)
    first = bd.tau * (bd.D_norm * z + DSw) * _gauss_expm1(g, z * c)
    small = c < 1e-8
    safe_c = np.where(small, 1.0, c)
    # (e^{cz} - 1)/c -> z (1 + cz/2) as c -> 0
    ratio = np.where(small, np.exp(g) * z * (1 + 0.5 * c * z), _gauss_expm1(g, z * c) / safe_c)
    return (2.0 / bd.lam) * (first + 2 * bd.MTh_norm * ratio)


def mean_sensitivity_norm(ctx: PerturbationContext, theta_weight: float) -> float:
    r"""Weighted norm of the Frechet derivative of the mean correction with respect to ``Psi``.

    .. math::

        \sqrt2\pi^{d/4}\det(\theta I + SPS^T)^{-1/4}
        \sqrt{\langle -S\Theta A^{-T}A^{-1}\Theta S^T, (\theta I + SPS^T)^{-1}\rangle}
    """
    th = float(theta_weight)
    if not (th >= 0 and math.isfinite(th)):
        raise InvalidInputError("theta_weight must be finite and nonnegative")
    S = ctx.S
    d = S.shape[0]
    X = th * np.eye(d) + S @ ctx.P @ S.T
    sign, logdet = np.linalg.slogdet(X)
    if sign <= 0 or logdet < -700:
        raise DegeneracyError("theta I + S P S^T is singular")
    K = np.linalg.solve(ctx.ss.A, ctx.theta @ S.T)
    inner = float(np.trace(K.T @ K @ np.linalg.inv(X)))
    return math.sqrt(2.0) * math.pi ** (d / 4) * math.exp(-0.25 * logdet) * math.sqrt(max(inner, 0.0))


@dataclass(frozen=True)
class MCEstimate:
    """Monte-Carlo norm estimate; ``value`` is infinite when the defining expectation diverges."""

    value: float
    stderr: float
    raw_mean: float
    diverging: bool
    finite_variance: bool


def divergence_metric(pair: LyapunovPair, ctx: PerturbationContext, theta_weight: float) -> float:
    r""":math:`4\sigma_a^2\sigma_b^2`; the Monte-Carlo expectations are finite iff it is below 1.

    :math:`\sigma_a^2` and :math:`\sigma_b^2` are the largest variances of
    :math:`\Gamma^{1/2}\nu` and :math:`\Gamma^{-1/2}PS^T\omega`.
    """
    S = ctx.S
    d = S.shape[0]
    X = theta_weight * np.eye(d) + S @ ctx.P @ S.T
    Gh, Gih = pair.sqrt(), pair.inv_sqrt()
    sa = float(np.linalg.eigvalsh(0.5 * Gh @ np.linalg.inv(ctx.P) @ Gh)[-1])
    PS = ctx.P @ S.T
    sb = float(np.linalg.eigvalsh(0.5 * Gih @ PS @ np.linalg.solve(X, PS.T) @ Gih)[-1])
    return 4.0 * sa * sb


def _estimate(prefactor, samples, metric, what) -> MCEstimate:
    count = samples.size
    mean = float(np.sum(samples) / count)
    var = float(np.sum((samples - mean) ** 2) / max(count - 1, 1))
    se = math.sqrt(var / count)
    if metric >= 1.0:
        warnings.warn(
            f"{what}: the bounding expectation diverges (metric {metric:.3g} >= 1); reporting inf",
            stacklevel=3,
        )
        return MCEstimate(math.inf, math.inf, mean, True, False)
    norm = math.sqrt(prefactor * mean)
    se_norm = prefactor * se / (2 * norm) if norm > 0 else 0.0
    return MCEstimate(norm, se_norm, mean, False, 4.0 * metric < 1.0)


def mc_norm_bounds(
    pair: LyapunovPair,
    ctx: PerturbationContext,
    theta_weight: float,
    sampler: SeededSampler,
    count: int = DEFAULT_MC_COUNT,
) -> tuple[MCEstimate, MCEstimate]:
    r"""Monte-Carlo upper bounds on :math:`|||F|||_{-\theta}` and :math:`|||G|||_{-\theta}`.

    Draws :math:`\nu \sim N(0, \frac12P^{-1})` on stream 0 and
    :math:`\omega \sim N(0, \frac12(\theta I + SPS^T)^{-1})` on stream 1 of the sampler seed.
    """
    th = float(theta_weight)
    if not th > 0:
        raise InvalidInputError("theta_weight must be positive")
    if count < 2:
        raise InvalidInputError("count must be at least 2")
    S, P = ctx.S, ctx.P
    n, d = ctx.ss.n, S.shape[0]
    X = th * np.eye(d) + S @ P @ S.T
    nu = gaussian_draws(SeededSampler(sampler.seed, 0), 0.5 * np.linalg.inv(P), count)
    om = gaussian_draws(SeededSampler(sampler.seed, 1), 0.5 * np.linalg.inv(X), count)
    bd = _bound_data(pair, ctx)
    z = _norm_w(nu, bd.Gamma)
    SW = om @ S
    c = _norm_w(SW @ P, bd.Gamma_inv)
    em1 = np.expm1(z * c)
    base = math.pi ** ((n + d) / 2) / math.sqrt(np.linalg.det(P) * np.linalg.det(X))
    metric = divergence_metric(pair, ctx, th)

    f_samples = em1**2
    est_F = _estimate((2 * bd.tau / bd.lam) ** 2 * base, f_samples, metric, "F norm")

    if bd.D_norm == 0.0 and bd.MTh_norm == 0.0:
        est_G = MCEstimate(0.0, 0.0, 0.0, False, True)
    else:
        DSw = np.linalg.norm(SW @ ctx.D.T, axis=-1)
        small = c < 1e-8
        ratio = np.where(small, z * (1 + 0.5 * c * z), em1 / np.where(small, 1.0, c))
        g_samples = (bd.tau * (bd.D_norm * z + DSw) * em1 + 2 * bd.MTh_norm * ratio) ** 2
        est_G = _estimate((2 / bd.lam) ** 2 * base, g_samples, metric, "G norm")
    return est_F, est_G


def strength_norm(ctx: PerturbationContext, theta_weight: float) -> float:
    r""":math:`\sqrt{|||\Psi|||_\theta^2 + \sum_k|||\Upsilon_k|||_\theta^2}`; infinite when any norm diverges."""
    total = 0.0
    for f in (ctx.variation.psi, *ctx.variation.upsilon):
        try:
            total += weighted_norm(f, theta_weight) ** 2
        except DivergenceError:
            return math.inf
    return math.sqrt(total)


def hs_qcf_bound(norm_F: float, norm_G: float, strength: float) -> float:
    r"""Hilbert-Schmidt bound :math:`\sqrt{|||F|||^2 + |||G|||^2}\,\sqrt{|||\Psi|||^2 + |||\Upsilon|||^2}`."""
    if strength == 0.0:
        return 0.0
    return math.hypot(norm_F, norm_G) * strength


@dataclass
class SensitivityReport:
    lam: float
    tau: float
    theta_weight: float
    mean_sensitivity: dict
    mc_norm_F: MCEstimate
    mc_norm_G: MCEstimate
    strength_norm: float
    hs_bound: float
    qpdf_hs_bound: float
    sample_count: int
    seed: int
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def sensitivity_report(
    ctx: PerturbationContext,
    theta_weight: float,
    sampler: SeededSampler,
    *,
    mean_thetas=(0.5, 1.0, 2.0, 4.0),
    count: int = DEFAULT_MC_COUNT,
    fraction: float = DEFAULT_FRACTION,
) -> SensitivityReport:
    """Assemble every bound for one weighting parameter; divergent quantities are reported as inf."""
    pair = find_lyapunov_pair(ctx.ss, fraction)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est_F, est_G = mc_norm_bounds(pair, ctx, theta_weight, sampler, count)
        strength = strength_norm(ctx, theta_weight)
        if math.isinf(strength):
            warnings.warn("strength-function weighted norm diverges at this theta", stacklevel=2)
    msgs = [str(w.message) for w in caught]
    for m in msgs:
        warnings.warn(m, stacklevel=2)
    hs = hs_qcf_bound(est_F.value, est_G.value, strength)
    n = ctx.ss.n
    return SensitivityReport(
        lam=pair.lam,
        tau=tau_factor(pair, ctx.theta, ctx.P, ctx.S),
        theta_weight=float(theta_weight),
        mean_sensitivity={float(t): mean_sensitivity_norm(ctx, t) for t in mean_thetas},
        mc_norm_F=est_F,
        mc_norm_G=est_G,
        strength_norm=strength,
        hs_bound=hs,
        qpdf_hs_bound=hs * (2 * math.pi) ** (-n / 2),
        sample_count=int(count),
        seed=int(sampler.seed),
        warnings=msgs,
    )
