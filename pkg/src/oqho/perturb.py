r"""First-order corrections to the invariant state under Weyl variations.

Everything here rests on one identity.  With :math:`v = e^{tA^T}u` and
:math:`\beta = v^T\Theta S^Tw`, the correction to the invariant QCF is

.. math::

    \tilde\Phi_*(u) = \int_0^\infty\!\!\int \Big[-2\sin\beta\,\Psi(w)
        + 2i\,\Upsilon(w)^T\big(\sin\beta\,D(v+S^Tw) + K(v,S^Tw)M\Theta v\big)\Big]
        e^{-\frac12|S^Tw|_P^2 - v^TPS^Tw - \frac12|u|_P^2}\,dw\,dt,

with :math:`D = M\Theta - JMP` and :math:`K = \sin\beta\,I + \cos\beta\,J`.
The inner ``w`` integral is what :func:`_kernel` evaluates for a batch of
``v`` rows and an arbitrary real offset in the exponent.  For gaussian-mixture
strengths it is done in closed form; otherwise by Gauss-Hermite quadrature
recentred at the saddle of the Gaussian factor, or by the tabulated grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AccuracyError, InvalidInputError, UnsupportedRepresentationError
from .gaussian import finite_gramian, invariant_covariance
from .model import OqhoModel, StateSpace, build_state_space
from .numerics import (
    QuadratureRule,
    graded_time_rule,
    matrix_exponential,
    require_hurwitz,
    solve_lyapunov,
    tensor_gauss_hermite,
)
from .weyl import (
    GaussianMixture,
    TabulatedStrength,
    WeylVariation,
    ZeroStrength,
)

HORIZON = 40.0
TAIL_TOL = 1e-8
IMAG_TOL = 1e-8
_CHUNK = 1 << 22


def default_w_order(d: int) -> int:
    if d <= 2:
        return 40
    if d <= 4:
        warnings.warn(f"d = {d}: w quadrature reduced to order 24 per axis", stacklevel=3)
        return 24
    raise UnsupportedRepresentationError("w quadrature supports d <= 4")


@dataclass(frozen=True)
class PerturbationContext:
    """Nominal oscillator, its invariant covariance and a Weyl variation, with quadrature data."""

    ss: StateSpace
    theta: np.ndarray
    M: np.ndarray
    P: np.ndarray
    D: np.ndarray
    variation: WeylVariation
    time_rule: QuadratureRule
    expm: np.ndarray
    w_order: int
    abscissa: float

    @classmethod
    def from_model(
        cls,
        model: OqhoModel,
        variation: WeylVariation,
        *,
        w_order: int | None = None,
        time_order: int = 16,
    ) -> "PerturbationContext":
        ss = build_state_space(model)
        a = require_hurwitz(ss.A)
        if variation.n != model.n:
            raise InvalidInputError(f"variation acts on {variation.n} variables, model has {model.n}")
        variation.upsilon_list(model.m)
        P = invariant_covariance(ss)
        D = model.M @ model.theta - ss.J @ model.M @ P
        rule = time_rule_for(ss.A, HORIZON / abs(a), time_order)
        return cls(
            ss=ss,
            theta=model.theta,
            M=model.M,
            P=P,
            D=D,
            variation=variation,
            time_rule=rule,
            expm=matrix_exponential(ss.A, rule.nodes),
            w_order=w_order or default_w_order(variation.d),
            abscissa=a,
        )

    def with_variation(self, variation: WeylVariation) -> "PerturbationContext":
        return PerturbationContext(
            self.ss, self.theta, self.M, self.P, self.D, variation,
            self.time_rule, self.expm, self.w_order, self.abscissa,
        )

    @property
    def S(self) -> np.ndarray:
        return self.variation.S

    @property
    def upsilon(self) -> tuple:
        return self.variation.upsilon_list(self.ss.m)


def time_rule_for(A, t_end: float, order: int = 16) -> QuadratureRule:
    """Graded composite rule on ``[0, t_end]`` with panels no wider than the fastest time scale."""
    eig = np.linalg.eigvals(A)
    width = 1.0 / max(abs(float(np.max(eig.real))), float(np.max(np.abs(eig))))
    return graded_time_rule(t_end, width, order)


def _half_norm(v, P):
    return 0.5 * np.einsum("...i,ij,...j->...", v, P, v)


def _uses_analytic(variation: WeylVariation) -> bool:
    fs = (variation.psi, *variation.upsilon)
    return all(isinstance(f, (GaussianMixture, ZeroStrength)) for f in fs)


def _kernel_analytic(ctx: PerturbationContext, V, half) -> np.ndarray:
    r"""Closed-form inner integral for gaussian-mixture strengths.

    Each term reduces to Gaussian moment-generating integrals with
    :math:`\Xi = SPS^T + \Lambda` and :math:`\sigma_\pm = S(P\pm i\Theta)v + i\gamma`.
    """
    S, P, Th = ctx.S, ctx.P, ctx.theta
    d = S.shape[0]
    SPp = S @ (P + 1j * Th)
    SPm = S @ (P - 1j * Th)
    out = np.zeros(V.shape[:-1], dtype=complex)
    G = S @ P @ S.T

    def moments(term):
        Xi = G + term.Lambda
        Xinv = np.linalg.inv(Xi)
        norm = term.scale * (2 * math.pi) ** (d / 2) / math.sqrt(np.linalg.det(Xi))
        sp = V @ SPp.T + 1j * term.gamma
        sm = V @ SPm.T + 1j * term.gamma
        ep = np.exp(0.5 * np.einsum("...i,ij,...j->...", sp, Xinv, sp) - half)
        em = np.exp(0.5 * np.einsum("...i,ij,...j->...", sm, Xinv, sm) - half)
        return norm, Xinv, sp, sm, ep, em

    if isinstance(ctx.variation.psi, GaussianMixture):
        for term in ctx.variation.psi.terms:
            norm, _, _, _, ep, em = moments(term)
            out += 1j * norm * (ep - em)
    MTh = ctx.M @ Th
    JMTh = ctx.ss.J @ MTh
    for k, f in enumerate(ctx.upsilon):
        if not isinstance(f, GaussianMixture):
            continue
        p = V @ (ctx.D[k] + MTh[k])
        r = V @ JMTh[k]
        q = S @ ctx.D[k]
        for term in f.terms:
            norm, Xinv, sp, sm, ep, em = moments(term)
            lin_p = ep * (p - sp @ (Xinv @ q))
            lin_m = em * (p - sm @ (Xinv @ q))
            inner = (lin_p - lin_m) / 2j + r * (ep + em) / 2
            out += 2j * norm * inner
    return out


def _shifted_nodes(ctx, V, Lam, order):
    """Gauss-Hermite nodes recentred at the saddle of exp(-w'Xi w/2 - (SPv)'w)."""
    S, P = ctx.S, ctx.P
    d = S.shape[0]
    Xi = S @ P @ S.T + Lam
    Xinv = np.linalg.inv(Xi)
    T = math.sqrt(2.0) * np.linalg.inv(np.linalg.cholesky(Xi)).T
    x, wx = tensor_gauss_hermite(order, d)
    b = V @ (S @ P).T
    w0 = -b @ Xinv
    W = w0[..., None, :] + x @ T.T
    peak = 0.5 * np.einsum("...i,ij,...j->...", b, Xinv, b)
    return W, wx * abs(np.linalg.det(T)), peak


def _integrand_parts(ctx, V, W):
    """sin(beta), cos(beta) and the coupling vector pieces at v rows and w nodes."""
    S, Th = ctx.S, ctx.theta
    SW = W @ S
    beta = np.einsum("...i,ij,...kj->...k", V, Th, SW)
    return SW, np.sin(beta), np.cos(beta)


def _coupling_factor(ctx, V, SW, sb, cb, k):
    MTh = ctx.M @ ctx.theta
    JMTh = ctx.ss.J @ MTh
    Dv = V @ (ctx.D[k] + MTh[k])
    Dsw = SW @ ctx.D[k]
    r = V @ JMTh[k]
    return sb * (Dv[..., None] + Dsw) + cb * r[..., None]


def _kernel_quadrature(ctx: PerturbationContext, V, half) -> np.ndarray:
    """Inner integral by numerical quadrature in ``w``."""
    out = np.zeros(V.shape[:-1], dtype=complex)
    fs = [(None, ctx.variation.psi)] + list(enumerate(ctx.upsilon))
    for k, f in fs:
        if f.is_zero:
            continue
        if isinstance(f, GaussianMixture):
            for term in f.terms:
                W, wts, peak = _shifted_nodes(ctx, V, term.Lambda, ctx.w_order)
                SW, sb, cb = _integrand_parts(ctx, V, W)
                phase = term.scale * np.exp(-1j * (W @ term.gamma))
                amp = np.exp(peak - half)[..., None] * phase * wts
                out += _accumulate(ctx, V, SW, sb, cb, k, amp)
        elif isinstance(f, TabulatedStrength):
            nodes, tw = f.grid_nodes()
            W = np.broadcast_to(nodes, V.shape[:-1] + nodes.shape)
            SW, sb, cb = _integrand_parts(ctx, V, W)
            expo = -0.5 * np.einsum("...i,ij,...j->...", SW, ctx.P, SW)
            expo = expo - np.einsum("...i,ij,...kj->...k", V, ctx.P, SW) - half[..., None]
            amp = np.exp(expo) * tw * f.values.ravel()
            out += _accumulate(ctx, V, SW, sb, cb, k, amp)
        else:
            raise UnsupportedRepresentationError(type(f).__name__)
    return out


def _accumulate(ctx, V, SW, sb, cb, k, amp):
    if k is None:
        return np.sum(-2.0 * sb * amp, axis=-1)
    return np.sum(2j * _coupling_factor(ctx, V, SW, sb, cb, k) * amp, axis=-1)


def _kernel(ctx, V, half, method):
    if method == "analytic":
        if not _uses_analytic(ctx.variation):
            raise UnsupportedRepresentationError("analytic w-integration needs gaussian-mixture strengths")
        return _kernel_analytic(ctx, V, half)
    if method == "quadrature":
        return _kernel_quadrature(ctx, V, half)
    raise InvalidInputError(f"unknown method {method!r}")


def _resolve(ctx, method):
    if method == "auto":
        return "analytic" if _uses_analytic(ctx.variation) else "quadrature"
    return method


def _as_points(u, n):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != n:
        raise InvalidInputError(f"frequency points must have trailing dimension {n}, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise InvalidInputError("frequency points must be finite")
    return u


def _check_tail(values_last, rate, what):
    tail = float(np.max(np.abs(values_last), initial=0.0)) / rate
    if tail > TAIL_TOL:
        raise AccuracyError(f"{what}: time-integral tail estimate {tail:.3g} exceeds {TAIL_TOL:g}")


def _real(x, what, scale=1.0):
    x = np.asarray(x)
    resid = float(np.max(np.abs(x.imag), initial=0.0))
    if resid > IMAG_TOL * (1.0 + scale):
        raise AccuracyError(f"{what}: imaginary residue {resid:.3g} on a real quantity")
    return np.real(x).copy()


def _time_series(ctx, u):
    """Return v_t rows (T, n) for a single u."""
    return np.einsum("i,tij->tj", u, ctx.expm)


def influence_F(ctx: PerturbationContext, u, w) -> float:
    r""":math:`F(u,w) = 2e^{-\frac12(|u|_P^2+|S^Tw|_P^2)}\int_0^\infty \mathrm{Im}\,e^{-u^Te^{tA}(P+i\Theta)S^Tw}dt`."""
    u = _as_points(u, ctx.ss.n)
    w = np.atleast_1d(np.asarray(w, dtype=float))
    sw = ctx.S.T @ w
    V = _time_series(ctx, u)
    beta = V @ ctx.theta @ sw
    expo = -_half_norm(u, ctx.P) - _half_norm(sw, ctx.P) - V @ ctx.P @ sw
    vals = -2.0 * np.sin(beta) * np.exp(expo)
    _check_tail(vals[-1:], 0.9 * abs(ctx.abscissa), "influence_F")
    return float(ctx.time_rule.integrate(vals))


def influence_G(ctx: PerturbationContext, u, w) -> np.ndarray:
    r""":math:`G(u,w) = -2i\int_0^\infty(\sin\beta\,D(v+S^Tw) + K(v,S^Tw)M\Theta v)e^{\dots}dt`, an m-vector."""
    u = _as_points(u, ctx.ss.n)
    w = np.atleast_1d(np.asarray(w, dtype=float))
    sw = ctx.S.T @ w
    V = _time_series(ctx, u)
    beta = V @ ctx.theta @ sw
    expo = -_half_norm(u, ctx.P) - _half_norm(sw, ctx.P) - V @ ctx.P @ sw
    sb, cb = np.sin(beta)[:, None], np.cos(beta)[:, None]
    MThV = V @ (ctx.M @ ctx.theta).T
    vec = sb * ((V + sw) @ ctx.D.T) + sb * MThV + cb * (MThV @ ctx.ss.J.T)
    vals = vec * np.exp(expo)[:, None]
    _check_tail(vals[-1:], 0.9 * abs(ctx.abscissa), "influence_G")
    return -2j * ctx.time_rule.integrate(vals)


def qcf_correction(ctx: PerturbationContext, u, method: str = "auto"):
    r"""First-order correction :math:`\tilde\Phi_*(u) = \int(F\Psi + G^*\Upsilon)dw`.

    ``u`` has shape ``(n,)`` or ``(B, n)``.  ``method`` is ``"analytic"``
    (gaussian-mixture strengths only), ``"quadrature"`` or ``"auto"``.
    """
    u = _as_points(u, ctx.ss.n)
    single = u.ndim == 1
    U = u.reshape(-1, ctx.ss.n)
    method = _resolve(ctx, method)
    out = np.zeros(U.shape[0], dtype=complex)
    if ctx.variation.is_zero:
        return out[0] if single else out.reshape(u.shape[:-1])
    T = ctx.time_rule.nodes.size
    per = T * (ctx.w_order ** ctx.variation.d if method == "quadrature" else 1) * 8
    step = max(1, _CHUNK // per)
    rate = 0.9 * abs(ctx.abscissa)
    for s in range(0, U.shape[0], step):
        Ub = U[s : s + step]
        V = np.einsum("bi,tij->btj", Ub, ctx.expm)
        half = np.broadcast_to(_half_norm(Ub, ctx.P)[:, None], V.shape[:-1])
        vals = _kernel(ctx, V, half, method)
        _check_tail(vals[:, -1], rate, "qcf_correction")
        out[s : s + step] = vals @ ctx.time_rule.weights
    return out[0] if single else out.reshape(u.shape[:-1])


def qcf_correction_gaussian_bump(ctx: PerturbationContext, u) -> complex:
    r"""Closed form for a single gaussian :math:`\Psi` term, :math:`\Upsilon = 0`, ``S = [I_d 0]``.

    .. math::

        \tilde\Phi_*(u) = \alpha i\sqrt{\det\Lambda/\det\Xi}\,e^{-\frac12|u|_P^2}
            \int_0^\infty\big(e^{\frac12\sigma_+^T\Xi^{-1}\sigma_+} - e^{\frac12\sigma_-^T\Xi^{-1}\sigma_-}\big)dt
    """
    var = ctx.variation
    psi = var.psi
    if not (isinstance(psi, GaussianMixture) and len(psi.terms) == 1):
        raise UnsupportedRepresentationError("closed form needs a single gaussian psi term")
    if not all(f.is_zero for f in var.upsilon):
        raise UnsupportedRepresentationError("closed form needs upsilon = 0")
    d, n = var.S.shape
    if not np.array_equal(var.S, np.eye(d, n)):
        raise UnsupportedRepresentationError("closed form needs S = [I_d 0]")
    u = _as_points(u, n)
    term = psi.terms[0]
    S, P, Th = var.S, ctx.P, ctx.theta
    Xi = S @ P @ S.T + term.Lambda
    Xinv = np.linalg.inv(Xi)
    E = ctx.expm
    vt = np.einsum("tij,i->tj", E, u)
    sp = vt @ (S @ (P + 1j * Th)).T + 1j * term.gamma
    sm = vt @ (S @ (P - 1j * Th)).T + 1j * term.gamma
    hu = 0.5 * u @ P @ u
    ep = np.exp(0.5 * np.einsum("ti,ij,tj->t", sp, Xinv, sp) - hu)
    em = np.exp(0.5 * np.einsum("ti,ij,tj->t", sm, Xinv, sm) - hu)
    integral = ctx.time_rule.integrate(ep - em)
    coef = term.alpha * 1j * math.sqrt(np.linalg.det(term.Lambda) / np.linalg.det(Xi))
    return complex(coef * integral)


def _w_rules(ctx):
    """(k, nodes, weights) for psi (k=None) and each nonzero upsilon component."""
    G = ctx.S @ ctx.P @ ctx.S.T
    rules = []
    for k, f in [(None, ctx.variation.psi)] + list(enumerate(ctx.upsilon)):
        if f.is_zero:
            continue
        nodes, wts = f.quadrature(G, ctx.w_order)
        rules.append((k, nodes, wts))
    return rules


@dataclass(frozen=True)
class MomentCorrection:
    mu_tilde: np.ndarray
    P_tilde: np.ndarray


def mean_correction(ctx: PerturbationContext) -> np.ndarray:
    r""":math:`\tilde\mu = -2iA^{-1}\Theta\int e^{-\frac12|S^Tw|_P^2}(\Psi S^Tw - i(S^Tww^TSD^T + M^TJ)\Upsilon)dw`."""
    n = ctx.ss.n
    acc = np.zeros(n, dtype=complex)
    MtJ = ctx.M.T @ ctx.ss.J
    for k, W, wts in _w_rules(ctx):
        SW = W @ ctx.S
        if k is None:
            acc += wts @ SW
        else:
            h = SW * (SW @ ctx.D[k])[:, None] + MtJ[:, k]
            acc += -1j * (wts @ h)
    mu = -2j * np.linalg.solve(ctx.ss.A, ctx.theta @ acc)
    return _real(mu, "mean_correction", float(np.max(np.abs(mu.real), initial=0.0)))


def _sym(X):
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def q_ale_rhs(ctx, W) -> np.ndarray:
    r"""Right-hand sides :math:`\mathbf{S}(\Theta S^Tww^TSP)` for nodes ``W`` of shape ``(K, d)``."""
    SW = W @ ctx.S
    return _sym((SW @ ctx.theta.T)[:, :, None] * (SW @ ctx.P)[:, None, :])


def r_ale_rhs(ctx, W, k: int) -> np.ndarray:
    """Right-hand sides of the coupling-term Lyapunov equations for component ``k``."""
    SW = W @ ctx.S
    ThSW = SW @ ctx.theta.T
    PSW = SW @ ctx.P
    MTh = ctx.M @ ctx.theta
    JMTh = ctx.ss.J @ MTh
    row = ctx.D[k][None, :] - (SW @ ctx.D[k])[:, None] * PSW
    X = ThSW[:, :, None] * (row + MTh[k])[:, None, :] - PSW[:, :, None] * JMTh[k][None, None, :]
    return _sym(X)


def second_moment_correction(ctx: PerturbationContext) -> np.ndarray:
    r""":math:`\tilde P = -4\int e^{-\frac12|S^Tw|_P^2}(\Psi Q(w) + i\sum_k\Upsilon_kR_k(w))dw` via batched Lyapunov solves."""
    n = ctx.ss.n
    acc = np.zeros((n, n), dtype=complex)
    for k, W, wts in _w_rules(ctx):
        if k is None:
            Q = solve_lyapunov(ctx.ss.A, q_ale_rhs(ctx, W))
            acc += np.tensordot(wts, Q, axes=(0, 0))
        else:
            R = solve_lyapunov(ctx.ss.A, r_ale_rhs(ctx, W, k))
            acc += 1j * np.tensordot(wts, R, axes=(0, 0))
    Pt = -4.0 * acc
    Pt = 0.5 * (Pt + Pt.T)
    return _real(Pt, "second_moment_correction", float(np.max(np.abs(Pt.real), initial=0.0)))


def moment_corrections(ctx: PerturbationContext) -> MomentCorrection:
    return MomentCorrection(mean_correction(ctx), second_moment_correction(ctx))


def apply_perturbation_operator(ctx: PerturbationContext, u, method: str = "auto"):
    r"""The perturbation operator applied to the invariant Gaussian QCF, at ``u`` of shape ``(..., n)``."""
    u = _as_points(u, ctx.ss.n)
    if ctx.variation.is_zero:
        return np.zeros(u.shape[:-1], dtype=complex)[()]
    out = _kernel(ctx, u, _half_norm(u, ctx.P), _resolve(ctx, method))
    return out[()]


def transient_qcf_correction(ctx: PerturbationContext, t: float, u, method: str = "auto"):
    r"""Correction at time ``t`` when starting from the nominal invariant state.

    Evaluates :math:`\int_0^t e^{\tau\mathfrak{A}}(\mathfrak{B}(\Phi_*))(u)\,d\tau`, applying the
    semigroup through the finite-horizon Gramian.  ``u`` has shape ``(n,)`` or ``(B, n)``.
    """
    if not (t >= 0 and math.isfinite(t)):
        raise InvalidInputError("t must be finite and nonnegative")
    u = _as_points(u, ctx.ss.n)
    single = u.ndim == 1
    U = u.reshape(-1, ctx.ss.n)
    out = np.zeros(U.shape[0], dtype=complex)
    if t > 0 and not ctx.variation.is_zero:
        method = _resolve(ctx, method)
        rule = time_rule_for(ctx.ss.A, t)
        E = matrix_exponential(ctx.ss.A, rule.nodes)
        sig = finite_gramian(ctx.ss, rule.nodes)
        per = rule.nodes.size * (ctx.w_order ** ctx.variation.d if method == "quadrature" else 1) * 8
        step = max(1, _CHUNK // per)
        for s in range(0, U.shape[0], step):
            Ub = U[s : s + step]
            V = np.einsum("bi,tij->btj", Ub, E)
            half = _half_norm(V, ctx.P) + 0.5 * np.einsum("bi,tij,bj->bt", Ub, sig, Ub)
            out[s : s + step] = _kernel(ctx, V, half, method) @ rule.weights
    return out[0] if single else out.reshape(u.shape[:-1])
