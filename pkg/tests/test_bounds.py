import dataclasses
import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from oqho import (
    DegeneracyError,
    GaussianMixture,
    GridSpec,
    InvalidInputError,
    SeededSampler,
    StabilityError,
    WeylVariation,
    ZeroStrength,
    bound_F,
    bound_G,
    build_state_space,
    find_lyapunov_pair,
    hs_qcf_bound,
    influence_F,
    influence_G,
    mc_norm_bounds,
    mean_sensitivity_norm,
    sample_qcf_correction,
    sensitivity_report,
    tau_factor,
)
from oqho.bounds import LyapunovPair, divergence_metric, strength_norm
from oqho.model import StateSpace

rng = np.random.default_rng(5)


@pytest.fixture(scope="module")
def pair1(ss1):
    return find_lyapunov_pair(ss1)


@pytest.fixture(scope="module")
def pair2(ss2):
    return find_lyapunov_pair(ss2)


def grad_F_at_origin(ctx, w, h=1e-5):
    n = ctx.ss.n
    return np.array([(influence_F(ctx, h * e, w) - influence_F(ctx, -h * e, w)) / (2 * h) for e in np.eye(n)])


class TestLyapunovPair:
    def test_scalar_case(self):
        ss = StateSpace(A=-np.eye(2), B=np.eye(2), C=np.eye(2), J=np.eye(2), omega=np.eye(2))
        pair = find_lyapunov_pair(ss)
        assert pair.lam == pytest.approx(0.9)
        assert np.allclose(pair.Gamma, 5 * np.eye(2), atol=1e-12)

    def test_example1(self, ss1, pair1):
        assert abs(pair1.lam - 0.9 * 1.4654) <= 1e-4
        assert abs(pair1.lam - 1.3189) <= 1e-3
        A, G = ss1.A, pair1.Gamma
        assert np.min(np.linalg.eigvalsh(G)) > 0
        assert np.max(np.linalg.eigvalsh(A @ G + G @ A.T + 2 * pair1.lam * G)) <= 1e-12

    @pytest.mark.parametrize("which", ["1", "2"])
    def test_contraction(self, which, request):
        ss = request.getfixturevalue("ss" + which)
        pair = request.getfixturevalue("pair" + which)
        for t in (0.1, 0.5, 1.0, 2.0, 5.0):
            assert pair.contraction(ss.A, t) <= math.exp(-pair.lam * t) * (1 + 1e-10)

    def test_errors(self, ss1, model1):
        with pytest.raises(InvalidInputError):
            find_lyapunov_pair(ss1, fraction=1.0)
        unstable = build_state_space(type(model1)(model1.theta, model1.R, np.zeros((2, 2))))
        with pytest.raises(StabilityError):
            find_lyapunov_pair(unstable)


class TestTau:
    def test_identity_case(self, pair1):
        P = np.array([[0.0, 0.5], [-0.5, 0.0]])
        assert tau_factor(pair1, P, P, np.eye(2)) == pytest.approx(1.0, abs=1e-12)

    def test_scalar_reduction(self, ctx1, pair1):
        Gi = pair1.Gamma_inv
        ts, ps = ctx1.theta @ ctx1.S.T, ctx1.P @ ctx1.S.T
        ref = math.sqrt((ts.T @ Gi @ ts).item() / (ps.T @ Gi @ ps).item())
        assert tau_factor(pair1, ctx1.theta, ctx1.P, ctx1.S) == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("which", ["1", "2"])
    def test_random_maximization(self, which, request):
        ctx = request.getfixturevalue("ctx" + which)
        pair = request.getfixturevalue("pair" + which)
        Gi = pair.Gamma_inv
        W = rng.normal(size=(10_000, ctx.S.shape[0]))
        W /= np.linalg.norm(W, axis=1, keepdims=True)
        a = W @ ctx.S @ ctx.theta.T
        b = W @ ctx.S @ ctx.P
        ratios = np.sqrt(np.einsum("ki,ij,kj->k", a, Gi, a) / np.einsum("ki,ij,kj->k", b, Gi, b))
        tau = tau_factor(pair, ctx.theta, ctx.P, ctx.S)
        assert ratios.max() <= tau + 1e-12
        assert abs(ratios.max() - tau) <= 1e-6

    def test_degenerate(self, pair1):
        with pytest.raises(DegeneracyError):
            tau_factor(pair1, np.eye(2), np.zeros((2, 2)), np.eye(2)[:1])


class TestPointwiseBounds:
    @pytest.mark.parametrize("which", ["1", "2"])
    def test_domination(self, which, request):
        ctx = request.getfixturevalue("ctx" + which)
        pair = request.getfixturevalue("pair" + which)
        d = ctx.S.shape[0]
        violations = 0
        for _ in range(200):
            u = rng.normal(size=ctx.ss.n) * rng.uniform(0.1, 3)
            w = rng.normal(size=d) * rng.uniform(0.1, 3)
            violations += abs(influence_F(ctx, u, w)) > bound_F(pair, ctx, u, w)
            violations += np.linalg.norm(influence_G(ctx, u, w)) > bound_G(pair, ctx, u, w)
        assert violations == 0

    def test_zero_arguments(self, ctx1, pair1):
        w = np.array([0.8])
        assert bound_F(pair1, ctx1, np.zeros(2), w) == 0
        assert bound_F(pair1, ctx1, np.array([0.4, 0.2]), np.zeros(1)) == 0
        assert bound_G(pair1, ctx1, np.zeros(2), w) == 0

    def test_zero_coupling(self, ctx1, pair1):
        ctx0 = dataclasses.replace(ctx1, M=np.zeros((2, 2)), D=np.zeros((2, 2)))
        assert bound_G(pair1, ctx0, np.array([0.4, 0.2]), np.array([0.6])) == 0

    def test_w_zero_limit(self, ctx1, pair1):
        u = np.array([0.4, -0.7])
        at0 = bound_G(pair1, ctx1, u, np.zeros(1))
        near = bound_G(pair1, ctx1, u, np.array([1e-7]))
        assert at0 > 0 and abs(at0 - near) <= 1e-5 * at0

    def test_monotone_along_ray(self, ctx1, pair1):
        w = np.array([0.9])
        direction = np.array([0.6, -0.8])
        s = np.linspace(0.01, 5, 50)
        U = s[:, None] * direction
        g = np.exp(0.5 * np.einsum("ki,ij,kj->k", U, ctx1.P, U) + 0.5 * ctx1.P[0, 0] * 0.81)
        scaled = bound_F(pair1, ctx1, U, w) * g
        assert np.all(np.diff(scaled) >= 0)

    def test_broadcasting(self, ctx1, pair1):
        U = rng.normal(size=(7, 2))
        W = rng.normal(size=(7, 1))
        out = bound_F(pair1, ctx1, U, W)
        assert out.shape == (7,)
        assert out[3] == pytest.approx(bound_F(pair1, ctx1, U[3], W[3]), rel=1e-14)


class TestMeanSensitivity:
    def test_monotone_example2(self, ctx2):
        vals = [mean_sensitivity_norm(ctx2, t) for t in (0.5, 1.0, 2.0, 4.0)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))
        assert mean_sensitivity_norm(ctx2, 1e8) < 1e-3 * vals[0]

    def test_monte_carlo_example2(self, ctx2):
        theta = 1.0
        d = 2
        sampler_rng = np.random.default_rng(17)
        W = sampler_rng.normal(scale=math.sqrt(1 / (2 * theta)), size=(1500, d))
        samples = np.array([np.sum(grad_F_at_origin(ctx2, w) ** 2) for w in W]) * (math.pi / theta) ** (d / 2)
        est = math.sqrt(samples.mean())
        se = samples.std(ddof=1) / math.sqrt(samples.size) / (2 * est)
        assert abs(mean_sensitivity_norm(ctx2, theta) - est) <= 3 * se

    def test_one_dimensional_quadrature(self, ctx1):
        theta = 0.7

        def integrand(w):
            return float(np.sum(grad_F_at_origin(ctx1, np.array([w])) ** 2)) * math.exp(-theta * w * w)

        ref, _ = quad(integrand, -12, 12, epsabs=1e-13, epsrel=1e-11)
        assert abs(mean_sensitivity_norm(ctx1, theta) - math.sqrt(ref)) <= 1e-7 * math.sqrt(ref)

    def test_theta_zero(self, ctx1):
        assert mean_sensitivity_norm(ctx1, 0.0) > mean_sensitivity_norm(ctx1, 0.5)
        with pytest.raises(InvalidInputError):
            mean_sensitivity_norm(ctx1, -1.0)


class TestMonteCarlo:
    def test_determinism(self, ctx1, pair1):
        a = mc_norm_bounds(pair1, ctx1, 50.0, SeededSampler(3), 5000)
        b = mc_norm_bounds(pair1, ctx1, 50.0, SeededSampler(3), 5000)
        c = mc_norm_bounds(pair1, ctx1, 50.0, SeededSampler(4), 5000)
        assert a == b
        assert a[0].value != c[0].value

    def test_sqrt_n_law(self, ctx2, pair2):
        # the squared estimator has finite variance only for metric < 1/4; a wide margin keeps the
        # standard-error estimate itself stable against the heavy tail
        theta = 400.0
        assert divergence_metric(pair2, ctx2, theta) < 0.05
        n = 100_000
        se1 = mc_norm_bounds(pair2, ctx2, theta, SeededSampler(11), n)[0].stderr
        se2 = mc_norm_bounds(pair2, ctx2, theta, SeededSampler(12), 2 * n)[0].stderr
        assert 0.6 <= se2 / se1 <= 0.85

    def test_zero_coupling(self, ctx1, pair1):
        ctx0 = dataclasses.replace(ctx1, M=np.zeros((2, 2)), D=np.zeros((2, 2)))
        g = mc_norm_bounds(pair1, ctx0, 50.0, SeededSampler(1), 1000)[1]
        assert g.value == 0.0 and g.stderr == 0.0

    def test_divergence_reports_inf(self, ctx1, pair1):
        assert divergence_metric(pair1, ctx1, 1.0) >= 1
        with pytest.warns(UserWarning, match="diverges"):
            f, g = mc_norm_bounds(pair1, ctx1, 1.0, SeededSampler(20180901), 100_000)
        assert math.isinf(f.value) and f.diverging and math.isinf(g.value)

    def test_bounds_grid_quadrature(self, ctx1, pair1):
        """The MC bounds must exceed a coarse-grid quadrature of the weighted norms themselves."""
        theta = 50.0
        f_est, g_est = mc_norm_bounds(pair1, ctx1, theta, SeededSampler(20180901), 100_000)
        assert not f_est.diverging
        s = np.sqrt(np.diag(np.linalg.inv(ctx1.P)))
        u1 = np.linspace(-5 * s[0], 5 * s[0], 21)
        u2 = np.linspace(-5 * s[1], 5 * s[1], 21)
        ws = np.linspace(-0.6, 0.6, 25)
        f2 = g2 = 0.0
        for a in u1:
            for b in u2:
                u = np.array([a, b])
                for w in ws:
                    wt = math.exp(-theta * w * w)
                    f2 += influence_F(ctx1, u, np.array([w])) ** 2 * wt
                    g2 += np.sum(np.abs(influence_G(ctx1, u, np.array([w]))) ** 2) * wt
        cell = (u1[1] - u1[0]) * (u2[1] - u2[0]) * (ws[1] - ws[0])
        f_norm, g_norm = math.sqrt(f2 * cell), math.sqrt(g2 * cell)
        assert f_norm > 0 and g_norm > 0
        assert f_est.value - 3 * f_est.stderr >= f_norm
        assert g_est.value - 3 * g_est.stderr >= g_norm


class TestHilbertSchmidt:
    def test_zero_strength(self):
        assert hs_qcf_bound(3.0, 4.0, 0.0) == 0.0
        assert hs_qcf_bound(3.0, 4.0, 2.0) == pytest.approx(10.0)

    def test_homogeneity(self, ctx1):
        wide = GaussianMixture(({"alpha": -5.0, "gamma": [1.0], "Lambda": [[30.0]]},))
        c = ctx1.with_variation(WeylVariation.from_indices([0], 2, wide))
        c2 = ctx1.with_variation(c.variation.scaled(2.0))
        assert hs_qcf_bound(1.0, 2.0, strength_norm(c2, 20.0)) == pytest.approx(
            2 * hs_qcf_bound(1.0, 2.0, strength_norm(c, 20.0)), rel=1e-12
        )

    def test_bound_exceeds_grid_norm(self, ctx1):
        wide = GaussianMixture(({"alpha": -5.0, "gamma": [1.0], "Lambda": [[30.0]]},))
        ups = GaussianMixture(({"alpha": 0.8, "gamma": [0.2], "Lambda": [[25.0]]},))
        c = ctx1.with_variation(WeylVariation.from_indices([0], 2, wide, (ups,)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = sensitivity_report(c, 20.0, SeededSampler(20180901), count=100_000)
        assert math.isfinite(rep.hs_bound)
        field = sample_qcf_correction(c, GridSpec.default_for(c.P, count=64))
        l2 = math.sqrt(np.sum(np.abs(field.values) ** 2) * field.cell())
        assert l2 > 0
        assert rep.hs_bound >= l2
        assert rep.qpdf_hs_bound == pytest.approx(rep.hs_bound / (2 * math.pi))

    def test_example_well_is_infinite(self, ctx1):
        with warnings.catch_warnings(record=True):
            warnings.simplefilter("always")
            rep = sensitivity_report(ctx1, 20.0, SeededSampler(20180901), count=10_000)
        assert math.isinf(rep.strength_norm) and math.isinf(rep.hs_bound)
        assert any("diverges" in m for m in rep.warnings)

    def test_report_fields(self, ctx2):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = sensitivity_report(ctx2, 50.0, SeededSampler(7), count=2000)
        d = rep.to_dict()
        assert d["sample_count"] == 2000 and d["seed"] == 7
        assert set(d["mean_sensitivity"]) == {0.5, 1.0, 2.0, 4.0}
        assert d["hs_bound"] == 0.0
        for key in ("lam", "tau", "strength_norm"):
            assert d[key] >= 0


def test_pair_is_frozen(pair1):
    with pytest.raises(dataclasses.FrozenInstanceError):
        pair1.lam = 1.0
    assert isinstance(pair1, LyapunovPair)


def test_unused_strength_dimension(ctx2):
    # the zero strength in the two-mode context has zero weighted norm at any theta
    assert strength_norm(ctx2, 3.0) == 0.0
    assert isinstance(ctx2.variation.psi, ZeroStrength)
