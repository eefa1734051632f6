import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from oqho import (
    DivergenceError,
    GaussianMixture,
    InvalidInputError,
    UnsupportedRepresentationError,
    WeylVariation,
    ZeroStrength,
)
from oqho.weyl import (
    GaussianTerm,
    TabulatedStrength,
    eval_psi,
    eval_upsilon,
    l1_bound,
    potential_gradient,
    potential_hessian_at_center,
    potential_value,
    weighted_norm,
)


rng = np.random.default_rng(123)


def two_term_mixture():
    return GaussianMixture(
        (
            {"alpha": 1.3, "gamma": [0.4, -0.2], "Lambda": [[1.2, 0.3], [0.3, 0.8]]},
            {"alpha": -0.6, "gamma": [-1.0, 0.5], "Lambda": [[0.5, 0.0], [0.0, 2.0]]},
        )
    )


class TestEvaluation:
    def test_zero(self):
        var = WeylVariation.from_indices([0], 2, ZeroStrength(1))
        assert np.array_equal(eval_psi(var, rng.normal(size=(5, 1))), np.zeros(5))
        assert eval_upsilon(var, rng.normal(size=(5, 1)), m=2).shape == (5, 2)
        assert not eval_upsilon(var, rng.normal(size=(5, 1)), m=2).any()

    def test_well_at_origin(self, well):
        ref = -146.0546 * math.sqrt(0.1589) / math.sqrt(2 * math.pi)
        assert abs(well(np.array([0.0])) - ref) <= 1e-12
        assert abs(ref + 23.226) <= 1e-3

    def test_closed_form(self):
        f = two_term_mixture()
        w = rng.normal(size=2)
        ref = 0
        for t in f.terms:
            ref += t.alpha * math.sqrt(np.linalg.det(t.Lambda)) / (2 * math.pi) * np.exp(
                -1j * w @ t.gamma - 0.5 * w @ t.Lambda @ w
            )
        assert abs(f(w) - ref) <= 1e-15

    def test_hermitian(self, well):
        var = WeylVariation.from_indices([0, 1], 4, two_term_mixture(), (ZeroStrength(2), two_term_mixture()))
        w = rng.normal(size=(100, 2)) * 2
        assert np.max(np.abs(eval_psi(var, -w) - np.conj(eval_psi(var, w)))) <= 1e-15
        up = eval_upsilon(var, w, m=4)
        assert np.max(np.abs(eval_upsilon(var, -w, m=4) - np.conj(up))) <= 1e-15
        assert not up[:, 0].any() and up[:, 1].any() and not up[:, 2:].any()

    def test_upsilon_too_long(self, well):
        var = WeylVariation.from_indices([0], 2, well, (well, well, well))
        with pytest.raises(InvalidInputError):
            var.upsilon_list(2)


class TestValidation:
    def test_selection_matrix(self, well):
        with pytest.raises(InvalidInputError):
            WeylVariation(np.array([[0.5, 0.5]]), well)
        with pytest.raises(InvalidInputError):
            WeylVariation(np.array([[1.0, 0], [1.0, 0]]), GaussianMixture(({"alpha": 1, "gamma": [0, 0], "Lambda": np.eye(2)},)))

    def test_dimension_mismatch(self, well):
        with pytest.raises(InvalidInputError):
            WeylVariation.from_indices([0, 1], 4, well)

    def test_lambda_pd(self):
        with pytest.raises(InvalidInputError):
            GaussianTerm(1.0, [0.0], [[-1.0]])
        with pytest.raises(InvalidInputError):
            GaussianTerm(1.0, [0.0, 0.0], [[1.0, 0.2], [0.0, 1.0]])

    def test_empty_mixture(self):
        with pytest.raises(InvalidInputError):
            GaussianMixture(())


class TestWeightedNorm:
    def test_zero(self):
        assert weighted_norm(ZeroStrength(2), 0.5) == 0.0
        assert l1_bound(ZeroStrength(1), 1.0) == 0.0

    def test_single_term_closed_form(self, well):
        a, L = -146.0546, 0.1589
        # |Psi|^2 = a^2 L / (2 pi) exp(-L w^2) integrates to a^2 sqrt(L) / (2 sqrt(pi))
        exact = math.sqrt(a * a * math.sqrt(L) / (2 * math.sqrt(math.pi)))
        assert abs(weighted_norm(well, 0.0) - exact) <= 1e-10 * exact

    @pytest.mark.parametrize("theta", [0.0, 0.05, 0.12])
    def test_against_quadrature_1d(self, well, theta):
        # |Psi|^2 e^{theta w^2} < 1e-30 beyond |w| = 60 for these theta
        ref, _ = quad(
            lambda w: abs(well(np.array([w]))) ** 2 * math.exp(theta * w * w), -60, 60, epsabs=1e-13, limit=200
        )
        assert abs(weighted_norm(well, theta) - math.sqrt(ref)) <= 1e-8 * math.sqrt(ref)

    def test_against_grid_2d(self):
        f = two_term_mixture()
        ax = np.linspace(-14, 14, 801)
        W = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
        dx = ax[1] - ax[0]
        for theta in (0.0, 0.2):
            grid = math.sqrt(np.sum(np.abs(f(W)) ** 2 * np.exp(theta * np.sum(W**2, -1))) * dx * dx)
            assert abs(weighted_norm(f, theta) - grid) <= 1e-8 * grid

    def test_divergence(self, well):
        with pytest.raises(DivergenceError):
            weighted_norm(well, 0.1589)
        with pytest.raises(DivergenceError):
            weighted_norm(well, 20.0)

    def test_l1_dominates(self, well):
        direct, _ = quad(lambda w: abs(well(np.array([w]))), -np.inf, np.inf)
        for theta in (0.01, 0.05, 0.1, 0.15):
            assert l1_bound(well, theta) >= direct
        f = two_term_mixture()
        ax = np.linspace(-14, 14, 801)
        W = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
        direct2 = np.sum(np.abs(f(W))) * (ax[1] - ax[0]) ** 2
        assert l1_bound(f, 0.3) >= direct2

    def test_homogeneity(self, well):
        assert abs(l1_bound(well.scaled(2.0), 0.1) - 2 * l1_bound(well, 0.1)) <= 1e-12 * l1_bound(well, 0.1)


class TestPotential:
    def test_peak(self, well):
        var = WeylVariation.from_indices([0], 2, well)
        assert abs(potential_value(var, np.array([3.1641])) + 146.0546) <= 1e-12
        assert np.allclose(potential_gradient(var, np.array([3.1641])), 0.0, atol=1e-15)

    def test_fourier_inversion(self):
        f = two_term_mixture()
        var = WeylVariation.from_indices([0, 1], 2, f)
        ax = np.linspace(-12, 12, 481)
        V = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
        psi = f(V)
        dv = (ax[1] - ax[0]) ** 2
        for q in rng.normal(size=(20, 2)) * 1.5:
            integral = np.sum(psi * np.exp(1j * V @ q)) * dv
            assert abs(integral.imag) <= 1e-12
            assert abs(integral.real - potential_value(var, q)) <= 1e-8

    def test_gradient_fd(self, well):
        var = WeylVariation.from_indices([0], 2, well)
        h = 1e-5
        q = np.array([0.0])
        fd = (potential_value(var, q + h) - potential_value(var, q - h)) / (2 * h)
        assert abs(potential_gradient(var, q)[0] - fd) <= 1e-6
        f = two_term_mixture()
        var2 = WeylVariation.from_indices([0, 1], 2, f)
        q = np.array([0.3, -0.7])
        fd = [(potential_value(var2, q + h * e) - potential_value(var2, q - h * e)) / (2 * h) for e in np.eye(2)]
        assert np.allclose(potential_gradient(var2, q), fd, atol=1e-8)

    def test_stiffness(self, well):
        k = potential_hessian_at_center(well.terms[0])[0, 0]
        # the printed well parameters are rounded, so compare at the printed precision
        assert abs(k - 919.0101) / 919.0101 <= 1e-3
        var = WeylVariation.from_indices([0], 2, well)
        h = 1e-4
        c = np.array([3.1641])
        fd = (potential_value(var, c + h) - 2 * potential_value(var, c) + potential_value(var, c - h)) / h**2
        assert abs(fd - k) <= 1e-5 * k

    def test_tabulated_unsupported(self):
        ax = np.linspace(-2, 2, 5)
        var = WeylVariation.from_indices([0], 2, TabulatedStrength([ax], np.exp(-(ax**2))))
        with pytest.raises(UnsupportedRepresentationError):
            potential_value(var, np.array([0.0]))


class TestTabulated:
    def test_symmetrization_warns(self):
        ax = np.linspace(-1, 1, 5)
        with pytest.warns(UserWarning, match="Hermitian"):
            f = TabulatedStrength([ax], ax + 0j)
        assert np.allclose(f.values, 0)

    def test_hermitian_input_silent(self):
        ax = np.linspace(-1, 1, 5)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            f = TabulatedStrength([ax], np.exp(-(ax**2)) * (1 + 0j) + 1j * ax)
        w = np.array([[0.3], [-0.3]])
        v = f(w)
        assert abs(v[0] - np.conj(v[1])) <= 1e-15

    def test_interpolation_and_outside(self):
        ax = np.linspace(-2, 2, 9)
        f = TabulatedStrength([ax], 1 - np.abs(ax) / 2 + 0j)
        assert abs(f(np.array([0.25])) - 0.875) <= 1e-15
        assert f(np.array([5.0])) == 0

    def test_asymmetric_grid_rejected(self):
        with pytest.raises(InvalidInputError):
            TabulatedStrength([np.linspace(-1, 2, 5)], np.ones(5))

    def test_norm_matches_mixture(self, well):
        ax = np.linspace(-30, 30, 3001)
        tab = TabulatedStrength([ax], well(ax[:, None]))
        assert abs(weighted_norm(tab, 0.05) - weighted_norm(well, 0.05)) <= 1e-6 * weighted_norm(well, 0.05)

    def test_from_csv(self, tmp_path):
        ax = np.linspace(-1, 1, 3)
        p = tmp_path / "f.csv"
        rows = ["w_1,w_2,re,im"]
        for a in ax:
            for b in ax:
                rows.append(f"{a},{b},{math.exp(-a * a - b * b)},0")
        p.write_text("\n".join(rows) + "\n")
        f = TabulatedStrength.from_csv(p)
        assert f.d == 2 and abs(f(np.array([0.0, 0.0])) - 1) <= 1e-15

    def test_from_csv_bad_header(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("x,re,im\n0,1,0\n")
        with pytest.raises(InvalidInputError):
            TabulatedStrength.from_csv(p)
