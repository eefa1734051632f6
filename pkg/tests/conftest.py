"""Shared models for the test suite: the one-mode and two-mode reference oscillators."""

import numpy as np
import pytest

from oqho import (
    GaussianMixture,
    OqhoModel,
    PerturbationContext,
    WeylVariation,
    ZeroStrength,
    build_state_space,
    ccr_position_momentum,
)

R1 = np.diag([1.5803, 0.7490])
M1 = np.array([[-0.1765, -1.3320], [0.7914, -2.3299]])

R2 = np.array(
    [
        [2.5542, -2.3651, 0.0, 0.0],
        [-2.3651, 2.6995, 0.0, 0.0],
        [0.0, 0.0, 0.9306, -1.4504],
        [0.0, 0.0, -1.4504, 7.4900],
    ]
)
M2 = np.array(
    [
        [0.3021, 1.1784, 0.0313, -1.4647],
        [0.0131, -0.2981, 1.5002, 0.5361],
        [-0.0110, -0.0418, -1.1125, 1.5380],
        [-0.7233, -1.0734, 0.7212, 0.1241],
    ]
)

WELL = {"alpha": -146.0546, "gamma": [3.1641], "Lambda": [[0.1589]]}
PROBES = [(0.5, 0.5), (1.0, -0.3), (-2.0, 1.0), (3.0, 0.5), (0.1, 2.0)]


def random_stable_model(rng, n_modes=1, m=None):
    """Random model whose drift is Hurwitz (rejection sampling)."""
    n = 2 * n_modes
    m = n if m is None else m
    while True:
        X = rng.normal(size=(n, n))
        R = 0.5 * (X + X.T)
        M = rng.normal(size=(m, n))
        model = OqhoModel(ccr_position_momentum(n), R, M)
        if np.max(np.linalg.eigvals(build_state_space(model).A).real) < -0.05:
            return model


@pytest.fixture(scope="session")
def model1():
    return OqhoModel(ccr_position_momentum(2), R1, M1)


@pytest.fixture(scope="session")
def model2():
    return OqhoModel(ccr_position_momentum(4), R2, M2)


@pytest.fixture(scope="session")
def ss1(model1):
    return build_state_space(model1)


@pytest.fixture(scope="session")
def ss2(model2):
    return build_state_space(model2)


@pytest.fixture(scope="session")
def well():
    return GaussianMixture((WELL,))


@pytest.fixture(scope="session")
def ctx1(model1, well):
    return PerturbationContext.from_model(model1, WeylVariation.from_indices([0], 2, well))


@pytest.fixture(scope="session")
def ctx2(model2):
    return PerturbationContext.from_model(model2, WeylVariation.from_indices([0, 1], 4, ZeroStrength(2)))


@pytest.fixture(scope="session")
def ctx1_upsilon(ctx1):
    ups = GaussianMixture(({"alpha": 0.7, "gamma": [0.5], "Lambda": [[0.8]]},))
    return ctx1.with_variation(WeylVariation.from_indices([1], 2, ZeroStrength(1), (ZeroStrength(1), ups)))


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE = []


def record_acceptance(number, title, ok, detail):
    ACCEPTANCE.append((number, title, bool(ok), detail))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
