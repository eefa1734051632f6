"""Shared setup: the one-mode oscillator with a Gaussian well in the position variable."""

import numpy as np

from oqho import (
    GaussianMixture,
    OqhoModel,
    PerturbationContext,
    WeylVariation,
    ccr_position_momentum,
)

R = np.diag([1.5803, 0.7490])
M = np.array([[-0.1765, -1.3320], [0.7914, -2.3299]])
WELL = {"alpha": -146.0546, "gamma": [3.1641], "Lambda": [[0.1589]]}


def one_mode_model():
    return OqhoModel(ccr_position_momentum(2), R, M)


def well_context():
    model = one_mode_model()
    var = WeylVariation.from_indices([0], model.n, GaussianMixture((WELL,)))
    return PerturbationContext.from_model(model, var)
