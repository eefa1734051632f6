"""Build the state space of a one-mode oscillator and find its invariant Gaussian state."""

import numpy as np

from oqho import (
    build_state_space,
    check_physical_realizability,
    heisenberg_residual,
    invariant_state,
    is_hurwitz,
)

from _common import one_mode_model

model = one_mode_model()
ss = build_state_space(model)
print("A =\n", np.round(ss.A, 4))
print("eigenvalues of A:", np.round(np.linalg.eigvals(ss.A), 4))

stable, abscissa = is_hurwitz(ss.A)
print(f"Hurwitz: {stable} (spectral abscissa {abscissa:.4f})")

rep = check_physical_realizability(ss, model.theta)
print(f"realizability residuals: drift {rep.drift_residual:.1e}, coupling {rep.coupling_residual:.1e}")

state = invariant_state(ss)
print("invariant covariance P =\n", np.round(state.sigma, 4))
print(f"uncertainty margin min eig(P + i Theta) = {heisenberg_residual(state.sigma, model.theta):.4f}")
