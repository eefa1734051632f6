"""Transient correction after switching on the well at t = 0, converging to the steady state."""

import numpy as np

from oqho import qcf_correction, transient_qcf_correction

from _common import well_context

ctx = well_context()
u = np.array([[0.5, 0.5], [1.0, -0.3]])
steady = qcf_correction(ctx, u)
for t in (0.1, 0.5, 1.0, 2.0, 5.0):
    gap = np.max(np.abs(transient_qcf_correction(ctx, t, u) - steady))
    print(f"t = {t:>4}: distance to steady state {gap:.3e}")
