"""Sample the QCF correction on a grid, invert it to a phase-space density and take a marginal."""

import numpy as np

from oqho import GridSpec, field_moment, marginal, qpdf_from_qcf, sample_qcf_correction

from _common import well_context

ctx = well_context()
grid = GridSpec.default_for(ctx.P, count=256)
qcf = sample_qcf_correction(ctx, grid)
rho = qpdf_from_qcf(qcf)

print(f"grid {grid.counts}, spacings {np.round(grid.spacings, 4)}")
print(f"total mass of the correction: {field_moment(rho, [0, 0]):.2e}")
print(f"first moments: {field_moment(rho, [1, 0]):.5f}, {field_moment(rho, [0, 1]):.5f}")

q = marginal(rho, [0])
i = int(np.argmax(np.abs(q.values)))
print(f"position marginal: largest |value| {abs(q.values[i]):.4f} at index {i} of {q.values.size}")
