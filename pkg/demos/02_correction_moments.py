"""First-order correction caused by a Gaussian well: mean shift, covariance shift, QCF samples."""

import numpy as np

from oqho import moment_corrections, qcf_correction, qcf_correction_gaussian_bump
from oqho.weyl import potential_hessian_at_center

from _common import well_context

ctx = well_context()
term = ctx.variation.psi.terms[0]
print(f"well stiffness at its centre: {potential_hessian_at_center(term).item():.2f}")

mc = moment_corrections(ctx)
print("mean shift    mu~ =", np.round(mc.mu_tilde, 5))
print("2nd moment    P~  =\n", np.round(mc.P_tilde, 5))

for u in [(0.5, 0.5), (1.0, -0.3), (-2.0, 1.0)]:
    generic = qcf_correction(ctx, u, "quadrature")
    closed = qcf_correction_gaussian_bump(ctx, u)
    print(f"u = {u}:  {generic:.6f}  (closed form differs by {abs(generic - closed):.1e})")
