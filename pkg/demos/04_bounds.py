"""Sensitivity bounds for the two-mode oscillator and for the one-mode well."""

import warnings

from oqho import (
    PerturbationContext,
    SeededSampler,
    WeylVariation,
    ZeroStrength,
    sensitivity_report,
)

from oqho.cli import bundled_config

from _common import well_context

model2 = bundled_config("example2").model
ctx2 = PerturbationContext.from_model(model2, WeylVariation.from_indices([0, 1], 4, ZeroStrength(2)))

with warnings.catch_warnings(record=True) as caught:
    warnings.simplefilter("always")
    for label, ctx, theta in (("two-mode", ctx2, 50.0), ("one-mode well", well_context(), 20.0)):
        r = sensitivity_report(ctx, theta, SeededSampler(20180901), count=20_000)
        print(f"{label}, theta = {theta:g}")
        print(f"  lambda {r.lam:.4f}, tau {r.tau:.4f}")
        print("  mean sensitivity:", {k: round(v, 4) for k, v in r.mean_sensitivity.items()})
        print(f"  |||F||| <= {r.mc_norm_F.value:.4g}, |||G||| <= {r.mc_norm_G.value:.4g}")
        print(f"  strength norm {r.strength_norm:.4g}, HS bound {r.hs_bound:.4g}")
for w in caught:
    print("warning:", w.message)
