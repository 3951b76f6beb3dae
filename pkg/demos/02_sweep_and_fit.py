"""
A small sweep and a finite-size fit
===================================

Estimate failure rates on a short grid, then fit the scaling form and
compare with the curve-crossing and slope estimates. Sample counts are
kept low so the script finishes in about a minute; the numbers are noisy.
"""
from __future__ import annotations

import tempfile
import warnings
from pathlib import Path

from tzero.montecarlo import SweepPlan, run_sweep
from tzero.scaling import crossing_estimate, fit_quadratic, slope_exponent

# %%
plan = SweepPlan.from_grid("rbim2d", [8, 12, 16], "0.095:0.113:0.003", 2000, master_seed=11)
print(plan.size_estimate())

out_dir = Path(tempfile.mkdtemp(prefix="tzero-demo-"))
points = run_sweep(plan, out_dir)
print(f"wrote {out_dir / 'points.csv'}")
for pt in points:
    print(f"L={pt.L:3d} p={pt.p:.3f} pfail={pt.pfail:.3f} +- {pt.stderr:.3f}")

# %%
# All sizes here are even, so the parity selection does not pool.
fit = fit_quadratic(points, "even")
print(f"p_c0 = {fit.p_c0:.4f} +- {fit.error('p_c0'):.4f}")
print(f"nu0  = {fit.nu0:.3f} +- {fit.error('nu0'):.3f}")
print(f"chi2/dof = {fit.chi2:.1f}/{fit.dof}", fit.flags or "")

# %%
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    cross = crossing_estimate(points)
    slope = slope_exponent(points, fit.p_c0)
print("pairwise crossings:", cross.crossings)
print(f"slope exponent nu0 = {slope.nu0:.3f}")
