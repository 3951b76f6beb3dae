"""
Checking the fitter on synthetic data
=====================================

Generate failure curves from known parameters, add binomial-sized noise
and confirm the fitter returns the inputs within its quoted errors.
"""
from __future__ import annotations

import numpy as np

from tzero.scaling import fit_corrected, fit_quadratic, synthetic_points

truth = dict(p_c0=0.103, nu0=1.46, A=0.3, B=5.0, C=8.0)
ps = [round(0.095 + 0.002 * i, 6) for i in range(11)]
sizes = [4, 6, 8, 12, 16, 24]

# %%
exact = synthetic_points("rbim2d", sizes, ps, **truth)
fit = fit_quadratic(exact, "even")
for name in truth:
    print(f"{name:5s} truth {truth[name]:8.4f}  fit {fit[name]:8.4f}")

# %%
noisy = synthetic_points("rbim2d", sizes, ps, stderr=0.004, noise_rng=np.random.default_rng(1), **truth)
fit = fit_quadratic(noisy, "even", bootstrap=100, seed=1)
for name in ("p_c0", "nu0"):
    pull = (fit[name] - truth[name]) / fit.error(name)
    print(f"{name}: {fit[name]:.4f} +- {fit.error(name):.4f} (pull {pull:+.2f})")

# %%
# With a leading correction built in, the corrected form should find it.
bent = synthetic_points("rbim2d", sizes, ps, corrections={"even": (0.165, 0.71)}, **truth)
cfit = fit_corrected(bent, "even")
print({k: round(cfit[k], 4) for k in cfit.names})
