"""
One decoding trial, step by step
================================

Draw a bond-error chain on a small torus, match its defects, build the
recovery chain and read off the homology class of the combined cycle.
"""
from __future__ import annotations

import numpy as np

from tzero.decoder import decode_chain
from tzero.disorder import RngPolicy, defects, generate_sample, model_spec

# %%
# A 6x6 torus carrying the 2D random-bond model at p = 0.12.
spec = model_spec("rbim2d", 6)
rng = RngPolicy(2026)
sample = generate_sample(spec, "rbim2d", 0.12, sample_index=0, rng=rng)
print(f"{len(sample.error_chain)} flipped bonds out of {spec.n_bonds}")

# %%
# Defects are the sites touched by an odd number of flipped bonds.
ds = defects(sample)
print("defects:", ds.coords().tolist())

# %%
# Decode. The record keeps every intermediate object.
out = decode_chain(sample.error_chain, tie_seed=rng.tie_seed("rbim2d", 6, 0.12, 0), keep_record=True)
rec = out.record
print("matched pairs:", rec["matching"]["pairs"])
print("matching weight:", rec["matching"]["total_weight"])
print(f"|E| = {out.weights[0]}, |E'| = {out.weights[1]}")
print("winding of E + E':", rec["cycle_class"], "->", "success" if out.success else "failure")

# %%
# Defect positions on the torus (row-major, axis 0 down).
grid = np.full((spec.L, spec.L), ".", dtype=object)
for s in ds.sites:
    grid[spec.site_coord(s)] = "D"
print("\n".join(" ".join(row) for row in grid))
