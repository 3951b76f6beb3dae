"""Recovery chains, the cycle D = E + E' and trial success/failure."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .disorder import RngPolicy, model_spec, p_to_micro, P_SCALE, sample_error_mask, stream
from .lattice import (
    Chain,
    ContractError,
    CycleClass,
    DefectSet,
    LatticeSpec,
    boundary_mask,
    winding_of_mask,
)
from .matcher import Matching, match_complete, match_lattice, min_weight_perfect_matching

_STREAM_WRAP = 2


@njit(cache=True)
def _xor_geodesics(mask, a, b, coins, order, L, dim):
    """XOR one axis-ordered geodesic per pair into ``mask``; returns bond count.

    ``coins[k, axis]`` picks the wrap direction when the displacement along
    ``axis`` is exactly L/2 (1 = positive direction).
    """
    n_bonds = 0
    pos = np.empty(dim, dtype=np.int64)
    for k in range(a.shape[0]):
        for ax in range(dim):
            pos[ax] = a[k, ax]
        for oi in range(dim):
            ax = order[oi]
            delta = (b[k, ax] - a[k, ax]) % L
            if 2 * delta < L:
                step, count = 1, delta
            elif 2 * delta > L:
                step, count = -1, L - delta
            elif coins[k, ax]:
                step, count = 1, delta
            else:
                step, count = -1, delta
            for _ in range(count):
                if step < 0:
                    pos[ax] = (pos[ax] - 1) % L
                site = 0
                for c in range(dim):
                    site = site * L + pos[c]
                mask[site * dim + ax] ^= True
                if step > 0:
                    pos[ax] = (pos[ax] + 1) % L
                n_bonds += 1
    return n_bonds


def wrap_coins(tie_seed: int, n_pairs: int, dim: int) -> np.ndarray:
    return stream(tie_seed, _STREAM_WRAP).integers(0, 2, size=(n_pairs, dim), dtype=np.int64)


def recovery_mask(
    pairs: np.ndarray, spec: LatticeSpec, tie_seed: int, axis_order=None, coins=None
) -> tuple[np.ndarray, int]:
    """Bond mask of E' and its bond count before mod-2 cancellation."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    mask = np.zeros(spec.n_bonds, dtype=np.bool_)
    if len(pairs) == 0:
        return mask, 0
    a = spec.site_coords(pairs[:, 0]).reshape(-1, spec.dim)
    b = spec.site_coords(pairs[:, 1]).reshape(-1, spec.dim)
    if coins is None:
        coins = wrap_coins(tie_seed, len(pairs), spec.dim)
    order = np.arange(spec.dim, dtype=np.int64) if axis_order is None else np.asarray(axis_order, dtype=np.int64)
    n = _xor_geodesics(mask, a, b, np.asarray(coins, dtype=np.int64), order, spec.L, spec.dim)
    return mask, int(n)


def build_recovery_chain(matching: Matching, tie_seed: int = 0, axis_order=None) -> Chain:
    """E' as the mod-2 sum of one axis-ordered geodesic per matched pair."""
    mask, _ = recovery_mask(np.array(matching.pairs, dtype=np.int64), matching.spec, tie_seed, axis_order)
    return Chain.from_mask(matching.spec, mask)


@dataclass(frozen=True)
class TrialOutcome:
    success: bool
    cycle_class: CycleClass
    weights: tuple[int, int]
    elapsed: float
    record: dict | None = field(default=None, compare=False)


def decode_mask(
    error_mask: np.ndarray, spec: LatticeSpec, tie_seed: int, engine: str = "lattice"
) -> tuple[tuple[int, ...], int, int]:
    """Hot path: (winding of D, |E|, |E'|) for an error mask."""
    syndrome = boundary_mask(error_mask, spec)
    if engine == "lattice":
        pairs, _ = match_lattice(syndrome, spec, tie_seed)
    elif engine == "complete":
        pairs, _, _ = match_complete(np.flatnonzero(syndrome), spec, tie_seed)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    e_prime, _ = recovery_mask(pairs, spec, tie_seed)
    cycle = error_mask ^ e_prime
    return winding_of_mask(cycle, spec), int(error_mask.sum()), int(e_prime.sum())


def decode_chain(
    error_chain: Chain,
    tie_seed: int = 0,
    *,
    engine: str = "lattice",
    keep_record: bool = False,
    neighbors: int | None = None,
) -> TrialOutcome:
    """Decode an explicit error chain (sampled or injected)."""
    spec = error_chain.spec
    t0 = time.perf_counter()
    defect_set = DefectSet(spec, frozenset(np.flatnonzero(boundary_mask(error_chain.to_mask(), spec)).tolist()))
    matching = min_weight_perfect_matching(defect_set, tie_seed, engine=engine, neighbors=neighbors)
    e_prime = build_recovery_chain(matching, tie_seed)
    cycle = error_chain + e_prime
    cycle_mask = cycle.to_mask()
    if boundary_mask(cycle_mask, spec).any():
        raise ContractError("E + E' has a boundary; recovery chain does not close the defects")
    cls = CycleClass(winding_of_mask(cycle_mask, spec))
    elapsed = time.perf_counter() - t0
    record = None
    if keep_record:
        record = {
            "lattice": {"dim": spec.dim, "L": spec.L},
            "tie_seed": tie_seed,
            "error_chain": error_chain.to_json(),
            "defects": defect_set.to_json(),
            "matching": matching.to_json(),
            "recovery_chain": e_prime.to_json(),
            "cycle_class": list(cls.winding),
            "success": cls.trivial,
        }
    return TrialOutcome(cls.trivial, cls, (len(error_chain), len(e_prime)), elapsed, record)


def run_trial(
    spec: LatticeSpec,
    model: str,
    p,
    sample_index: int,
    rng: RngPolicy,
    tie_seed: int | None = None,
    *,
    engine: str = "lattice",
    keep_record: bool = False,
    neighbors: int | None = None,
) -> TrialOutcome:
    if model_spec(model, spec.L) != spec:
        raise ValueError(f"model {model!r} does not live on {spec}")
    micro = p_to_micro(p)
    seed = rng.sample_seed(model, spec.L, p, sample_index)
    if tie_seed is None:
        tie_seed = rng.tie_seed(model, spec.L, p, sample_index)
    mask = sample_error_mask(spec, micro / P_SCALE, seed)
    if not keep_record and neighbors is None:
        t0 = time.perf_counter()
        winding, n_e, n_ep = decode_mask(mask, spec, tie_seed, engine)
        cls = CycleClass(winding)
        return TrialOutcome(cls.trivial, cls, (n_e, n_ep), time.perf_counter() - t0)
    out = decode_chain(Chain.from_mask(spec, mask), tie_seed, engine=engine, keep_record=True, neighbors=neighbors)
    out.record.update({"model": model, "p": micro / P_SCALE, "sample_index": sample_index, "seed": seed})
    return out
