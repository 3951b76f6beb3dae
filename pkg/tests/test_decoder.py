from __future__ import annotations

import itertools

import numpy as np
import pytest

from tzero.decoder import (
    build_recovery_chain,
    decode_chain,
    recovery_mask,
    run_trial,
    wrap_coins,
)
from tzero.disorder import RngPolicy, generate_sample, model_spec
from tzero.lattice import Chain, DefectSet, LatticeSpec, boundary, classify_homology, winding_of_mask
from tzero.matcher import Matching, brute_force_matching, min_weight_perfect_matching


def walk(spec: LatticeSpec, start, steps) -> set[int]:
    """Bonds of a lattice walk given as (axis, +1/-1) steps."""
    pos = list(start)
    bonds: set[int] = set()
    for ax, s in steps:
        if s < 0:
            pos[ax] = (pos[ax] - 1) % spec.L
        bonds ^= {spec.bond_index(pos, ax)}
        if s > 0:
            pos[ax] = (pos[ax] + 1) % spec.L
    return bonds


def geodesic_steps(spec: LatticeSpec, a, b, coins) -> list[tuple[int, int]]:
    steps = []
    for ax in range(spec.dim):
        d = (b[ax] - a[ax]) % spec.L
        if 2 * d < spec.L or (2 * d == spec.L and coins[ax]):
            steps += [(ax, 1)] * d
        else:
            steps += [(ax, -1)] * ((spec.L - d) % spec.L)
    return steps


def crossing_parity(spec: LatticeSpec, bonds) -> tuple[int, ...]:
    """Winding by counting bonds that step from coordinate L-1 to 0."""
    w = [0] * spec.dim
    for b in bonds:
        base, ax = spec.bond(b)
        if base[ax] == spec.L - 1:
            w[ax] ^= 1
    return tuple(w)


def single(spec, pair):
    a, b = (spec.site_index(c) for c in pair)
    d = abs(spec.site_coord(a)[0] - spec.site_coord(b)[0])
    return Matching(spec, ((min(a, b), max(a, b)),), d, float(d))


class TestRecoveryChain:
    def test_empty(self):
        spec = LatticeSpec(2, 8)
        assert len(build_recovery_chain(Matching(spec, (), 0, 0.0))) == 0

    def test_straight_pair(self):
        spec = LatticeSpec(2, 8)
        c = build_recovery_chain(single(spec, [(0, 0), (2, 0)]))
        assert set(c) == {spec.bond_index((0, 0), 0), spec.bond_index((1, 0), 0)}
        assert {tuple(x) for x in boundary(c).coords()} == {(0, 0), (2, 0)}

    def test_half_lattice_wrap_both_ways(self):
        spec = LatticeSpec(2, 8)
        m = single(spec, [(0, 0), (4, 0)])
        shapes = set()
        for seed in range(40):
            c = build_recovery_chain(m, seed)
            assert len(c) == 4
            assert {tuple(x) for x in boundary(c).coords()} == {(0, 0), (4, 0)}
            shapes.add(frozenset(c))
        right = frozenset(walk(spec, (0, 0), [(0, 1)] * 4))
        left = frozenset(walk(spec, (0, 0), [(0, -1)] * 4))
        assert shapes == {right, left}
        # the two choices differ by a noncontractible loop
        assert classify_homology(Chain(spec, right) + Chain(spec, left)).winding == (1, 0)

    def test_matches_reference_walk(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            spec = LatticeSpec(int(rng.integers(2, 4)), int(rng.integers(2, 9)))
            k = 2 * int(rng.integers(1, 5))
            sites = rng.choice(spec.n_sites, size=k, replace=False).reshape(-1, 2)
            seed = int(rng.integers(2**63))
            coins = wrap_coins(seed, len(sites), spec.dim)
            ref: set[int] = set()
            n_steps = 0
            for (a, b), c in zip(sites, coins):
                steps = geodesic_steps(spec, spec.site_coord(a), spec.site_coord(b), c)
                n_steps += len(steps)
                ref ^= walk(spec, spec.site_coord(a), steps)
            mask, n = recovery_mask(sites, spec, seed)
            assert set(np.flatnonzero(mask).tolist()) == ref
            assert n == n_steps

    def test_precancellation_count_is_weight(self):
        rng = RngPolicy(3)
        for model, L in [("rbim2d", 8), ("rpgm3d", 5)]:
            spec = model_spec(model, L)
            for i in range(30):
                s = generate_sample(spec, model, 0.15, i, rng)
                m = min_weight_perfect_matching(boundary(s.error_chain), i)
                _, n = recovery_mask(np.array(m.pairs).reshape(-1, 2), spec, i)
                assert n == m.total_weight

    def test_axis_order_invariance(self):
        rng = RngPolicy(5)
        for model, L in [("rbim2d", 8), ("rbim2d", 7), ("rpgm3d", 6)]:
            spec = model_spec(model, L)
            for i in range(40):
                s = generate_sample(spec, model, 0.12, i, rng)
                m = min_weight_perfect_matching(boundary(s.error_chain), i)
                pairs = np.array(m.pairs).reshape(-1, 2)
                coins = wrap_coins(i, len(pairs), spec.dim)
                e = s.error_chain.to_mask()
                classes = set()
                for order in itertools.permutations(range(spec.dim)):
                    ep, _ = recovery_mask(pairs, spec, i, axis_order=order, coins=coins)
                    classes.add(winding_of_mask(e ^ ep, spec))
                assert len(classes) == 1


class TestTrial:
    def test_p_zero(self):
        for model, L in [("rbim2d", 6), ("rpgm3d", 4)]:
            out = run_trial(model_spec(model, L), model, 0, 0, RngPolicy(1))
            assert out.success and out.cycle_class.trivial and out.weights == (0, 0)

    def test_injected_noncontractible_loop(self):
        spec = LatticeSpec(2, 6)
        loop = Chain.from_bonds(spec, [((x, 3), 0) for x in range(6)])
        out = decode_chain(loop, keep_record=True)
        assert not out.success
        assert out.cycle_class.winding == (1, 0)
        assert out.weights == (6, 0)
        assert out.record["defects"] == []

    def test_injected_3d_loop(self):
        spec = LatticeSpec(3, 4)
        loop = Chain.from_bonds(spec, [((1, y, 2), 1) for y in range(4)])
        out = decode_chain(loop)
        assert out.cycle_class.winding == (0, 1, 0)

    def test_injected_short_error_is_corrected(self):
        spec = LatticeSpec(2, 8)
        out = decode_chain(Chain.from_bonds(spec, [((2, 2), 0), ((3, 2), 0)]))
        assert out.success

    def test_long_error_fails(self):
        # 5 of 8 bonds of a row: the matcher closes the short way and completes the loop
        spec = LatticeSpec(2, 8)
        out = decode_chain(Chain.from_bonds(spec, [((x, 0), 0) for x in range(5)]))
        assert not out.success and out.cycle_class.winding == (1, 0)

    def test_deterministic(self):
        spec = model_spec("rpgm3d", 5)
        a = run_trial(spec, "rpgm3d", 0.05, 3, RngPolicy(2), keep_record=True)
        b = run_trial(spec, "rpgm3d", 0.05, 3, RngPolicy(2), keep_record=True)
        assert a.cycle_class == b.cycle_class and a.record["recovery_chain"] == b.record["recovery_chain"]

    def test_record_contents(self):
        out = run_trial(model_spec("rbim2d", 6), "rbim2d", 0.2, 1, RngPolicy(4), keep_record=True)
        rec = out.record
        for key in ("error_chain", "defects", "matching", "recovery_chain", "cycle_class", "success", "seed"):
            assert key in rec
        assert rec["success"] == out.success
        assert len(rec["defects"]) % 2 == 0

    def test_model_spec_mismatch(self):
        with pytest.raises(ValueError):
            run_trial(LatticeSpec(2, 4), "rpgm3d", 0.1, 0, RngPolicy(0))

    def test_small_pipeline_against_brute_force(self):
        """L=4, p=0.3: every stage re-derived independently."""
        spec = LatticeSpec(2, 4)
        rng = RngPolicy(31)
        for i in range(40):
            out = run_trial(spec, "rbim2d", 0.3, i, rng, engine="complete", keep_record=True)
            rec = out.record
            tie = rng.tie_seed("rbim2d", 4, 0.3, i)
            e = {spec.bond_index(b[:-1], b[-1]) for b in rec["error_chain"]}
            d = DefectSet.from_coords(spec, rec["defects"])
            # matching is a true minimum
            assert rec["matching"]["total_weight"] == brute_force_matching(d).total_weight
            pairs = [tuple(spec.site_index(c) for c in pr) for pr in rec["matching"]["pairs"]]
            coins = wrap_coins(tie, len(pairs), spec.dim)
            # any geodesic with the same wrap directions gives the same class
            options = []
            for (a, b), c in zip(pairs, coins):
                steps = geodesic_steps(spec, spec.site_coord(a), spec.site_coord(b), c)
                orders = {tuple(p) for p in itertools.permutations(steps)}
                options.append([walk(spec, spec.site_coord(a), o) for o in orders])
            classes = set()
            for combo in itertools.islice(itertools.product(*options), 3000):
                ep: set[int] = set()
                for path in combo:
                    ep ^= path
                classes.add(crossing_parity(spec, e ^ ep))
            assert classes == {tuple(rec["cycle_class"])}
            assert out.success == (classes == {(0, 0)})

    def test_boundary_always_cancels(self):
        rng = RngPolicy(12)
        for model, L in [("rbim2d", 9), ("rpgm3d", 5)]:
            spec = model_spec(model, L)
            for i in range(30):
                out = run_trial(spec, model, 0.2, i, rng, keep_record=True)
                ep = Chain.from_bonds(spec, [(b[:-1], b[-1]) for b in out.record["recovery_chain"]])
                e = Chain.from_bonds(spec, [(b[:-1], b[-1]) for b in out.record["error_chain"]])
                assert len(boundary(e + ep)) == 0
