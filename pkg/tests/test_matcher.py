from __future__ import annotations

import itertools
from collections import Counter

import numpy as np
import pytest

from tzero._blossom import max_weight_matching_dense
from tzero.disorder import RngPolicy, model_spec, sample_error_mask
from tzero.lattice import Chain, ContractError, DefectSet, LatticeSpec, boundary, torus_distance
from tzero.matcher import (
    BRUTE_FORCE_LIMIT,
    MatchingSizeError,
    brute_force_matching,
    min_weight_perfect_matching,
)


def all_perfect_matchings(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for i, other in enumerate(rest):
        for m in all_perfect_matchings(rest[:i] + rest[i + 1 :]):
            yield [(first, other)] + m


def enumerate_min(defects: DefectSet) -> tuple[int, int]:
    """Plain enumeration of every perfect matching; (minimum, how many attain it)."""
    spec = defects.spec
    coords = {s: spec.site_coord(s) for s in defects}
    weights = [
        sum(torus_distance(coords[a], coords[b], spec) for a, b in m) for m in all_perfect_matchings(list(defects))
    ]
    best = min(weights)
    return best, weights.count(best)


def greedy_weight(defects: DefectSet) -> int:
    spec = defects.spec
    left = list(defects)
    total = 0
    while left:
        a = left.pop(0)
        d = [torus_distance(spec.site_coord(a), spec.site_coord(b), spec) for b in left]
        j = int(np.argmin(d))
        total += d[j]
        left.pop(j)
    return total


def random_defects(rng, dim=None, max_defects=12) -> DefectSet:
    dim = dim or int(rng.integers(2, 4))
    spec = LatticeSpec(dim, int(rng.integers(4, 9)))
    k = 2 * int(rng.integers(1, max_defects // 2 + 1))
    return DefectSet(spec, frozenset(int(s) for s in rng.choice(spec.n_sites, size=k, replace=False)))


@pytest.fixture(params=["complete", "lattice"])
def engine(request):
    return request.param


class TestBruteForce:
    def test_unique_pair(self):
        d = DefectSet.from_coords(LatticeSpec(2, 8), [(0, 0), (2, 0)])
        m = brute_force_matching(d)
        assert m.total_weight == 2 and m.degeneracy == 1

    def test_square_corners_degenerate(self):
        L = 8
        d = DefectSet.from_coords(LatticeSpec(2, L), [(0, 0), (L // 2, 0), (0, L // 2), (L // 2, L // 2)])
        assert brute_force_matching(d).degeneracy >= 2

    def test_agrees_with_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            d = random_defects(rng, max_defects=10)
            m = brute_force_matching(d)
            assert (m.total_weight, m.degeneracy) == enumerate_min(d)

    def test_greedy_bound(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            spec = LatticeSpec(2, 8)
            d = DefectSet(spec, frozenset(int(s) for s in rng.choice(spec.n_sites, 10, replace=False)))
            assert brute_force_matching(d).total_weight <= greedy_weight(d)

    def test_size_limit(self):
        spec = LatticeSpec(2, 8)
        with pytest.raises(MatchingSizeError):
            brute_force_matching(DefectSet(spec, frozenset(range(BRUTE_FORCE_LIMIT + 2))))

    def test_pairs_are_perfect(self):
        d = random_defects(np.random.default_rng(5))
        m = brute_force_matching(d)
        assert sorted(itertools.chain.from_iterable(m.pairs)) == sorted(d.sites)


class TestEngines:
    def test_empty(self, engine):
        m = min_weight_perfect_matching(DefectSet(LatticeSpec(2, 4)), 0, engine=engine)
        assert m.pairs == () and m.total_weight == 0

    def test_two_defects(self, engine):
        spec = LatticeSpec(2, 8)
        m = min_weight_perfect_matching(DefectSet.from_coords(spec, [(0, 0), (2, 0)]), 5, engine=engine)
        assert m.total_weight == 2
        assert m.pairs == ((spec.site_index((0, 0)), spec.site_index((2, 0))),)

    def test_odd_refused(self, engine):
        with pytest.raises(ContractError):
            min_weight_perfect_matching(DefectSet(LatticeSpec(2, 4), frozenset({1, 2, 3})), engine=engine)

    def test_oracle(self, engine):
        rng = np.random.default_rng(13)
        for _ in range(200):
            d = random_defects(rng)
            m = min_weight_perfect_matching(d, int(rng.integers(2**63)), engine=engine)
            assert m.total_weight == brute_force_matching(d).total_weight
            assert sorted(itertools.chain.from_iterable(m.pairs)) == sorted(d.sites)
            assert m.total_weight == sum(torus_distance(d.spec.site_coord(a), d.spec.site_coord(b), d.spec) for a, b in m.pairs)

    def test_weight_bound(self, engine):
        rng = RngPolicy(4)
        for model, L in [("rbim2d", 10), ("rpgm3d", 6)]:
            spec = model_spec(model, L)
            for i in range(50):
                chain = Chain.from_mask(spec, sample_error_mask(spec, 0.08, rng.sample_seed(model, L, 0.08, i)))
                m = min_weight_perfect_matching(boundary(chain), i, engine=engine)
                assert m.total_weight <= len(chain)

    def test_engines_agree_on_large_sets(self):
        spec = model_spec("rbim2d", 24)
        rng = RngPolicy(6)
        for i in range(10):
            chain = Chain.from_mask(spec, sample_error_mask(spec, 0.1, rng.sample_seed("rbim2d", 24, 0.1, i)))
            d = boundary(chain)
            a = min_weight_perfect_matching(d, i, engine="complete")
            b = min_weight_perfect_matching(d, i, engine="lattice")
            assert a.total_weight == b.total_weight

    def test_permutation_invariance(self):
        # the blossom kernel sees defects in index order, so shuffle the kernel input directly
        rng = np.random.default_rng(14)
        for _ in range(50):
            n = 2 * int(rng.integers(2, 10))
            w = rng.integers(1, 50, size=(n, n))
            w = np.triu(w, 1) + np.triu(w, 1).T
            mate = max_weight_matching_dense(w.astype(np.int64))
            perm = rng.permutation(n)
            wp = w[np.ix_(perm, perm)]
            mate_p = max_weight_matching_dense(wp.astype(np.int64))
            total = sum(w[i, mate[i]] for i in range(n)) // 2
            total_p = sum(wp[i, mate_p[i]] for i in range(n)) // 2
            assert total == total_p

    def test_unknown_engine(self):
        with pytest.raises(ValueError):
            min_weight_perfect_matching(DefectSet(LatticeSpec(2, 4)), engine="greedy")

    def test_tie_choice_spread(self, engine):
        L = 8
        spec = LatticeSpec(2, L)
        d = DefectSet.from_coords(spec, [(0, 0), (L // 2, 0), (0, L // 2), (L // 2, L // 2)])
        seen = Counter(min_weight_perfect_matching(d, seed, engine=engine).pairs for seed in range(400))
        ref = brute_force_matching(d)
        assert len(seen) == ref.degeneracy
        assert min(seen.values()) > 0

    def test_same_seed_same_choice(self):
        d = random_defects(np.random.default_rng(15))
        assert min_weight_perfect_matching(d, 99).pairs == min_weight_perfect_matching(d, 99).pairs


class TestPruning:
    def test_flagged_and_close(self):
        spec = model_spec("rbim2d", 16)
        rng = RngPolicy(8)
        for i in range(20):
            d = boundary(Chain.from_mask(spec, sample_error_mask(spec, 0.1, rng.sample_seed("rbim2d", 16, 0.1, i))))
            full = min_weight_perfect_matching(d, i)
            pruned = min_weight_perfect_matching(d, i, neighbors=4)
            assert pruned.total_weight >= full.total_weight
            assert sorted(itertools.chain.from_iterable(pruned.pairs)) == sorted(d.sites)
            assert pruned.approximate or pruned.total_weight == full.total_weight
        assert not full.approximate

    def test_falls_back_when_pruned_graph_is_imperfect(self):
        # two tight clusters of three: nearest-neighbour edges never leave a cluster
        spec = LatticeSpec(2, 20)
        d = DefectSet.from_coords(spec, [(0, 0), (1, 0), (0, 1), (10, 10), (11, 10), (10, 11)])
        m = min_weight_perfect_matching(d, 1, neighbors=2)
        assert not m.approximate
        assert m.total_weight == brute_force_matching(d).total_weight

    def test_lattice_engine_refuses(self):
        with pytest.raises(ValueError):
            min_weight_perfect_matching(DefectSet(LatticeSpec(2, 4)), engine="lattice", neighbors=3)
