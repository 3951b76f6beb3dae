"""Minimum-weight perfect matching of defects under the torus metric.

Two exact engines are provided:

``"complete"``
    Dense weighted blossom over the complete defect graph. Each edge weight
    is the integer torus distance plus an independent jitter in
    ``[0, 1/(k**2 + 1))`` drawn from ``tie_seed`` (k = defect count), so the
    jittered optimum is always an integer optimum and ties are broken at
    random. Cost grows like k**3.

``"lattice"``
    Sparse blossom (PyMatching) on the dual lattice itself, with a per-bond
    jitter below ``1/(2 * n_bonds)`` so any chain's total jitter stays below
    one bond. The chain-level optimum equals the complete-graph optimum; this
    engine is orders of magnitude faster and is what sweeps use by default.
    Jitter patterns come from a fixed pool of ``LATTICE_POOL`` per lattice.

``brute_force_matching`` is an independent exhaustive oracle for small sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from ._blossom import max_weight_matching_dense
from .disorder import stream
from .lattice import ContractError, DefectSet, LatticeSpec, torus_distance_matrix

ENGINES = ("complete", "lattice")
BRUTE_FORCE_LIMIT = 14
LATTICE_POOL = 64

_JITTER_BITS = 16
_STREAM_JITTER = 1


class MatchingSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Matching:
    spec: LatticeSpec
    pairs: tuple[tuple[int, int], ...]
    total_weight: int
    jittered_weight: float
    engine: str = "complete"
    approximate: bool = False
    degeneracy: int | None = None

    def to_json(self) -> dict:
        return {
            "pairs": [[list(self.spec.site_coord(a)), list(self.spec.site_coord(b))] for a, b in self.pairs],
            "total_weight": self.total_weight,
            "jittered_weight": self.jittered_weight,
            "engine": self.engine,
            "approximate": self.approximate,
        }


def _pair_weights(spec: LatticeSpec, pairs: np.ndarray) -> np.ndarray:
    if len(pairs) == 0:
        return np.zeros(0, dtype=np.int64)
    a = spec.site_coords(pairs[:, 0])
    b = spec.site_coords(pairs[:, 1])
    d = np.abs(a - b)
    return np.minimum(d, spec.L - d).sum(axis=1)


def _canonical_pairs(pairs: np.ndarray) -> np.ndarray:
    pairs = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


# --- complete-graph engine ---


def match_complete(
    sites: np.ndarray, spec: LatticeSpec, tie_seed: int, neighbors: int | None = None
) -> tuple[np.ndarray, float, bool]:
    """Pairs (as site indices), jittered weight and whether pruning was used.

    With ``neighbors`` set, each defect is joined only to its nearest
    ``neighbors`` defects; if that graph has no perfect matching the complete
    graph is used instead.
    """
    sites = np.asarray(sites, dtype=np.int64)
    k = len(sites)
    if k % 2:
        raise ContractError(f"odd number of defects ({k}); boundaries are always even")
    if k == 0:
        return np.zeros((0, 2), dtype=np.int64), 0.0, False
    dist = torus_distance_matrix(spec.site_coords(sites), spec.L)
    scale = (k * k + 1) << _JITTER_BITS
    jit = stream(tie_seed, _STREAM_JITTER).integers(0, 1 << _JITTER_BITS, size=(k, k))
    jit = np.triu(jit, 1)
    jit = jit + jit.T
    cost = dist * scale + jit
    big = int(cost.max()) + 1
    # the offset makes every perfect matching outweigh every imperfect one
    weight = (k // 2) * big + big - cost
    np.fill_diagonal(weight, 0)

    pruned = False
    if neighbors is not None and neighbors < k - 1:
        keep = np.zeros((k, k), dtype=bool)
        order = np.argsort(cost + np.diag(np.full(k, big)), axis=1, kind="stable")[:, :neighbors]
        keep[np.repeat(np.arange(k), neighbors), order.ravel()] = True
        keep |= keep.T
        mate = max_weight_matching_dense(np.where(keep, weight, 0).astype(np.int64))
        if (mate >= 0).all():
            pruned = True
        else:
            mate = max_weight_matching_dense(weight.astype(np.int64))
    else:
        mate = max_weight_matching_dense(weight.astype(np.int64))
    if (mate < 0).any():
        raise ContractError("blossom returned an imperfect matching on a complete graph")
    i = np.flatnonzero(np.arange(k) < mate)
    j = mate[i]
    jittered = float(cost[i, j].sum()) / scale
    return np.stack([sites[i], sites[j]], axis=1), jittered, pruned


# --- lattice engine ---


@lru_cache(maxsize=32)
def _check_matrix(spec: LatticeSpec) -> sp.csc_matrix:
    sites = np.arange(spec.n_sites).reshape(spec.shape)
    rows, cols = [], []
    for a in range(spec.dim):
        head = np.roll(sites, -1, axis=a)
        b = sites.ravel() * spec.dim + a
        rows += [sites.ravel(), head.ravel()]
        cols += [b, b]
    data = np.ones(2 * spec.n_bonds, dtype=np.uint8)
    return sp.csc_matrix(
        (data, (np.concatenate(rows), np.concatenate(cols))), shape=(spec.n_sites, spec.n_bonds)
    )


@lru_cache(maxsize=4 * LATTICE_POOL)
def _pooled_matcher(spec: LatticeSpec, slot: int):
    import pymatching

    seed = (spec.dim << 48) | (spec.L << 32) | slot
    jitter = stream(seed, _STREAM_JITTER).random(spec.n_bonds) / (2 * spec.n_bonds)
    return pymatching.Matching.from_check_matrix(_check_matrix(spec), weights=1.0 + jitter)


def _lattice_matcher(spec: LatticeSpec, tie_seed: int):
    # Building a fresh sparse graph costs more than decoding on it, so each
    # trial picks one of LATTICE_POOL fixed jitter patterns by its tie seed.
    return _pooled_matcher(spec, tie_seed % LATTICE_POOL)


def match_lattice(
    syndrome: np.ndarray, spec: LatticeSpec, tie_seed: int, want_weight: bool = False
) -> tuple[np.ndarray, float]:
    """Pairs from a boolean site syndrome; jittered weight only on request."""
    syndrome = np.asarray(syndrome, dtype=np.uint8)
    k = int(syndrome.sum())
    if k % 2:
        raise ContractError(f"odd number of defects ({k}); boundaries are always even")
    if k == 0:
        return np.zeros((0, 2), dtype=np.int64), 0.0
    m = _lattice_matcher(spec, tie_seed)
    pairs = np.asarray(m.decode_to_matched_dets_array(syndrome), dtype=np.int64)
    jittered = float("nan")
    if want_weight:
        _, jittered = m.decode(syndrome, return_weight=True)
    return pairs, float(jittered)


# --- public API ---


def min_weight_perfect_matching(
    defects: DefectSet,
    tie_seed: int = 0,
    *,
    engine: str = "complete",
    neighbors: int | None = None,
) -> Matching:
    spec = defects.spec
    if len(defects) % 2:
        raise ContractError(f"odd number of defects ({len(defects)}); boundaries are always even")
    if engine == "complete":
        pairs, jittered, pruned = match_complete(np.fromiter(defects, np.int64), spec, tie_seed, neighbors)
    elif engine == "lattice":
        if neighbors is not None:
            raise ValueError("neighbour pruning only applies to the complete engine")
        syn = np.zeros(spec.n_sites, dtype=np.uint8)
        syn[list(defects.sites)] = 1
        pairs, jittered = match_lattice(syn, spec, tie_seed, want_weight=True)
        pruned = False
    else:
        raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")
    pairs = _canonical_pairs(pairs)
    total = int(_pair_weights(spec, pairs).sum())
    return Matching(
        spec,
        tuple((int(a), int(b)) for a, b in pairs),
        total,
        jittered,
        engine=engine,
        approximate=pruned,
    )


def brute_force_matching(defects: DefectSet) -> Matching:
    """Exhaustive minimum over all perfect matchings, with degeneracy count.

    Exact dynamic programme over subsets: the lowest unmatched defect is paired
    with every other remaining defect in turn, which visits each perfect
    matching exactly once.
    """
    spec = defects.spec
    k = len(defects)
    if k % 2:
        raise ContractError(f"odd number of defects ({k})")
    if k > BRUTE_FORCE_LIMIT:
        raise MatchingSizeError(f"brute force refuses {k} defects (limit {BRUTE_FORCE_LIMIT})")
    sites = list(defects)
    dist = torus_distance_matrix(spec.site_coords(sites).reshape(-1, spec.dim), spec.L).tolist()

    memo: dict[int, tuple[int, int, int]] = {0: (0, 1, -1)}

    def solve(mask: int) -> tuple[int, int, int]:
        hit = memo.get(mask)
        if hit is not None:
            return hit
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        best, count, arg = None, 0, -1
        m = rest
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            w = dist[i][j] + solve(rest & ~(1 << j))[0]
            if best is None or w < best:
                best, count, arg = w, solve(rest & ~(1 << j))[1], j
            elif w == best:
                count += solve(rest & ~(1 << j))[1]
        memo[mask] = (best, count, arg)
        return memo[mask]

    full = (1 << k) - 1
    total, degeneracy, _ = solve(full)
    pairs = []
    mask = full
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = memo[mask][2]
        pairs.append((sites[i], sites[j]))
        mask &= ~((1 << i) | (1 << j))
    pairs_arr = _canonical_pairs(np.array(pairs, dtype=np.int64))
    return Matching(
        spec,
        tuple((int(a), int(b)) for a, b in pairs_arr),
        int(total),
        float(total),
        engine="brute-force",
        degeneracy=int(degeneracy),
    )
