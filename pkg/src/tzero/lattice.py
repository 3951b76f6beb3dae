"""Periodic cubic lattices in two and three dimensions, mod-2 chains on the
dual lattice, the boundary operator, the torus metric and homology classes.

Sites are addressed either by coordinate tuples or by row-major linear index.
A dual bond is the pair (base site, axis) pointing in the positive direction
of ``axis``; its canonical index is ``site_index * dim + axis``. A chain can
therefore also be viewed as a flat boolean mask of length ``dim * L**dim``
whose reshape to ``(L,)*dim + (dim,)`` is indexed by ``[coords..., axis]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np


class LatticeError(ValueError):
    """Invalid lattice input (out-of-range coordinate, bond or size)."""


class ContractError(RuntimeError):
    """A precondition that upstream code should have guaranteed was violated."""


@dataclass(frozen=True)
class LatticeSpec:
    dim: int
    L: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise LatticeError(f"dimension must be 2 or 3, got {self.dim}")
        if int(self.L) != self.L or self.L < 2:
            raise LatticeError(f"linear size must be an integer >= 2, got {self.L}")

    @property
    def n_sites(self) -> int:
        return self.L**self.dim

    @property
    def n_bonds(self) -> int:
        return self.dim * self.L**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.dim

    def check_site(self, coord: Sequence[int]) -> tuple[int, ...]:
        c = tuple(int(v) for v in coord)
        if len(c) != self.dim or any(v < 0 or v >= self.L for v in c):
            raise LatticeError(f"site {coord!r} out of range for {self}")
        return c

    def site_index(self, coord: Sequence[int]) -> int:
        c = self.check_site(coord)
        idx = 0
        for v in c:
            idx = idx * self.L + v
        return idx

    def site_coord(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.n_sites:
            raise LatticeError(f"site index {index} out of range for {self}")
        out = []
        for _ in range(self.dim):
            index, r = divmod(index, self.L)
            out.append(r)
        return tuple(reversed(out))

    def site_coords(self, indices) -> np.ndarray:
        """Vectorised ``site_coord``: (k,) int array -> (k, dim) int array."""
        idx = np.asarray(indices, dtype=np.int64)
        return np.stack(np.unravel_index(idx, self.shape), axis=-1).astype(np.int64)

    def bond_index(self, base: Sequence[int], axis: int) -> int:
        if not 0 <= axis < self.dim:
            raise LatticeError(f"axis {axis} out of range for {self}")
        return self.site_index(base) * self.dim + axis

    def bond(self, index: int) -> tuple[tuple[int, ...], int]:
        """Inverse of ``bond_index``: canonical (base, axis)."""
        if not 0 <= index < self.n_bonds:
            raise LatticeError(f"bond index {index} out of range for {self}")
        s, axis = divmod(index, self.dim)
        return self.site_coord(s), axis

    def bond_endpoints(self, index: int) -> tuple[int, int]:
        base, axis = self.bond(index)
        head = list(base)
        head[axis] = (head[axis] + 1) % self.L
        return self.site_index(base), self.site_index(head)


def _check_bond_indices(spec: LatticeSpec, bonds: Iterable[int]) -> frozenset[int]:
    out = frozenset(int(b) for b in bonds)
    for b in out:
        if not 0 <= b < spec.n_bonds:
            raise LatticeError(f"bond index {b} out of range for {spec}")
    return out


@dataclass(frozen=True)
class Chain:
    """A mod-2 one-chain of dual bonds. ``+`` is symmetric difference."""

    spec: LatticeSpec
    bonds: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "bonds", _check_bond_indices(self.spec, self.bonds))

    @classmethod
    def from_bonds(cls, spec: LatticeSpec, bonds: Iterable[tuple[Sequence[int], int]]) -> "Chain":
        acc: set[int] = set()
        for base, axis in bonds:
            acc ^= {spec.bond_index(base, axis)}
        return cls(spec, frozenset(acc))

    @classmethod
    def from_mask(cls, spec: LatticeSpec, mask: np.ndarray) -> "Chain":
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        if mask.size != spec.n_bonds:
            raise LatticeError(f"mask of size {mask.size} does not fit {spec}")
        return cls(spec, frozenset(np.flatnonzero(mask).tolist()))

    def to_mask(self) -> np.ndarray:
        mask = np.zeros(self.spec.n_bonds, dtype=bool)
        if self.bonds:
            mask[np.fromiter(self.bonds, dtype=np.int64)] = True
        return mask

    def __add__(self, other: "Chain") -> "Chain":
        if other.spec != self.spec:
            raise LatticeError("cannot add chains on different lattices")
        return Chain(self.spec, self.bonds ^ other.bonds)

    def __len__(self) -> int:
        return len(self.bonds)

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.bonds))

    def __contains__(self, bond) -> bool:
        if isinstance(bond, tuple):
            base, axis = bond
            bond = self.spec.bond_index(base, axis)
        return bond in self.bonds

    def to_json(self) -> list[list[int]]:
        """Bonds as ``[c0, c1, (c2,) axis]`` lists, sorted by bond index."""
        out = []
        for b in self:
            base, axis = self.spec.bond(b)
            out.append([*base, axis])
        return out


@dataclass(frozen=True)
class DefectSet:
    """Dual sites where a chain boundary is nonzero."""

    spec: LatticeSpec
    sites: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        sites = frozenset(int(s) for s in self.sites)
        for s in sites:
            if not 0 <= s < self.spec.n_sites:
                raise LatticeError(f"site index {s} out of range for {self.spec}")
        object.__setattr__(self, "sites", sites)

    @classmethod
    def from_coords(cls, spec: LatticeSpec, coords: Iterable[Sequence[int]]) -> "DefectSet":
        return cls(spec, frozenset(spec.site_index(c) for c in coords))

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.sites))

    def __contains__(self, site) -> bool:
        if isinstance(site, tuple):
            site = self.spec.site_index(site)
        return site in self.sites

    def coords(self) -> np.ndarray:
        return self.spec.site_coords(sorted(self.sites)).reshape(-1, self.spec.dim)

    def to_json(self) -> list[list[int]]:
        return [list(self.spec.site_coord(s)) for s in self]


@dataclass(frozen=True)
class CycleClass:
    """Winding parities of a cycle, one bit per axis."""

    winding: tuple[int, ...]

    @property
    def trivial(self) -> bool:
        return not any(self.winding)

    def __xor__(self, other: "CycleClass") -> "CycleClass":
        return CycleClass(tuple(a ^ b for a, b in zip(self.winding, other.winding)))


# --- mask-level kernels (the hot path works on these directly) ---


def boundary_mask(mask: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    """Boolean site array: parity of incident chain bonds at every dual site."""
    m = np.asarray(mask, dtype=bool).reshape(spec.shape + (spec.dim,))
    par = np.zeros(spec.shape, dtype=bool)
    for a in range(spec.dim):
        par ^= m[..., a]
        par ^= np.roll(m[..., a], 1, axis=a)
    return par.reshape(-1)


def winding_of_mask(mask: np.ndarray, spec: LatticeSpec, cut: int | None = None) -> tuple[int, ...]:
    """Parity of bonds crossing the cut between ``cut`` and ``cut+1`` per axis."""
    c = spec.L - 1 if cut is None else int(cut) % spec.L
    m = np.asarray(mask, dtype=bool).reshape(spec.shape + (spec.dim,))
    out = []
    for a in range(spec.dim):
        sl = [slice(None)] * spec.dim
        sl[a] = c
        out.append(int(np.count_nonzero(m[tuple(sl) + (a,)]) & 1))
    return tuple(out)


# --- public operations ---


def boundary(chain: Chain) -> DefectSet:
    spec = chain.spec
    return DefectSet(spec, frozenset(np.flatnonzero(boundary_mask(chain.to_mask(), spec)).tolist()))


def torus_distance(a: Sequence[int], b: Sequence[int], spec: LatticeSpec) -> int:
    a = spec.check_site(a)
    b = spec.check_site(b)
    L = spec.L
    total = 0
    for x, y in zip(a, b):
        d = abs(x - y)
        total += min(d, L - d)
    return total


def torus_distance_matrix(coords: np.ndarray, L: int) -> np.ndarray:
    """Pairwise torus distances for a (k, dim) coordinate array."""
    c = np.asarray(coords, dtype=np.int64)
    d = np.abs(c[:, None, :] - c[None, :, :])
    return np.minimum(d, L - d).sum(axis=-1)


def classify_homology(cycle: Chain, cut: int | None = None) -> CycleClass:
    """Homology class of a cycle; ``cut`` picks the seam (default L-1 -> 0)."""
    mask = cycle.to_mask()
    if boundary_mask(mask, cycle.spec).any():
        raise ContractError("homology class is only defined for chains without boundary")
    return CycleClass(winding_of_mask(mask, cycle.spec, cut))
