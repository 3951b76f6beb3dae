"""Quenched disorder: wrong-sign bond/plaquette samples and their defects.

A sample is stored only as its error chain (the set of dual bonds carrying a
wrong-sign coupling). Every sample draws from its own counter-based Philox
stream keyed by a hash of (master seed, model, L, p, sample index), so samples
can be produced in any order, on any number of workers, bit-identically.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

import numpy as np

from .lattice import Chain, DefectSet, LatticeSpec, boundary

MODELS = {"rbim2d": 2, "rpgm3d": 3}
_MODEL_ID = {"rbim2d": 1, "rpgm3d": 2}

P_SCALE = 10**6
_MASK64 = (1 << 64) - 1


class DisorderError(ValueError):
    pass


def model_spec(model: str, L: int) -> LatticeSpec:
    if model not in MODELS:
        raise DisorderError(f"unknown model {model!r}; expected one of {sorted(MODELS)}")
    return LatticeSpec(MODELS[model], L)


def p_to_micro(p) -> int:
    """Exact fixed-point representation of ``p`` in units of 1e-6.

    Accepts floats, strings and Decimals; the value must lie on the 1e-6 grid
    and in [0, 1].
    """
    try:
        d = Decimal(str(p)) if not isinstance(p, Decimal) else p
    except InvalidOperation as exc:
        raise DisorderError(f"not a probability: {p!r}") from exc
    scaled = d * P_SCALE
    if scaled != scaled.to_integral_value():
        raise DisorderError(f"p={p} is not a multiple of 1e-6")
    micro = int(scaled)
    if not 0 <= micro <= P_SCALE:
        raise DisorderError(f"p={p} outside [0, 1]")
    return micro


def micro_to_str(micro: int) -> str:
    s = format(Decimal(micro) / P_SCALE, "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s


def _hash64(*parts: int) -> int:
    h = hashlib.blake2b(digest_size=8, person=b"tzero-rng")
    for v in parts:
        h.update(struct.pack("<Q", v & _MASK64))
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngPolicy:
    """Derives one independent stream per (model, L, p, sample index)."""

    master_seed: int

    def point_seed(self, model: str, L: int, p) -> int:
        return _hash64(self.master_seed, _MODEL_ID[model], int(L), p_to_micro(p))

    def sample_seed(self, model: str, L: int, p, sample_index: int) -> int:
        return _hash64(self.point_seed(model, L, p), int(sample_index))

    def tie_seed(self, model: str, L: int, p, sample_index: int) -> int:
        return _hash64(self.sample_seed(model, L, p, sample_index), 0x7E)


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Counter-based generator for a 64-bit seed and a small stream id."""
    return np.random.Generator(np.random.Philox(key=(seed & _MASK64) | (stream_id << 64)))


def sample_error_mask(spec: LatticeSpec, p: float, seed: int) -> np.ndarray:
    """Flat bond mask with each bond set independently with probability p."""
    if p <= 0:
        return np.zeros(spec.n_bonds, dtype=bool)
    if p >= 1:
        return np.ones(spec.n_bonds, dtype=bool)
    return stream(seed).random(spec.n_bonds) < p


@dataclass(frozen=True)
class DisorderSample:
    spec: LatticeSpec
    model: str
    p: float
    seed: int
    error_chain: Chain

    def __post_init__(self):
        if MODELS.get(self.model) != self.spec.dim:
            raise DisorderError(f"model {self.model!r} does not live on {self.spec}")


def generate_sample(
    spec: LatticeSpec, model: str, p, sample_index: int, rng: RngPolicy
) -> DisorderSample:
    if model not in MODELS:
        raise DisorderError(f"unknown model {model!r}")
    if MODELS[model] != spec.dim:
        raise DisorderError(f"model {model!r} needs dimension {MODELS[model]}, got {spec.dim}")
    micro = p_to_micro(p)
    seed = rng.sample_seed(model, spec.L, p, sample_index)
    mask = sample_error_mask(spec, micro / P_SCALE, seed)
    return DisorderSample(spec, model, micro / P_SCALE, seed, Chain.from_mask(spec, mask))


def defects(sample: DisorderSample) -> DefectSet:
    return boundary(sample.error_chain)


def nishimori_coupling(p: float) -> float:
    """K_p with exp(-2 K_p) = p / (1 - p)."""
    if not 0 < p < 1:
        raise DisorderError(f"Nishimori coupling needs 0 < p < 1, got {p}")
    return 0.5 * math.log((1 - p) / p)
