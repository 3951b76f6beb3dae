"""Failure-probability estimation over (model, L, p) grids.

Every trial is keyed by its sample index, so a point's failure count does not
depend on how trials are split across workers. Sweeps stream one CSV row per
finished point and keep a JSON manifest of completed points, so an
interrupted sweep resumes where it stopped.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .decoder import decode_mask
from .disorder import (
    MODELS,
    P_SCALE,
    RngPolicy,
    _hash64,
    micro_to_str,
    model_spec,
    p_to_micro,
    sample_error_mask,
)

log = logging.getLogger(__name__)

CSV_HEADER = ["model", "L", "p", "n_samples", "n_fail", "pfail", "stderr", "master_seed"]
SCHEMA_VERSION = 1
ASYMPTOTE = {"rbim2d": 3 / 4, "rpgm3d": 7 / 8}


class SweepError(RuntimeError):
    pass


class SweepIOError(SweepError):
    def __init__(self, message: str, completed: int):
        super().__init__(f"{message} (completed points: {completed})")
        self.completed = completed


def smoothed_stderr(n_fail: int, n: int) -> float:
    """Wald error on the add-one smoothed proportion (n_fail+1)/(n+2)."""
    q = (n_fail + 1) / (n + 2)
    return math.sqrt(max(q * (1 - q), 1 / (n + 2) ** 2) / n)


@dataclass(frozen=True)
class PfailPoint:
    model: str
    L: int
    p: float
    n_samples: int
    n_fail: int
    pfail: float
    stderr: float
    master_seed: int

    @property
    def parity(self) -> str:
        return "even" if self.L % 2 == 0 else "odd"

    def to_row(self) -> list[str]:
        return [
            self.model,
            str(self.L),
            micro_to_str(p_to_micro(self.p)),
            str(self.n_samples),
            str(self.n_fail),
            repr(self.pfail),
            repr(self.stderr),
            str(self.master_seed),
        ]

    @classmethod
    def from_counts(cls, model: str, L: int, p, n: int, n_fail: int, master_seed: int) -> "PfailPoint":
        return cls(model, int(L), p_to_micro(p) / P_SCALE, n, n_fail, n_fail / n, smoothed_stderr(n_fail, n), master_seed)


def _count_failures(model: str, L: int, micro: int, start: int, stop: int, master_seed: int, engine: str) -> int:
    spec = model_spec(model, L)
    rng = RngPolicy(master_seed)
    point = rng.point_seed(model, L, micro_to_str(micro))
    p = micro / P_SCALE
    fails = 0
    for i in range(start, stop):
        seed = _hash64(point, i)
        tie = _hash64(seed, 0x7E)
        winding, _, _ = decode_mask(sample_error_mask(spec, p, seed), spec, tie, engine)
        fails += any(winding)
    return fails


def _chunks(n: int, k: int) -> list[tuple[int, int]]:
    k = max(1, min(k, n))
    edges = np.linspace(0, n, k + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def estimate_pfail(
    model: str,
    L: int,
    p,
    n: int,
    master_seed: int,
    *,
    threads: int = 1,
    engine: str = "lattice",
) -> PfailPoint:
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    if int(n) != n or n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    micro = p_to_micro(p)
    model_spec(model, L)
    parts = _chunks(n, threads)
    if threads <= 1:
        n_fail = sum(_count_failures(model, L, micro, a, b, master_seed, engine) for a, b in parts)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_count_failures, model, L, micro, a, b, master_seed, engine) for a, b in parts]
            n_fail = sum(f.result() for f in futures)
    return PfailPoint.from_counts(model, L, micro_to_str(micro), n, n_fail, master_seed)


# --- sweep planning ---


def parse_p_grid(text: str) -> tuple[int, int, int]:
    """``min:max:step`` (inclusive) or a single value, in 1e-6 units."""
    parts = text.split(":")
    if len(parts) == 1:
        v = p_to_micro(parts[0])
        return v, v, 1
    if len(parts) != 3:
        raise ValueError(f"p grid must be 'min:max:step' or a single value, got {text!r}")
    lo, hi, step = (p_to_micro(s) for s in parts)
    if step <= 0 or hi < lo:
        raise ValueError(f"bad p grid {text!r}")
    return lo, hi, step


@dataclass(frozen=True)
class SweepPlan:
    model: str
    sizes: tuple[int, ...]
    p_min: int
    p_max: int
    p_step: int
    samples: int
    master_seed: int
    threads: int = 1
    engine: str = "lattice"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if not self.sizes:
            raise ValueError("no sizes in plan")
        for L in self.sizes:
            model_spec(self.model, L)
        if self.samples < 1:
            raise ValueError("samples per point must be >= 1")
        if self.p_step <= 0 or self.p_max < self.p_min or not 0 <= self.p_min <= self.p_max <= P_SCALE:
            raise ValueError("bad p grid")

    @classmethod
    def from_grid(cls, model: str, sizes: Iterable[int], p_grid: str, samples: int, master_seed: int, **kw) -> "SweepPlan":
        lo, hi, step = parse_p_grid(p_grid)
        return cls(model, tuple(int(L) for L in sizes), lo, hi, step, int(samples), int(master_seed), **kw)

    def p_micro(self) -> list[int]:
        return list(range(self.p_min, self.p_max + 1, self.p_step))

    def p_values(self) -> list[str]:
        return [micro_to_str(m) for m in self.p_micro()]

    def points(self) -> list[tuple[int, str]]:
        return [(L, p) for L in self.sizes for p in self.p_values()]

    def to_json(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        d["p_grid"] = f"{micro_to_str(self.p_min)}:{micro_to_str(self.p_max)}:{micro_to_str(self.p_step)}"
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SweepPlan":
        keys = {"model", "sizes", "p_min", "p_max", "p_step", "samples", "master_seed", "threads", "engine"}
        kw = {k: v for k, v in d.items() if k in keys}
        kw["sizes"] = tuple(kw["sizes"])
        return cls(**kw)

    def size_estimate(self) -> dict:
        """Trial counts and a rough single-core wall-clock estimate."""
        n_points = len(self.points())
        n_trials = n_points * self.samples
        dim = MODELS[self.model]
        # measured near threshold: ~0.65 ms fixed per trial plus ~0.25 us per dual bond
        seconds = sum(self.samples * len(self.p_micro()) * (6.5e-4 + 2.5e-7 * dim * L**dim) for L in self.sizes)
        return {
            "points": n_points,
            "trials": n_trials,
            "even_sizes": [L for L in self.sizes if L % 2 == 0],
            "odd_sizes": [L for L in self.sizes if L % 2 == 1],
            "estimated_seconds": seconds,
        }


# --- sweep execution ---


def _atomic_write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _point_key(L: int, p: str) -> str:
    return f"{L}:{p}"


@dataclass
class SweepSink:
    """Output directory holding ``points.csv`` and ``manifest.json``."""

    directory: Path
    csv_name: str = "points.csv"
    manifest_name: str = "manifest.json"
    extra: dict = field(default_factory=dict)

    @property
    def csv_path(self) -> Path:
        return Path(self.directory) / self.csv_name

    @property
    def manifest_path(self) -> Path:
        return Path(self.directory) / self.manifest_name


def run_sweep(plan: SweepPlan, sink: SweepSink | str | Path, *, max_points: int | None = None) -> list[PfailPoint]:
    """Run (or resume) a sweep; returns every completed point in plan order.

    ``max_points`` stops after that many newly computed points, which is how
    tests simulate an interrupted run.
    """
    if not isinstance(sink, SweepSink):
        sink = SweepSink(Path(sink))
    done: dict[str, dict] = {}
    try:
        Path(sink.directory).mkdir(parents=True, exist_ok=True)
        if sink.manifest_path.exists():
            manifest = json.loads(sink.manifest_path.read_text())
            if SweepPlan.from_json(manifest["plan"]) != plan:
                raise SweepError(f"{sink.manifest_path} belongs to a different plan")
            done = {_point_key(c["L"], c["p"]): c for c in manifest["completed"]}
        else:
            manifest = {
                "schema_version": SCHEMA_VERSION,
                "plan": plan.to_json(),
                "size_estimate": plan.size_estimate(),
                "completed": [],
                **sink.extra,
            }
        _rewrite_csv(sink.csv_path, [done[k]["row"] for k in done])
        _atomic_write_json(sink.manifest_path, manifest)
    except OSError as exc:
        raise SweepIOError(f"cannot prepare sweep output in {sink.directory}: {exc}", len(done)) from exc

    new = 0
    for L, p in plan.points():
        key = _point_key(L, p)
        if key in done:
            continue
        if max_points is not None and new >= max_points:
            break
        t0 = time.perf_counter()
        point = estimate_pfail(plan.model, L, p, plan.samples, plan.master_seed, threads=plan.threads, engine=plan.engine)
        wall = time.perf_counter() - t0
        row = point.to_row()
        entry = {"L": L, "p": p, "parity": point.parity, "row": row, "wall_seconds": wall}
        try:
            with sink.csv_path.open("a", newline="") as fh:
                csv.writer(fh).writerow(row)
            manifest["completed"].append(entry)
            _atomic_write_json(sink.manifest_path, manifest)
        except OSError as exc:
            raise SweepIOError(f"writing point L={L} p={p} failed: {exc}", len(manifest["completed"])) from exc
        done[key] = entry
        new += 1
        log.info("L=%d p=%s pfail=%.5f (%.1fs)", L, p, point.pfail, wall)

    return [_row_to_point(done[_point_key(L, p)]["row"]) for L, p in plan.points() if _point_key(L, p) in done]


def _rewrite_csv(path: Path, rows: list[list[str]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        w.writerows(rows)


def _row_to_point(row: list[str]) -> PfailPoint:
    model, L, p, n, k, pfail, se, seed = row
    return PfailPoint(model, int(L), float(p), int(n), int(k), float(pfail), float(se), int(seed))


class SchemaError(ValueError):
    pass


def read_points_csv(path: str | Path) -> list[PfailPoint]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise SchemaError(f"{path}: header {header} does not match {CSV_HEADER}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise SchemaError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields")
            try:
                out.append(_row_to_point(row))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_points_csv(path: str | Path, points: Iterable[PfailPoint]) -> None:
    _rewrite_csv(Path(path), [pt.to_row() for pt in points])
