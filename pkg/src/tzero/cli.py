"""Command-line front end: ``tzero {sweep,fit,trial,oracle-check,nishimori}``.

Exit codes: 0 success, 1 runtime failure, 2 usage / input error.
``TZERO_OUTPUT_DIR`` overrides the default output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import secrets
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .decoder import run_trial
from .disorder import DisorderError, RngPolicy, model_spec, nishimori_coupling, stream
from .lattice import DefectSet, LatticeSpec
from .matcher import BRUTE_FORCE_LIMIT, brute_force_matching, min_weight_perfect_matching
from .montecarlo import (
    SCHEMA_VERSION,
    SchemaError,
    SweepError,
    SweepIOError,
    SweepPlan,
    SweepSink,
    read_points_csv,
    run_sweep,
    write_points_csv,
)
from .scaling import (
    FitError,
    FitInputError,
    crossing_estimate,
    fit_corrected,
    fit_quadratic,
    slope_exponent,
    synthetic_points,
)

log = logging.getLogger("tzero")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_sizes(text: str) -> list[int]:
    """``8,12,16`` or ``9..14`` (inclusive) or a mix of both."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise UsageError(f"no sizes in {text!r}")
    return out


def _output_dir(args, default: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    env = os.environ.get("TZERO_OUTPUT_DIR")
    return Path(env) / default if env else Path(default)


def _resolve_seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(63)
        log.info("no --seed given; drew %d", args.seed)
    return args.seed


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


# --- sweep ---


def cmd_sweep(args) -> int:
    if args.from_manifest:
        manifest = json.loads(Path(args.from_manifest).read_text())
        plan = SweepPlan.from_json(manifest["plan"])
        if args.threads is not None:
            plan = SweepPlan(**{**plan.__dict__, "threads": args.threads})
    else:
        if not (args.model and args.sizes and args.p and args.samples):
            raise UsageError("sweep needs --model, --sizes, --p and --samples (or --from-manifest)")
        try:
            plan = SweepPlan.from_grid(
                args.model,
                parse_sizes(args.sizes),
                args.p,
                args.samples,
                _resolve_seed(args),
                threads=args.threads or 1,
                engine=args.engine,
            )
        except (ValueError, DisorderError) as exc:
            raise UsageError(str(exc)) from exc
    est = plan.size_estimate()
    print(
        f"plan: {plan.model} sizes={list(plan.sizes)} p={plan.to_json()['p_grid']} "
        f"samples={plan.samples} seed={plan.master_seed}: {est['points']} points, "
        f"{est['trials']} trials, ~{est['estimated_seconds']:.3g} s single-core"
    )
    if args.dry_run:
        return EXIT_OK
    out = _output_dir(args, f"sweep-{plan.model}-{plan.master_seed}")
    sink = SweepSink(out, extra={"tool_version": __version__, "command": "sweep", "config": _config(args)})
    points = run_sweep(plan, sink, max_points=args.max_points)
    print(f"{len(points)} points -> {sink.csv_path}")
    return EXIT_OK


# --- fit ---


def _fit_report(points, args) -> dict:
    fitter = fit_corrected if args.ansatz == "corrected" else fit_quadratic
    fit = fitter(points, args.parity, l_min=args.l_min, bootstrap=args.bootstrap, seed=args.seed)
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "config": _config(args),
        "fit": fit.to_json(),
    }
    used = [pt for pt in points if args.parity == "all" or pt.parity == args.parity]
    if args.l_min is not None:
        used = [pt for pt in used if pt.L >= args.l_min]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cross = crossing_estimate(used, quiet=True)
        report["crossing"] = {
            "p_c0": cross.p_c0,
            "spread": cross.spread,
            "pairs": {f"{a}-{b}": v for (a, b), v in cross.crossings.items()},
        }
        try:
            slope = slope_exponent(used, fit.p_c0)
            report["slope_exponent"] = {"nu0": slope.nu0, "error": slope.error}
        except (FitInputError, np.linalg.LinAlgError) as exc:
            report["slope_exponent"] = {"unavailable": str(exc)}
    return report, fit, len(used)


def _selftest(args) -> int:
    _resolve_seed(args)
    truth = {"p_c0": 0.103, "nu0": 1.46, "A": 0.3, "B": 5.0, "C": 8.0}
    ps = [round(0.095 + 0.002 * i, 6) for i in range(11)]
    corrections = None
    sizes = [8, 12, 16, 24]
    if args.ansatz == "corrected":
        corrections = {"even": (0.165, 0.71)}
        truth.update({"D_even": 0.165, "mu_even": 0.71})
        sizes = [4, 6, 8, 12, 16, 24]
    pts = synthetic_points("rbim2d", sizes, ps, corrections=corrections, **{k: truth[k] for k in ("p_c0", "nu0", "A", "B", "C")})
    out = _output_dir(args, "fit-selftest")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "synthetic.csv"
    write_points_csv(csv_path, pts)
    args.parity = "even"
    report, fit, _ = _fit_report(read_points_csv(csv_path), args)
    _write_json(out / "report.json", report)
    worst = max(abs(fit[k] - v) / abs(v) for k, v in truth.items())
    print(f"selftest: worst relative parameter error {worst:.2e} ({csv_path})")
    return EXIT_OK if worst <= 1e-3 else EXIT_FAIL


def cmd_fit(args) -> int:
    if args.selftest:
        return _selftest(args)
    _resolve_seed(args)
    if not args.input:
        raise UsageError("fit needs --input (or --selftest)")
    if not args.parity:
        raise UsageError("fit needs --parity {even,odd,all}")
    try:
        points = read_points_csv(args.input)
    except SchemaError as exc:
        raise UsageError(str(exc)) from exc
    try:
        report, fit, n_used = _fit_report(points, args)
    except FitInputError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.output) if args.output else _output_dir(args, "fit") / "report.json"
    _write_json(out, report)
    print(f"rows used: {n_used} of {len(points)} (parity {args.parity})")
    print(f"p_c0 = {fit.p_c0:.6f} +/- {fit.error('p_c0'):.6f}")
    print(f"nu0  = {fit.nu0:.4f} +/- {fit.error('nu0'):.4f}")
    print(f"chi2/dof = {fit.chi2:.3f}/{fit.dof}")
    print(f"report -> {out}")
    return EXIT_OK


# --- trial ---


def cmd_trial(args) -> int:
    seed = _resolve_seed(args)
    try:
        spec = model_spec(args.model, args.L)
        outcome = run_trial(
            spec, args.model, args.p, args.index, RngPolicy(seed),
            engine=args.engine, keep_record=True, neighbors=args.prune,
        )
    except (ValueError, DisorderError) as exc:
        raise UsageError(str(exc)) from exc
    rec = outcome.record
    rec.update({"master_seed": seed, "engine": args.engine, "schema_version": SCHEMA_VERSION})
    if args.dump:
        text = json.dumps(rec, indent=None if args.format == "json" else 2)
        if args.dump == "-":
            print(text)
        else:
            Path(args.dump).write_text(text + "\n")
    status = "success" if outcome.success else "failure"
    if rec["matching"]["approximate"]:
        status += " (pruned matching, approximate)"
    print(
        f"{args.model} L={args.L} p={args.p} index={args.index}: {status} "
        f"class={list(outcome.cycle_class.winding)} |E|={outcome.weights[0]} |E'|={outcome.weights[1]}",
        file=sys.stderr if args.dump == "-" else sys.stdout,
    )
    return EXIT_OK


# --- oracle check ---


def oracle_battery(
    instances: int, max_defects: int, seed: int, engines=("complete", "lattice"), dims=(2, 3)
) -> list[dict]:
    """Random defect sets checked against the brute-force minimum."""
    rng = stream(seed)
    mismatches = []
    for i in range(instances):
        dim = int(rng.choice(dims))
        L = int(rng.integers(4, 9))
        spec = LatticeSpec(dim, L)
        k = 2 * int(rng.integers(1, max_defects // 2 + 1))
        sites = rng.choice(spec.n_sites, size=k, replace=False)
        defects = DefectSet(spec, frozenset(int(s) for s in sites))
        ref = brute_force_matching(defects)
        for engine in engines:
            got = min_weight_perfect_matching(defects, int(rng.integers(0, 2**63)), engine=engine)
            if got.total_weight != ref.total_weight:
                mismatches.append({"instance": i, "engine": engine, "dim": dim, "L": L, "sites": sorted(defects.sites), "got": got.total_weight, "want": ref.total_weight})
    return mismatches


def cmd_oracle_check(args) -> int:
    if args.max_defects > BRUTE_FORCE_LIMIT:
        raise UsageError(f"--max-defects {args.max_defects} exceeds the brute-force bound {BRUTE_FORCE_LIMIT}")
    if args.max_defects < 2:
        raise UsageError("--max-defects must be at least 2")
    if args.instances < 0:
        raise UsageError("--instances must be >= 0")
    seed = _resolve_seed(args)
    if args.instances == 0:
        warnings.warn("oracle-check with zero instances passes vacuously", stacklevel=1)
        print("0 instances: vacuous pass")
        return EXIT_OK
    engines = ("complete", "lattice") if args.engine == "both" else (args.engine,)
    t0 = time.perf_counter()
    bad = oracle_battery(args.instances, args.max_defects, seed, engines)
    print(f"{args.instances} instances x {len(engines)} engine(s), seed {seed}: {len(bad)} mismatches ({time.perf_counter() - t0:.1f}s)")
    for m in bad[:10]:
        print("  mismatch:", json.dumps(m))
    return EXIT_OK if not bad else EXIT_FAIL


# --- nishimori ---


def cmd_nishimori(args) -> int:
    try:
        k = nishimori_coupling(args.p)
    except DisorderError as exc:
        raise UsageError(str(exc)) from exc
    t = math.inf if k == 0 else 1.0 / k
    print(f"K_p = {k:.6g}")
    print(f"T/J = {'inf' if math.isinf(t) else format(t, '.6g')}")
    return EXIT_OK


# --- wiring ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tzero", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep", help="estimate P_fail over a (L, p) grid")
    sp.add_argument("--model", choices=["rbim2d", "rpgm3d"])
    sp.add_argument("--sizes", help="e.g. 8,12,16 or 9..14")
    sp.add_argument("--p", help="min:max:step (inclusive) or a single value")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--engine", choices=["lattice", "complete"], default="lattice")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--from-manifest", help="re-run the plan recorded in a manifest")
    sp.add_argument("--dry-run", action="store_true", help="validate and size the plan only")
    sp.add_argument("--max-points", type=int, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_sweep)

    fp = sub.add_parser("fit", help="finite-size-scaling fit of a sweep CSV")
    fp.add_argument("--input")
    fp.add_argument("--parity", choices=["even", "odd", "all"])
    fp.add_argument("--ansatz", choices=["quadratic", "corrected"], default="quadratic")
    fp.add_argument("--l-min", type=int)
    fp.add_argument("--bootstrap", type=int, default=200)
    fp.add_argument("--seed", type=int)
    fp.add_argument("--output", help="report path (JSON)")
    fp.add_argument("--out", help="output directory")
    fp.add_argument("--selftest", action="store_true", help="fit synthetic ansatz data and check recovery")
    fp.set_defaults(func=cmd_fit)

    tp = sub.add_parser("trial", help="run and optionally dump a single trial")
    tp.add_argument("--model", choices=["rbim2d", "rpgm3d"], required=True)
    tp.add_argument("--L", type=int, required=True)
    tp.add_argument("--p", required=True)
    tp.add_argument("--index", type=int, default=0)
    tp.add_argument("--seed", type=int)
    tp.add_argument("--engine", choices=["lattice", "complete"], default="complete")
    tp.add_argument("--prune", type=int, metavar="M", help="complete engine: join each defect to its M nearest only (approximate)")
    tp.add_argument("--dump", nargs="?", const="-", help="write the full record as JSON (default stdout)")
    tp.add_argument("--format", choices=["json", "pretty"], default="pretty")
    tp.set_defaults(func=cmd_trial)

    op = sub.add_parser("oracle-check", help="blossom vs brute force on random instances")
    op.add_argument("--instances", type=int, default=500)
    op.add_argument("--max-defects", type=int, default=12)
    op.add_argument("--seed", type=int)
    op.add_argument("--engine", choices=["both", "complete", "lattice"], default="both")
    op.set_defaults(func=cmd_oracle_check)

    np_ = sub.add_parser("nishimori", help="print K_p and T/J on the Nishimori line")
    np_.add_argument("p", type=float)
    np_.set_defaults(func=cmd_nishimori)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tzero {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SweepIOError, OSError) as exc:
        print(f"tzero {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (SweepError, FitError) as exc:
        print(f"tzero {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
