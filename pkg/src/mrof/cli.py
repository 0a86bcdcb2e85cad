"""``mrof`` command line: denoise, verify, oracle-compare.

Exit codes: 0 success, 1 a study or comparison failed, 2 bad arguments or
input files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .domain import Field, make_grid, read_field, write_field
from .errors import MrofError
from .manifold import parse_manifold
from .oracle import taut_string_1d
from .solver import (
    SolveConfig,
    continuation,
    default_schedule,
    dumps_reports,
    geometric_schedule,
    validate_schedule,
    write_trace_csv,
)
from . import verify as V

ORACLE_GAP_TOL = 1e-3
STUDIES = ("convexity", "retraction", "ellipticity", "counterexample-s2", "lipschitz", "range", "mollifier")


class UsageError(Exception):
    pass


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        raw = os.environ.get("MROF_THREADS", "1")
        try:
            n = int(raw)
        except ValueError:
            raise UsageError(f"MROF_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("threads must be >= 1")
    return n


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=True) + "\n"


# --- denoise --------------------------------------------------------------------


def _load_schedule(arg, grid, args):
    if arg is None:
        return [(args.eps, args.sigma, args.delta)]
    if arg == "default":
        return default_schedule(grid, sigma=args.sigma if args.sigma > 0 else None)
    text = arg
    if not arg.lstrip().startswith("["):
        try:
            text = Path(arg).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read schedule {arg!r}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"schedule is not valid JSON: {exc.msg}") from None
    stages = []
    for st in data:
        if isinstance(st, dict):
            stages.append((st["eps"], st.get("sigma", 0.0), st.get("delta", 0.0)))
        else:
            stages.append(tuple(st))
    return stages


def cmd_denoise(args) -> int:
    try:
        fld = read_field(args.input)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.input!r} is not valid JSON: {exc.msg}") from None
    M, grid = fld.manifold, fld.grid
    if args.manifold and parse_manifold(args.manifold) != M:
        raise UsageError(f"--manifold {args.manifold} does not match the input field ({M.spec})")
    if args.grid and make_grid(args.grid) != grid:
        raise UsageError(f"--grid {args.grid} does not match the input field ({grid.spec})")
    schedule = validate_schedule(_load_schedule(args.schedule, grid, args))
    cfg = SolveConfig(max_iter=args.max_iter, grad_tol=args.grad_tol, seed=args.seed, on_max_iter="flag")
    u, reports = continuation(M, grid, fld.values, args.lam, schedule, cfg)
    out = Path(args.out)
    stem = out.with_suffix("")
    report_path = Path(args.report) if args.report else Path(f"{stem}.report.json")
    trace_path = Path(args.trace) if args.trace else Path(f"{stem}.trace.csv")
    write_field(out, Field(M, grid, u))
    doc = {
        "manifold": M.spec,
        "grid": grid.spec,
        "lambda": args.lam,
        "schedule": [list(s) for s in schedule],
        "stages": json.loads(dumps_reports(reports)),
    }
    _write_text(report_path, _dump_json(doc))
    write_trace_csv(trace_path, reports)
    last = reports[-1]
    print(
        f"denoise: {len(reports)} stage(s), final energy {last.final_energy.total:.12g}, "
        f"flags {','.join(last.flags)} -> {out}"
    )
    return 0


# --- verify ---------------------------------------------------------------------


def _family_for(M, seed):
    if M.kind == "euclidean" and M.dim == 1:
        return V.sawtooth_family()
    return V.geodesic_path_family(M, seed=seed)


def run_study(args):
    threads = _threads(args)
    name = args.study
    M = parse_manifold(args.manifold) if args.manifold else None
    grid = make_grid(args.grid) if args.grid else None
    trials = args.trials
    if name == "convexity":
        M = M or parse_manifold("hyperbolic:2")
        return V.convexity_sweep(M, grid or make_grid("circle:16"), trials or 100, args.seed, threads=threads)
    if name == "retraction":
        M = M or parse_manifold("hyperbolic:2")
        return V.retraction_monotonicity(M, grid or make_grid("circle:16"), trials or 500, seed=args.seed,
                                         threads=threads)
    if name == "ellipticity":
        return V.ellipticity_sweep(trials or 10000, args.seed)
    if name == "counterexample-s2":
        return V.counterexample_search_s2(grid or make_grid("circle:8"), trials or 10000, args.seed)
    if name == "lipschitz":
        M = M or parse_manifold("hyperbolic:2")
        sizes = tuple(int(s) for s in args.sizes.split(","))
        return V.lipschitz_scaling_study(_family_for(M, args.seed), sizes, lam=args.lam or 100.0,
                                         threads=threads)
    if name == "range":
        M = M or parse_manifold("hyperbolic:2")
        return V.range_invariance_study(M, grid or make_grid("interval:64"), trials or 20, args.seed,
                                        lam=args.lam or 4.0, threads=threads)
    if name == "mollifier":
        M = M or parse_manifold("euclidean:1")
        g = grid or make_grid("interval:64")
        fam = _family_for(M, args.seed) if g.is_1d else None
        return V.mollifier_study(M, g, seed=args.seed, family=fam)
    raise UsageError(f"unknown study {name!r}")


def cmd_verify(args) -> int:
    rep = run_study(args)
    text = rep.dumps()
    if args.out:
        _write_text(args.out, text)
    if args.csv:
        _write_text(args.csv, rep.to_csv())
    if not args.out:
        sys.stdout.write(text)
    status = "PASS" if rep.passed else "FAIL"
    print(f"verify {rep.study}: {status} ({rep.violations} violation(s), min margin {rep.min_margin:.3e})",
          file=sys.stderr)
    return 0 if rep.passed else 1


# --- oracle-compare -------------------------------------------------------------


def random_lipschitz_signal(grid, rng, knots=8, amplitude=1.0):
    """Piecewise-linear interpolation of random values at equispaced knots."""
    xk = np.linspace(0.0, 1.0, knots)
    yk = amplitude * rng.uniform(-1.0, 1.0, knots)
    return np.interp(grid.coords[:, 0], xk, yk)


def oracle_compare(grid, lam, seed, signals=20, threads=1, schedule=None):
    """Solver with continuation vs the taut string on random Lipschitz signals."""
    M = parse_manifold("euclidean:1")
    schedule = schedule or geometric_schedule(1e-1, 0.25, 6)
    cfg = SolveConfig(on_max_iter="flag")

    def case(i, rng):
        f = random_lipschitz_signal(grid, rng)
        u, reports = continuation(M, grid, f[:, None], lam, schedule, cfg)
        ts = taut_string_1d(f, lam, grid=grid).values
        return {"signal": i, "gap": float(np.max(np.abs(u[:, 0] - ts))),
                "iterations": sum(r.iterations for r in reports),
                "converged": all(r.converged for r in reports)}

    cases = V.run_cases(case, signals, seed, threads)
    gap = max(c["gap"] for c in cases)
    return {"grid": grid.spec, "lambda": lam, "seed": seed, "signals": signals,
            "schedule": [list(s) for s in schedule], "max_gap": gap, "tolerance": ORACLE_GAP_TOL,
            "passed": gap <= ORACLE_GAP_TOL, "cases": cases}


def cmd_oracle_compare(args) -> int:
    grid = make_grid(args.grid)
    if grid.kind != "interval":
        raise UsageError("oracle-compare needs an interval grid")
    res = oracle_compare(grid, args.lam, args.seed, args.signals, _threads(args))
    text = _dump_json(res)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"oracle-compare: max gap {res['max_gap']:.3e} (tolerance {ORACLE_GAP_TOL:g})", file=sys.stderr)
    return 0 if res["passed"] else 1


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrof", description="Manifold-valued ROF/Mosolov denoising.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=None, help="default: $MROF_THREADS or 1")

    d = sub.add_parser("denoise", help="run continuation on a field file")
    d.add_argument("--manifold")
    d.add_argument("--grid")
    d.add_argument("--input", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--report", help="default: <out>.report.json")
    d.add_argument("--trace", help="default: <out>.trace.csv")
    d.add_argument("--lambda", dest="lam", type=float, required=True)
    d.add_argument("--sigma", type=float, default=0.0)
    d.add_argument("--eps", type=float, default=1e-2)
    d.add_argument("--delta", type=float, default=0.0)
    d.add_argument("--schedule", help="'default', a JSON file, or an inline JSON list of [eps, sigma, delta]")
    d.add_argument("--max-iter", type=int, default=2000)
    d.add_argument("--grad-tol", type=float, default=1e-8)
    common(d)
    d.set_defaults(func=cmd_denoise)

    v = sub.add_parser("verify", help="run a verification study")
    v.add_argument("study", choices=STUDIES)
    v.add_argument("--manifold")
    v.add_argument("--grid")
    v.add_argument("--trials", type=int)
    v.add_argument("--lambda", dest="lam", type=float)
    v.add_argument("--sizes", default="32,64,128,256,512")
    v.add_argument("--out", help="StudyReport JSON (default: stdout)")
    v.add_argument("--csv", help="per-case table")
    common(v)
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle-compare", help="solver vs taut string on scalar signals")
    o.add_argument("--grid", required=True)
    o.add_argument("--lambda", dest="lam", type=float, required=True)
    o.add_argument("--signals", type=int, default=20)
    o.add_argument("--out")
    common(o)
    o.set_defaults(func=cmd_oracle_compare)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed its diagnostic
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, MrofError, ValueError) as exc:
        print(f"mrof: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
