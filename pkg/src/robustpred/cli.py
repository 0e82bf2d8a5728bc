"""Command-line interface.

Subcommands: derive (print a filter's error bound and constants), eval
(classify point rows), torture (failure-vector demo), precision-map (PPM
classification image), delaunay (triangulation with per-stage statistics),
bench (staged vs single-method timings on both kernel backends).
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import List, Optional

from . import harness
from .errorbound import DerivationError, derive, derive_filter_bounds, format_magnitude
from .expr import arity as expr_arity, serialize, top_decomposition
from .geomio import (
    PointFileError,
    read_expr_file,
    read_points_file,
    write_ppm,
    write_stats_csv,
)
from .pointgen import grid_points, uniform_points
from .predicates import BUILTIN_NAMES, StagedPredicate, builtin_expr, default_pipeline


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="robustpred",
        description="Derived floating-point filters and exact staged sign predicates",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", help="print the derived error bound for an expression")
    p.add_argument("--expr", required=True, help="expression file")
    p.add_argument("--ufp", action="store_true", help="underflow-protected rules")

    p = sub.add_parser("eval", help="classify rows of a points file")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--builtin", choices=BUILTIN_NAMES)
    g.add_argument("--expr", help="expression file")
    p.add_argument("--points", required=True, help="points file, one row per call")
    p.add_argument("--profile", choices=("fast", "safe"), default="safe")

    p = sub.add_parser("torture", help="failure vectors and the consistency demo")
    p.add_argument("--profile", choices=("fast", "safe"), default="safe")

    p = sub.add_parser("precision-map", help="write a PPM classification image")
    p.add_argument("--mode", required=True, choices=harness.map_modes())
    p.add_argument("--out", required=True, help="output .ppm path")
    p.add_argument("--width", type=int, default=harness.PRECISION_DEFAULTS["width"])
    p.add_argument("--height", type=int, default=harness.PRECISION_DEFAULTS["height"])

    p = sub.add_parser("delaunay", help="triangulate random points, report stage stats")
    p.add_argument("--random", type=int, required=True, metavar="N",
                   help="number of points (grid: rounded down to a full square)")
    p.add_argument("--dist", choices=("uniform", "grid"), default="uniform")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", choices=("fast", "safe"), default="safe")
    p.add_argument("--stats-out", help="write per-stage counters as CSV")
    p.add_argument("--max-points", type=int, default=100_000,
                   help="safety cap for this desk-scale demo")

    p = sub.add_parser("bench", help="timings: staged vs naive/interval/dyadic")
    p.add_argument("--builtin", choices=BUILTIN_NAMES, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dist", choices=("uniform", "grid"), default="uniform")
    p.add_argument("--profile", choices=("fast", "safe"), default="fast")
    return top


def _cmd_derive(args) -> int:
    expr = read_expr_file(args.expr)
    print(f"expression : {serialize(expr)}")
    print(f"arity      : {expr_arity(expr)}")
    if top_decomposition(expr) is None:
        bound = derive(expr, args.ufp)
        print("root is not a sum or difference; filter stages apply to factors")
        print(f"a          : {bound.a.format()}")
        print(f"m          : {format_magnitude(bound.m)}")
        return 0
    b = derive_filter_bounds(expr, args.ufp)
    print(f"ufp        : {b.ufp}")
    print(f"a1         : {b.a1.format()}")
    print(f"a2         : {b.a2.format()}")
    print(f"a_max      : {b.a_max.format()}")
    print(f"m1         : {format_magnitude(b.m1)}")
    print(f"m2         : {format_magnitude(b.m2)}")
    print(f"a3         : {b.constants.a3!r}  ({b.constants.a3.hex()})")
    print(f"a4         : {b.constants.a4!r}  ({b.constants.a4.hex()})")
    if b.exact:
        print("note       : zero error polynomial; the expression never rounds")
    return 0


def _cmd_eval(args) -> int:
    if args.builtin:
        pred = default_pipeline(args.builtin, args.profile)
    else:
        expr = read_expr_file(args.expr)
        pred = _general_pipeline(expr, args.profile)
    rows = read_points_file(args.points, pred.arity)
    for row in rows:
        sign, stage = pred.apply_with_stage(*row)
        text = f"{sign:+d}" if sign else "0"
        print(f"{text} stage={stage}")
    return 0


def _general_pipeline(expr, profile: str) -> StagedPredicate:
    from .filters import (
        DyadicExactStage,
        ExpansionExactStage,
        IntervalFilter,
        SemiStaticFilter,
        ZeroFilter,
    )

    stages: List[object] = []
    if top_decomposition(expr) is not None:
        stages.append(SemiStaticFilter(expr, ufp=(profile == "safe")))
    stages += [
        ZeroFilter(expr),
        IntervalFilter(expr),
        ExpansionExactStage(expr),
        DyadicExactStage(expr),
    ]
    return StagedPredicate(name="expr", expr=expr, stages=tuple(stages))


def _cmd_torture(args) -> int:
    outcome = harness.torture_report(args.profile)
    for line in outcome.lines:
        print(line)
    print("result: PASS" if outcome.ok else "result: FAIL")
    return 0 if outcome.ok else 1


def _cmd_precision_map(args) -> int:
    img = harness.precision_map(args.mode, args.width, args.height)
    write_ppm(args.out, img)
    print(f"wrote {args.out} ({args.width}x{args.height}, mode={args.mode})")
    return 0


def _cmd_delaunay(args) -> int:
    from .delaunay import audit_empty_circumcircle, delaunay, expected_triangle_count

    n = min(args.random, args.max_points)
    if args.dist == "uniform":
        pts = uniform_points(n, args.seed)
    else:
        side = max(2, math.isqrt(n))
        pts = grid_points(side, 1.0, args.seed)
    result = delaunay(pts, profile=args.profile, seed=args.seed)
    if result.collinear:
        print("warning: input is collinear; empty triangulation")
    n_unique = len(result.points)
    print(f"points     : {n_unique} unique ({result.duplicates_removed} duplicates removed)")
    print(f"triangles  : {result.triangle_count}")
    print(f"hull size  : {result.hull_size}")
    if not result.collinear:
        expected = expected_triangle_count(n_unique, result.hull_size)
        print(f"euler check: expected {expected} -> {'ok' if expected == result.triangle_count else 'MISMATCH'}")
    print(f"wall time  : {result.seconds:.3f} s")
    for st in (result.orient_stats, result.incircle_stats):
        print(f"-- {st.predicate}")
        for _, stage, name, calls, certs, fails in st.rows():
            print(f"   stage {stage} {name:>16}: calls={calls:>9}  certified={certs:>9}  failures={fails:>9}")
    if args.stats_out:
        write_stats_csv(args.stats_out, [result.orient_stats, result.incircle_stats])
        print(f"stats written to {args.stats_out}")
    return 0


def _cmd_bench(args) -> int:
    results = harness.bench(args.builtin, args.n, args.profile, args.dist)
    print(harness.format_bench(results))
    return 0


_COMMANDS = {
    "derive": _cmd_derive,
    "eval": _cmd_eval,
    "torture": _cmd_torture,
    "precision-map": _cmd_precision_map,
    "delaunay": _cmd_delaunay,
    "bench": _cmd_bench,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (PointFileError, DerivationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
