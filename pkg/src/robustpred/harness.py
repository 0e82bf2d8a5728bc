"""Demonstration harness: torture vectors, precision maps, benchmarks.

These are the CLI's working parts, kept importable so the test suite can
drive them without subprocesses.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .expr import eval_naive
from .fpn import oracle_sign, sign_of_float
from .kernels import HAS_NUMBA, active_backend, set_backend
from .kernels.batch import ExprKernels, PipelineBatch
from .kernels.codegen import UNCERTAIN
from .pointgen import SplitMix64, grid_points, uniform_points
from .predicates import builtin_expr, default_pipeline

__all__ = [
    "UNDERFLOW_TRIPLE",
    "OVERFLOW_TRIPLE",
    "CONSISTENCY_POINTS",
    "precision_map",
    "PRECISION_DEFAULTS",
    "map_modes",
    "torture_report",
    "point_in_triangle",
    "bench",
]

# the two range-failure vectors: products underflow to an exact zero in the
# first, overflow to infinities whose difference is NaN in the second
UNDERFLOW_TRIPLE = (2.0**-801, 2.0**-801, 2.0**-800, 2.0**-800, 2.0**-801, 2.0**-800)
OVERFLOW_TRIPLE = (2.0**800, 2.0**800, 2.0**800, 2.0**800, 0.0, 0.0)

# near-collinear quadruple whose naive orientation signs are mutually
# contradictory: a-b-e and b-d-e classify as collinear but a-b-d does not
CONSISTENCY_POINTS = {
    "a": (-0.01, -0.59),
    "b": (0.01, 0.57),
    "c": (0.0, -0.01),
    "d": (0.15, 8.69),
    "e": (0.07, 4.05),
}


# --- precision map ------------------------------------------------------------

PRECISION_DEFAULTS = {
    "a": (20.1, 20.1),
    "b": (18.9, 18.9),
    "center": (3.5, 3.5),
    "width": 1350,
    "height": 675,
}

_COLORS = {
    1: (255, 0, 0),  # left side: red
    0: (0, 255, 0),  # collinear: green
    -1: (0, 0, 255),  # right side: blue
    UNCERTAIN: (255, 255, 0),  # filter failure: yellow
}


def _ulp_range(center: float, below: int, above: int) -> np.ndarray:
    """Floats from ``center - below`` ulp steps to ``center + above`` steps."""
    vals = [center]
    v = center
    for _ in range(below):
        v = math.nextafter(v, -math.inf)
        vals.append(v)
    vals.reverse()
    v = center
    for _ in range(above):
        v = math.nextafter(v, math.inf)
        vals.append(v)
    return np.asarray(vals, dtype=np.float64)


def map_modes() -> Tuple[str, ...]:
    return ("naive", "semistatic", "interval", "exact")


def precision_map(
    mode: str,
    width: int = PRECISION_DEFAULTS["width"],
    height: int = PRECISION_DEFAULTS["height"],
    a: Tuple[float, float] = PRECISION_DEFAULTS["a"],
    b: Tuple[float, float] = PRECISION_DEFAULTS["b"],
    center: Tuple[float, float] = PRECISION_DEFAULTS["center"],
) -> np.ndarray:
    """Classification image around ``center``: one pixel per ulp step.

    Pixel (width//2, height//2) is exactly the center point; x grows to the
    right, y grows upward.  Returns (height, width, 3) uint8.
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be at least 1")
    signs = classify_neighborhood(mode, width, height, a, b, center)
    img = np.empty((height, width, 3), dtype=np.uint8)
    for value, rgb in _COLORS.items():
        img[signs == value] = rgb
    return img


def classify_neighborhood(mode, width, height, a, b, center) -> np.ndarray:
    """Sign (or uncertain) of orient2d per pixel, shaped (height, width)."""
    if mode not in map_modes():
        raise ValueError(f"unknown mode {mode!r}; choose from {map_modes()}")
    xs_vals = _ulp_range(center[0], width // 2, width - width // 2 - 1)
    ys_vals = _ulp_range(center[1], height // 2, height - height // 2 - 1)
    ys_vals = ys_vals[::-1]  # row 0 is the top of the image
    n = width * height
    xs = np.empty((n, 6), dtype=np.float64)
    xs[:, 0] = a[0]
    xs[:, 1] = a[1]
    xs[:, 2] = b[0]
    xs[:, 3] = b[1]
    xs[:, 4] = np.tile(xs_vals, height)
    xs[:, 5] = np.repeat(ys_vals, width)
    kern = ExprKernels(builtin_expr("orient2d"))
    if mode == "naive":
        v = kern.naive_batch(xs)
        signs = (v > 0).astype(np.int8) - (v < 0).astype(np.int8)
    elif mode == "semistatic":
        signs = kern.semistatic_batch(xs, ufp=True)
    elif mode == "interval":
        signs = kern.interval_batch(xs)
    else:
        signs = kern.oracle_batch(xs)
    return signs.reshape(height, width)


# --- torture vectors and the winding-number demo -------------------------------


def point_in_triangle(p, tri, orient: Callable[..., int]) -> str:
    """Ternary relation of a point to a closed triangle: inside, boundary or
    outside, decided by the winding number over exact orientation signs."""
    px, py = p
    wn = 0
    for k in range(3):
        ux, uy = tri[k]
        vx, vy = tri[(k + 1) % 3]
        side = orient(ux, uy, vx, vy, px, py)
        if side == 0:
            if min(ux, vx) <= px <= max(ux, vx) and min(uy, vy) <= py <= max(uy, vy):
                return "boundary"
            continue
        if uy <= py:
            if vy > py and side > 0:
                wn += 1
        else:
            if vy <= py and side < 0:
                wn -= 1
    return "inside" if wn != 0 else "outside"


@dataclass
class TortureOutcome:
    lines: List[str]
    ok: bool
    naive_underflow: float
    naive_overflow: float
    staged_underflow: int
    staged_overflow: int
    naive_consistency: Tuple[int, int, int]
    staged_consistency: Tuple[int, int, int]
    relation_t1: str
    relation_t2: str
    relation_union: str


def torture_report(profile: str = "safe") -> TortureOutcome:
    """Run the failure vectors and the point-vs-triangles demo.

    ``ok`` is False when any staged result disagrees with the dyadic oracle.
    """
    expr = builtin_expr("orient2d")
    pred = default_pipeline("orient2d", profile)
    lines: List[str] = []
    ok = True

    def staged(coords) -> int:
        return pred.apply(*coords)

    nu = eval_naive(expr, UNDERFLOW_TRIPLE)
    su = staged(UNDERFLOW_TRIPLE)
    ou = oracle_sign(expr, UNDERFLOW_TRIPLE)
    ok &= su == ou
    lines.append(f"underflow triple   naive={nu!r:6} staged={su:+d} oracle={ou:+d}")

    no = eval_naive(expr, OVERFLOW_TRIPLE)
    so = staged(OVERFLOW_TRIPLE)
    oo = oracle_sign(expr, OVERFLOW_TRIPLE)
    ok &= so == oo
    lines.append(f"overflow triple    naive={no!r:6} staged={so:+d} oracle={oo:+d}")

    pts = CONSISTENCY_POINTS
    triples = [
        (pts["a"], pts["b"], pts["e"]),
        (pts["b"], pts["d"], pts["e"]),
        (pts["a"], pts["b"], pts["d"]),
    ]
    naive_signs = []
    staged_signs = []
    for t in triples:
        coords = (*t[0], *t[1], *t[2])
        naive_signs.append(sign_of_float(eval_naive(expr, coords)))
        s = staged(coords)
        ok &= s == oracle_sign(expr, coords)
        staged_signs.append(s)
    naive_contradiction = (
        naive_signs[0] == 0 and naive_signs[1] == 0 and naive_signs[2] != 0
    )
    staged_contradiction = (
        staged_signs[0] == 0 and staged_signs[1] == 0 and staged_signs[2] != 0
    )
    lines.append(
        f"consistency        naive={tuple(naive_signs)} "
        f"{'CONTRADICTION' if naive_contradiction else 'consistent'}"
    )
    lines.append(
        f"                   staged={tuple(staged_signs)} "
        f"{'CONTRADICTION' if staged_contradiction else 'consistent'}"
    )
    ok &= not staged_contradiction

    # winding-number relation of c to the two closed triangles
    a, b, c = pts["a"], pts["b"], pts["c"]
    t1 = ((-1.0, 0.0), a, b)
    t2 = ((1.0, 0.0), b, a)

    def exact_orient(*coords) -> int:
        return pred.apply(*coords)

    def naive_orient(*coords) -> int:
        return sign_of_float(eval_naive(expr, coords))

    rel_naive = (
        point_in_triangle(c, t1, naive_orient),
        point_in_triangle(c, t2, naive_orient),
    )
    rel1 = point_in_triangle(c, t1, exact_orient)
    rel2 = point_in_triangle(c, t2, exact_orient)
    in_union = "inside" if ("inside" in (rel1, rel2) or "boundary" in (rel1, rel2)) else "outside"
    lines.append(
        f"c vs t1,t2,union   naive=({rel_naive[0]}, {rel_naive[1]}) "
        f"exact=({rel1}, {rel2}, {in_union})"
    )
    return TortureOutcome(
        lines=lines,
        ok=ok,
        naive_underflow=nu,
        naive_overflow=no,
        staged_underflow=su,
        staged_overflow=so,
        naive_consistency=tuple(naive_signs),
        staged_consistency=tuple(staged_signs),
        relation_t1=rel1,
        relation_t2=rel2,
        relation_union=in_union,
    )


# --- benchmark -----------------------------------------------------------------


def _bench_inputs(builtin: str, n: int, dist: str, seed: int = 20240) -> np.ndarray:
    from .expr import arity as expr_arity

    ar = expr_arity(builtin_expr(builtin))
    if dist == "uniform":
        rng = SplitMix64(seed)
        flat = np.asarray(
            [rng.random() for _ in range(n * ar)], dtype=np.float64
        )
        return flat.reshape(n, ar)
    if dist == "grid":
        rng = SplitMix64(seed)
        side = 64
        flat = np.asarray(
            [float(rng.randrange(side)) for _ in range(n * ar)], dtype=np.float64
        )
        return flat.reshape(n, ar)
    raise ValueError(f"unknown distribution {dist!r}")


def _time_call(fn, *args) -> Tuple[float, object]:
    t0 = time.perf_counter()
    out = fn(*args)
    return time.perf_counter() - t0, out


def bench(
    builtin: str,
    n: int,
    profile: str = "fast",
    dist: str = "uniform",
    backends: Optional[Sequence[str]] = None,
) -> Dict:
    """Mean ns/call for the staged pipeline and the single-method baselines.

    The same input stream feeds every variant.  ``backends`` defaults to
    numpy plus numba when available, so the report compares the JIT kernels
    with the pure-numpy fallback directly.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    xs = _bench_inputs(builtin, n, dist)
    expr = builtin_expr(builtin)
    if backends is None:
        backends = ("numpy", "numba") if HAS_NUMBA else ("numpy",)
    previous = active_backend()
    results: Dict = {"builtin": builtin, "n": n, "dist": dist, "profile": profile,
                     "backends": {}}
    kern = ExprKernels(expr)
    try:
        for be in backends:
            set_backend(be)
            pipe = PipelineBatch(expr, profile, builtin)
            # warm-up compiles the kernels outside the timed region
            pipe.run(xs[: min(256, n)])
            kern.naive_batch(xs[:256])
            kern.interval_batch(xs[:256])
            t_staged, (_, _, stats) = _time_call(pipe.run, xs)
            t_naive, _ = _time_call(kern.naive_batch, xs)
            t_interval, _ = _time_call(kern.interval_batch, xs)
            results["backends"][be] = {
                "staged_ns": t_staged / n * 1e9,
                "naive_ns": t_naive / n * 1e9,
                "interval_ns": t_interval / n * 1e9,
                "stage1_rate": stats.certifications[0] / stats.calls[0],
            }
        t_oracle, _ = _time_call(kern.oracle_batch, xs)
        results["dyadic_ns"] = t_oracle / n * 1e9
        for be in results["backends"].values():
            be["staged_over_dyadic"] = be["staged_ns"] / results["dyadic_ns"]
    finally:
        set_backend(previous)
    return results


def format_bench(results: Dict) -> str:
    lines = [
        f"builtin={results['builtin']} n={results['n']} dist={results['dist']} "
        f"profile={results['profile']}",
        f"dyadic-exact-only: {results['dyadic_ns']:10.1f} ns/call",
    ]
    for name, r in results["backends"].items():
        lines.append(
            f"[{name:5}] staged: {r['staged_ns']:9.1f} ns/call"
            f"  naive: {r['naive_ns']:8.1f}  interval: {r['interval_ns']:8.1f}"
            f"  stage1-rate: {r['stage1_rate']:.4f}"
            f"  staged/dyadic: {r['staged_over_dyadic']:.4f}"
        )
    return "\n".join(lines)
