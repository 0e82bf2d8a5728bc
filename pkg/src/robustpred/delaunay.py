"""Incremental Bowyer-Watson Delaunay triangulation on staged predicates.

Every orientation and incircle decision goes through the exact staged
predicates, so the combinatorial structure is the true Delaunay
triangulation (up to cocircular diagonal choices).  Three auxiliary vertices
far outside the input act as a bounding triangle; their distance is derived
from the input's span and lattice granularity so that no circumcircle of
finite points can reach them, which keeps the finite part of the final
triangulation exactly Delaunay.

Insertion order is the input order shuffled by a fixed splitmix64 stream,
making failure counts reproducible across platforms.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .fpn import BINARY64, FpnParams
from .kernels.batch import ExprKernels
from .pointgen import SplitMix64
from .predicates import StagedPredicate, builtin_expr, default_pipeline
from .stats import StageStats

__all__ = [
    "DelaunayResult",
    "delaunay",
    "hull_boundary_count",
    "expected_triangle_count",
    "audit_empty_circumcircle",
]

Point = Tuple[float, float]
Tri = Tuple[int, int, int]


@dataclass
class DelaunayResult:
    points: List[Point]  # unique points actually triangulated
    triangles: List[Tri]  # ccw index triples into ``points``
    duplicates_removed: int
    hull_size: int
    collinear: bool
    seconds: float
    orient_stats: StageStats
    incircle_stats: StageStats

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)


def expected_triangle_count(n: int, hull_size: int) -> int:
    """Euler relation for a full triangulation of the convex hull."""
    return 2 * n - hull_size - 2


def _dedup(points: Sequence[Point]) -> Tuple[List[Point], int]:
    seen: Set[Point] = set()
    out: List[Point] = []
    for p in points:
        t = (float(p[0]), float(p[1]))
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out, len(points) - len(out)


def _super_distance(points: Sequence[Point]) -> float:
    """A power-of-two distance no finite-point circumcircle can reach.

    Any circle through three of the input points has radius at most
    ``(2S)**3 / (2 g**2)`` where S bounds the coordinate magnitudes and g is
    the coarsest lattice containing all coordinates; the bounding-triangle
    vertices are placed far beyond that.
    """
    s_exp = -1074
    g_exp = 1024
    for x, y in points:
        for v in (x, y):
            if v != 0.0:
                _, e = math.frexp(v)
                s_exp = max(s_exp, e)
                g_exp = min(g_exp, e - 53)
    if s_exp == -1074:  # all points at the origin
        return 1.0
    r_log = 3 * (s_exp + 1) - 1 - 2 * g_exp
    d_exp = max(r_log + 3, s_exp + 4)
    if d_exp > 1020:
        raise ValueError(
            "input spans too many binades for the bounding-triangle construction"
        )
    return math.ldexp(1.0, d_exp)


class _Triangulation:
    """Triangle soup with a directed-edge map for neighbor lookups."""

    def __init__(self) -> None:
        self.edge: Dict[Tuple[int, int], Tri] = {}
        self.triangles: Set[Tri] = set()

    def add(self, tri: Tri) -> None:
        self.triangles.add(tri)
        a, b, c = tri
        self.edge[(a, b)] = tri
        self.edge[(b, c)] = tri
        self.edge[(c, a)] = tri

    def remove(self, tri: Tri) -> None:
        self.triangles.discard(tri)
        a, b, c = tri
        for e in ((a, b), (b, c), (c, a)):
            if self.edge.get(e) == tri:
                del self.edge[e]

    def neighbor(self, u: int, v: int) -> Optional[Tri]:
        """Triangle on the left of the directed edge (u, v)."""
        return self.edge.get((u, v))


def delaunay(
    points: Sequence[Point],
    profile: str = "safe",
    seed: int = 0,
    params: FpnParams = BINARY64,
    orient: Optional[StagedPredicate] = None,
    incircle: Optional[StagedPredicate] = None,
) -> DelaunayResult:
    """Triangulate ``points``; duplicates are dropped and reported.

    All-collinear input yields an empty triangulation with the ``collinear``
    flag set.
    """
    t0 = time.perf_counter()
    pts, dup = _dedup(points)
    orient = orient or default_pipeline("orient2d", profile, params)
    incircle = incircle or default_pipeline("incircle2d", profile, params)
    orient_stats = orient.new_stats()
    incircle_stats = incircle.new_stats()

    if len(pts) < 3:
        return DelaunayResult(
            pts, [], dup, len(pts), True, time.perf_counter() - t0,
            orient_stats, incircle_stats,
        )

    d = _super_distance(pts)
    verts: List[Point] = [(-d, -d), (d, -d), (0.0, d)] + pts
    tr = _Triangulation()
    tr.add((0, 1, 2))
    rng = SplitMix64((seed ^ 0x5DE6_1A17_9C26_B2F5) & ((1 << 64) - 1))
    order = list(range(3, len(verts)))
    SplitMix64(seed).shuffle(order)

    def osign(u: int, v: int, w: int) -> int:
        return orient.apply_counted(
            (verts[u][0], verts[u][1], verts[v][0], verts[v][1], verts[w][0], verts[w][1]),
            orient_stats,
        )

    def in_circum(tri: Tri, w: int) -> bool:
        a, b, c = tri
        s = incircle.apply_counted(
            (
                verts[a][0], verts[a][1], verts[b][0], verts[b][1],
                verts[c][0], verts[c][1], verts[w][0], verts[w][1],
            ),
            incircle_stats,
        )
        return s > 0

    last: Tri = (0, 1, 2)

    def locate(p: int) -> Tri:
        tri = last if last in tr.triangles else next(iter(tr.triangles))
        for _ in range(4 * len(tr.triangles) + 16):
            a, b, c = tri
            edges = [(a, b), (b, c), (c, a)]
            start = rng.randrange(3)
            moved = False
            for k in range(3):
                u, v = edges[(start + k) % 3]
                if osign(u, v, p) < 0:
                    nxt = tr.neighbor(v, u)
                    if nxt is not None:
                        tri = nxt
                        moved = True
                        break
            if not moved:
                return tri
        for tri in tr.triangles:  # exhaustive fallback; cannot fail
            a, b, c = tri
            if osign(a, b, p) >= 0 and osign(b, c, p) >= 0 and osign(c, a, p) >= 0:
                return tri
        raise AssertionError("point location failed")

    for p in order:
        seed_tri = locate(p)
        # grow the cavity of triangles whose circumcircle strictly contains p
        bad: Set[Tri] = set()
        stack = [seed_tri]
        while stack:
            tri = stack.pop()
            if tri in bad:
                continue
            if not in_circum(tri, p):
                continue
            bad.add(tri)
            a, b, c = tri
            for u, v in ((a, b), (b, c), (c, a)):
                nxt = tr.neighbor(v, u)
                if nxt is not None and nxt not in bad:
                    stack.append(nxt)
        if not bad:
            # p coincides with an existing vertex is impossible (deduped);
            # the containing triangle is always in the cavity
            raise AssertionError("empty cavity")
        boundary: List[Tuple[int, int]] = []
        for tri in bad:
            a, b, c = tri
            for u, v in ((a, b), (b, c), (c, a)):
                if tr.neighbor(v, u) not in bad:
                    boundary.append((u, v))
        for tri in bad:
            tr.remove(tri)
        for u, v in boundary:
            tr.add((u, v, p))
        last = (boundary[0][0], boundary[0][1], p)

    finite = [
        (a - 3, b - 3, c - 3)
        for (a, b, c) in tr.triangles
        if a >= 3 and b >= 3 and c >= 3
    ]
    finite.sort()
    collinear = not finite
    hull = 0 if collinear else hull_boundary_count(pts)
    elapsed = time.perf_counter() - t0
    orient_stats.check_conservation()
    incircle_stats.check_conservation()
    return DelaunayResult(
        pts, finite, dup, hull, collinear, elapsed, orient_stats, incircle_stats
    )


def hull_boundary_count(points: Sequence[Point]) -> int:
    """Number of points on the convex hull boundary, collinear ones included.

    Monotone chain with exact orientation signs; a point on a hull edge is a
    triangulation boundary vertex, so it counts toward the Euler relation.
    """
    osign = ExprKernels(builtin_expr("orient2d")).scalar_oracle()
    pts = sorted(set(points))
    if len(pts) <= 2:
        return len(pts)

    def chain(seq):
        out: List[Point] = []
        for p in seq:
            while (
                len(out) >= 2
                and osign(out[-2][0], out[-2][1], out[-1][0], out[-1][1], p[0], p[1]) < 0
            ):
                out.pop()
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(reversed(pts))
    boundary = set(lower) | set(upper)
    return len(boundary)


def audit_empty_circumcircle(
    points: Sequence[Point], triangles: Sequence[Tri]
) -> int:
    """Count (triangle, vertex) pairs with the vertex strictly inside the
    circumcircle, using exact integer arithmetic on a common lattice.

    Expands the absolute lifted 4x4 determinant along the query row, so the
    three per-triangle cofactors are hoisted out of the vertex loop.  This is
    an independent formulation of the incircle polynomial (the two agree by
    the translation identity of the lifted determinant) and serves as the
    audit oracle.
    """
    if not triangles:
        return 0
    g_exp = 1024
    for x, y in points:
        for v in (x, y):
            if v != 0.0:
                _, e = math.frexp(v)
                g_exp = min(g_exp, e - 53)
    if g_exp == 1024:
        g_exp = 0

    def scaled(v: float) -> int:
        if v == 0.0:
            return 0
        fr, e = math.frexp(v)
        return int(fr * 9007199254740992.0) << ((e - 53) - g_exp)

    xs = [scaled(x) for x, _ in points]
    ys = [scaled(y) for _, y in points]
    lifts = [x * x + y * y for x, y in zip(xs, ys)]
    n = len(points)
    violations = 0
    for a, b, c in triangles:
        xa, ya, la = xs[a], ys[a], lifts[a]
        xb, yb, lb = xs[b], ys[b], lifts[b]
        xc, yc, lc = xs[c], ys[c], lifts[c]
        # minors of the 4x4 lifted determinant along the query row
        m41 = ya * (lb - lc) - la * (yb - yc) + (yb * lc - yc * lb)
        m42 = xa * (lb - lc) - la * (xb - xc) + (xb * lc - xc * lb)
        m43 = xa * (yb - yc) - ya * (xb - xc) + (xb * yc - xc * yb)
        m44 = xa * (yb * lc - yc * lb) - ya * (xb * lc - xc * lb) + la * (xb * yc - xc * yb)
        if m43 == 0:
            raise AssertionError("degenerate triangle in audit")
        flip = 1 if m43 > 0 else -1  # ccw in scaled coordinates
        for v in range(n):
            if v == a or v == b or v == c:
                continue
            det = -xs[v] * m41 + ys[v] * m42 - lifts[v] * m43 + m44
            if flip * det > 0:
                violations += 1
    return violations
