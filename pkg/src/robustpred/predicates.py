"""Built-in predicate expressions and the staged-predicate combinator.

The built-in determinants are expanded to fixed trees (cofactors along the
lifted column, terms combined left to right) so the derived filter constants
are reproducible.  A staged predicate is an ordered cascade of filter stages
ending in the total dyadic stage; the first certified sign wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .errorbound import RoundedInputRule, general_rules
from .expr import Expr, Input, arity as expr_arity
from .filters import (
    UNCERTAIN,
    DyadicExactStage,
    ExpansionExactStage,
    IntervalFilter,
    SemiStaticFilter,
    ZeroFilter,
)
from .fpn import BINARY64, FpnParams, InvalidInputError
from .stats import StageStats

__all__ = [
    "BUILTIN_NAMES",
    "builtin_expr",
    "orient2d_expr",
    "incircle2d_expr",
    "orient3d_expr",
    "power_side_3d_expr",
    "StagedPredicate",
    "default_pipeline",
    "register_custom_stage",
    "IncircleRectFilter",
    "rounded_input_filter",
]


def _v(k: int) -> Input:
    return Input(k)


def orient2d_expr() -> Expr:
    """Sign of the 2x2 determinant |a-c, b-c| for points a, b, c.

    Placeholders: ax ay bx by cx cy.  Positive means c lies left of the
    directed line a -> b.
    """
    ax, ay, bx, by, cx, cy = (_v(k) for k in range(1, 7))
    return (ax - cx) * (by - cy) - (bx - cx) * (ay - cy)


def incircle2d_expr() -> Expr:
    """Lifted 3x3 incircle determinant for points a, b, c and query d.

    Placeholders: ax ay bx by cx cy dx dy.  Rows are (p - d, |p - d|^2);
    expansion is by cofactors along the lifted column, combined left to
    right.  Positive means d lies inside the circle through a counterclockwise
    a, b, c.
    """
    ax, ay, bx, by, cx, cy, dx, dy = (_v(k) for k in range(1, 9))
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    la = adx * adx + ady * ady
    lb = bdx * bdx + bdy * bdy
    lc = cdx * cdx + cdy * cdy
    m1 = bdx * cdy - bdy * cdx
    m2 = adx * cdy - ady * cdx
    m3 = adx * bdy - ady * bdx
    return (la * m1 - lb * m2) + lc * m3


def orient3d_expr() -> Expr:
    """3x3 orientation determinant with rows a-d, b-d, c-d.

    Placeholders: ax ay az bx by bz cx cy cz dx dy dz; cofactors along the
    z column, combined left to right.
    """
    ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz = (_v(k) for k in range(1, 13))
    adx, ady, adz = ax - dx, ay - dy, az - dz
    bdx, bdy, bdz = bx - dx, by - dy, bz - dz
    cdx, cdy, cdz = cx - dx, cy - dy, cz - dz
    m13 = bdx * cdy - bdy * cdx
    m23 = adx * cdy - ady * cdx
    m33 = adx * bdy - ady * bdx
    return (adz * m13 - bdz * m23) + cdz * m33


def _lifted_row(px, py, pz, pw, ex, ey, ez, ew):
    dx, dy, dz = px - ex, py - ey, pz - ez
    lift = ((dx * dx + dy * dy) + dz * dz) + (ew - pw)
    return dx, dy, dz, lift


def _det3(r1, r2, r3) -> Expr:
    # rows are (x, y, z) triples; expand along the z column, left to right
    m1 = r2[0] * r3[1] - r2[1] * r3[0]
    m2 = r1[0] * r3[1] - r1[1] * r3[0]
    m3 = r1[0] * r2[1] - r1[1] * r2[0]
    return (r1[2] * m1 - r2[2] * m2) + r3[2] * m3


def power_side_3d_expr() -> Expr:
    """Power side of the oriented power sphere: a 4x4 lifted determinant.

    Placeholders: ax ay az aw bx by bz bw cx cy cz cw dx dy dz dw ex ey ez
    ew, where the w components are the point weights.  Rows are
    (p - e, |p - e|^2 + (ew - pw)); the lifted-column cofactor signs
    alternate, so the canonical tree starts with the positive second term:
    ((Lb*M2 - La*M1) - Lc*M3) + Ld*M4.
    """
    coords = [_v(k) for k in range(1, 21)]
    e = coords[16:20]
    rows = [
        _lifted_row(*coords[0:4], *e),
        _lifted_row(*coords[4:8], *e),
        _lifted_row(*coords[8:12], *e),
        _lifted_row(*coords[12:16], *e),
    ]
    minors = []
    for i in range(4):
        rest = [rows[j][:3] for j in range(4) if j != i]
        minors.append(_det3(*rest))
    la, lb, lc, ld = (rows[i][3] for i in range(4))
    m1, m2, m3, m4 = minors
    return ((lb * m2 - la * m1) - lc * m3) + ld * m4


_BUILTINS = {
    "orient2d": orient2d_expr,
    "incircle2d": incircle2d_expr,
    "orient3d": orient3d_expr,
    "power_side_3d": power_side_3d_expr,
}

BUILTIN_NAMES = tuple(_BUILTINS)

_ARITIES = {"orient2d": 6, "incircle2d": 8, "orient3d": 12, "power_side_3d": 20}

_expr_cache: dict = {}


def builtin_expr(name: str) -> Expr:
    if name not in _BUILTINS:
        raise KeyError(
            f"unknown builtin {name!r}; choose from {', '.join(BUILTIN_NAMES)}"
        )
    if name not in _expr_cache:
        e = _BUILTINS[name]()
        assert expr_arity(e) == _ARITIES[name]
        _expr_cache[name] = e
    return _expr_cache[name]


@dataclass(frozen=True)
class StagedPredicate:
    """Ordered filter cascade with a total exact stage at the end."""

    name: str
    expr: Expr
    stages: Tuple[object, ...]

    def __post_init__(self) -> None:
        if not self.stages or not isinstance(self.stages[-1], DyadicExactStage):
            raise ValueError("the final stage must be the total dyadic stage")

    @property
    def arity(self) -> int:
        return expr_arity(self.expr)

    def _validate(self, inputs) -> None:
        if len(inputs) != self.arity:
            raise InvalidInputError(
                f"{self.name} takes {self.arity} inputs, got {len(inputs)}"
            )
        for v in inputs:
            if not math.isfinite(v):
                raise InvalidInputError(f"non-finite input {v!r}")

    def apply(self, *inputs) -> int:
        """Exact sign of the predicate polynomial at the given inputs."""
        sign, _ = self.apply_with_stage(*inputs)
        return sign

    def apply_with_stage(self, *inputs) -> Tuple[int, int]:
        """Exact sign plus the 1-based index of the stage that decided."""
        self._validate(inputs)
        for k, stage in enumerate(self.stages):
            result = stage.apply(inputs)
            if result != UNCERTAIN:
                return result, k + 1
        raise AssertionError("unreachable: the final stage is total")

    def apply_counted(self, inputs, stats: StageStats) -> int:
        sign, k = self.apply_with_stage(*inputs)
        stats.record(k - 1)
        return sign

    def stage_names(self) -> List[str]:
        return [s.name for s in self.stages]

    def new_stats(self) -> StageStats:
        return StageStats(self.name, self.stage_names())


def default_pipeline(
    name: str, profile: str = "safe", params: FpnParams = BINARY64
) -> StagedPredicate:
    """The standard five-stage cascade for a built-in predicate.

    ``safe`` uses the underflow-protected semi-static filter in stage 1;
    ``fast`` uses the plain one, whose certifications additionally require
    that no underflow occurred (the interval stage behind it is
    unconditionally valid either way, so both profiles are exact end to
    end -- they differ only in which stage decides).
    """
    if profile not in ("fast", "safe"):
        raise ValueError(f"profile must be 'fast' or 'safe', got {profile!r}")
    expr = builtin_expr(name)
    stages = (
        SemiStaticFilter(expr, ufp=(profile == "safe"), params=params),
        ZeroFilter(expr, params),
        IntervalFilter(expr, params),
        ExpansionExactStage(expr, params),
        DyadicExactStage(expr, params),
    )
    return StagedPredicate(name=name, expr=expr, stages=stages)


def register_custom_stage(
    pred: StagedPredicate, position: int, stage
) -> StagedPredicate:
    """A new predicate with ``stage`` inserted at ``position`` (0-based).

    The original predicate is unchanged.  The total dyadic stage cannot be
    displaced from the last position, so ``position`` must be at most
    ``len(stages) - 1``.
    """
    if not 0 <= position <= len(pred.stages) - 1:
        raise ValueError(
            f"position must be in [0, {len(pred.stages) - 1}], got {position}"
        )
    stages = pred.stages[:position] + (stage,) + pred.stages[position:]
    return StagedPredicate(name=pred.name, expr=pred.expr, stages=stages)


class IncircleRectFilter:
    """Custom incircle stage: four points forming an axis-aligned rectangle
    traversed in order are cocircular, so the sign is exactly zero.

    A forward error bound cannot certify these degenerate-but-common inputs;
    this stage decides them in a handful of comparisons.
    """

    name = "incircle-rect"
    arity = 8

    def apply(self, inputs) -> int:
        ax, ay, bx, by, cx, cy, dx, dy = inputs
        if (ax == bx and by == cy and cx == dx and dy == ay) or (
            ay == by and bx == cx and cy == dy and dx == ax
        ):
            return 0
        return UNCERTAIN


def rounded_input_filter(
    expr: Expr, params: FpnParams = BINARY64
) -> SemiStaticFilter:
    """Semi-static filter for inputs rounded to the nearest float.

    Uses the custom leaf rule assigning ``(eps, |x_i|)`` to every input plus
    the two general recursion rules, so the certified sign is the sign of
    the predicate over the original (pre-rounding) real inputs whenever each
    input is within half an ulp of its float.
    """
    rules = (RoundedInputRule(), *general_rules())
    return SemiStaticFilter(expr, ufp=False, params=params, rules=rules)
