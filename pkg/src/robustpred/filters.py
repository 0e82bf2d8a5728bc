"""Runtime filter stages for staged sign predicates.

Every stage exposes ``apply(inputs) -> int`` returning a certified sign
(-1, 0, 1) or :data:`UNCERTAIN`.  A stage only certifies when validity is
guaranteed; non-finite inputs degrade to uncertain instead of raising, so a
cascade can always fall through to the total dyadic stage (which is the one
place non-finite inputs are rejected explicitly).
"""

from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

from .errorbound import (
    DerivationError,
    MagSum,
    Rule,
    derive_filter_bounds,
    staticize,
)
from .expansion import (
    RangeFailure,
    expansion_from_float,
    expansion_negate,
    expansion_product,
    expansion_sign,
    expansion_sum,
    two_diff,
)
from .expr import Constant, Difference, Expr, Input, Product, Sum, arity as expr_arity
from .fpn import BINARY64, FpnParams, InvalidInputError, oracle_sign
from .kernels import codegen as cg
from .kernels.batch import _SCALAR_ENV
from .kernels.codegen import UNCERTAIN, build

__all__ = [
    "UNCERTAIN",
    "SemiStaticFilter",
    "ZeroFilter",
    "IntervalFilter",
    "TranslationFilter",
    "StaticFilter",
    "ExpansionExactStage",
    "DyadicExactStage",
]


class SemiStaticFilter:
    """One-comparison filter with a derived error bound.

    The error is ``a4 * (m1 + m2)`` in float arithmetic, plus the smallest
    subnormal when underflow protection is on.  The success path evaluates a
    single data-dependent comparison ``|p| > e``; only after it fails does
    the non-protected variant test the ``e == 0`` exact-zero clause.  The
    comparison is false whenever ``e`` is infinite or NaN, which is what
    makes overflow and non-finite inputs degrade to uncertain.
    """

    def __init__(
        self,
        expr: Expr,
        ufp: bool = True,
        params: FpnParams = BINARY64,
        rules: Optional[Sequence[Rule]] = None,
    ):
        self.bounds = derive_filter_bounds(expr, ufp, params, rules)
        self.ufp = ufp
        self.name = "semi-static-ufp" if ufp else "semi-static"
        self.arity = self.bounds.arity
        src = cg.semistatic_scalar_source(
            self.bounds, self.bounds.constants.a4, params.u_subnormal, ufp
        )
        self._fn = build(src, "ss_scalar", {})

    @property
    def constants(self):
        return self.bounds.constants

    def apply(self, inputs) -> int:
        return self._fn(*inputs)


class ZeroFilter:
    """Structural certification that the realisation evaluates to exact zero.

    A leaf certifies when its value is zero, a small difference or sum of
    exactly-represented operands certifies when its rounded value is zero
    (which implies the real value is zero), sums need both children
    certified, products either one.  Valid for every input range; overflowed
    subexpressions compare unequal to zero and simply fail to certify.
    """

    name = "zero"

    def __init__(self, expr: Expr, params: FpnParams = BINARY64):
        self.arity = expr_arity(expr)
        self._fn = build(
            cg.zero_scalar_source(expr, self.arity), "zero_scalar", {}
        )

    def apply(self, inputs) -> int:
        return self._fn(*inputs)


class IntervalFilter:
    """Dynamic filter: outward-rounded interval evaluation of the tree.

    Endpoints move one float step outward exactly when the error-free
    residual of an operation shows its rounding crossed the true value
    (underflowed products additionally absorb a subnormal of slack), so the
    final interval encloses the exact value as tightly as directed rounding
    would.  Certifies the shared sign of an interval that excludes zero, or
    zero for the exact degenerate interval [0, 0]; any non-finite endpoint
    is uncertain.
    """

    name = "interval"

    def __init__(self, expr: Expr, params: FpnParams = BINARY64):
        self.arity = expr_arity(expr)
        src = cg.interval_scalar_source(expr, self.arity, params.u_subnormal)
        self._fn = build(src, "iv_scalar", _SCALAR_ENV)

    def apply(self, inputs) -> int:
        return self._fn(*inputs)


def _translated_atoms(expr: Expr) -> Optional[List[Tuple[Expr, int, int]]]:
    """Collect the input-difference atoms if every leaf sits inside one."""
    atoms: List[Tuple[Expr, int, int]] = []

    def walk(node: Expr) -> bool:
        if (
            isinstance(node, Difference)
            and isinstance(node.left, Input)
            and isinstance(node.right, Input)
        ):
            atoms.append((node, node.left.index, node.right.index))
            return True
        if isinstance(node, (Input, Constant)):
            return False
        if isinstance(node, (Sum, Difference, Product)):
            return walk(node.left) and walk(node.right)
        return False

    return atoms if walk(expr) else None


class TranslationFilter:
    """Exact stage for translated predicates (difference-atom form).

    Applies when every leaf occurrence is inside a difference of two inputs.
    If all those differences round (checked through the two-diff residual)
    the stage is certain the translation was exact and evaluates the rest of
    the polynomial over expansions; any rounding residual or range failure
    returns uncertain.
    """

    name = "translation"

    def __init__(self, expr: Expr, params: FpnParams = BINARY64):
        self.arity = expr_arity(expr)
        self.expr = expr
        self._atoms = _translated_atoms(expr)

    @property
    def applicable(self) -> bool:
        return self._atoms is not None

    def apply(self, inputs) -> int:
        if self._atoms is None:
            return UNCERTAIN
        diffs = {}
        for node, i, j in self._atoms:
            d, residual = two_diff(inputs[i - 1], inputs[j - 1])
            if residual != 0.0 or d != d:
                return UNCERTAIN
            diffs[node] = d
        try:
            return expansion_sign(self._eval(self.expr, diffs))
        except RangeFailure:
            return UNCERTAIN

    def _eval(self, node: Expr, diffs) -> List[float]:
        if node in diffs:
            return expansion_from_float(diffs[node])
        if isinstance(node, Sum):
            return expansion_sum(self._eval(node.left, diffs), self._eval(node.right, diffs))
        if isinstance(node, Difference):
            return expansion_sum(
                self._eval(node.left, diffs),
                expansion_negate(self._eval(node.right, diffs)),
            )
        return expansion_product(self._eval(node.left, diffs), self._eval(node.right, diffs))


class StaticFilter:
    """Static or almost-static filter: the error bound is precomputed from
    a-priori input intervals and only the magnitude comparison runs per call.

    ``update`` widens the tracked bounds to cover new inputs and recomputes
    the stored bound, turning the static filter into an almost-static one.
    Readers may apply concurrently; update needs exclusive access.
    """

    def __init__(
        self,
        expr: Expr,
        bounds,
        ufp: bool = True,
        params: FpnParams = BINARY64,
    ):
        self.bounds_info = derive_filter_bounds(expr, ufp, params)
        self.ufp = ufp
        self.params = params
        self.name = "static-ufp" if ufp else "static"
        self.arity = self.bounds_info.arity
        self._naive = build(
            cg.naive_source(expr, self.arity), "naive", {}
        )
        box = [(float(lo), float(hi)) for lo, hi in bounds]
        if len(box) != self.arity:
            raise ValueError(f"need {self.arity} bounds, got {len(box)}")
        for lo, hi in box:
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValueError(f"invalid bound ({lo!r}, {hi!r})")
        self.box = box
        self._recompute()

    def _recompute(self) -> None:
        m = MagSum(self.bounds_info.m1, self.bounds_info.m2)
        e = self.bounds_info.constants.a4 * staticize(m, self.box, self.params)
        if self.ufp:
            e = e + self.params.u_subnormal
        self.e_static = e

    def update(self, inputs) -> None:
        """Widen the tracked bounds to include ``inputs`` and refresh e."""
        changed = False
        for k, v in enumerate(inputs):
            lo, hi = self.box[k]
            if v < lo:
                self.box[k] = (v, hi)
                changed = True
            elif v > hi:
                self.box[k] = (lo, v)
                changed = True
        if changed:
            self._recompute()

    def apply(self, inputs) -> int:
        for k in range(self.arity):
            v = inputs[k]
            lo, hi = self.box[k]
            if not (lo <= v <= hi):
                return UNCERTAIN
        p = self._naive(*inputs)
        if abs(p) > self.e_static:
            return (p > 0.0) - (p < 0.0)
        return UNCERTAIN


class ExpansionExactStage:
    """Exact sign via expansion arithmetic; uncertain only on range failure."""

    name = "expansion"

    def __init__(self, expr: Expr, params: FpnParams = BINARY64):
        self.expr = expr
        self.arity = expr_arity(expr)

    def apply(self, inputs) -> int:
        from .expansion import try_exact_sign

        s = try_exact_sign(self.expr, inputs)
        return UNCERTAIN if s is None else s


class DyadicExactStage:
    """Total final stage: exact dyadic sign, never uncertain.

    The hot path is a generated integer-pair evaluation (flattened dyadic
    arithmetic); the tree-walking :func:`robustpred.fpn.oracle_sign` is kept
    as the independent reference and cross-checked in the test suite.  This
    is the one stage that rejects non-finite inputs.
    """

    name = "dyadic"

    def __init__(self, expr: Expr, params: FpnParams = BINARY64):
        self.expr = expr
        self.arity = expr_arity(expr)
        self._fn = build(
            cg.oracle_scalar_source(self.expr, self.arity), "oracle_scalar", _SCALAR_ENV
        )

    def apply(self, inputs) -> int:
        for v in inputs:
            if not math.isfinite(v):
                raise InvalidInputError(f"exact stage requires finite inputs, got {v!r}")
        return self._fn(*inputs)

    def reference_apply(self, inputs) -> int:
        return oracle_sign(self.expr, inputs)
