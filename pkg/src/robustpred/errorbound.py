"""Forward error-bound derivation for floating-point expression trees.

An error bound for a subexpression is a pair ``(a, m)``: a polynomial in the
machine epsilon with integer coefficients and no constant term, and a runtime
magnitude expression over ``|.|``, float addition and float multiplication.
The derivation walks the tree applying the first matching rule from a fixed
rule list; the underflow-protected variant adds smallest-normal terms to the
magnitudes so the bound stays valid when multiplications underflow.

From ``(a, m)`` of the two top-level operands the filter constants are
computed: ``a3`` is the smallest binary64 strictly above ``max(a1, a2) /
(1 - eps)`` and ``a4`` the smallest binary64 at or above ``a3 * (1 + eps)**2``,
both decided by exact dyadic comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

from .expr import (
    Constant,
    Difference,
    Expr,
    Input,
    Product,
    Sum,
    arity as expr_arity,
    eval_naive,
    top_decomposition,
)
from .fpn import BINARY64, Dyadic, FpnParams

__all__ = [
    "EpsPoly",
    "MagnitudeExpr",
    "AbsOf",
    "MagConst",
    "MagSum",
    "MagProduct",
    "ErrorBound",
    "FilterConstants",
    "DerivationError",
    "phi",
    "derive",
    "standard_rules",
    "RoundedInputRule",
    "eps_poly_max",
    "eps_poly_combine_sum",
    "eps_poly_combine_product",
    "compute_constants",
    "eval_magnitude",
    "staticize",
    "interval_eval_expr",
    "SplitBounds",
    "derive_filter_bounds",
]


class DerivationError(ValueError):
    """A hypothesis of the derivation failed (e.g. oversized coefficients)."""


@dataclass(frozen=True)
class EpsPoly:
    """Polynomial in eps with integer coefficients and no constant term.

    ``coeffs[k]`` is the coefficient of ``eps**(k+1)``; the empty tuple is the
    zero polynomial.  Trailing zeros are trimmed so equal polynomials compare
    equal structurally.
    """

    coeffs: tuple = ()

    def __post_init__(self) -> None:
        c = tuple(self.coeffs)
        while c and c[-1] == 0:
            c = c[:-1]
        object.__setattr__(self, "coeffs", c)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "EpsPoly") -> "EpsPoly":
        a, b = self.coeffs, other.coeffs
        n = max(len(a), len(b))
        return EpsPoly(
            tuple(
                (a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0)
                for i in range(n)
            )
        )

    def __mul__(self, other: "EpsPoly") -> "EpsPoly":
        # both factors lack constant terms, so the product starts at eps**2
        if self.is_zero() or other.is_zero():
            return EpsPoly()
        out = [0] * (len(self.coeffs) + len(other.coeffs))
        for i, ca in enumerate(self.coeffs):
            for j, cb in enumerate(other.coeffs):
                out[i + j + 1] += ca * cb
        return EpsPoly(tuple(out))

    def shifted(self) -> "EpsPoly":
        """Multiply by eps (shift all powers up by one)."""
        if self.is_zero():
            return self
        return EpsPoly((0,) + self.coeffs)

    def plus_eps(self) -> "EpsPoly":
        return self + EpsPoly((1,))

    def times_one_plus_eps(self) -> "EpsPoly":
        return self + self.shifted()

    def eval_dyadic(self, params: FpnParams) -> Dyadic:
        """Exact value at eps = 2**-precision."""
        p = params.precision
        acc = Dyadic.zero()
        for k, c in enumerate(self.coeffs):
            if c:
                acc = acc + Dyadic(1 if c > 0 else -1, abs(c), -p * (k + 1))
        return acc

    def format(self) -> str:
        if self.is_zero():
            return "0"
        parts = []
        for k, c in enumerate(self.coeffs):
            if c == 0:
                continue
            power = "eps" if k == 0 else f"eps^{k + 1}"
            if not parts:
                parts.append(f"{c}*{power}" if c != 1 else power)
            elif c < 0:
                parts.append(f"- {-c}*{power}" if c != -1 else f"- {power}")
            else:
                parts.append(f"+ {c}*{power}" if c != 1 else f"+ {power}")
        return " ".join(parts)


def _small_coeffs(a: EpsPoly, params: FpnParams) -> bool:
    bound = 1 << params.precision
    return all(abs(c) < bound for c in a.coeffs)


def eps_poly_max(a1: EpsPoly, a2: EpsPoly, params: FpnParams = BINARY64) -> EpsPoly:
    """The pointwise-larger polynomial at eps.

    When every coefficient is below ``eps**-1`` the lowest differing term
    dominates, so a lexicographic comparison in ascending term order decides
    (there are no constant terms).  Degree-4-and-up derivations square the
    specialized-rule coefficients past that bound, in which case the two
    values are compared exactly in dyadic arithmetic instead; ties keep the
    first argument, making the choice deterministic.
    """
    if _small_coeffs(a1, params) and _small_coeffs(a2, params):
        c1, c2 = a1.coeffs, a2.coeffs
        for i in range(max(len(c1), len(c2))):
            x = c1[i] if i < len(c1) else 0
            y = c2[i] if i < len(c2) else 0
            if x != y:
                return a1 if x > y else a2
        return a1
    diff = (a1.eval_dyadic(params) - a2.eval_dyadic(params)).sign
    return a1 if diff >= 0 else a2


def eps_poly_combine_sum(a1: EpsPoly, a2: EpsPoly, params: FpnParams = BINARY64) -> EpsPoly:
    """``(1 + eps) * max(a1, a2) + eps`` with exact integer coefficients."""
    return eps_poly_max(a1, a2, params).times_one_plus_eps().plus_eps()


def eps_poly_combine_product(a1: EpsPoly, a2: EpsPoly) -> EpsPoly:
    """``(1 + eps) * (a1 + a2 + a1*a2) + eps`` with exact coefficients."""
    if a1.is_zero() and a2.is_zero():
        return EpsPoly()
    inner = a1 + a2 + a1 * a2
    return inner.times_one_plus_eps().plus_eps()


# --- magnitude expressions ---------------------------------------------------


@dataclass(frozen=True)
class AbsOf:
    """``|subexpr|`` of a node of the original tree."""

    inner: Expr


@dataclass(frozen=True)
class MagConst:
    value: float
    role: str = "literal"  # "literal", "u_N" or "u_S"


@dataclass(frozen=True)
class MagSum:
    left: "MagnitudeExpr"
    right: "MagnitudeExpr"


@dataclass(frozen=True)
class MagProduct:
    left: "MagnitudeExpr"
    right: "MagnitudeExpr"


MagnitudeExpr = Union[AbsOf, MagConst, MagSum, MagProduct]


def eval_magnitude(m: MagnitudeExpr, values) -> float:
    """Evaluate the runtime magnitude with ordinary float operations."""
    if isinstance(m, AbsOf):
        return abs(eval_naive(m.inner, values))
    if isinstance(m, MagConst):
        return m.value
    left = eval_magnitude(m.left, values)
    right = eval_magnitude(m.right, values)
    return left + right if isinstance(m, MagSum) else left * right


def format_magnitude(m: MagnitudeExpr) -> str:
    from .expr import serialize

    if isinstance(m, AbsOf):
        return f"|{serialize(m.inner)}|"
    if isinstance(m, MagConst):
        return m.role if m.role != "literal" else repr(m.value)
    op = " + " if isinstance(m, MagSum) else " * "
    left, right = format_magnitude(m.left), format_magnitude(m.right)
    if isinstance(m, MagProduct):
        if isinstance(m.left, MagSum):
            left = f"({left})"
        if isinstance(m.right, MagSum):
            right = f"({right})"
    return f"{left}{op}{right}"


@dataclass(frozen=True)
class ErrorBound:
    a: EpsPoly
    m: MagnitudeExpr
    ufp: bool


# --- the rules ---------------------------------------------------------------


def phi(params: FpnParams) -> int:
    """``2 * floor((-1 + sqrt(4/eps + 45)) / 4)`` with an exact integer sqrt.

    ``isqrt`` gives ``r = floor(sqrt(n))``; since the fractional part of the
    square root is below 1 and ``r - 1`` is shifted by at most 3 mod 4, the
    floor of the quotient equals ``(r - 1) // 4`` exactly.
    """
    n = (1 << (params.precision + 2)) + 45
    r = math.isqrt(n)
    return 2 * ((r - 1) // 4)


def _is_atom(e: Expr) -> bool:
    # constants are exactly represented values just like inputs, so the
    # small-case rules apply to them as well
    return isinstance(e, (Input, Constant))


def _is_atom_sumdiff(e: Expr) -> bool:
    return isinstance(e, (Sum, Difference)) and _is_atom(e.left) and _is_atom(e.right)


class Rule:
    """One derivation rule: a match test plus a bound constructor."""

    name: str = "rule"

    def matches(self, e: Expr) -> bool:
        raise NotImplementedError

    def bound(self, e: Expr, recurse, params: FpnParams, ufp: bool):
        raise NotImplementedError


class _R1Constant(Rule):
    name = "constant"

    def matches(self, e):
        return isinstance(e, Constant)

    def bound(self, e, recurse, params, ufp):
        return EpsPoly(), MagConst(abs(e.value))


class _R2Input(Rule):
    name = "input"

    def matches(self, e):
        return isinstance(e, Input)

    def bound(self, e, recurse, params, ufp):
        return EpsPoly(), AbsOf(e)


class _R3AtomSumDiff(Rule):
    name = "atom-sum"

    def matches(self, e):
        return _is_atom_sumdiff(e)

    def bound(self, e, recurse, params, ufp):
        return EpsPoly((1,)), AbsOf(e)


class _R4AtomProduct(Rule):
    name = "atom-product"

    def matches(self, e):
        return isinstance(e, Product) and _is_atom(e.left) and _is_atom(e.right)

    def bound(self, e, recurse, params, ufp):
        m: MagnitudeExpr = AbsOf(e)
        if ufp:
            m = MagSum(m, MagConst(params.u_normal, "u_N"))
        return EpsPoly((1,)), m


class _R5DiffProduct(Rule):
    name = "sum-product"

    def matches(self, e):
        return (
            isinstance(e, Product)
            and _is_atom_sumdiff(e.left)
            and _is_atom_sumdiff(e.right)
        )

    def bound(self, e, recurse, params, ufp):
        a = EpsPoly((3, -(phi(params) - 14)))
        m: MagnitudeExpr = AbsOf(e)
        if ufp:
            m = MagSum(m, MagConst(params.u_normal, "u_N"))
        return a, m


class _R6GeneralSumDiff(Rule):
    # the underflow-protected variant is identical to the plain one
    name = "general-sum"

    def matches(self, e):
        return isinstance(e, (Sum, Difference))

    def bound(self, e, recurse, params, ufp):
        a1, m1 = recurse(e.left)
        a2, m2 = recurse(e.right)
        return eps_poly_combine_sum(a1, a2, params), MagSum(m1, m2)


class _R7GeneralProduct(Rule):
    name = "general-product"

    def matches(self, e):
        return isinstance(e, Product)

    def bound(self, e, recurse, params, ufp):
        a1, m1 = recurse(e.left)
        a2, m2 = recurse(e.right)
        m: MagnitudeExpr = MagProduct(m1, m2)
        if ufp:
            m = MagSum(m, MagConst(params.u_normal, "u_N"))
        return eps_poly_combine_product(a1, a2), m


class RoundedInputRule(Rule):
    """Custom leaf rule for inputs that were rounded to the nearest float.

    Assigns ``(eps, |x_i|)`` to every input placeholder, accounting for the
    half-ulp error introduced by the initial rounding.  Combine with the two
    general recursion rules to derive filters for decimal or rational source
    data.
    """

    name = "rounded-input"

    def matches(self, e):
        return isinstance(e, Input)

    def bound(self, e, recurse, params, ufp):
        return EpsPoly((1,)), AbsOf(e)


_STANDARD: Sequence[Rule] = (
    _R1Constant(),
    _R2Input(),
    _R3AtomSumDiff(),
    _R4AtomProduct(),
    _R5DiffProduct(),
    _R6GeneralSumDiff(),
    _R7GeneralProduct(),
)


def standard_rules() -> Sequence[Rule]:
    return _STANDARD


def general_rules() -> Sequence[Rule]:
    """Just the two recursion rules, for use after custom leaf rules."""
    return (_R6GeneralSumDiff(), _R7GeneralProduct())


def derive(
    e: Expr,
    ufp: bool,
    params: FpnParams = BINARY64,
    rules: Optional[Sequence[Rule]] = None,
) -> ErrorBound:
    """Apply the first matching rule recursively and return the bound.

    The rule order is normative: the specialized small-expression rules fire
    before the general recursions, which yields tighter constants for the
    common difference-of-products shape.
    """
    rule_list = _STANDARD if rules is None else tuple(rules)

    def walk(node: Expr):
        for rule in rule_list:
            if rule.matches(node):
                return rule.bound(node, walk, params, ufp)
        raise DerivationError(f"no rule matches node {node!r}")

    a, m = walk(e)
    return ErrorBound(a=a, m=m, ufp=ufp)


# --- filter constants --------------------------------------------------------


@dataclass(frozen=True)
class FilterConstants:
    a3: float
    a4: float


def _one_minus_eps(params: FpnParams) -> Dyadic:
    p = params.precision
    return Dyadic(1, (1 << p) - 1, -p)


def _one_plus_eps(params: FpnParams) -> Dyadic:
    p = params.precision
    return Dyadic(1, (1 << p) + 1, -p)


def compute_constants(a_max: EpsPoly, params: FpnParams = BINARY64) -> FilterConstants:
    """Tightest theorem-compliant constants, found by exact float search.

    ``a3`` must exceed ``a_max(eps) / (1 - eps)`` as exact reals; the search
    compares candidates via the cross-multiplied form ``a3 * (1 - eps) >
    a_max(eps)`` in dyadic arithmetic, so no division is ever performed.
    ``a4`` is the smallest binary64 at or above ``a3 * (1 + eps)**2``.
    """
    value = a_max.eval_dyadic(params)
    if value.sign < 0:
        raise DerivationError("error-bound polynomial is negative at eps")
    if value.sign == 0:
        # exact expression; callers short-circuit, constants kept minimal
        a3 = 5e-324
    else:
        one_minus = _one_minus_eps(params)

        def above(t: float) -> bool:
            return (Dyadic.from_float(t) * one_minus - value).sign > 0

        t = value.to_float()
        if not math.isfinite(t):
            raise DerivationError("a3 exceeds the binary64 range")
        while not above(t):
            t = math.nextafter(t, math.inf)
        while True:
            down = math.nextafter(t, -math.inf)
            if above(down):
                t = down
            else:
                break
        a3 = t
    one_plus = _one_plus_eps(params)
    target = Dyadic.from_float(a3) * one_plus * one_plus
    a4 = a3 * (1.0 + params.epsilon) * (1.0 + params.epsilon)
    if not math.isfinite(a4):
        raise DerivationError("a4 exceeds the binary64 range")
    while (Dyadic.from_float(a4) - target).sign < 0:
        a4 = math.nextafter(a4, math.inf)
    while True:
        down = math.nextafter(a4, -math.inf)
        if (Dyadic.from_float(down) - target).sign >= 0:
            a4 = down
        else:
            break
    if not math.isfinite(a4):
        raise DerivationError("a4 exceeds the binary64 range")
    return FilterConstants(a3=a3, a4=a4)


@dataclass(frozen=True)
class SplitBounds:
    """Everything a semi-static filter needs for a sum-like expression."""

    expr: Expr
    arity: int
    op: type
    p1: Expr
    p2: Expr
    a1: EpsPoly
    a2: EpsPoly
    m1: MagnitudeExpr
    m2: MagnitudeExpr
    a_max: EpsPoly
    constants: FilterConstants
    ufp: bool
    exact: bool  # zero error polynomial: the expression never rounds


def derive_filter_bounds(
    expr: Expr,
    ufp: bool,
    params: FpnParams = BINARY64,
    rules: Optional[Sequence[Rule]] = None,
) -> SplitBounds:
    """Derive the two top-level operand bounds plus the filter constants.

    The root must be a sum or difference; for a product root the factor
    signs should be determined separately and multiplied.
    """
    split = top_decomposition(expr)
    if split is None:
        raise DerivationError(
            "semi-static filters need a sum or difference at the root"
        )
    b1 = derive(split.left, ufp, params, rules)
    b2 = derive(split.right, ufp, params, rules)
    a_max = eps_poly_max(b1.a, b2.a, params)
    constants = compute_constants(a_max, params)
    return SplitBounds(
        expr=expr,
        arity=expr_arity(expr),
        op=split.op,
        p1=split.left,
        p2=split.right,
        a1=b1.a,
        a2=b2.a,
        m1=b1.m,
        m2=b2.m,
        a_max=a_max,
        constants=constants,
        ufp=ufp,
        exact=a_max.is_zero(),
    )


# --- staticization -----------------------------------------------------------


def _up(x: float) -> float:
    return math.nextafter(x, math.inf)


def _down(x: float) -> float:
    return math.nextafter(x, -math.inf)


_MAXFLOAT = math.nextafter(math.inf, 0.0)


def _sum_bound(a: float, b: float, upper: bool) -> float:
    """Directed bound of a + b, inflated only when the residual shows the
    rounded sum landed on the wrong side."""
    from .expansion import two_sum

    s, t = two_sum(a, b)
    if math.isnan(s):
        return s
    if math.isinf(s):
        # true value lies beyond the float range on the side of s
        if upper:
            return s if s > 0 else -_MAXFLOAT
        return s if s < 0 else _MAXFLOAT
    if upper:
        return _up(s) if t > 0.0 else s
    return _down(s) if t < 0.0 else s


def _mul_bound(a: float, b: float, upper: bool, params: FpnParams) -> float:
    """Directed bound of a * b; underflowed products get subnormal slack."""
    from .expansion import two_product

    h, t = two_product(a, b)
    if math.isnan(h):
        return h
    if math.isinf(h):
        if upper:
            return h if h > 0 else -_MAXFLOAT
        return h if h < 0 else _MAXFLOAT
    underflowed = a != 0.0 and b != 0.0 and abs(h) < params.u_normal
    if underflowed or math.isnan(t):
        # the residual is unreliable; one step plus an absolute subnormal
        # covers the worst-case multiplication error
        if upper:
            return _up(h) + params.u_subnormal
        return _down(h) - params.u_subnormal
    if upper:
        return _up(h) if t > 0.0 else h
    return _down(h) if t < 0.0 else h


def interval_eval_expr(e: Expr, boxes, params: FpnParams = BINARY64):
    """Outward-rounded interval evaluation of an expression over input boxes.

    Endpoints are pushed outward exactly when the error-free residual of an
    operation shows rounding toward the inside, so the interval encloses the
    exact real value and every round-to-nearest evaluation over the boxes
    while exact arithmetic (e.g. a degenerate all-zero box) stays exact.
    """
    if isinstance(e, Constant):
        return (e.value, e.value)
    if isinstance(e, Input):
        return boxes[e.index - 1]
    llo, lhi = interval_eval_expr(e.left, boxes, params)
    rlo, rhi = interval_eval_expr(e.right, boxes, params)
    if isinstance(e, Sum):
        return (_sum_bound(llo, rlo, False), _sum_bound(lhi, rhi, True))
    if isinstance(e, Difference):
        return (_sum_bound(llo, -rhi, False), _sum_bound(lhi, -rlo, True))
    lo = math.inf
    hi = -math.inf
    for x, y in ((llo, rlo), (llo, rhi), (lhi, rlo), (lhi, rhi)):
        down = _mul_bound(x, y, False, params)
        up = _mul_bound(x, y, True, params)
        if math.isnan(down) or math.isnan(up):
            return (math.nan, math.nan)
        lo = min(lo, down)
        hi = max(hi, up)
    return (lo, hi)


def staticize(m: MagnitudeExpr, bounds, params: FpnParams = BINARY64) -> float:
    """Upper bound of a magnitude expression over per-input intervals.

    ``bounds`` is a sequence of ``(lo, hi)`` float pairs.  The result bounds
    every float evaluation of ``m`` for inputs inside the box, making it
    usable as the static half of a static or almost-static filter.
    """
    for lo, hi in bounds:
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("NaN bound")
        if not (lo <= hi):
            raise ValueError(f"invalid interval ({lo!r}, {hi!r})")
    return _static_upper(m, tuple(bounds), params)


def _static_upper(m: MagnitudeExpr, boxes, params: FpnParams) -> float:
    if isinstance(m, AbsOf):
        lo, hi = interval_eval_expr(m.inner, boxes, params)
        return max(abs(lo), abs(hi))
    if isinstance(m, MagConst):
        return m.value
    left = _static_upper(m.left, boxes, params)
    right = _static_upper(m.right, boxes, params)
    if isinstance(m, MagSum):
        return _sum_bound(left, right, True)
    return _mul_bound(left, right, True, params)
