"""Floating-point expansion arithmetic: exact values as sums of binary64.

An expansion is a sequence of components in increasing magnitude order with
nonoverlapping bit ranges whose exact sum is the represented value; the sign
of the value is the sign of the largest nonzero component.  With round-to-
nearest-even arithmetic the merge-and-accumulate sum and the scale operation
below produce valid expansions in a single linear pass.

All operations are error-free as long as no overflow and no product
underflow occurs; both conditions are detected and reported as a range
failure so callers can escalate to dyadic arithmetic.
"""

from __future__ import annotations

import math
from typing import List, Optional

from .expr import Constant, Difference, Expr, Input, Product, Sum
from .fpn import BINARY64

__all__ = [
    "RangeFailure",
    "two_sum",
    "two_diff",
    "fast_two_sum",
    "split",
    "two_product",
    "two_product_fma",
    "expansion_sum",
    "expansion_scale",
    "expansion_product",
    "expansion_negate",
    "expansion_from_float",
    "expansion_sign",
    "try_exact_sign",
]

_SPLITTER = 134217729.0  # 2**27 + 1, Dekker's splitter for binary64
_U_NORMAL = BINARY64.u_normal


class RangeFailure(ArithmeticError):
    """Overflow or product underflow made an error-free transform unreliable."""


def fast_two_sum(a: float, b: float):
    """Error-free sum for |a| >= |b|: head is the rounded sum, tail the rest."""
    x = a + b
    y = b - (x - a)
    return x, y


def two_sum(a: float, b: float):
    """Knuth's branch-free error-free addition."""
    x = a + b
    bvirt = x - a
    avirt = x - bvirt
    y = (a - avirt) + (b - bvirt)
    return x, y


def two_diff(a: float, b: float):
    x = a - b
    bvirt = a - x
    avirt = x + bvirt
    y = (a - avirt) + (bvirt - b)
    return x, y


def split(a: float):
    """Dekker's split into two 26-bit halves: a == hi + lo exactly."""
    c = _SPLITTER * a
    hi = c - (c - a)
    lo = a - hi
    return hi, lo


def two_product(a: float, b: float):
    """Error-free product via Dekker splitting: head + tail == a * b exactly.

    With a correctly rounded fused multiply-add the tail would simply be
    ``fma(a, b, -head)``; both routes must produce identical pairs wherever
    the transform is exact, which requires that neither the product nor the
    internal splits overflow and that the product does not underflow.
    Violations surface as non-finite values or as a subnormal head and are
    rejected by :func:`check_product`.
    """
    x = a * b
    ahi, alo = split(a)
    bhi, blo = split(b)
    err = x - ahi * bhi
    err -= alo * bhi
    err -= ahi * blo
    y = alo * blo - err
    return x, y


if hasattr(math, "fma"):  # pragma: no cover - exercised on Python 3.13+ only

    def two_product_fma(a: float, b: float):
        x = a * b
        return x, math.fma(a, b, -x)

else:
    two_product_fma = None


def _check_sum(head: float) -> float:
    if not math.isfinite(head):
        raise RangeFailure("overflow in expansion addition")
    return head


def check_product(a: float, b: float, head: float, tail: float) -> None:
    if not (math.isfinite(head) and math.isfinite(tail)):
        raise RangeFailure("overflow in expansion product")
    if a != 0.0 and b != 0.0 and abs(head) < _U_NORMAL:
        raise RangeFailure("underflow in expansion product")


# --- expansion operations (zero-eliminating) ---------------------------------


def expansion_from_float(x: float) -> List[float]:
    if not math.isfinite(x):
        raise RangeFailure("non-finite expansion component")
    return [x]


def expansion_negate(e: List[float]) -> List[float]:
    return [-c for c in e]


def expansion_sum(e: List[float], f: List[float]) -> List[float]:
    """Exact sum of two expansions.

    Merges the component streams by magnitude and accumulates with error-free
    additions; the emitted tails plus the final accumulator already form a
    nonoverlapping expansion in increasing order.
    """
    g = sorted((c for c in e if c != 0.0), key=abs)
    gf = sorted((c for c in f if c != 0.0), key=abs)
    merged: List[float] = []
    i = j = 0
    while i < len(g) and j < len(gf):
        if abs(g[i]) <= abs(gf[j]):
            merged.append(g[i])
            i += 1
        else:
            merged.append(gf[j])
            j += 1
    merged.extend(g[i:])
    merged.extend(gf[j:])
    if not merged:
        return [0.0]
    h: List[float] = []
    q = merged[0]
    for now in merged[1:]:
        q, tail = two_sum(q, now)
        _check_sum(q)
        if tail != 0.0:
            h.append(tail)
    if q != 0.0 or not h:
        h.append(q)
    return h


def expansion_scale(e: List[float], b: float) -> List[float]:
    """Exact product of an expansion and one float (Shewchuk's scale)."""
    if b == 0.0 or (len(e) == 1 and e[0] == 0.0):
        return [0.0]
    h: List[float] = []
    q, tail = two_product(e[0], b)
    check_product(e[0], b, q, tail)
    if tail != 0.0:
        h.append(tail)
    for comp in e[1:]:
        p_head, p_tail = two_product(comp, b)
        check_product(comp, b, p_head, p_tail)
        s, tail = two_sum(q, p_tail)
        _check_sum(s)
        if tail != 0.0:
            h.append(tail)
        q, tail = fast_two_sum(p_head, s)
        _check_sum(q)
        if tail != 0.0:
            h.append(tail)
    if q != 0.0 or not h:
        h.append(q)
    return h


def expansion_product(e: List[float], f: List[float]) -> List[float]:
    """Exact product of two expansions via distributed scaling."""
    small, large = (e, f) if len(e) <= len(f) else (f, e)
    acc = [0.0]
    for comp in small:
        if comp == 0.0:
            continue
        acc = expansion_sum(acc, expansion_scale(large, comp))
    return acc


def expansion_sign(e: List[float]) -> int:
    """Sign of the most significant (largest magnitude) nonzero component."""
    for comp in reversed(e):
        if comp != 0.0:
            return 1 if comp > 0.0 else -1
    return 0


def _eval_expansion(node: Expr, values) -> List[float]:
    if isinstance(node, Constant):
        return expansion_from_float(node.value)
    if isinstance(node, Input):
        return expansion_from_float(values[node.index - 1])
    left = _eval_expansion(node.left, values)
    right = _eval_expansion(node.right, values)
    if isinstance(node, Sum):
        return expansion_sum(left, right)
    if isinstance(node, Difference):
        return expansion_sum(left, expansion_negate(right))
    return expansion_product(left, right)


def try_exact_sign(e: Expr, values) -> Optional[int]:
    """Exact sign via expansion evaluation, or None on a range failure."""
    try:
        return expansion_sign(_eval_expansion(e, values))
    except RangeFailure:
        return None
