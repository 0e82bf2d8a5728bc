"""Expression trees for polynomials and their floating-point realisations.

A tree fixes the association order of every operation.  Evaluating it
naively performs exactly one binary64 rounding per node, in tree order,
with no fused multiply-add and no reassociation; CPython float arithmetic
guarantees this per-operation rounding, and the numba kernels are tested
to match it bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Union

__all__ = [
    "Expr",
    "Constant",
    "Input",
    "Sum",
    "Difference",
    "Product",
    "TopSplit",
    "ExprError",
    "ParseError",
    "parse_expr",
    "serialize",
    "arity",
    "validate_placeholders",
    "eval_naive",
    "top_decomposition",
    "subexpressions",
    "inputs",
]


class ExprError(ValueError):
    """Structural problem with an expression (e.g. a placeholder gap)."""


class ParseError(ValueError):
    """Syntax error; carries the character position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class _Node:
    """Operator overloads so trees read like the formulas they encode."""

    __slots__ = ()

    def __add__(self, other: "Expr") -> "Sum":
        return Sum(self, other)

    def __sub__(self, other: "Expr") -> "Difference":
        return Difference(self, other)

    def __mul__(self, other: "Expr") -> "Product":
        return Product(self, other)


@dataclass(frozen=True)
class Constant(_Node):
    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ExprError(f"constants must be finite binary64, got {self.value!r}")


@dataclass(frozen=True)
class Input(_Node):
    index: int

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ExprError("input placeholders are numbered from 1")


@dataclass(frozen=True)
class Sum(_Node):
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Difference(_Node):
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Product(_Node):
    left: "Expr"
    right: "Expr"


Expr = Union[Constant, Input, Sum, Difference, Product]


@dataclass(frozen=True)
class TopSplit:
    """Top-level decomposition of a sum-like tree: ``left op right``."""

    left: Expr
    right: Expr
    op: type  # Sum or Difference


def inputs(n: int) -> tuple:
    """Placeholders ``_1 .. _n`` as a tuple, for programmatic construction."""
    return tuple(Input(k) for k in range(1, n + 1))


def subexpressions(e: Expr) -> Iterator[Expr]:
    """All nodes of the tree, children before parents."""
    if isinstance(e, (Sum, Difference, Product)):
        yield from subexpressions(e.left)
        yield from subexpressions(e.right)
    yield e


def _input_indices(e: Expr) -> set:
    return {n.index for n in subexpressions(e) if isinstance(n, Input)}


def validate_placeholders(e: Expr) -> int:
    """Check indices are contiguous from 1 and return the arity."""
    idx = _input_indices(e)
    if not idx:
        return 0
    top = max(idx)
    missing = set(range(1, top + 1)) - idx
    if missing:
        raise ExprError(
            "placeholder gap: missing "
            + ", ".join(f"_{k}" for k in sorted(missing))
        )
    return top


def arity(e: Expr) -> int:
    return validate_placeholders(e)


def eval_naive(e: Expr, values) -> float:
    """Strict IEEE binary64 evaluation, one rounding per node, in tree order.

    Non-finite inputs and intermediates propagate by the usual float rules.
    """
    if isinstance(e, Constant):
        return e.value
    if isinstance(e, Input):
        return values[e.index - 1]
    left = eval_naive(e.left, values)
    right = eval_naive(e.right, values)
    if isinstance(e, Sum):
        return left + right
    if isinstance(e, Difference):
        return left - right
    return left * right


def top_decomposition(e: Expr) -> Optional[TopSplit]:
    """Split off the final sum or difference; None for product/leaf roots."""
    if isinstance(e, Sum):
        return TopSplit(e.left, e.right, Sum)
    if isinstance(e, Difference):
        return TopSplit(e.left, e.right, Difference)
    return None


# --- parsing ---------------------------------------------------------------
#
# expr   := term (('+' | '-') term)*
# term   := factor ('*' factor)*
# factor := NUMBER | '-' NUMBER | PLACEHOLDER | '(' expr ')'
#
# NUMBER is a decimal or C99 hexadecimal float literal; a leading minus is
# folded into the constant.  Division is deliberately not part of the
# grammar; the error-bound rules cover +, - and * only.


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take_placeholder(self) -> int:
        start = self.pos
        self.pos += 1  # consume '_'
        digits = ""
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            digits += self.text[self.pos]
            self.pos += 1
        if not digits:
            raise ParseError("expected digits after '_'", start)
        k = int(digits)
        if k < 1:
            raise ParseError("placeholders are numbered from _1", start)
        return k

    def take_number(self) -> float:
        start = self.pos
        t = self.text
        n = len(t)
        i = self.pos
        if t.startswith("0x", i) or t.startswith("0X", i):
            i += 2
            while i < n and (t[i] in ".pP+-" or t[i].isalnum()):
                # exponent sign only allowed right after p/P
                if t[i] in "+-" and t[i - 1] not in "pP":
                    break
                i += 1
            lit = t[start:i]
            try:
                value = float.fromhex(lit)
            except ValueError:
                raise ParseError(f"bad hexadecimal float {lit!r}", start) from None
        else:
            while i < n and (t[i].isdigit() or t[i] in ".eE"):
                i += 1
                # allow exponent sign directly after e/E
                if i < n and t[i] in "+-" and t[i - 1] in "eE":
                    i += 1
            lit = t[start:i]
            try:
                value = float(lit)
            except ValueError:
                raise ParseError(f"bad numeric literal {lit!r}", start) from None
        self.pos = i
        if not math.isfinite(value):
            raise ParseError(f"constant {lit!r} is not a finite binary64", start)
        return value


def parse_expr(text: str) -> Expr:
    """Parse the expression grammar; validates placeholder contiguity."""
    tz = _Tokenizer(text)
    tree = _parse_sum(tz)
    if tz.peek():
        raise ParseError(f"unexpected {tz.peek()!r}", tz.pos)
    validate_placeholders(tree)
    return tree


def _parse_sum(tz: _Tokenizer) -> Expr:
    node = _parse_term(tz)
    while True:
        c = tz.peek()
        if c == "+":
            tz.pos += 1
            node = Sum(node, _parse_term(tz))
        elif c == "-":
            tz.pos += 1
            node = Difference(node, _parse_term(tz))
        else:
            return node


def _parse_term(tz: _Tokenizer) -> Expr:
    node = _parse_factor(tz)
    while True:
        c = tz.peek()
        if c == "*":
            tz.pos += 1
            node = Product(node, _parse_factor(tz))
        elif c == "/":
            raise ParseError("division is not supported", tz.pos)
        else:
            return node


def _parse_factor(tz: _Tokenizer) -> Expr:
    c = tz.peek()
    if c == "(":
        tz.pos += 1
        node = _parse_sum(tz)
        if tz.peek() != ")":
            raise ParseError("expected ')'", tz.pos)
        tz.pos += 1
        return node
    if c == "_":
        return Input(tz.take_placeholder())
    if c == "-":
        tz.pos += 1
        nxt = tz.peek()
        if not (nxt.isdigit() or nxt == "."):
            raise ParseError("unary minus is only allowed before a literal", tz.pos)
        return Constant(-tz.take_number())
    if c.isdigit() or c == ".":
        return Constant(tz.take_number())
    if c == "/":
        raise ParseError("division is not supported", tz.pos)
    raise ParseError(f"unexpected {c!r}" if c else "unexpected end of input", tz.pos)


def _prec(e: Expr) -> int:
    if isinstance(e, (Sum, Difference)):
        return 1
    if isinstance(e, Product):
        return 2
    return 3


def serialize(e: Expr) -> str:
    """Render in the same grammar :func:`parse_expr` accepts.

    Parentheses are emitted only where the tree shape requires them, so
    ``parse_expr(serialize(e)) == e`` for every valid tree.
    """
    if isinstance(e, Constant):
        return repr(e.value)
    if isinstance(e, Input):
        return f"_{e.index}"
    if isinstance(e, Sum):
        op, same_prec_right_needs_parens = " + ", True
    elif isinstance(e, Difference):
        op, same_prec_right_needs_parens = " - ", True
    else:
        op, same_prec_right_needs_parens = " * ", True
    my = _prec(e)
    left = serialize(e.left)
    if _prec(e.left) < my:
        left = f"({left})"
    right = serialize(e.right)
    if _prec(e.right) < my or (_prec(e.right) == my and same_prec_right_needs_parens):
        right = f"({right})"
    return f"{left}{op}{right}"
