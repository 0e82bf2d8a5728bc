"""Floating-point system model and exact dyadic-rational arithmetic.

The :class:`Dyadic` type represents numbers of the form ``sign * mantissa *
2**exponent`` with an arbitrary-precision integer mantissa.  Every finite
binary float converts to it exactly, and sums, differences and products never
round, which makes it the ground-truth number type that every filter in this
package is validated against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "FpnParams",
    "BINARY64",
    "BINARY32",
    "Dyadic",
    "InvalidInputError",
    "dyadic_from_float",
    "dyadic_add",
    "dyadic_sub",
    "dyadic_mul",
    "oracle_sign",
    "sign_of_float",
]


class InvalidInputError(ValueError):
    """Raised when a non-finite value reaches an exact-arithmetic entry point."""


@dataclass(frozen=True)
class FpnParams:
    """Parameters of a binary floating-point system plus derived constants.

    ``epsilon`` is ``2**-precision`` (half the gap between 1.0 and its
    successor), ``u_normal`` the smallest positive normalized magnitude and
    ``u_subnormal`` the smallest positive subnormal magnitude.  The derived
    constants satisfy ``u_subnormal == 2 * epsilon * u_normal`` exactly.
    """

    precision: int
    e_min: int
    e_max: int
    epsilon: float = field(init=False)
    u_normal: float = field(init=False)
    u_subnormal: float = field(init=False)

    def __post_init__(self) -> None:
        if self.precision < 2:
            raise ValueError("precision must be at least 2")
        object.__setattr__(self, "epsilon", math.ldexp(1.0, -self.precision))
        object.__setattr__(self, "u_normal", math.ldexp(1.0, self.e_min))
        object.__setattr__(
            self, "u_subnormal", math.ldexp(1.0, self.e_min - self.precision + 1)
        )


#: IEEE double precision; the system all runtime filters operate in.
BINARY64 = FpnParams(precision=53, e_min=-1022, e_max=1023)

#: IEEE single precision; exercised by derivation tests only.
BINARY32 = FpnParams(precision=24, e_min=-126, e_max=127)

_TWO53 = 9007199254740992.0  # 2**53


class Dyadic:
    """Exact dyadic rational ``sign * mantissa * 2**exponent``.

    Canonical form: zero is ``(0, 0, 0)``; a nonzero mantissa is odd, so
    structural equality is value equality.
    """

    __slots__ = ("sign", "mantissa", "exponent")

    def __init__(self, sign: int, mantissa: int, exponent: int):
        if sign == 0 or mantissa == 0:
            self.sign = 0
            self.mantissa = 0
            self.exponent = 0
            return
        if mantissa < 0:
            raise ValueError("mantissa must be non-negative; sign is separate")
        # strip trailing zero bits so equal values share one representation
        shift = (mantissa & -mantissa).bit_length() - 1
        self.sign = 1 if sign > 0 else -1
        self.mantissa = mantissa >> shift
        self.exponent = exponent + shift

    @classmethod
    def zero(cls) -> "Dyadic":
        return cls(0, 0, 0)

    @classmethod
    def from_float(cls, x: float) -> "Dyadic":
        if not math.isfinite(x):
            raise InvalidInputError(f"non-finite value has no exact dyadic form: {x!r}")
        if x == 0.0:
            return cls.zero()
        fr, ex = math.frexp(x)
        mant = int(fr * _TWO53)  # exact: |fr| in [0.5, 1), 53 significant bits
        if mant < 0:
            return cls(-1, -mant, ex - 53)
        return cls(1, mant, ex - 53)

    def _signed(self) -> int:
        return self.sign * self.mantissa

    def __add__(self, other: "Dyadic") -> "Dyadic":
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        ea, eb = self.exponent, other.exponent
        if ea >= eb:
            m = (self._signed() << (ea - eb)) + other._signed()
            e = eb
        else:
            m = self._signed() + (other._signed() << (eb - ea))
            e = ea
        if m == 0:
            return Dyadic.zero()
        return Dyadic(1 if m > 0 else -1, abs(m), e)

    def __sub__(self, other: "Dyadic") -> "Dyadic":
        return self + (-other)

    def __neg__(self) -> "Dyadic":
        return Dyadic(-self.sign, self.mantissa, self.exponent)

    def __abs__(self) -> "Dyadic":
        return Dyadic(abs(self.sign), self.mantissa, self.exponent)

    def __mul__(self, other: "Dyadic") -> "Dyadic":
        if self.sign == 0 or other.sign == 0:
            return Dyadic.zero()
        return Dyadic(
            self.sign * other.sign,
            self.mantissa * other.mantissa,
            self.exponent + other.exponent,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dyadic):
            return NotImplemented
        return (
            self.sign == other.sign
            and self.mantissa == other.mantissa
            and self.exponent == other.exponent
        )

    def __hash__(self) -> int:
        return hash((self.sign, self.mantissa, self.exponent))

    def __lt__(self, other: "Dyadic") -> bool:
        return (self - other).sign < 0

    def __le__(self, other: "Dyadic") -> bool:
        return (self - other).sign <= 0

    def __repr__(self) -> str:
        return f"Dyadic({self.sign}, {self.mantissa}, {self.exponent})"

    def to_float(self) -> float:
        """Round to the nearest binary64, ties to even; overflow gives inf.

        CPython's big-int true division and int-to-float conversion are
        correctly rounded, which is exactly the rounding function of the
        binary64 system (gradual underflow included).
        """
        if self.sign == 0:
            return 0.0
        try:
            if self.exponent >= 0:
                mag = float(self.mantissa << self.exponent)
            else:
                mag = self.mantissa / (1 << -self.exponent)
        except OverflowError:
            mag = math.inf
        return mag if self.sign > 0 else -mag

    def compare_float(self, x: float) -> int:
        """Exact three-way comparison against a finite float: -1, 0 or +1."""
        return (self - Dyadic.from_float(x)).sign


def dyadic_from_float(x: float) -> Dyadic:
    return Dyadic.from_float(x)


def dyadic_add(a: Dyadic, b: Dyadic) -> Dyadic:
    return a + b


def dyadic_sub(a: Dyadic, b: Dyadic) -> Dyadic:
    return a - b


def dyadic_mul(a: Dyadic, b: Dyadic) -> Dyadic:
    return a * b


def sign_of_float(x: float) -> int:
    """Sign of a float as an int; NaN maps to 0 (callers guard NaN first)."""
    return (x > 0.0) - (x < 0.0)


def oracle_sign(expr, inputs) -> int:
    """Exact sign of the real polynomial underlying ``expr`` at ``inputs``.

    Evaluates the expression tree in Dyadic arithmetic, so the result is the
    sign of the mathematical polynomial, not of any rounded realisation.
    Rejects non-finite inputs.
    """
    from . import expr as _expr  # local import to avoid a module cycle

    for v in inputs:
        if not math.isfinite(v):
            raise InvalidInputError(f"oracle requires finite inputs, got {v!r}")
    return _oracle_walk(expr, inputs, _expr).sign


def _oracle_walk(node, inputs, m) -> Dyadic:
    if isinstance(node, m.Constant):
        return Dyadic.from_float(node.value)
    if isinstance(node, m.Input):
        return Dyadic.from_float(inputs[node.index - 1])
    left = _oracle_walk(node.left, inputs, m)
    right = _oracle_walk(node.right, inputs, m)
    if isinstance(node, m.Sum):
        return left + right
    if isinstance(node, m.Difference):
        return left - right
    return left * right
