"""Source generation: expression trees to flat Python kernels.

Each builder walks a tree and emits straight-line code with structural
common-subexpression reuse (identical subtrees produce identical rounded
values, so sharing is bit-exact).  The float bodies use only ``+``, ``-``,
``*`` and ``abs`` and therefore run unchanged on scalars, numpy arrays and
inside numba-compiled loops.  The exact-sign body works on (mantissa,
exponent) integer pairs and is the flattened form of dyadic arithmetic.
"""

from __future__ import annotations

import math
from typing import Dict, List, Tuple

from ..errorbound import AbsOf, MagConst, MagProduct, MagSum, MagnitudeExpr
from ..expr import Constant, Difference, Expr, Input, Product, Sum

UNCERTAIN = 2  # stage result meaning "filter failure"; signs are -1, 0, 1

_TWO53 = 9007199254740992.0


class _Emitter:
    def __init__(self) -> None:
        self.lines: List[str] = []
        self.cache: Dict[object, str] = {}
        self.n = 0

    def fresh(self, prefix: str = "t") -> str:
        self.n += 1
        return f"{prefix}{self.n}"

    def emit(self, line: str) -> None:
        self.lines.append(line)


def _emit_float(e: Expr, em: _Emitter) -> str:
    """Emit float evaluation of a node; returns the variable holding it."""
    key = ("f", e)
    if key in em.cache:
        return em.cache[key]
    if isinstance(e, Constant):
        var = em.fresh("c")
        em.emit(f"{var} = {e.value!r}")
    elif isinstance(e, Input):
        var = f"x{e.index}"
    else:
        left = _emit_float(e.left, em)
        right = _emit_float(e.right, em)
        op = "+" if isinstance(e, Sum) else "-" if isinstance(e, Difference) else "*"
        var = em.fresh()
        em.emit(f"{var} = {left} {op} {right}")
    em.cache[key] = var
    return var


def _emit_mag(m: MagnitudeExpr, em: _Emitter) -> str:
    key = ("m", m)
    if key in em.cache:
        return em.cache[key]
    if isinstance(m, AbsOf):
        inner = _emit_float(m.inner, em)
        var = em.fresh("a")
        em.emit(f"{var} = abs({inner})")
    elif isinstance(m, MagConst):
        var = em.fresh("k")
        em.emit(f"{var} = {m.value!r}")
    else:
        left = _emit_mag(m.left, em)
        right = _emit_mag(m.right, em)
        op = "+" if isinstance(m, MagSum) else "*"
        var = em.fresh("m")
        em.emit(f"{var} = {left} {op} {right}")
    em.cache[key] = var
    return var


def _args(arity: int) -> str:
    return ", ".join(f"x{k}" for k in range(1, arity + 1))


def _indent(lines: List[str], pad: str = "    ") -> str:
    return "\n".join(pad + ln for ln in lines)


def build(src: str, name: str, env: dict):
    """Compile generated source and return the named function."""
    ns = dict(env)
    exec(compile(src, f"<robustpred:{name}>", "exec"), ns)
    return ns[name]


# --- naive evaluation ---------------------------------------------------------


def naive_source(e: Expr, arity: int, name: str = "naive") -> str:
    em = _Emitter()
    out = _emit_float(e, em)
    return f"def {name}({_args(arity)}):\n{_indent(em.lines)}\n    return {out}\n"


# --- semi-static filter ---------------------------------------------------------


def _semistatic_core(split, a4: float, u_s: float, ufp: bool, em: _Emitter):
    p = _emit_float(split.expr, em)
    m1 = _emit_mag(split.m1, em)
    m2 = _emit_mag(split.m2, em)
    em.emit(f"msum = {m1} + {m2}")
    if ufp:
        em.emit(f"err = {a4!r} * msum + {u_s!r}")
    else:
        em.emit(f"err = {a4!r} * msum")
    return p


def semistatic_scalar_source(split, a4, u_s, ufp, name="ss_scalar") -> str:
    em = _Emitter()
    p = _semistatic_core(split, a4, u_s, ufp, em)
    sign = f"1 if {p} > 0.0 else (-1 if {p} < 0.0 else 0)"
    lines = em.lines + [f"if abs({p}) > err:", f"    return {sign}"]
    if not ufp:
        # zero error bound certifies the sign exactly (both magnitudes zero)
        lines += ["if err == 0.0:", f"    return {sign}"]
    lines.append(f"return {UNCERTAIN}")
    return f"def {name}({_args(split.arity)}):\n{_indent(lines)}\n"


def semistatic_numpy_source(split, a4, u_s, ufp, name="ss_numpy") -> str:
    em = _Emitter()
    p = _semistatic_core(split, a4, u_s, ufp, em)
    cond = f"(np.abs({p}) > err)"
    if not ufp:
        cond += " | (err == 0.0)"
    body = em.lines + [
        f"sgn = ({p} > 0.0).astype(np.int8) - ({p} < 0.0).astype(np.int8)",
        f"return np.where({cond}, sgn, np.int8({UNCERTAIN}))",
    ]
    cols = "\n".join(
        f"    x{k} = xs[:, {k - 1}]" for k in range(1, split.arity + 1)
    )
    return (
        f"def {name}(xs):\n"
        f"{cols}\n"
        f"    with np.errstate(all='ignore'):\n"
        f"{_indent(body, '        ')}\n"
    )


# --- underflow detector ---------------------------------------------------------


def underflow_scalar_source(split, a4, u_s, ufp, u_n, name="uf_scalar") -> str:
    """Flags any multiplication in p or e producing subnormal-or-zero from
    nonzero factors (the definition of multiplication underflow)."""
    em = _Emitter()
    em.emit("uf = False")
    flagged = set()

    def emit_with_flags(node: Expr) -> str:
        key = ("f", node)
        if key in em.cache:
            return em.cache[key]
        if isinstance(node, (Sum, Difference, Product)):
            left = emit_with_flags(node.left)
            right = emit_with_flags(node.right)
            op = (
                "+"
                if isinstance(node, Sum)
                else "-" if isinstance(node, Difference) else "*"
            )
            var = em.fresh()
            em.emit(f"{var} = {left} {op} {right}")
            if isinstance(node, Product) and key not in flagged:
                flagged.add(key)
                em.emit(
                    f"uf = uf | ((abs({var}) < {u_n!r}) & ({left} != 0.0) & ({right} != 0.0))"
                )
            em.cache[key] = var
            return var
        return _emit_float(node, em)

    def emit_mag_with_flags(m: MagnitudeExpr) -> str:
        key = ("m", m)
        if key in em.cache:
            return em.cache[key]
        if isinstance(m, AbsOf):
            inner = emit_with_flags(m.inner)
            var = em.fresh("a")
            em.emit(f"{var} = abs({inner})")
        elif isinstance(m, MagConst):
            var = em.fresh("k")
            em.emit(f"{var} = {m.value!r}")
        else:
            left = emit_mag_with_flags(m.left)
            right = emit_mag_with_flags(m.right)
            op = "+" if isinstance(m, MagSum) else "*"
            var = em.fresh("m")
            em.emit(f"{var} = {left} {op} {right}")
            if isinstance(m, MagProduct):
                em.emit(
                    f"uf = uf | ((abs({var}) < {u_n!r}) & ({left} != 0.0) & ({right} != 0.0))"
                )
        em.cache[key] = var
        return var

    emit_with_flags(split.expr)
    m1 = emit_mag_with_flags(split.m1)
    m2 = emit_mag_with_flags(split.m2)
    em.emit(f"msum = {m1} + {m2}")
    em.emit(f"err = {a4!r} * msum")
    em.emit(f"uf = uf | ((abs(err) < {u_n!r}) & ({a4!r} != 0.0) & (msum != 0.0))")
    em.emit("return uf")
    return f"def {name}({_args(split.arity)}):\n{_indent(em.lines)}\n"


def underflow_numpy_source(split, a4, u_s, ufp, u_n, name="uf_numpy") -> str:
    scalar = underflow_scalar_source(split, a4, u_s, ufp, u_n, name="_core")
    # the scalar body is vectorization-safe: it only uses |, & and arithmetic
    body = scalar.replace("uf = False", "uf = np.zeros(x1.shape, dtype=np.bool_)")
    cols = "\n".join(f"        x{k} = xs[:, {k - 1}]" for k in range(1, split.arity + 1))
    return (
        f"{body}\n"
        f"def {name}(xs):\n"
        f"    with np.errstate(all='ignore'):\n"
        f"{cols}\n"
        f"        return _core({_args(split.arity)})\n"
    )


# --- zero filter ---------------------------------------------------------------


def _emit_zero(e: Expr, em: _Emitter, vector: bool) -> str:
    key = ("z", e)
    if key in em.cache:
        return em.cache[key]
    var = em.fresh("z")
    if isinstance(e, Constant):
        em.emit(f"{var} = {e.value == 0.0}")
    elif isinstance(e, Input):
        em.emit(f"{var} = x{e.index} == 0.0")
    elif isinstance(e, (Sum, Difference)) and isinstance(e.left, (Input, Constant)) and isinstance(e.right, (Input, Constant)):
        val = _emit_float(e, em)
        em.emit(f"{var} = {val} == 0.0")
    elif isinstance(e, (Sum, Difference)):
        left = _emit_zero(e.left, em, vector)
        right = _emit_zero(e.right, em, vector)
        em.emit(f"{var} = {left} & {right}" if vector else f"{var} = {left} and {right}")
    else:
        left = _emit_zero(e.left, em, vector)
        right = _emit_zero(e.right, em, vector)
        em.emit(f"{var} = {left} | {right}" if vector else f"{var} = {left} or {right}")
    em.cache[key] = var
    return var


def zero_scalar_source(e: Expr, arity: int, name: str = "zero_scalar") -> str:
    em = _Emitter()
    out = _emit_zero(e, em, vector=False)
    lines = em.lines + [f"return 0 if {out} else {UNCERTAIN}"]
    return f"def {name}({_args(arity)}):\n{_indent(lines)}\n"


def zero_numpy_source(e: Expr, arity: int, name: str = "zero_numpy") -> str:
    em = _Emitter()
    out = _emit_zero(e, em, vector=True)
    body = em.lines + [
        f"return np.where({out}, np.int8(0), np.int8({UNCERTAIN}))"
    ]
    cols = "\n".join(f"    x{k} = xs[:, {k - 1}]" for k in range(1, arity + 1))
    return (
        f"def {name}(xs):\n{cols}\n"
        f"    with np.errstate(all='ignore'):\n{_indent(body, '        ')}\n"
    )


# --- interval filter -------------------------------------------------------------
#
# The generated body calls the directed endpoint helpers (_iv_add_lo and
# friends) plus _imin/_imax; the caller binds scalar, numpy or njit versions.
# Endpoints move outward only when the error-free residual shows the rounding
# crossed the true value, so exact arithmetic yields exact (even degenerate
# [0, 0]) intervals.


def _emit_interval(e: Expr, em: _Emitter) -> Tuple[str, str]:
    key = ("i", e)
    if key in em.cache:
        return em.cache[key]
    if isinstance(e, Constant):
        lo = hi = em.fresh("ic")
        em.emit(f"{lo} = {e.value!r}")
    elif isinstance(e, Input):
        lo = hi = f"x{e.index}"
    else:
        llo, lhi = _emit_interval(e.left, em)
        rlo, rhi = _emit_interval(e.right, em)
        lo, hi = em.fresh("lo"), em.fresh("hi")
        if isinstance(e, Sum):
            em.emit(f"{lo} = _iv_add_lo({llo}, {rlo})")
            em.emit(f"{hi} = _iv_add_hi({lhi}, {rhi})")
        elif isinstance(e, Difference):
            em.emit(f"{lo} = _iv_sub_lo({llo}, {rhi})")
            em.emit(f"{hi} = _iv_sub_hi({lhi}, {rlo})")
        else:
            los, his = [], []
            for x, y in ((llo, rlo), (llo, rhi), (lhi, rlo), (lhi, rhi)):
                lv, hv = em.fresh("pl"), em.fresh("ph")
                em.emit(f"{lv} = _iv_mul_lo({x}, {y})")
                em.emit(f"{hv} = _iv_mul_hi({x}, {y})")
                los.append(lv)
                his.append(hv)
            em.emit(
                f"{lo} = _imin(_imin({los[0]}, {los[1]}), _imin({los[2]}, {los[3]}))"
            )
            em.emit(
                f"{hi} = _imax(_imax({his[0]}, {his[1]}), _imax({his[2]}, {his[3]}))"
            )
    em.cache[key] = (lo, hi)
    return lo, hi


def interval_scalar_source(e: Expr, arity: int, u_s: float, name: str = "iv_scalar") -> str:
    em = _Emitter()
    lo, hi = _emit_interval(e, em)
    lines = em.lines + [
        f"if not (_isfinite({lo}) and _isfinite({hi})):",
        f"    return {UNCERTAIN}",
        f"if {lo} > 0.0:",
        "    return 1",
        f"if {hi} < 0.0:",
        "    return -1",
        f"if {lo} == 0.0 and {hi} == 0.0:",
        "    return 0",
        f"return {UNCERTAIN}",
    ]
    return f"def {name}({_args(arity)}):\n{_indent(lines)}\n"


def interval_numpy_source(e: Expr, arity: int, u_s: float, name: str = "iv_numpy") -> str:
    em = _Emitter()
    lo, hi = _emit_interval(e, em)
    body = em.lines + [
        f"ok = np.isfinite({lo}) & np.isfinite({hi})",
        f"pos = ok & ({lo} > 0.0)",
        f"neg = ok & ({hi} < 0.0)",
        f"zer = ok & ({lo} == 0.0) & ({hi} == 0.0)",
        f"out = np.full(x1.shape, np.int8({UNCERTAIN}))",
        "out[pos] = 1",
        "out[neg] = -1",
        "out[zer] = 0",
        "return out",
    ]
    cols = "\n".join(f"    x{k} = xs[:, {k - 1}]" for k in range(1, arity + 1))
    return (
        f"def {name}(xs):\n{cols}\n"
        f"    with np.errstate(all='ignore'):\n{_indent(body, '        ')}\n"
    )


# --- exact integer sign ----------------------------------------------------------


def _emit_int(e: Expr, em: _Emitter, decomposed: set) -> Tuple[str, str]:
    """Emit exact evaluation on (mantissa, exponent) integer pairs."""
    key = ("d", e)
    if key in em.cache:
        return em.cache[key]
    if isinstance(e, Constant):
        fr, ex = math.frexp(e.value)
        man, exp = int(fr * _TWO53), ex - 53
        mv, ev = em.fresh("km"), em.fresh("ke")
        em.emit(f"{mv} = {man}")
        em.emit(f"{ev} = {exp}")
    elif isinstance(e, Input):
        mv, ev = f"im{e.index}", f"ie{e.index}"
        if e.index not in decomposed:
            decomposed.add(e.index)
            em.emit(f"fr, ex = _frexp(x{e.index})")
            em.emit(f"{mv} = int(fr * {_TWO53!r}); {ev} = ex - 53")
    else:
        lm, le = _emit_int(e.left, em, decomposed)
        rm, re_ = _emit_int(e.right, em, decomposed)
        mv, ev = em.fresh("dm"), em.fresh("de")
        if isinstance(e, Product):
            em.emit(f"{mv} = {lm} * {rm}; {ev} = {le} + {re_}")
        else:
            op = "+" if isinstance(e, Sum) else "-"
            em.emit(f"if {le} >= {re_}:")
            em.emit(f"    {mv} = ({lm} << ({le} - {re_})) {op} {rm}; {ev} = {re_}")
            em.emit("else:")
            em.emit(f"    {mv} = {lm} {op} ({rm} << ({re_} - {le})); {ev} = {le}")
    em.cache[key] = (mv, ev)
    return mv, ev


def oracle_scalar_source(e: Expr, arity: int, name: str = "oracle_scalar") -> str:
    em = _Emitter()
    mv, _ = _emit_int(e, em, set())
    lines = em.lines + [f"return ({mv} > 0) - ({mv} < 0)"]
    return f"def {name}({_args(arity)}):\n{_indent(lines)}\n"


def oracle_batch_source(e: Expr, arity: int, name: str = "oracle_batch") -> str:
    em = _Emitter()
    mv, _ = _emit_int(e, em, set())
    body = em.lines + [f"out[i] = ({mv} > 0) - ({mv} < 0)", "i += 1"]
    return (
        f"def {name}(rows, out):\n"
        "    i = 0\n"
        f"    for ({_args(arity)}) in rows:\n"
        f"{_indent(body, '        ')}\n"
    )


def oracle_nodes_source(e: Expr, arity: int, nodes, name: str = "oracle_nodes") -> str:
    """Exact (mantissa, exponent) pairs for the given subtrees, one call."""
    em = _Emitter()
    decomposed: set = set()
    pairs = [_emit_int(n, em, decomposed) for n in nodes]
    ret = ", ".join(f"{m}, {ev}" for m, ev in pairs)
    return f"def {name}({_args(arity)}):\n{_indent(em.lines)}\n    return ({ret})\n"


# --- per-node float values (invariant suites) ------------------------------------


def node_values_numpy_source(nodes, arity: int, name: str = "node_values") -> str:
    em = _Emitter()
    outs = [_emit_float(n, em) for n in nodes]
    cols = "\n".join(f"    x{k} = xs[:, {k - 1}]" for k in range(1, arity + 1))
    body = em.lines + [
        "return [" + ", ".join(f"np.asarray({v}, dtype=np.float64)" for v in outs) + "]"
    ]
    return (
        f"def {name}(xs):\n{cols}\n"
        f"    with np.errstate(all='ignore'):\n{_indent(body, '        ')}\n"
    )


# --- numba batch wrapper ----------------------------------------------------------


def batch_loop_source(scalar_name: str, arity: int, name: str = "batch_loop") -> str:
    args = ", ".join(f"xs[i, {k}]" for k in range(arity))
    return (
        f"def {name}(xs, out):\n"
        "    for i in range(xs.shape[0]):\n"
        f"        out[i] = {scalar_name}({args})\n"
    )


def naive_batch_loop_source(scalar_name: str, arity: int, name: str = "naive_loop") -> str:
    return batch_loop_source(scalar_name, arity, name)
