"""Batch kernel bundles: compiled stage evaluators over input arrays.

``ExprKernels`` compiles, per expression, the naive evaluation, the two
semi-static filters, the zero filter, the interval filter, the underflow
detector and the exact integer-pair sign oracle.  Each float kernel has a
numba and a numpy implementation selected per call by the active backend;
the exact oracle is a generated big-integer loop (dyadic arithmetic in
flattened form) and has no vector analogue.

``PipelineBatch`` runs a default stage cascade over an input batch the way a
staged predicate would per call, keeping per-stage statistics.
"""

from __future__ import annotations

import math
from typing import Dict, List, Optional

import numpy as np

from ..errorbound import (
    AbsOf,
    MagConst,
    MagProduct,
    MagSum,
    derive,
    derive_filter_bounds,
)
from ..expr import Expr, arity as expr_arity, subexpressions
from ..fpn import BINARY64, FpnParams
from ..stats import StageStats
from . import HAS_NUMBA, active_backend
from . import codegen as cg
from .codegen import UNCERTAIN, build

if HAS_NUMBA:
    from numba import njit
else:  # pragma: no cover - numba is a declared dependency
    njit = None

_INF = math.inf
_U_NORMAL = BINARY64.u_normal
_U_SUBNORMAL = BINARY64.u_subnormal


def _nd(x):
    return math.nextafter(x, -_INF)


def _nu(x):
    return math.nextafter(x, _INF)


def _imin(a, b):
    # NaN-propagating, like numpy's minimum
    if a != a:
        return a
    if b != b:
        return b
    return a if a < b else b


def _imax(a, b):
    if a != a:
        return a
    if b != b:
        return b
    return a if a > b else b


# Directed interval endpoint operations.  The error-free residual tells on
# which side of the true value the rounded result landed, so endpoints move
# one float step only when they have to; exact operations stay exact.  This
# is as tight as switching the rounding mode, without doing so.


def _iv_add_lo(a, b):
    s = a + b
    bv = s - a
    t = (a - (s - bv)) + (b - bv)
    return _nd(s) if t < 0.0 else s


def _iv_add_hi(a, b):
    s = a + b
    bv = s - a
    t = (a - (s - bv)) + (b - bv)
    return _nu(s) if t > 0.0 else s


def _iv_sub_lo(a, b):
    s = a - b
    bv = a - s
    t = (a - (s + bv)) + (bv - b)
    return _nd(s) if t < 0.0 else s


def _iv_sub_hi(a, b):
    s = a - b
    bv = a - s
    t = (a - (s + bv)) + (bv - b)
    return _nu(s) if t > 0.0 else s


def _iv_mul_lo(a, b):
    p = a * b
    if p != p or p == _INF or p == -_INF:
        return p
    if a != 0.0 and b != 0.0 and abs(p) < _U_NORMAL:
        return _nd(p) - _U_SUBNORMAL  # underflow: the residual is unreliable
    c = 134217729.0 * a
    ahi = c - (c - a)
    alo = a - ahi
    c = 134217729.0 * b
    bhi = c - (c - b)
    blo = b - bhi
    t = alo * blo - (((p - ahi * bhi) - alo * bhi) - ahi * blo)
    if t != t:
        return _nd(p)  # split overflow; one step covers the relative error
    return _nd(p) if t < 0.0 else p


def _iv_mul_hi(a, b):
    p = a * b
    if p != p or p == _INF or p == -_INF:
        return p
    if a != 0.0 and b != 0.0 and abs(p) < _U_NORMAL:
        return _nu(p) + _U_SUBNORMAL
    c = 134217729.0 * a
    ahi = c - (c - a)
    alo = a - ahi
    c = 134217729.0 * b
    bhi = c - (c - b)
    blo = b - bhi
    t = alo * blo - (((p - ahi * bhi) - alo * bhi) - ahi * blo)
    if t != t:
        return _nu(p)
    return _nu(p) if t > 0.0 else p


_SCALAR_ENV = {
    "_nd": _nd,
    "_nu": _nu,
    "_imin": _imin,
    "_imax": _imax,
    "_iv_add_lo": _iv_add_lo,
    "_iv_add_hi": _iv_add_hi,
    "_iv_sub_lo": _iv_sub_lo,
    "_iv_sub_hi": _iv_sub_hi,
    "_iv_mul_lo": _iv_mul_lo,
    "_iv_mul_hi": _iv_mul_hi,
    "_isfinite": math.isfinite,
    "_frexp": math.frexp,
    "math": math,
}

_NUMBA_HELPERS: Dict[str, object] = {}


def _numba_env() -> dict:
    if not _NUMBA_HELPERS:
        jit = njit(cache=False)
        nd, nu = jit(_nd), jit(_nu)
        helpers = dict(
            _nd=nd,
            _nu=nu,
            _imin=jit(_imin),
            _imax=jit(_imax),
            _isfinite=math.isfinite,
            math=math,
        )
        for name in ("_iv_add_lo", "_iv_add_hi", "_iv_sub_lo", "_iv_sub_hi",
                     "_iv_mul_lo", "_iv_mul_hi"):
            src = globals()[name]
            helpers[name] = njit(cache=False)(
                _rebind(src, {"_nd": nd, "_nu": nu})
            )
        _NUMBA_HELPERS.update(helpers)
    return dict(_NUMBA_HELPERS)


def _rebind(fn, extra):
    """Clone a module function with some globals replaced (for njit)."""
    import types

    g = dict(fn.__globals__)
    g.update(extra)
    return types.FunctionType(fn.__code__, g, fn.__name__, fn.__defaults__)


def _np_directed(op, adjust, toward):
    def run(a, b):
        if op == "add":
            s = a + b
            bv = s - a
            t = (a - (s - bv)) + (b - bv)
        else:
            s = a - b
            bv = a - s
            t = (a - (s + bv)) + (bv - b)
        return np.where(adjust(t), np.nextafter(s, toward), s)

    return run


def _np_mul_directed(upper: bool):
    toward = np.inf if upper else -np.inf

    def run(a, b):
        p = a * b
        ca = 134217729.0 * a
        ahi = ca - (ca - a)
        alo = a - ahi
        cb = 134217729.0 * b
        bhi = cb - (cb - b)
        blo = b - bhi
        t = alo * blo - (((p - ahi * bhi) - alo * bhi) - ahi * blo)
        stepped = np.nextafter(p, toward)
        underflow = (a != 0.0) & (b != 0.0) & (np.abs(p) < _U_NORMAL)
        crossed = (t > 0.0) if upper else (t < 0.0)
        out = np.where(crossed | np.isnan(t), stepped, p)
        slack = stepped + _U_SUBNORMAL if upper else stepped - _U_SUBNORMAL
        out = np.where(underflow, slack, out)
        return np.where(np.isfinite(p), out, p)

    return run


def _numpy_env() -> dict:
    return {
        "np": np,
        "_nd": lambda x: np.nextafter(x, -np.inf),
        "_nu": lambda x: np.nextafter(x, np.inf),
        "_imin": np.minimum,
        "_imax": np.maximum,
        "_iv_add_lo": _np_directed("add", lambda t: t < 0.0, -np.inf),
        "_iv_add_hi": _np_directed("add", lambda t: t > 0.0, np.inf),
        "_iv_sub_lo": _np_directed("sub", lambda t: t < 0.0, -np.inf),
        "_iv_sub_hi": _np_directed("sub", lambda t: t > 0.0, np.inf),
        "_iv_mul_lo": _np_mul_directed(False),
        "_iv_mul_hi": _np_mul_directed(True),
        "_isfinite": np.isfinite,
    }


class ExprKernels:
    """Compiled evaluators for one expression tree."""

    def __init__(self, expr: Expr, params: FpnParams = BINARY64):
        self.expr = expr
        self.params = params
        self.arity = expr_arity(expr)
        self._fns: Dict[tuple, object] = {}
        self._splits: Dict[bool, object] = {}

    # -- derivation ------------------------------------------------------

    def split(self, ufp: bool):
        if ufp not in self._splits:
            self._splits[ufp] = derive_filter_bounds(self.expr, ufp, self.params)
        return self._splits[ufp]

    # -- compilation -----------------------------------------------------

    def _get(self, key: tuple, builder):
        if key not in self._fns:
            self._fns[key] = builder()
        return self._fns[key]

    def scalar_naive(self):
        return self._get(
            ("naive", "scalar"),
            lambda: build(cg.naive_source(self.expr, self.arity), "naive", {}),
        )

    def scalar_semistatic(self, ufp: bool):
        def make():
            sp = self.split(ufp)
            src = cg.semistatic_scalar_source(
                sp, sp.constants.a4, self.params.u_subnormal, ufp
            )
            return build(src, "ss_scalar", {})

        return self._get(("ss", "scalar", ufp), make)

    def scalar_zero(self):
        return self._get(
            ("zero", "scalar"),
            lambda: build(
                cg.zero_scalar_source(self.expr, self.arity), "zero_scalar", {}
            ),
        )

    def scalar_interval(self):
        return self._get(
            ("iv", "scalar"),
            lambda: build(
                cg.interval_scalar_source(
                    self.expr, self.arity, self.params.u_subnormal
                ),
                "iv_scalar",
                _SCALAR_ENV,
            ),
        )

    def scalar_underflow(self, ufp: bool):
        def make():
            sp = self.split(ufp)
            src = cg.underflow_scalar_source(
                sp, sp.constants.a4, self.params.u_subnormal, ufp, self.params.u_normal
            )
            return build(src, "uf_scalar", {})

        return self._get(("uf", "scalar", ufp), make)

    def scalar_oracle(self):
        return self._get(
            ("oracle", "scalar"),
            lambda: build(
                cg.oracle_scalar_source(self.expr, self.arity),
                "oracle_scalar",
                _SCALAR_ENV,
            ),
        )

    def _numba_batch(self, kind: str, ufp: Optional[bool], scalar_src, env) -> object:
        scalar = build(scalar_src, scalar_src.split("(")[0][4:], env)
        jscalar = njit(cache=False)(scalar)
        loop_src = cg.batch_loop_source("_scalar", self.arity)
        loop = build(loop_src, "batch_loop", {"_scalar": jscalar})
        return njit(cache=False)(loop)

    def _batch_fn(self, kind: str, ufp: Optional[bool], backend: str):
        key = (kind, backend, ufp)

        def make():
            if kind == "naive":
                if backend == "numpy":
                    fn = self.scalar_naive()

                    def run(xs):
                        with np.errstate(all="ignore"):
                            return np.asarray(
                                fn(*(xs[:, k] for k in range(self.arity))),
                                dtype=np.float64,
                            )

                    return run
                src = cg.naive_source(self.expr, self.arity)
                loop = self._numba_batch(kind, None, src, {})

                def run(xs):
                    out = np.empty(len(xs), dtype=np.float64)
                    loop(xs, out)
                    return out

                return run

            if kind == "ss":
                sp = self.split(ufp)
                if backend == "numpy":
                    src = cg.semistatic_numpy_source(
                        sp, sp.constants.a4, self.params.u_subnormal, ufp
                    )
                    return build(src, "ss_numpy", _numpy_env())
                src = cg.semistatic_scalar_source(
                    sp, sp.constants.a4, self.params.u_subnormal, ufp
                )
                loop = self._numba_batch(kind, ufp, src, {})
            elif kind == "zero":
                if backend == "numpy":
                    src = cg.zero_numpy_source(self.expr, self.arity)
                    return build(src, "zero_numpy", _numpy_env())
                src = cg.zero_scalar_source(self.expr, self.arity)
                loop = self._numba_batch(kind, None, src, {})
            elif kind == "iv":
                if backend == "numpy":
                    src = cg.interval_numpy_source(
                        self.expr, self.arity, self.params.u_subnormal
                    )
                    return build(src, "iv_numpy", _numpy_env())
                src = cg.interval_scalar_source(
                    self.expr, self.arity, self.params.u_subnormal
                )
                loop = self._numba_batch(kind, None, src, _numba_env())
            elif kind == "uf":
                sp = self.split(ufp)
                src = cg.underflow_numpy_source(
                    sp,
                    sp.constants.a4,
                    self.params.u_subnormal,
                    ufp,
                    self.params.u_normal,
                )
                return build(src, "uf_numpy", _numpy_env())
            else:
                raise ValueError(kind)

            def run(xs):
                out = np.empty(len(xs), dtype=np.int8)
                loop(np.ascontiguousarray(xs), out)
                return out

            return run

        return self._get(key, make)

    # -- public batch API --------------------------------------------------

    def naive_batch(self, xs) -> np.ndarray:
        return self._batch_fn("naive", None, active_backend())(xs)

    def semistatic_batch(self, xs, ufp: bool) -> np.ndarray:
        return self._batch_fn("ss", ufp, active_backend())(xs)

    def zero_batch(self, xs) -> np.ndarray:
        return self._batch_fn("zero", None, active_backend())(xs)

    def interval_batch(self, xs) -> np.ndarray:
        return self._batch_fn("iv", None, active_backend())(xs)

    def underflow_batch(self, xs, ufp: bool) -> np.ndarray:
        # the detector is test-harness instrumentation; numpy is enough
        return self._batch_fn("uf", ufp, "numpy")(xs)

    def oracle_batch(self, xs) -> np.ndarray:
        def make():
            src = cg.oracle_batch_source(self.expr, self.arity)
            return build(src, "oracle_batch", _SCALAR_ENV)

        fn = self._get(("oracle", "batch"), make)
        out = np.empty(len(xs), dtype=np.int8)
        fn(np.asarray(xs, dtype=np.float64).tolist(), out)
        return out

    # -- invariant-suite helpers -------------------------------------------

    def unique_nodes(self) -> List[Expr]:
        seen: Dict[Expr, None] = {}
        for node in subexpressions(self.expr):
            seen.setdefault(node)
        return list(seen)

    def node_values_batch(self, xs) -> Dict[Expr, np.ndarray]:
        nodes = self.unique_nodes()

        def make():
            src = cg.node_values_numpy_source(nodes, self.arity)
            return build(src, "node_values", {"np": np})

        fn = self._get(("nodes", "numpy"), make)
        values = fn(np.asarray(xs, dtype=np.float64))
        return dict(zip(nodes, values))

    def node_bounds(self, ufp: bool):
        """Per-subexpression derived error bound, for the invariant suites."""
        return [
            (node, derive(node, ufp, self.params)) for node in self.unique_nodes()
        ]

    def oracle_nodes_fn(self, nodes):
        key = ("oracle-nodes", tuple(id(n) for n in nodes))

        def make():
            src = cg.oracle_nodes_source(self.expr, self.arity, nodes)
            return build(src, "oracle_nodes", _SCALAR_ENV)

        return self._get(key, make)


def eval_magnitude_arrays(m, node_arrays: Dict[Expr, np.ndarray], memo=None):
    """Evaluate a magnitude expression over precomputed node value arrays.

    Passing one ``memo`` dict across many calls shares the work for the
    common subtrees that per-node derived magnitudes repeat.
    """
    if memo is None:
        memo = {}
    with np.errstate(all="ignore"):
        return _mag_arrays(m, node_arrays, memo)


def _mag_arrays(m, node_arrays, memo):
    if m in memo:
        return memo[m]
    if isinstance(m, AbsOf):
        out = np.abs(node_arrays[m.inner])
    elif isinstance(m, MagConst):
        out = m.value
    else:
        left = _mag_arrays(m.left, node_arrays, memo)
        right = _mag_arrays(m.right, node_arrays, memo)
        out = left + right if isinstance(m, MagSum) else left * right
    memo[m] = out
    return out


class PipelineBatch:
    """Default five-stage cascade evaluated over an input batch.

    Stage order matches the per-call staged predicate: semi-static filter
    (underflow-protected for the safe profile), zero filter, interval filter,
    expansion-exact, dyadic-exact.  Returns signs, the 1-based deciding stage
    per row, and per-stage statistics.
    """

    STAGE_NAMES = ("semi-static", "zero", "interval", "expansion", "dyadic")

    def __init__(self, expr: Expr, profile: str = "safe", name: str = "expr",
                 params: FpnParams = BINARY64):
        if profile not in ("fast", "safe"):
            raise ValueError(f"profile must be 'fast' or 'safe', got {profile!r}")
        self.kernels = ExprKernels(expr, params)
        self.profile = profile
        self.name = name
        names = list(self.STAGE_NAMES)
        names[0] = "semi-static-ufp" if profile == "safe" else "semi-static"
        self.stage_names = names

    def run(self, xs) -> tuple:
        from ..expansion import try_exact_sign

        xs = np.ascontiguousarray(np.asarray(xs, dtype=np.float64))
        n = len(xs)
        signs = np.zeros(n, dtype=np.int8)
        stage_of = np.zeros(n, dtype=np.int8)
        stats = StageStats(self.name, self.stage_names)
        remaining = np.arange(n)

        batch_stages = (
            lambda sub: self.kernels.semistatic_batch(sub, self.profile == "safe"),
            self.kernels.zero_batch,
            self.kernels.interval_batch,
        )
        for k, fn in enumerate(batch_stages):
            if len(remaining) == 0:
                stats.calls[k] = 0
                continue
            stats.calls[k] = len(remaining)
            res = fn(xs[remaining])
            certain = res != UNCERTAIN
            hit = remaining[certain]
            signs[hit] = res[certain]
            stage_of[hit] = k + 1
            stats.certifications[k] = int(certain.sum())
            remaining = remaining[~certain]

        # expansion-exact stage, per row (plain floats: faster, no warnings)
        stats.calls[3] = len(remaining)
        still: List[int] = []
        expr = self.kernels.expr
        for idx in remaining:
            s = try_exact_sign(expr, xs[idx].tolist())
            if s is None:
                still.append(idx)
            else:
                signs[idx] = s
                stage_of[idx] = 4
                stats.certifications[3] += 1
        remaining = np.asarray(still, dtype=np.int64)

        # dyadic-exact stage: total
        stats.calls[4] = len(remaining)
        if len(remaining):
            res = self.kernels.oracle_batch(xs[remaining])
            signs[remaining] = res
            stage_of[remaining] = 5
            stats.certifications[4] = len(remaining)
        stats.check_conservation()
        return signs, stage_of, stats
