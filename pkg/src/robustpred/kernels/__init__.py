"""Hot evaluation kernels: numba-jitted loops with a pure-numpy fallback.

The batch entry points (naive evaluation, semi-static filter, zero filter,
interval filter) exist in two implementations with identical semantics: a
generated scalar body compiled inside an ``@njit`` loop, and a vectorized
numpy form.  The active implementation is selected by the environment
variable ``ROBUSTPRED_BACKEND``:

* ``auto`` (default): numba when importable, numpy otherwise
* ``numba``: require numba, fail if it is missing
* ``numpy``: pure numpy, never JIT

``robustpred bench`` reports timings for both backends side by side.
"""

from __future__ import annotations

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

_VALID = ("auto", "numba", "numpy")
_backend = os.environ.get("ROBUSTPRED_BACKEND", "auto").lower()
if _backend not in _VALID:
    raise RuntimeError(
        f"ROBUSTPRED_BACKEND must be one of {_VALID}, got {_backend!r}"
    )
if _backend == "numba" and not HAS_NUMBA:
    raise RuntimeError("ROBUSTPRED_BACKEND=numba but numba is not importable")


def active_backend() -> str:
    """The backend batch calls will use right now: 'numba' or 'numpy'."""
    if _backend == "auto":
        return "numba" if HAS_NUMBA else "numpy"
    return _backend


def set_backend(name: str) -> None:
    """Override the backend at runtime (used by tests and the benchmark)."""
    global _backend
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _backend = name


from .batch import ExprKernels, PipelineBatch  # noqa: E402

__all__ = [
    "HAS_NUMBA",
    "active_backend",
    "set_backend",
    "ExprKernels",
    "PipelineBatch",
]
