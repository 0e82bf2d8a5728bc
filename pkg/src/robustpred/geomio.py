"""File formats: point tables, expression files, PPM images, stats CSV.

Point files are whitespace-separated rows of float literals; hexadecimal
literals (``0x1.8p-3``) are the bit-exact interchange form, decimal ones
round once on ingestion.  Images are binary PPM (P6, maxval 255).
"""

from __future__ import annotations

import csv
import math
from typing import Iterable, List, Sequence

import numpy as np

from .expr import Expr, parse_expr
from .stats import StageStats

__all__ = [
    "PointFileError",
    "parse_float_token",
    "read_points_file",
    "read_expr_file",
    "write_ppm",
    "write_stats_csv",
]


class PointFileError(ValueError):
    """Malformed row or token; message names the line number."""


def parse_float_token(tok: str) -> float:
    try:
        if tok.lower().startswith(("0x", "-0x", "+0x")):
            value = float.fromhex(tok)
        else:
            value = float(tok)
    except ValueError:
        raise PointFileError(f"bad float literal {tok!r}") from None
    if not math.isfinite(value):
        raise PointFileError(f"non-finite value {tok!r}")
    return value


def read_points_file(path: str, row_arity: int) -> np.ndarray:
    """Rows of ``row_arity`` floats; raises naming the offending line."""
    rows: List[List[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            toks = body.split()
            if len(toks) != row_arity:
                raise PointFileError(
                    f"{path}:{lineno}: expected {row_arity} values, got {len(toks)}"
                )
            try:
                rows.append([parse_float_token(t) for t in toks])
            except PointFileError as exc:
                raise PointFileError(f"{path}:{lineno}: {exc}") from None
    return np.asarray(rows, dtype=np.float64).reshape(-1, row_arity)


def read_expr_file(path: str) -> Expr:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_expr(fh.read())


def write_ppm(path: str, pixels: np.ndarray) -> None:
    """Binary PPM; ``pixels`` is (height, width, 3) uint8, row 0 on top."""
    h, w, depth = pixels.shape
    if depth != 3 or pixels.dtype != np.uint8:
        raise ValueError("pixels must be (h, w, 3) uint8")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def write_stats_csv(path: str, stats: Iterable[StageStats]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["predicate", "stage", "name", "calls", "certifications", "failures"]
        )
        for st in stats:
            for row in st.rows():
                writer.writerow(row)
