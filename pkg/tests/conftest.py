"""Shared fixtures: adversarial input generation and acceptance reporting."""

from __future__ import annotations

import numpy as np
import pytest

from robustpred.expr import arity as expr_arity
from robustpred.predicates import builtin_expr

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# --- adversarial input generation ------------------------------------------------
#
# Five families per predicate: uniform, near-degenerate perturbations of
# exactly degenerate configurations, 2**-1000-scale, 2**+800-scale, and an
# exact power-of-two lattice.


def perturb_ulps(arr: np.ndarray, rng, max_steps: int = 2) -> np.ndarray:
    steps = rng.integers(-max_steps, max_steps + 1, arr.shape)
    out = arr.copy()
    for s in range(1, max_steps + 1):
        up = steps >= s
        out[up] = np.nextafter(out[up], np.inf)
        dn = steps <= -s
        out[dn] = np.nextafter(out[dn], -np.inf)
    return out


def _near_orient2d(n: int, rng) -> np.ndarray:
    a = rng.random((n, 2))
    b = rng.random((n, 2))
    t = rng.random((n, 1))
    c = a + t * (b - a)  # rounded, hence nearly collinear
    xs = np.hstack([a, b, c])
    return perturb_ulps(xs, rng)


def _near_incircle2d(n: int, rng) -> np.ndarray:
    m = n - n // 5
    o = rng.random((m, 2))
    r = 0.1 + 0.9 * rng.random((m, 1))
    ang = rng.random((m, 4)) * (2 * np.pi)
    pts = [
        np.stack([o[:, 0] + r[:, 0] * np.cos(ang[:, k]),
                  o[:, 1] + r[:, 0] * np.sin(ang[:, k])], axis=1)
        for k in range(4)
    ]
    circ = perturb_ulps(np.hstack(pts), rng)
    # exact cocircular rectangles on a lattice
    k = n - m
    x = rng.integers(0, 64, (k, 1)).astype(np.float64)
    y = rng.integers(0, 64, (k, 1)).astype(np.float64)
    w = rng.integers(1, 32, (k, 1)).astype(np.float64)
    h = rng.integers(1, 32, (k, 1)).astype(np.float64)
    rect = np.hstack([x, y, x + w, y, x + w, y + h, x, y + h])
    return np.vstack([circ, rect])


def _near_orient3d(n: int, rng) -> np.ndarray:
    a = rng.random((n, 3))
    b = rng.random((n, 3))
    c = rng.random((n, 3))
    s = rng.random((n, 1))
    t = rng.random((n, 1))
    d = a + s * (b - a) + t * (c - a)  # rounded, hence nearly coplanar
    xs = np.hstack([a, b, c, d])
    return perturb_ulps(xs, rng)


def _near_power_side(n: int, rng) -> np.ndarray:
    m = n - n // 5
    o = rng.random((m, 3))
    r = 0.1 + 0.9 * rng.random((m, 1))
    cols = []
    w = rng.random((m, 1))
    for _ in range(5):
        v = rng.normal(size=(m, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        p = o + r * v  # rounded point on the sphere
        cols.append(np.hstack([p, w]))  # equal weights: power side near zero
    sph = perturb_ulps(np.hstack(cols), rng)
    # exact cospherical cube corners with equal integer weights
    k = n - m
    base = rng.integers(0, 16, (k, 3)).astype(np.float64)
    h = rng.integers(1, 8, (k, 1)).astype(np.float64)
    cw = rng.integers(0, 4, (k, 1)).astype(np.float64)
    corners = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)]
    cols = []
    for cx, cy, cz in corners:
        p = base + h * np.asarray([cx, cy, cz], dtype=np.float64)
        cols.append(np.hstack([p, cw]))
    return np.vstack([sph, np.hstack(cols)])


_NEAR = {
    "orient2d": _near_orient2d,
    "incircle2d": _near_incircle2d,
    "orient3d": _near_orient3d,
    "power_side_3d": _near_power_side,
}

DISTRIBUTIONS = ("uniform", "near", "tiny", "huge", "grid")


def make_inputs(name: str, dist: str, n: int, seed: int) -> np.ndarray:
    """Deterministic (n, arity) float64 batch for one input family."""
    ar = expr_arity(builtin_expr(name))
    rng = np.random.default_rng(seed)
    if dist == "uniform":
        xs = rng.random((n, ar))
        xs[n // 2 :] = 2.0 * xs[n // 2 :] - 1.0  # include negative coordinates
        return xs
    if dist == "near":
        return _NEAR[name](n, rng)
    if dist == "tiny":
        return rng.random((n, ar)) * 2.0**-1000
    if dist == "huge":
        return (2.0 * rng.random((n, ar)) - 1.0) * 2.0**800
    if dist == "grid":
        return rng.integers(0, 33, (n, ar)).astype(np.float64)
    raise ValueError(dist)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(987654321)
