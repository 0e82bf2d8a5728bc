"""Acceptance criteria.

Each test prints one PASS/FAIL line (echoed again in the terminal summary).
The heavy input sweeps run once per predicate in a module fixture: at least
10**6 rows per built-in predicate drawn from five adversarial families
(uniform, near-degenerate, 2**-1000-scale, 2**+800-scale, exact grid),
processed in chunks against the exact integer oracle.
"""

import math
import time

import numpy as np
import pytest

from conftest import record_acceptance, make_inputs
from robustpred.delaunay import (
    audit_empty_circumcircle,
    delaunay,
    expected_triangle_count,
)
from robustpred.errorbound import (
    MagSum,
    derive_filter_bounds,
    staticize,
)
from robustpred.expr import eval_naive
from robustpred.filters import TranslationFilter, UNCERTAIN
from robustpred.fpn import BINARY64, oracle_sign
from robustpred.harness import (
    CONSISTENCY_POINTS,
    OVERFLOW_TRIPLE,
    UNDERFLOW_TRIPLE,
    bench,
    classify_neighborhood,
    point_in_triangle,
    torture_report,
)
from robustpred.kernels.batch import ExprKernels, PipelineBatch, eval_magnitude_arrays
from robustpred.pointgen import grid_points, uniform_points
from robustpred.predicates import BUILTIN_NAMES, builtin_expr, default_pipeline

EPS = 2.0**-53

# rows per distribution; every predicate sees at least 10**6 inputs total
PLAN = {
    "orient2d": dict(uniform=300_000, near=200_000, tiny=150_000, huge=150_000, grid=200_000),
    "incircle2d": dict(uniform=300_000, near=200_000, tiny=150_000, huge=150_000, grid=200_000),
    "orient3d": dict(uniform=350_000, near=150_000, tiny=150_000, huge=150_000, grid=200_000),
    "power_side_3d": dict(uniform=450_000, near=60_000, tiny=150_000, huge=150_000, grid=190_000),
}
CHUNK = 50_000

# exact-arithmetic (per-row) sample sizes: forced exact-stage validity and
# the I2.2/I3 dyadic comparisons
FORCED_EXACT_ROWS = {"orient2d": 20_000, "incircle2d": 12_000, "orient3d": 6_000,
                     "power_side_3d": 3_000}
I22_ROWS = {"orient2d": 10_000, "incircle2d": 5_000, "orient3d": 3_000,
            "power_side_3d": 1_500}


def _seed(name: str, dist: str, chunk: int) -> int:
    return (hash((name, dist)) % 1_000_000) * 64 + chunk


class SweepResult:
    def __init__(self):
        self.rows = 0
        self.stage_violations = {}
        self.stage_certifications = {}
        self.mono_violations = 0
        self.mono_checked = 0
        self.cascade_safe_violations = 0
        self.cascade_fast_violations = 0
        self.cascade_fast_rows = 0
        self.i21_checks = 0
        self.i21_violations = 0
        self.i22_checks = 0
        self.i22_violations = 0
        self.i3_checks = 0
        self.i3_violations = 0
        self.forced_exact_checks = 0
        self.forced_exact_violations = 0
        self.safe_stats = None
        self.seconds = 0.0

    def add_stage(self, label, certified, violations):
        self.stage_certifications[label] = (
            self.stage_certifications.get(label, 0) + int(certified)
        )
        self.stage_violations[label] = (
            self.stage_violations.get(label, 0) + int(violations)
        )


def _static_bounds(kern, xs, ufp):
    box = [(float(xs[:, k].min()), float(xs[:, k].max())) for k in range(xs.shape[1])]
    sp = kern.split(ufp)
    e_static = sp.constants.a4 * staticize(MagSum(sp.m1, sp.m2), box)
    if ufp:
        e_static = e_static + BINARY64.u_subnormal
    return e_static


def _run_sweep(name: str) -> SweepResult:
    t0 = time.perf_counter()
    expr = builtin_expr(name)
    kern = ExprKernels(expr)
    pipe_safe = PipelineBatch(expr, "safe", name)
    pipe_fast = PipelineBatch(expr, "fast", name)
    bounds = {ufp: kern.node_bounds(ufp) for ufp in (False, True)}
    out = SweepResult()

    for dist, total in PLAN[name].items():
        done = 0
        chunk_idx = 0
        while done < total:
            n = min(CHUNK, total - done)
            xs = np.ascontiguousarray(make_inputs(name, dist, n, _seed(name, dist, chunk_idx)))
            oracle = kern.oracle_batch(xs)
            naive = kern.naive_batch(xs)
            uf = kern.underflow_batch(xs, False)

            res_safe = kern.semistatic_batch(xs, True)
            certain = res_safe != UNCERTAIN
            out.add_stage(
                "semi-static-ufp", certain.sum(), (res_safe[certain] != oracle[certain]).sum()
            )
            res_fast = kern.semistatic_batch(xs, False)
            scope = (res_fast != UNCERTAIN) & ~uf
            out.add_stage(
                "semi-static", scope.sum(), (res_fast[scope] != oracle[scope]).sum()
            )
            out.mono_checked += int(certain.sum())
            out.mono_violations += int((res_fast[certain] != res_safe[certain]).sum())

            rz = kern.zero_batch(xs)
            zc = rz != UNCERTAIN
            out.add_stage("zero", zc.sum(), (oracle[zc] != 0).sum())

            ri = kern.interval_batch(xs)
            ic = ri != UNCERTAIN
            out.add_stage("interval", ic.sum(), (ri[ic] != oracle[ic]).sum())

            e_static_ufp = _static_bounds(kern, xs, True)
            cs = np.abs(naive) > e_static_ufp
            out.add_stage("static-ufp", cs.sum(), (_signs(naive)[cs] != oracle[cs]).sum())
            e_static = _static_bounds(kern, xs, False)
            cs = (np.abs(naive) > e_static) & ~uf
            out.add_stage("static", cs.sum(), (_signs(naive)[cs] != oracle[cs]).sum())

            signs, _, stats = pipe_safe.run(xs)
            out.cascade_safe_violations += int((signs != oracle).sum())
            if out.safe_stats is None:
                out.safe_stats = stats
            else:
                out.safe_stats.merge(stats)

            if chunk_idx == 0:
                fsigns, _, _ = pipe_fast.run(xs)
                ok = ~uf
                out.cascade_fast_rows += int(ok.sum())
                out.cascade_fast_violations += int((fsigns[ok] != oracle[ok]).sum())

            # I2.1 for both maps over every subexpression
            node_arrays = kern.node_values_batch(xs)
            for ufp in (False, True):
                memo = {}
                for node, b in bounds[ufp]:
                    q = node_arrays[node]
                    m = eval_magnitude_arrays(b.m, node_arrays, memo)
                    m = np.broadcast_to(np.asarray(m, dtype=np.float64), q.shape)
                    ok = (np.abs(q) <= m) | np.isinf(m) | np.isnan(m)
                    out.i21_checks += ok.size
                    out.i21_violations += int((~ok).sum())

            out.rows += n
            done += n
            chunk_idx += 1

    _forced_exact(name, kern, out)
    _dyadic_invariants(name, kern, bounds, out)
    out.seconds = time.perf_counter() - t0
    return out


def _signs(values):
    return (values > 0).astype(np.int8) - (values < 0).astype(np.int8)


def _forced_exact(name, kern, out):
    """Translation and expansion stages on every row of a dense subsample."""
    from robustpred.expansion import try_exact_sign

    expr = kern.expr
    trans = TranslationFilter(expr)
    n = FORCED_EXACT_ROWS[name]
    xs = np.vstack(
        [
            make_inputs(name, "near", n // 2, 555_001),
            make_inputs(name, "grid", n - n // 2 - n // 4, 555_002),
            make_inputs(name, "tiny", n // 8, 555_003),
            make_inputs(name, "huge", n - n // 2 - (n - n // 2 - n // 4) - n // 8, 555_004),
        ]
    )
    oracle = kern.oracle_batch(xs)
    for i, row in enumerate(xs):
        r = [float(v) for v in row]
        s = trans.apply(r)
        out.forced_exact_checks += 1
        if s != UNCERTAIN and s != oracle[i]:
            out.forced_exact_violations += 1
        s = try_exact_sign(expr, r)
        if s is not None and s != oracle[i]:
            out.forced_exact_violations += 1


def _dyadic_invariants(name, kern, bounds, out):
    """I2.2 and I3 with exact dyadic arithmetic on a mixed subsample."""
    from robustpred.fpn import Dyadic

    n = I22_ROWS[name]
    xs = np.vstack(
        [
            make_inputs(name, "uniform", n // 4, 777_001),
            make_inputs(name, "near", n // 4, 777_002),
            make_inputs(name, "tiny", n // 4, 777_003),
            make_inputs(name, "grid", n - 3 * (n // 4), 777_004),
        ]
    )
    uf = kern.underflow_batch(xs, False)
    node_arrays = kern.node_values_batch(xs)
    nodes = kern.unique_nodes()
    exact_fn = kern.oracle_nodes_fn(nodes)
    u_n = BINARY64.u_normal
    mags = {}
    for ufp in (False, True):
        memo = {}
        mags[ufp] = {
            node: np.broadcast_to(
                np.asarray(eval_magnitude_arrays(b.m, node_arrays, memo), dtype=np.float64),
                (len(xs),),
            )
            for node, b in bounds[ufp]
        }
    a_eval = {
        ufp: {node: b.a.eval_dyadic(BINARY64) for node, b in bounds[ufp]}
        for ufp in (False, True)
    }
    for i, row in enumerate(xs):
        flat = exact_fn(*[float(v) for v in row])
        for j, node in enumerate(nodes):
            man, ex = flat[2 * j], flat[2 * j + 1]
            exact = Dyadic(1 if man > 0 else (-1 if man < 0 else 0), abs(man), ex)
            approx = float(node_arrays[node][i])
            for ufp in (False, True):
                if not ufp and uf[i]:
                    continue  # outside the plain map's validity domain
                m = float(mags[ufp][node][i])
                if math.isnan(m) or math.isinf(m):
                    continue  # invariant I1 case
                if not math.isfinite(approx):
                    out.i22_violations += 1  # finite m must bound the value
                    continue
                lhs = abs(Dyadic.from_float(approx) - exact)
                rhs = a_eval[ufp][node] * Dyadic.from_float(m)
                out.i22_checks += 1
                if (lhs - rhs).sign > 0:
                    out.i22_violations += 1
                if ufp:
                    out.i3_checks += 1
                    exact_match = (Dyadic.from_float(approx) - exact).sign == 0
                    if not (exact_match or m >= u_n):
                        out.i3_violations += 1


@pytest.fixture(scope="module")
def sweeps():
    return {name: _run_sweep(name) for name in BUILTIN_NAMES}


class TestCriterion1Validity:
    def test_filter_validity_suite(self, sweeps):
        lines = []
        total_rows = 0
        violations = 0
        runtime = 0.0
        for name, r in sweeps.items():
            assert r.rows >= 1_000_000, name
            total_rows += r.rows
            violations += sum(r.stage_violations.values())
            violations += r.cascade_safe_violations
            violations += r.cascade_fast_violations
            violations += r.forced_exact_violations
            runtime += r.seconds
            lines.append(
                f"{name}: rows={r.rows} certified="
                + ",".join(f"{k}:{v}" for k, v in r.stage_certifications.items())
            )
        ok = violations == 0 and runtime < 600.0
        record_acceptance(
            f"ACCEPTANCE 1 {'PASS' if ok else 'FAIL'} - filter validity: "
            f"{total_rows} rows across 4 predicates x 5 distributions, "
            f"{violations} violations, {runtime:.0f}s"
        )
        assert violations == 0
        assert runtime < 600.0


class TestCriterion2Torture:
    def test_paper_torture_vectors(self):
        expr = builtin_expr("orient2d")
        pred = default_pipeline("orient2d", "safe")
        naive_u = eval_naive(expr, UNDERFLOW_TRIPLE)
        naive_o = eval_naive(expr, OVERFLOW_TRIPLE)
        staged_u = pred.apply(*UNDERFLOW_TRIPLE)
        staged_o = pred.apply(*OVERFLOW_TRIPLE)
        oracle_u = oracle_sign(expr, UNDERFLOW_TRIPLE)
        ok = (
            naive_u == 0.0
            and math.isnan(naive_o)
            and staged_u == 1 == oracle_u
            and staged_o == 0
        )
        record_acceptance(
            f"ACCEPTANCE 2 {'PASS' if ok else 'FAIL'} - torture vectors: "
            f"naive underflow={naive_u!r} overflow={naive_o!r}; "
            f"staged {staged_u:+d}/{staged_o:+d}"
        )
        assert ok


class TestCriterion3Consistency:
    def test_consistency_demo(self):
        expr = builtin_expr("orient2d")
        pred = default_pipeline("orient2d", "safe")
        pts = CONSISTENCY_POINTS
        triples = [
            (pts["a"], pts["b"], pts["e"]),
            (pts["b"], pts["d"], pts["e"]),
            (pts["a"], pts["b"], pts["d"]),
        ]
        naive = []
        staged = []
        for t in triples:
            coords = (*t[0], *t[1], *t[2])
            v = eval_naive(expr, coords)
            naive.append((v > 0) - (v < 0))
            s = pred.apply(*coords)
            assert s == oracle_sign(expr, coords)
            staged.append(s)
        naive_contradiction = naive[0] == 0 and naive[1] == 0 and naive[2] != 0
        staged_contradiction = staged[0] == 0 and staged[1] == 0 and staged[2] != 0
        ok = naive_contradiction and not staged_contradiction
        record_acceptance(
            f"ACCEPTANCE 3 {'PASS' if ok else 'FAIL'} - consistency: "
            f"naive={tuple(naive)} contradictory, staged={tuple(staged)} oracle-equal"
        )
        assert ok


class TestCriterion4Constants:
    def test_derived_constants(self):
        from robustpred.errorbound import phi

        p = phi(BINARY64)
        b = derive_filter_bounds(builtin_expr("orient2d"), ufp=True)
        a4 = b.constants.a4
        fpg = 8.88720573725927e-16
        shewchuk = (3.0 + 16.0 * EPS) * EPS
        ok = (
            p == 94906264
            and b.a_max.coeffs == (3, -94906250)
            and a4 < fpg
            and 2.9 * EPS < a4 < 3.1 * EPS
        )
        record_acceptance(
            f"ACCEPTANCE 4 {'PASS' if ok else 'FAIL'} - constants: phi={p}, "
            f"a=3eps-94906250eps^2, a4={a4!r} < FPG {fpg!r}; "
            f"classic stage-A constant (3eps+16eps^2)={shewchuk!r} for comparison"
        )
        assert ok


class TestCriterion5Invariants:
    def test_invariant_suites(self, sweeps):
        i21c = sum(r.i21_checks for r in sweeps.values())
        i21v = sum(r.i21_violations for r in sweeps.values())
        i22c = sum(r.i22_checks for r in sweeps.values())
        i22v = sum(r.i22_violations for r in sweeps.values())
        i3c = sum(r.i3_checks for r in sweeps.values())
        i3v = sum(r.i3_violations for r in sweeps.values())
        ok = i21v == 0 and i22v == 0 and i3v == 0
        record_acceptance(
            f"ACCEPTANCE 5 {'PASS' if ok else 'FAIL'} - invariants: "
            f"I2.1 {i21c} checks/{i21v} violations, "
            f"I2.2 {i22c}/{i22v}, I3 {i3c}/{i3v} "
            f"(plain map scoped by the underflow detector)"
        )
        assert ok


class TestCriterion6Monotonicity:
    def test_protected_implies_plain(self, sweeps):
        checked = sum(r.mono_checked for r in sweeps.values())
        viol = sum(r.mono_violations for r in sweeps.values())
        ok = viol == 0 and checked > 1_000_000
        record_acceptance(
            f"ACCEPTANCE 6 {'PASS' if ok else 'FAIL'} - monotonicity: "
            f"{checked} protected certifications, {viol} not matched by the plain filter"
        )
        assert ok


class TestCriterion7PrecisionMap:
    def test_precision_map_pixelwise(self):
        w, h = 1350, 675
        maps = {
            mode: classify_neighborhood(
                mode, w, h, (20.1, 20.1), (18.9, 18.9), (3.5, 3.5)
            )
            for mode in ("naive", "semistatic", "interval", "exact")
        }
        exact = maps["exact"]
        assert not (exact == UNCERTAIN).any()
        naive_wrong_green = int(((maps["naive"] == 0) & (exact != 0)).sum())
        ss = maps["semistatic"]
        iv = maps["interval"]
        ss_certain = ss != UNCERTAIN
        iv_certain = iv != UNCERTAIN
        ss_mismatch = int((ss[ss_certain] != exact[ss_certain]).sum())
        iv_mismatch = int((iv[iv_certain] != exact[iv_certain]).sum())
        yellow_ss = int((~ss_certain).sum())
        yellow_iv = int((~iv_certain).sum())
        ok = (
            naive_wrong_green >= 1
            and ss_mismatch == 0
            and iv_mismatch == 0
            and yellow_iv <= yellow_ss
        )
        record_acceptance(
            f"ACCEPTANCE 7 {'PASS' if ok else 'FAIL'} - precision map {w}x{h}: "
            f"naive wrong-green={naive_wrong_green}, semistatic/interval mismatches="
            f"{ss_mismatch}/{iv_mismatch}, yellow interval {yellow_iv} <= "
            f"semistatic {yellow_ss}"
        )
        assert ok


@pytest.fixture(scope="module")
def delaunay_runs():
    uniform = delaunay(uniform_points(2_000, 424242), profile="safe", seed=1)
    grid_pts = grid_points(50, 1.0, 424242)
    grid_safe = delaunay(grid_pts, profile="safe", seed=2)
    grid_fast = delaunay(grid_pts, profile="fast", seed=2)
    return uniform, grid_safe, grid_fast


class TestCriterion8Delaunay:
    def test_triangulation_audit(self, delaunay_runs):
        uniform, grid_safe, _ = delaunay_runs
        results = []
        ok = True
        for label, r in (("uniform-2000", uniform), ("grid-50x50", grid_safe)):
            expected = expected_triangle_count(len(r.points), r.hull_size)
            bad = audit_empty_circumcircle(r.points, r.triangles)
            results.append(
                f"{label}: tris={r.triangle_count} (expected {expected}), "
                f"hull={r.hull_size}, circumcircle violations={bad}"
            )
            ok &= bad == 0 and r.triangle_count == expected
        record_acceptance(
            f"ACCEPTANCE 8 {'PASS' if ok else 'FAIL'} - delaunay audit: "
            + "; ".join(results)
        )
        assert ok


class TestCriterion9Table2Structure:
    def test_grid_failure_structure(self, delaunay_runs):
        _, grid_safe, grid_fast = delaunay_runs
        parts = []
        ok = True
        zero_cert_total = 0
        ufp_fail_total = 0
        for safe_st, fast_st in (
            (grid_safe.orient_stats, grid_fast.orient_stats),
            (grid_safe.incircle_stats, grid_fast.incircle_stats),
        ):
            ufp_fail = safe_st.failures(0)
            plain_fail = fast_st.failures(0)
            zero_cert = safe_st.certifications[1]
            ok &= ufp_fail >= plain_fail
            zero_cert_total += zero_cert
            ufp_fail_total += ufp_fail
            parts.append(
                f"{safe_st.predicate}: ufp-failures={ufp_fail} >= plain={plain_fail}, "
                f"zero-certified={zero_cert}"
            )
        ratio = zero_cert_total / max(ufp_fail_total, 1)
        ok &= ratio >= 0.5
        record_acceptance(
            f"ACCEPTANCE 9 {'PASS' if ok else 'FAIL'} - grid failure structure: "
            + "; ".join(parts)
            + f"; zero filter certified {ratio:.1%} of protected stage-1 failures"
        )
        assert ok


class TestCriterion10Performance:
    def test_staged_vs_exact_timing(self):
        results = bench("orient2d", 1_000_000, profile="fast", dist="uniform")
        # assert on the active backend; the stated bound is 0.2 with a 2x
        # cross-machine tolerance
        from robustpred.kernels import active_backend

        be = results["backends"][active_backend()]
        ratio = be["staged_over_dyadic"]
        rate = be["stage1_rate"]
        ok = ratio <= 0.4 and rate >= 0.99
        others = ", ".join(
            f"{name}: ratio={r['staged_over_dyadic']:.4f}"
            for name, r in results["backends"].items()
        )
        record_acceptance(
            f"ACCEPTANCE 10 {'PASS' if ok else 'FAIL'} - performance: "
            f"staged/dyadic={ratio:.4f} (target 0.2, tolerance 2x), "
            f"stage-1 rate={rate:.4f} (>=0.99); per-backend: {others}"
        )
        assert ok
