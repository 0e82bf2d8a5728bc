"""Kernel backends: numba and numpy must agree bit for bit with the scalar
reference, and none of them may contract operations into fused multiply-adds."""

import math

import numpy as np
import pytest

from conftest import DISTRIBUTIONS, make_inputs
from robustpred.expr import eval_naive
from robustpred.fpn import oracle_sign
from robustpred.kernels import HAS_NUMBA, active_backend, set_backend
from robustpred.kernels.batch import ExprKernels, PipelineBatch
from robustpred.kernels.codegen import UNCERTAIN
from robustpred.predicates import BUILTIN_NAMES, builtin_expr, default_pipeline

pytestmark = pytest.mark.skipif(not HAS_NUMBA, reason="numba unavailable")


@pytest.fixture(autouse=True)
def restore_backend():
    previous = active_backend()
    yield
    set_backend(previous)


def _mixed_rows(name: str, n_per: int = 400) -> np.ndarray:
    parts = [make_inputs(name, dist, n_per, 1234) for dist in DISTRIBUTIONS]
    return np.ascontiguousarray(np.vstack(parts))


class TestBackendEquivalence:
    @pytest.mark.parametrize("name", BUILTIN_NAMES)
    def test_all_kernels_bit_equal(self, name):
        kern = ExprKernels(builtin_expr(name))
        xs = _mixed_rows(name)
        results = {}
        for be in ("numpy", "numba"):
            set_backend(be)
            results[be] = (
                kern.naive_batch(xs),
                kern.semistatic_batch(xs, True),
                kern.semistatic_batch(xs, False),
                kern.zero_batch(xs),
                kern.interval_batch(xs),
            )
        a, b = results["numpy"], results["numba"]
        np.testing.assert_array_equal(a[0][np.isfinite(a[0])], b[0][np.isfinite(b[0])])
        assert np.array_equal(np.isnan(a[0]), np.isnan(b[0]))
        for k in range(1, 5):
            np.testing.assert_array_equal(a[k], b[k])

    def test_batch_matches_scalar_reference(self):
        name = "incircle2d"
        kern = ExprKernels(builtin_expr(name))
        xs = _mixed_rows(name, 150)
        ss_scalar = kern.scalar_semistatic(True)
        zero_scalar = kern.scalar_zero()
        iv_scalar = kern.scalar_interval()
        for be in ("numpy", "numba"):
            set_backend(be)
            ss = kern.semistatic_batch(xs, True)
            zf = kern.zero_batch(xs)
            iv = kern.interval_batch(xs)
            for i, row in enumerate(xs):
                r = [float(v) for v in row]
                assert ss[i] == ss_scalar(*r)
                assert zf[i] == zero_scalar(*r)
                assert iv[i] == iv_scalar(*r)

    def test_filters_tolerate_non_finite_rows(self):
        kern = ExprKernels(builtin_expr("orient2d"))
        xs = np.array(
            [
                [math.nan, 1.0, 2.0, 3.0, 4.0, 5.0],
                [math.inf, 1.0, 2.0, 3.0, 4.0, 5.0],
                [-math.inf, math.inf, 2.0, 3.0, 4.0, 5.0],
            ]
        )
        for be in ("numpy", "numba"):
            set_backend(be)
            assert (kern.semistatic_batch(xs, True) == UNCERTAIN).all()
            assert (kern.semistatic_batch(xs, False) == UNCERTAIN).all()
            assert (kern.interval_batch(xs) == UNCERTAIN).all()
            assert (kern.zero_batch(xs) == UNCERTAIN).all()


class TestNoContraction:
    # bit-exactness build contract: no fused multiply-add, no reassociation;
    # the consistency vectors detect contraction because a fused orient2d
    # produces a nonzero where strict per-operation rounding produces zero

    def test_naive_matches_interpreter_on_torture_vectors(self):
        e = builtin_expr("orient2d")
        rows = [
            (-0.01, -0.59, 0.01, 0.57, 0.07, 4.05),
            (0.01, 0.57, 0.15, 8.69, 0.07, 4.05),
            (-0.01, -0.59, 0.01, 0.57, 0.15, 8.69),
            (-0.01, -0.59, 0.01, 0.57, 0.0, -0.01),
            (2.0**-801, 2.0**-801, 2.0**-800, 2.0**-800, 2.0**-801, 2.0**-800),
        ]
        xs = np.asarray(rows)
        expected = [eval_naive(e, r) for r in rows]
        kern = ExprKernels(e)
        for be in ("numpy", "numba"):
            set_backend(be)
            got = kern.naive_batch(xs)
            for i, want in enumerate(expected):
                assert got[i] == want, (be, i)

    def test_naive_matches_interpreter_random(self, rng):
        e = builtin_expr("power_side_3d")
        xs = rng.random((2_000, 20)) * 2.0 - 1.0
        kern = ExprKernels(e)
        for be in ("numpy", "numba"):
            set_backend(be)
            got = kern.naive_batch(xs)
            for i in range(0, len(xs), 97):
                assert got[i] == eval_naive(e, xs[i])


class TestOracleKernel:
    @pytest.mark.parametrize("name", BUILTIN_NAMES)
    def test_generated_oracle_matches_tree_walk(self, name):
        e = builtin_expr(name)
        kern = ExprKernels(e)
        xs = _mixed_rows(name, 100)
        batch = kern.oracle_batch(xs)
        for i, row in enumerate(xs):
            assert batch[i] == oracle_sign(e, row)

    def test_scalar_oracle_equals_batch(self):
        e = builtin_expr("orient2d")
        kern = ExprKernels(e)
        xs = _mixed_rows("orient2d", 200)
        batch = kern.oracle_batch(xs)
        scalar = kern.scalar_oracle()
        for i, row in enumerate(xs):
            assert batch[i] == scalar(*row)


class TestPipelineBatch:
    @pytest.mark.parametrize("profile", ["fast", "safe"])
    def test_matches_per_call_staged_predicate(self, profile):
        name = "incircle2d"
        e = builtin_expr(name)
        pred = default_pipeline(name, profile)
        pipe = PipelineBatch(e, profile, name)
        xs = np.vstack(
            [make_inputs(name, d, 250, 777) for d in ("uniform", "near", "grid")]
        )
        signs, stages, stats = pipe.run(xs)
        stats.check_conservation()
        for i, row in enumerate(xs):
            s, k = pred.apply_with_stage(*[float(v) for v in row])
            assert signs[i] == s
            assert stages[i] == k

    def test_stats_cascade_identity(self):
        pipe = PipelineBatch(builtin_expr("orient2d"), "safe", "orient2d")
        xs = _mixed_rows("orient2d", 300)
        _, _, stats = pipe.run(xs)
        stats.check_conservation()
        assert stats.total_calls() == len(xs)
        assert sum(stats.certifications) == len(xs)


class TestUnderflowDetector:
    def test_flags_known_underflow(self):
        kern = ExprKernels(builtin_expr("orient2d"))
        f = kern.scalar_underflow(False)
        assert f(2.0**-801, 2.0**-801, 2.0**-800, 2.0**-800, 2.0**-801, 2.0**-800)
        assert not f(0.0, 0.0, 1.0, 0.0, 0.0, 1.0)

    def test_batch_matches_scalar(self):
        kern = ExprKernels(builtin_expr("orient2d"))
        f = kern.scalar_underflow(False)
        xs = np.vstack(
            [make_inputs("orient2d", d, 300, 888) for d in ("uniform", "tiny")]
        )
        flags = kern.underflow_batch(xs, False)
        for i, row in enumerate(xs):
            assert bool(flags[i]) == bool(f(*[float(v) for v in row]))

    def test_tiny_scale_is_mostly_flagged(self):
        kern = ExprKernels(builtin_expr("orient2d"))
        xs = make_inputs("orient2d", "tiny", 2_000, 999)
        flags = kern.underflow_batch(xs, False)
        assert flags.mean() > 0.9
