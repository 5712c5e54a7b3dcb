import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noiseless_sgd import rate_lab as rl
from noiseless_sgd.rng import stream
from noiseless_sgd.sgd_engine import TraceRecord


def test_log_schedule_examples():
    assert rl.log_schedule(100, 1).points == (1, 10, 100)
    assert rl.log_schedule(10, 10).points == tuple(range(1, 11))
    with pytest.raises(ValueError):
        rl.log_schedule(9, 1)
    with pytest.raises(ValueError):
        rl.log_schedule(100, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(10, 10**7), st.integers(1, 50))
def test_log_schedule_strictly_increasing(iters, per_decade):
    pts = rl.log_schedule(iters, per_decade).points
    assert pts[0] == 1 and pts[-1] == iters
    assert all(b > a for a, b in zip(pts, pts[1:]))


def test_schedule_validation():
    with pytest.raises(ValueError):
        rl.CheckpointSchedule((3, 3))
    with pytest.raises(ValueError):
        rl.CheckpointSchedule((-1, 3))
    with pytest.raises(ValueError):
        rl.CheckpointSchedule((1, 3)).check(2)
    assert rl.CheckpointSchedule((1, 3)).with_zero().points == (0, 1, 3)
    assert rl.linear_schedule(10, 4).points == (0, 4, 8, 10)


def _trace(vals, steps=None):
    steps = steps or list(range(len(vals)))
    return [TraceRecord(s, v, 2 * v, v, {0.5: 3 * v}) for s, v in zip(steps, vals)]


def test_mc_average_examples():
    one = rl.mc_average([_trace([1.0, 2.0])])
    np.testing.assert_array_equal(one.mean("recon_sq"), [1.0, 2.0])
    np.testing.assert_array_equal(one.stderr("recon_sq"), [0.0, 0.0])
    two = rl.mc_average([_trace([1.0, 2.0]), _trace([3.0, 5.0])])
    np.testing.assert_allclose(two.mean("risk"), [4.0, 7.0])
    np.testing.assert_allclose(two.mean("phi_0.5"), [6.0, 10.5])
    with pytest.raises(ValueError):
        rl.mc_average([_trace([1.0, 2.0]), _trace([1.0, 2.0], [0, 2])])
    with pytest.raises(ValueError):
        rl.mc_average([])


def test_mc_average_clt_stderr():
    z = stream(1, 0).standard_normal((1000, 3))
    mean = rl.mc_average([_trace(list(row)) for row in z])
    np.testing.assert_allclose(mean.stderr("recon_sq"), 1 / math.sqrt(1000), rtol=0.2)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.floats(0, 100), min_size=3, max_size=3), min_size=2, max_size=8), st.randoms())
def test_mc_average_permutation_invariant(rows, rnd):
    traces = [_trace(r) for r in rows]
    a = rl.mc_average(traces)
    rnd.shuffle(traces)
    b = rl.mc_average(traces)
    np.testing.assert_allclose(a.mean("risk"), b.mean("risk"), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a.stderr("risk"), b.stderr("risk"), rtol=1e-9, atol=1e-12)


def test_fit_exponent_examples():
    n = np.arange(1, 1001, dtype=float)
    fit = rl.fit_exponent(list(zip(n, 3 * n**-0.5)))
    assert fit.exponent == pytest.approx(0.5, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)
    assert fit.window[0] == 32.0 and fit.window[1] == 1000
    assert rl.fit_exponent(list(zip(n, np.full_like(n, 2.0)))).exponent == pytest.approx(0.0, abs=1e-12)
    noise = 1 + 0.01 * stream(2, 0).standard_normal(n.size)
    assert rl.fit_exponent(list(zip(n, n**-1.6 * noise))).exponent == pytest.approx(1.6, abs=0.05)


def test_fit_exponent_errors_and_bounds():
    n = np.arange(1, 101, dtype=float)
    v = n**-1.0
    v[-1] = 0.0
    with pytest.raises(ValueError, match="non-positive"):
        rl.fit_exponent(list(zip(n, v)))
    with pytest.raises(ValueError):
        rl.fit_exponent([(1, 1.0), (10, 0.1)])
    fit = rl.fit_exponent(list(zip(n, n**-2.0)), bounds=(5, 20))
    assert fit.window == (5.0, 20.0) and fit.points == 16
    # the step-0 point has no logarithm and is ignored
    assert rl.fit_exponent([(0, 1.0)] + list(zip(n, n**-2.0))).exponent == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 3), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_fit_exponent_exact_and_scale_invariant(p, c, k):
    n = np.array(rl.log_schedule(10**5, 10).points, dtype=float)
    a = rl.fit_exponent(list(zip(n, c * n**-p)))
    b = rl.fit_exponent(list(zip(n, k * c * n**-p)))
    assert abs(a.exponent - p) < 1e-10 and abs(1 - a.r_squared) < 1e-10
    assert abs(a.exponent - b.exponent) < 1e-10
    assert b.intercept - a.intercept == pytest.approx(math.log(k), abs=1e-9)


def test_gaussian_predicted_exponent_examples():
    assert rl.gaussian_predicted_exponent(1.4, 1.2) == pytest.approx(0.2857142857)
    assert rl.gaussian_predicted_exponent(3.5, 1.5) == pytest.approx(0.5714285714)
    assert rl.gaussian_predicted_exponent(100, 1.0) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        rl.gaussian_predicted_exponent(1.0, 1.0)
    with pytest.raises(ValueError):
        rl.gaussian_predicted_exponent(2.0, 0.4)


def _fit(e):
    return rl.FitResult(e, 0.0, 1.0, (1.0, 10.0), 5)


def test_compare_examples():
    assert rl.compare(_fit(0.60), 0.6, 0.1).verdict == "pass"
    assert rl.compare(_fit(0.9), 0.6, 0.1).verdict == "fail"
    assert rl.compare(_fit(0.7), 0.6, 0.1).verdict == "pass"
    assert rl.compare(_fit(0.5), 0.6, 0.1).verdict == "pass"
    with pytest.raises(ValueError):
        rl.compare(_fit(0.5), 0.6, 0.0)
    rep = rl.compare(_fit(0.62), 0.6, 0.1, "recon_sq")
    data = json.loads(json.dumps(rep.to_json()))
    assert set(data) == {"quantity", "predicted", "fitted_exponent", "r_squared", "window", "tolerance", "verdict"}


@settings(max_examples=60, deadline=None)
@given(st.floats(-2, 2), st.floats(0.01, 1), st.floats(0, 2))
def test_compare_symmetric_in_sign(pred, tol, dev):
    up = rl.compare(_fit(pred + dev), pred, tol).verdict
    down = rl.compare(_fit(pred - dev), pred, tol).verdict
    assert up == down
