import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_window
from tfot.orls import (CollinearColumnError, fit_fixed_order, fit_order_limited, gamma_upper_bound, lambda_bounds,
                       order_limited, orls_extend, orls_init, prop2_interval)
from tfot.wls import FitWindow, build_system, data_fit_error, fit_ls


def test_lambda_bounds_arithmetic():
    assert prop2_interval(8.0, 10) == (1.0, 8.0)


def test_lambda_bounds_noiseless_line_is_degenerate():
    t = np.arange(1.0, 11.0)
    lo, hi = lambda_bounds(FitWindow(t, 2 * t + 1, 1.0))
    assert lo == pytest.approx(0.0, abs=1e-18) and hi == pytest.approx(0.0, abs=1e-18)


def test_lambda_bounds_rejects_short_window():
    with pytest.raises(ValueError):
        lambda_bounds(FitWindow([0.0, 1.0], [0.0, 1.0], 1.0))


def test_gamma_upper_bound_examples():
    assert gamma_upper_bound(8.0, 2.0) == 5.0
    assert gamma_upper_bound(0.0, 1.0) == 1.0
    with pytest.raises(ValueError):
        gamma_upper_bound(1.0, 0.0)


def test_extend_line_zero_to_one():
    t = np.arange(0.0, 5.0)
    sys = build_system(FitWindow(t, 2 * t + 1, 1.0), 1)
    s0 = orls_init(sys.block(0), sys.y)
    s1 = orls_extend(s0, sys.block(1), sys.y)
    assert s1.D == pytest.approx(0.0, abs=1e-20)
    np.testing.assert_allclose(s1.C_hat, [[1.0], [2.0]], atol=1e-12)


def test_extend_rejects_collinear_column():
    t = np.arange(0.0, 5.0)
    sys = build_system(FitWindow(t, t, 1.0), 1)
    s0 = orls_init(sys.block(0), sys.y)
    with pytest.raises(CollinearColumnError):
        orls_extend(s0, 3.0 * sys.block(0), sys.y)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["start", "centered"]))
def test_recursion_matches_direct_ls(seed, mapping):
    rng = np.random.default_rng(seed)
    w = random_window(rng, T=10, m=2, order_truth=3)
    # with the start mapping cond(Z^T Z) passes 1e10 from order 4 on ten samples
    top = 7 if mapping == "centered" else 3
    sys = build_system(w, top, mapping)
    state = orls_init(sys.block(0), sys.y)
    for g in range(1, top + 1):
        prev = state
        state = orls_extend(state, sys.block(g), sys.y)
        sub = sys.truncate(g)
        direct = fit_ls(sub)
        np.testing.assert_allclose(state.C_hat, direct, rtol=1e-8, atol=1e-8 * np.abs(direct).max())
        D = data_fit_error(direct, sub)
        assert state.D == pytest.approx(D, rel=1e-8, abs=1e-10)
        # error reduction equals the directly computed drop
        D_prev = data_fit_error(fit_ls(sys.truncate(g - 1)), sys.truncate(g - 1))
        assert prev.D - state.D == pytest.approx(D_prev - D, rel=1e-7, abs=1e-9)
        assert prev.D - state.D >= -1e-9
        G = sub.Z.T @ sub.Z
        np.testing.assert_allclose(state.B @ G, np.eye(G.shape[0]), atol=1e-8)


def test_noiseless_square_selects_order_two():
    t = np.arange(1.0, 11.0)
    res = fit_order_limited(FitWindow(t, t**2, 1.0), lam=0.5)
    assert res.order == 2
    assert res.data_error <= 1e-16 * np.sum(t**4)
    assert res.diagnostics["halted_by"] == "halting"


def test_constant_data_selects_order_zero():
    t = np.arange(1.0, 11.0)
    res = fit_order_limited(FitWindow(t, np.full(10, 3.5), 1.0), lam=0.1)
    assert res.order == 0
    np.testing.assert_allclose(res.coeffs, [[3.5]])


def test_invalid_lambda_rejected():
    t = np.arange(1.0, 11.0)
    with pytest.raises(ValueError):
        fit_order_limited(FitWindow(t, t, 1.0), lam=0.0)


def test_total_cost_identity_and_monotone_errors(rng):
    for _ in range(50):
        w = random_window(rng, order_truth=int(rng.integers(0, 5)))
        res = fit_order_limited(w, lam=float(rng.uniform(0.5, 20)))
        assert res.total_cost == pytest.approx(res.data_error + res.lam * (res.order + 1))
        errs = res.diagnostics["errors"]
        assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))


def test_order_bounds_on_random_windows(rng):
    """Order bound always holds; lambda inside the interval never reaches T - 1."""
    for _ in range(1000):
        w = random_window(rng, T=int(rng.integers(3, 11)), m=2, order_truth=int(rng.integers(0, 6)) % 3)
        lo, hi = lambda_bounds(w)
        if hi <= 0:
            continue
        lam = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        lam = min(max(lam, np.nextafter(lo, np.inf)), hi)
        res = fit_order_limited(w, lam=lam)
        assert res.order <= gamma_upper_bound(hi, lam) + 1e-12
        assert res.order < w.size - 1


def test_random_lambda_respects_order_bound(rng):
    for _ in range(200):
        w = random_window(rng, order_truth=int(rng.integers(0, 5)))
        lam = float(10 ** rng.uniform(-2, 2))
        res = fit_order_limited(w, lam=lam)
        assert res.order <= math.floor(gamma_upper_bound(res.diagnostics["D1"], lam))


def test_halts_at_previous_order():
    """The returned fit is the order before the first unprofitable extension."""
    t = np.arange(1.0, 11.0)
    y = 1 + 0.5 * t + 0.01 * t**3
    res = fit_order_limited(FitWindow(t, y, 1.0), lam=1e-3)
    errs = res.diagnostics["errors"]
    for g in range(res.order):
        assert errs[g] - errs[g + 1] > 1e-3
    if res.diagnostics["halted_by"] == "halting":
        assert errs[res.order] - errs[res.order + 1] <= 1e-3


def test_fixed_order_clamps_to_window():
    t = np.arange(1.0, 4.0)
    res = fit_fixed_order(FitWindow(t, t**2, 1.0), 5)
    assert res.order == 2 and res.data_error == pytest.approx(0.0, abs=1e-18)


def test_order_limited_geometric_default():
    rng = np.random.default_rng(3)
    w = random_window(rng)
    res = fit_order_limited(w)
    lo, hi = lambda_bounds(w)
    assert res.lam == pytest.approx(math.sqrt(lo * hi))
    sys = build_system(w, 8)
    again = order_limited(sys, res.lam, w.size)
    assert again.order == res.order
