"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

The lines are also collected and repeated in the pytest terminal summary.
The Monte-Carlo experiments take a few minutes on one core.
"""
import itertools
import math
import time

import numpy as np
import pytest

from conftest import random_system, random_window
from tfot.bench import ExperimentSpec, run_experiment
from tfot.l0 import NewtonParams, check_tau_stationary, regularized_cost, solve_l0
from tfot.metrics import MetricConfig, ospa, star_id, ta_star_id
from tfot.orls import orls_init, orls_extend
from tfot.poly import Polynomial
from tfot.scenario import load_scenario
from tfot.solvers import REFERENCE_SOLVERS
from tfot.wls import (FitWindow, build_system, data_fit_error, fit_ls, gradient, hessian,
                      smoothness_constants)

RESULTS: list[str] = []
RUNS = 50


def report(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    RESULTS.append(line)
    print(line)


def rel_err(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - b) / max(np.linalg.norm(b), 1e-300))


@pytest.fixture(scope="module")
def single_target():
    spec = ExperimentSpec(load_scenario("builtin:single_target"), list(REFERENCE_SOLVERS), runs=RUNS, seed=1000)
    return run_experiment(spec)


@pytest.fixture(scope="module")
def two_targets():
    spec = ExperimentSpec(load_scenario("builtin:two_targets"), list(REFERENCE_SOLVERS), runs=RUNS, seed=2000)
    return run_experiment(spec)


def test_c1_recursion_matches_direct_ls():
    rng = np.random.default_rng(101)
    worst = {"C": 0.0, "B": 0.0, "D": 0.0}
    start = time.perf_counter()
    for _ in range(1000):
        sys = build_system(random_window(rng, T=10, m=2, order_truth=3), 7, "centered")
        state = orls_init(sys.block(0), sys.y)
        for g in range(1, 8):
            state = orls_extend(state, sys.block(g), sys.y)
            sub = sys.truncate(g)
            direct = fit_ls(sub)
            worst["C"] = max(worst["C"], rel_err(state.C_hat, direct))
            worst["B"] = max(worst["B"], rel_err(state.B, np.linalg.inv(sub.Z.T @ sub.Z)))
            worst["D"] = max(worst["D"], abs(state.D - data_fit_error(direct, sub)) / data_fit_error(direct, sub))
    secs = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-8 and secs < 5.0
    report(1, ok, f"max rel err C {worst['C']:.1e}, B {worst['B']:.1e}, D {worst['D']:.1e}; {secs:.2f} s")
    assert ok


def enumerate_supports(sys, lam):
    n = sys.n_coeffs
    best_cost, best_theta = math.inf, None
    for k in range(n + 1):
        for S in itertools.combinations(range(n), k):
            theta = np.zeros(n)
            if S:
                theta[list(S)] = np.linalg.lstsq(sys.Z[:, S], sys.y, rcond=None)[0]
            c = regularized_cost(theta, sys, lam)
            if c < best_cost:
                best_cost, best_theta = c, theta
    return best_cost, best_theta


def test_c2_l0_global_optimality():
    rng = np.random.default_rng(202)
    t = np.arange(1.0, 11.0)
    matched = stationary = reachable = solved_reachable = 0
    start = time.perf_counter()
    for _ in range(200):
        gamma = int(rng.integers(0, 5))
        coeffs = rng.standard_normal(gamma + 1) * (rng.random(gamma + 1) < 0.6) * 3.0
        var = float(rng.uniform(0.2, 4.0))
        y = Polynomial(coeffs[:, None], 5.5, 4.5)(t)[:, 0] + math.sqrt(var) * rng.standard_normal(10)
        sys = build_system(FitWindow(t, y, var), gamma, "centered")
        _, ell = smoothness_constants(sys)
        tau = 1.0 / ell
        lam = float(rng.uniform(0.1, 3.0))
        res = solve_l0(sys, NewtonParams(lam=lam, tau=tau, tol=1e-6, max_iters=200))
        best, best_theta = enumerate_supports(sys, lam)
        match = abs(res.total_cost - best) <= 1e-6 * max(1.0, abs(best))
        g = res.diagnostics["stationarity_norm"]
        stat = bool(res.converged and g is not None and g <= 1e-6 and check_tau_stationary(res.coeffs, tau, lam, sys))
        # without a tau-stationary minimiser no returned point can satisfy both requirements
        reach = check_tau_stationary(best_theta, tau, lam, sys)
        matched += match
        stationary += stat
        reachable += reach
        solved_reachable += reach and match and stat
    secs = time.perf_counter() - start
    ok = matched >= 190 and stationary == 200 and secs < 60.0
    report(2, ok, f"cost match {matched}/200, stationary with ||G|| <= 1e-6 {stationary}/200 "
                  f"(oracle minimiser tau-stationary in {reachable}/200, all requirements met in "
                  f"{solved_reachable}/{reachable} of those); {secs:.1f} s")
    assert ok


def test_c3_order_bound_compliance(single_target, two_targets):
    v1 = sum(s["violations"] for s in single_target["summary"].values())
    v2 = sum(s["violations"] for s in two_targets["summary"].values())
    ok = v1 == 0 and v2 == 0
    report(3, ok, f"order-bound violations: single-target {v1}, two-target {v2}")
    assert ok


def test_c4_single_target_reproduction(single_target):
    r = {k: v["rmse"] for k, v in single_target["summary"].items()}
    checks = {
        "orls < fixed:2 < fixed:1": r["orls"] < r["fixed:2"] < r["fixed:1"],
        "l0 < fixed:2": r["l0"] < r["fixed:2"],
        "orls in [8, 17]": 8.0 <= r["orls"] <= 17.0,
        "fixed:1 in [22, 48]": 22.0 <= r["fixed:1"] <= 48.0,
        "fixed:2 in [10, 20]": 10.0 <= r["fixed:2"] <= 20.0,
    }
    failed = [k for k, v in checks.items() if not v]
    rmse = ", ".join(f"{k} {v:.2f}" for k, v in r.items())
    report(4, not failed, f"RMSE {rmse}" + (f"; failed: {'; '.join(failed)}" if failed else ""))
    assert not failed


def _order(values: dict, keys) -> list:
    return sorted(keys, key=lambda k: values[k])


def test_c5_two_target_reproduction(two_targets):
    o = {k: v["ospa"] for k, v in two_targets["summary"].items()}
    ta = {k: v["ta_star_id"] for k, v in two_targets["summary"].items()}
    keys = list(o)
    checks = {
        "{l0, orls} < l1": max(o["l0"], o["orls"]) < o["l1"],
        "l1 < fixed:2": o["l1"] < o["fixed:2"],
        "fixed:2 < fixed:1": o["fixed:2"] < o["fixed:1"],
        "adaptive OSPA <= 3": max(o["l0"], o["orls"]) <= 3.0,
        "fixed:1 OSPA >= 8": o["fixed:1"] >= 8.0,
        "TA-Star-ID order equals OSPA order": _order(ta, keys) == _order(o, keys),
    }
    failed = [k for k, v in checks.items() if not v]
    vals = ", ".join(f"{k} {o[k]:.3f}/{ta[k]:.3f}" for k in keys)
    report(5, not failed, f"OSPA/TA-Star-ID {vals}" + (f"; failed: {'; '.join(failed)}" if failed else ""))
    assert not failed


def test_c6_timing_ratio(single_target):
    t = single_target["timing"]
    ratio = t["l0"]["mean_step_seconds"] / t["orls"]["mean_step_seconds"]
    ok = ratio >= 10.0
    report(6, ok, f"l0/orls mean step time {t['l0']['mean_step_seconds'] * 1e3:.3f} ms / "
                  f"{t['orls']['mean_step_seconds'] * 1e3:.3f} ms = {ratio:.2f}x (need >= 10x)")
    assert ok


def test_c7_metrics():
    cfg = MetricConfig()
    const = lambda v: (lambda s: np.column_stack([np.asarray(s) * 0 + v, np.asarray(s) * 0]))
    exact = [
        ospa([[1.0, 2.0], [5.0, -1.0]], [[1.0, 2.0], [5.0, -1.0]]) == 0.0,
        ospa([[1.0, 1.0]], [], c=20) == 20.0,
        ospa([], []) == 0.0,
        star_id([const(0.0)], [const(0.0)], (0.0, 10.0), cfg) == 0.0,
        abs(star_id([const(3.0)], [const(0.0)], (0.0, 10.0), cfg) - 30.0) <= 1e-9,
        abs(star_id([const(25.0)], [const(0.0)], (0.0, 10.0), cfg) - 200.0) <= 1e-9,
        abs(ta_star_id(30.0, 10.0) - 3.0) <= 1e-12,
    ]
    rng = np.random.default_rng(707)
    pair_ok = 0
    for _ in range(1000):
        X = rng.uniform(-30, 30, (rng.integers(0, 6), 2))
        Y = rng.uniform(-30, 30, (rng.integers(0, 6), 2))
        d = ospa(X, Y, 20.0, 2.0)
        pair_ok += abs(d - ospa(Y, X, 20.0, 2.0)) <= 1e-12 and 0.0 <= d <= 20.0 + 1e-12
    worst = 0.0
    scales = np.array([[5.0], [1.0], [0.3], [0.02]])
    for _ in range(100):
        est = [Polynomial(rng.normal(0, 2, (4, 2)) * scales) for _ in range(2)]
        tru = [Polynomial(rng.normal(0, 2, (4, 2)) * scales) for _ in range(2)]
        fine = star_id(est, tru, (0.0, 9.0), MetricConfig(substeps=10))
        coarse = star_id(est, tru, (0.0, 9.0), MetricConfig(substeps=1))
        worst = max(worst, abs(fine - coarse) / fine)
    ok = all(exact) and pair_ok == 1000 and worst < 0.01
    report(7, ok, f"exact cases {sum(exact)}/{len(exact)}, OSPA symmetry/cutoff {pair_ok}/1000, "
                  f"Star-ID refinement change max {worst * 100:.3f}%")
    assert ok


def test_c8_numerical_calculus():
    rng = np.random.default_rng(808)
    fd_ok = ineq_ok = 0
    h = 1e-5
    for _ in range(100):
        sys = random_system(rng, 10, int(rng.integers(2, 6)))
        n = sys.n_coeffs
        th = rng.standard_normal(n)
        g, H = gradient(th, sys), hessian(sys)
        good = True
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            fd = (data_fit_error(th + e, sys) - data_fit_error(th - e, sys)) / (2 * h)
            fdg = (gradient(th + e, sys) - gradient(th - e, sys)) / (2 * h)
            good &= abs(fd - g[i]) <= 1e-5 * max(abs(g[i]), 1e-2)
            good &= bool(np.all(np.abs(fdg - H[:, i]) <= 1e-5 * np.maximum(np.abs(H[:, i]), 1e-2)))
        fd_ok += good
        L, ell = smoothness_constants(sys)
        u, w = rng.standard_normal(n) * 2, rng.standard_normal(n) * 2
        Du = data_fit_error(u, sys)
        lin = data_fit_error(w, sys) + gradient(w, sys) @ (u - w)
        d2 = float((u - w) @ (u - w))
        tol = 1e-9 * max(1.0, abs(Du))
        ineq_ok += (Du <= lin + 0.5 * L * d2 + tol) and (Du >= lin + 0.5 * ell * d2 - tol)
    ok = fd_ok == 100 and ineq_ok == 100
    report(8, ok, f"gradient/Hessian finite differences {fd_ok}/100, descent and convexity bounds {ineq_ok}/100")
    assert ok
