"""Evaluation metrics: position RMSE, OSPA and trajectory-level integral distances.

The trajectory distance integrates the per-instant OSPA between the estimated
and true trajectory sets over the fitting window (trapezoid rule), with cutoff
``c_s``.  ``c_t`` is carried in the config but unused: with a fixed set of
targets no identity switches arise.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import linear_sum_assignment

from .poly import TimeWindow

EXHAUSTIVE_MAX = 6


@dataclass(frozen=True)
class MetricConfig:
    c: float = 20.0
    p: float = 2.0
    c_s: float = 20.0
    c_t: float = 20.0
    substeps: int = 10

    def __post_init__(self):
        if not (self.c > 0 and self.c_s > 0 and self.c_t > 0):
            raise ValueError("cutoffs must be positive")
        if self.p < 1:
            raise ValueError("OSPA order must be at least 1")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")


def rmse_position(estimates, truth) -> tuple[np.ndarray, float]:
    """Per-step RMSE over runs and its time average.

    ``estimates`` is (runs, steps, d) and ``truth`` either (steps, d) or
    (runs, steps, d).  Steps where every run is NaN are skipped in the average.
    """
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.ndim == 2:
        est = est[None]
    if tru.ndim == 2:
        tru = np.broadcast_to(tru, est.shape)
    if est.shape != tru.shape:
        raise ValueError(f"estimates {est.shape} and truth {tru.shape} are not aligned")
    sq = np.sum((est - tru) ** 2, axis=-1)
    series = np.sqrt(np.nanmean(sq, axis=0))
    return series, float(np.nanmean(series))


def _cost_matrix(X, Y, c, p):
    D = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=-1)
    return np.minimum(D, c) ** p


def _optimal_assignment_cost(M) -> float:
    n, m = M.shape
    if min(n, m) <= EXHAUSTIVE_MAX and max(n, m) <= EXHAUSTIVE_MAX:
        if n > m:
            M = M.T
            n, m = m, n
        return min(sum(M[i, j] for i, j in zip(range(n), cols)) for cols in itertools.permutations(range(m), n))
    rows, cols = linear_sum_assignment(M)
    return float(M[rows, cols].sum())


def ospa(X, Y, c: float = 20.0, p: float = 2.0) -> float:
    """OSPA distance between two finite point sets (rows are points)."""
    if not c > 0 or p < 1:
        raise ValueError("need c > 0 and p >= 1")
    X = np.asarray(X, dtype=float).reshape(len(X), -1) if len(X) else np.zeros((0, 1))
    Y = np.asarray(Y, dtype=float).reshape(len(Y), -1) if len(Y) else np.zeros((0, 1))
    n, m = len(X), len(Y)
    if n == 0 and m == 0:
        return 0.0
    if n == 0 or m == 0:
        return float(c)
    if X.shape[1] != Y.shape[1]:
        raise ValueError("point sets differ in dimension")
    total = _optimal_assignment_cost(_cost_matrix(X, Y, c, p)) + c**p * abs(n - m)
    return float((total / max(n, m)) ** (1.0 / p))


def _window_span(window) -> tuple[float, float]:
    if isinstance(window, TimeWindow):
        return float(window.times[0]), float(window.times[-1])
    a, b = window
    return float(a), float(b)


def ospa_series(X, Y, c: float = 20.0, p: float = 2.0) -> np.ndarray:
    """OSPA at each time for point sets of fixed size.

    ``X`` is (n_times, n, d) and ``Y`` (n_times, m, d); the assignment is
    enumerated exhaustively, so the smaller set must be at most
    ``EXHAUSTIVE_MAX`` points.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, m = X.shape[1], Y.shape[1]
    if n == 0 and m == 0:
        return np.zeros(X.shape[0])
    if n == 0 or m == 0:
        return np.full(max(X.shape[0], Y.shape[0]), float(c))
    if n > m:
        X, Y, n, m = Y, X, m, n
    if n > EXHAUSTIVE_MAX:
        return np.array([ospa(x, y, c, p) for x, y in zip(X, Y)])
    M = np.minimum(np.linalg.norm(X[:, :, None, :] - Y[:, None, :, :], axis=-1), c) ** p
    best = np.full(X.shape[0], np.inf)
    rows = np.arange(n)
    for cols in itertools.permutations(range(m), n):
        best = np.minimum(best, M[:, rows, list(cols)].sum(axis=1))
    return ((best + c**p * (m - n)) / m) ** (1.0 / p)


def star_id(estimates, truths, window, config: MetricConfig = MetricConfig()) -> float:
    """Integral over the window of the per-instant OSPA (cutoff ``c_s``) between
    the estimated and true trajectory sets, in distance x time units.

    ``estimates`` and ``truths`` are sequences of callables mapping an array of
    times to ``(len(times), d)`` positions; ``window`` is a TimeWindow or a
    ``(start, end)`` pair.  The trapezoid rule uses ``config.substeps`` points
    per sampling interval.
    """
    a, b = _window_span(window)
    if not b > a:
        raise ValueError("empty window")
    dt = window.dt if isinstance(window, TimeWindow) else 1.0
    n_int = max(1, int(round((b - a) / dt)))
    ts = np.linspace(a, b, n_int * config.substeps + 1)

    def stack(fns):
        if not fns:
            return np.zeros((ts.size, 0, 1))
        return np.stack([np.asarray(f(ts), dtype=float).reshape(ts.size, -1) for f in fns], axis=1)

    vals = ospa_series(stack(estimates), stack(truths), config.c_s, config.p)
    return float(trapezoid(vals, ts))


def ta_star_id(star_value: float, duration: float) -> float:
    if not duration > 0:
        raise ValueError("window length must be positive")
    return float(star_value) / float(duration)
