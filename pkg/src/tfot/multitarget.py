"""Measurement-to-track association and independent per-track refitting.

Association is solved per scan as a rectangular linear assignment on squared
Mahalanobis distances between track predictions and measurements, so every
measurement feeds at most one track and every track takes at most one
measurement.  Pairs beyond the gate are dropped.  Each track then refits its
own sliding window; tracks never share data or state.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import linear_sum_assignment
from scipy.stats import chi2

from .orls import FitResult
from .poly import Polynomial
from .solvers import SolverConfig, fit_window
from .wls import FitWindow, mahalanobis_sq

# keeps infeasible pairs out of the assignment without overflowing the solver
_FORBIDDEN = 1e12


def default_gate(meas_dim: int, prob: float = 0.99) -> float:
    return float(chi2.ppf(prob, meas_dim))


@dataclass
class Track:
    id: int
    times: list = field(default_factory=list)
    measurements: list = field(default_factory=list)
    fit: FitResult | None = None
    lam: float | None = None
    misses: int = 0
    fit_seconds: float = 0.0

    def predict(self, t: float) -> np.ndarray:
        if self.fit is not None:
            return self.fit.poly(t)
        if self.measurements:
            return np.asarray(self.measurements[-1], dtype=float)
        raise ValueError(f"track {self.id} has neither a fit nor measurements")

    def push(self, t: float, y, capacity: int, dt: float) -> None:
        self.times.append(float(t))
        self.measurements.append(np.asarray(y, dtype=float))
        self.slide(t, capacity, dt)

    def slide(self, t: float, capacity: int, dt: float) -> None:
        """Keep only samples inside the most recent ``capacity`` steps."""
        oldest = t - (capacity - 1) * dt - 1e-9 * dt
        while self.times and self.times[0] < oldest:
            self.times.pop(0)
            self.measurements.pop(0)

    def window(self, noise_cov, noise_mean=None, dt: float | None = None) -> FitWindow:
        return FitWindow(np.array(self.times), np.array(self.measurements), noise_cov, noise_mean, dt)


@dataclass
class Assignment:
    pairs: list
    clutter: list
    missed: list

    def check(self) -> None:
        tracks = [p[0] for p in self.pairs]
        meas = [p[1] for p in self.pairs]
        if len(set(tracks)) != len(tracks) or len(set(meas)) != len(meas):
            raise AssertionError("assignment violates the one-to-one constraints")


@dataclass
class TrackSet:
    tracks: list
    capacity: int = 10
    dt: float = 1.0
    errors: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [t.id for t in self.tracks]
        if len(set(ids)) != len(ids):
            raise ValueError("track ids must be unique")

    def by_id(self, tid: int) -> Track:
        for t in self.tracks:
            if t.id == tid:
                return t
        raise KeyError(tid)


def associate_gnn(predictions, scan_points, noise_cov, gate: float) -> Assignment:
    """Optimal one-to-one association.

    ``predictions`` maps track id to predicted measurement; returns
    (track id, measurement index) pairs with squared distance within ``gate``.
    """
    ids = list(predictions)
    pts = np.asarray(scan_points, dtype=float).reshape(len(scan_points), -1) if len(scan_points) else np.zeros((0, 0))
    if not ids or pts.shape[0] == 0:
        return Assignment([], list(range(pts.shape[0])), ids)
    cf = linalg.cho_factor(np.atleast_2d(noise_cov), lower=True)
    P = np.array([np.asarray(predictions[i], dtype=float) for i in ids])
    diff = pts[None, :, :] - P[:, None, :]
    sol = linalg.cho_solve(cf, diff.reshape(-1, diff.shape[-1]).T).T.reshape(diff.shape)
    d2 = np.einsum("ijk,ijk->ij", diff, sol)
    cost = np.where(d2 <= gate, d2, _FORBIDDEN)
    rows, cols = linear_sum_assignment(cost)
    pairs = [(ids[r], int(c)) for r, c in zip(rows, cols) if d2[r, c] <= gate]
    used_t = {p[0] for p in pairs}
    used_m = {p[1] for p in pairs}
    a = Assignment(sorted(pairs), [j for j in range(pts.shape[0]) if j not in used_m], [i for i in ids if i not in used_t])
    a.check()
    return a


def associate_truth(track_ids, labels) -> Assignment:
    """Label-based association used when perfect association is assumed."""
    pairs = []
    for tid in track_ids:
        hits = np.flatnonzero(np.asarray(labels) == tid)
        if hits.size:
            pairs.append((tid, int(hits[0])))
    used_t = {p[0] for p in pairs}
    used_m = {p[1] for p in pairs}
    return Assignment(pairs, [j for j in range(len(labels)) if j not in used_m], [t for t in track_ids if t not in used_t])


def refit_track(track: Track, cfg: SolverConfig, noise_cov, noise_mean=None, dt: float | None = None) -> FitResult:
    w = track.window(noise_cov, noise_mean, dt)
    t0 = time.perf_counter()
    res = fit_window(w, cfg)
    track.fit_seconds = time.perf_counter() - t0
    track.fit = res
    track.lam = res.lam
    return res


def step_tracks(ts: TrackSet, t: float, points, cfg: SolverConfig, noise_cov, *, gate: float | None = None,
                labels=None, noise_mean=None) -> tuple[TrackSet, Assignment]:
    """One scan: associate, slide windows, refit every updated track.

    With ``labels`` given, association uses them instead of GNN.  Solver
    failures are recorded in ``ts.errors[track_id]`` and leave that track's
    previous fit in place.
    """
    points = np.asarray(points, dtype=float).reshape(len(points), -1) if len(points) else np.zeros((0, 2))
    if labels is not None:
        assignment = associate_truth([tr.id for tr in ts.tracks], labels)
    else:
        g = default_gate(np.atleast_2d(noise_cov).shape[0]) if gate is None else gate
        preds = {tr.id: tr.predict(t) for tr in ts.tracks}
        assignment = associate_gnn(preds, points, noise_cov, g)
    taken = dict(assignment.pairs)
    ts.errors = {}
    for tr in ts.tracks:
        if tr.id in taken:
            tr.push(t, points[taken[tr.id]], ts.capacity, ts.dt)
        else:
            tr.misses += 1
            tr.slide(t, ts.capacity, ts.dt)
            tr.fit_seconds = 0.0
            continue
        try:
            refit_track(tr, cfg, noise_cov, noise_mean, ts.dt)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            ts.errors[tr.id] = f"{type(exc).__name__}: {exc}"
    return ts, assignment


def joint_objective(fits: dict, windows: dict, penalties: dict) -> float:
    """Sum over tracks of data-fit error plus the track's penalty.

    ``fits`` maps track id to a Polynomial, ``windows`` to the FitWindow of
    measurements assigned to it and ``penalties`` to a callable of the
    coefficient matrix.  Association constraints are the caller's concern.
    """
    total = 0.0
    for tid, poly in fits.items():
        w = windows[tid]
        poly = poly if isinstance(poly, Polynomial) else Polynomial(poly)
        resid = (w.measurements - w.mean_noise - poly(w.times)).ravel()
        total += mahalanobis_sq(resid, w.full_variance()) + float(penalties[tid](poly.coeffs))
    return total
