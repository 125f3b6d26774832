"""Monte-Carlo experiment runner and report writer."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .l0 import tau_upper_bound
from .metrics import MetricConfig, ospa_series, star_id, ta_star_id
from .multitarget import Track, TrackSet, step_tracks
from .orls import prop2_interval
from .poly import Polynomial, TimeWindow
from .scenario import ScenarioConfig, simulate_run, trajectory_function
from .solvers import SolverConfig, parse_solver

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
# padded coefficient rows stored per fit; orders above this are not produced for T_w <= 10
MAX_STORED_ROWS = 10


@dataclass
class ExperimentSpec:
    scenario: ScenarioConfig
    solvers: list
    runs: int = 50
    out: Path | None = None
    seed: int | None = None
    workers: int = 1
    strict: bool = False

    def __post_init__(self):
        self.solvers = [s if isinstance(s, SolverConfig) else parse_solver(s) for s in self.solvers]
        if not self.solvers:
            raise ValueError("at least one solver is required")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        labels = [s.label for s in self.solvers]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate solver labels: {labels}")

    @property
    def seed_base(self) -> int:
        return self.scenario.seed if self.seed is None else self.seed


class SpecError(ValueError):
    pass


def validate_spec(spec: ExperimentSpec, d1_estimate: float | None = None) -> list[str]:
    """Diagnostics on penalty, order and Newton parameters.

    Violations of the step-size bound are errors under ``spec.strict``;
    everything else is a warning.
    """
    msgs = []
    Tw = spec.scenario.window
    for s in spec.solvers:
        if s.kind == "fixed" and s.order > Tw - 2:
            msgs.append(f"warning: {s.label}: order {s.order} > T_w - 2 = {Tw - 2} overfits the window")
        if s.gamma_max is not None and s.gamma_max > Tw - 2:
            msgs.append(f"warning: {s.label}: gamma_max {s.gamma_max} > T_w - 2 = {Tw - 2}; the penalty "
                        f"interval guarantee (order below T_w - 1) does not cover it")
        if s.lam is not None and d1_estimate is not None and Tw > 2:
            lo, hi = prop2_interval(d1_estimate, Tw)
            if not lo < s.lam <= hi:
                msgs.append(f"warning: {s.label}: lambda {s.lam:g} outside the admissible interval "
                            f"({lo:g}, {hi:g}] for the estimated order-1 error {d1_estimate:g}")
        if s.kind == "l0":
            p = s.newton
            # worst-case bound uses unit curvature; the solver checks the real one per window
            if p.tau > 1.0 and not p.strict:
                msgs.append(f"note: {s.label}: tau={p.tau:g} may exceed the convergence bound; "
                            f"use strict=true to clamp it per window")
            if spec.strict and not p.strict:
                bound = tau_upper_bound(1.0, min(p.delta, 0.5), p.sigma, p.beta, Tw - 1)
                if p.tau > bound:
                    msgs.append(f"error: {s.label}: tau={p.tau:g} violates the step bound ({bound:.3g} at unit curvature)")
    if spec.strict and any(m.startswith("error") for m in msgs):
        raise SpecError("; ".join(m for m in msgs if m.startswith("error")))
    return msgs


def _truth_callables(cfg: ScenarioConfig):
    """Vectorised true trajectories for the polynomial scenario (None otherwise)."""
    if cfg.kind != "polynomial":
        return None
    return [trajectory_function(t, cfg.dt) for t in cfg.targets]


def _order_bound_violations(res, n_steps: int) -> int:
    d = res.diagnostics
    D1 = d.get("D1")
    if res.solver not in ("ORLS", "L0Newton", "L1ADMM") or D1 is None or n_steps < 3:
        return 0
    bad = 0
    if res.order > D1 / res.lam + 1.0 + 1e-9:
        bad += 1
    lo, hi = prop2_interval(D1, n_steps)
    if lo < res.lam <= hi and res.order >= n_steps - 1:
        bad += 1
    return bad


def run_single(cfg: ScenarioConfig, solvers: list, seed: int) -> dict:
    """All solvers on one simulated run; every solver sees the same scans."""
    truth, scans = simulate_run(cfg, seed)
    n_t, steps = truth.shape[0], cfg.steps
    R = cfg.measurement.noise_cov
    truth_fns = _truth_callables(cfg)
    out = {"seed": seed, "truth": truth, "solvers": {}}
    for scfg in solvers:
        ts = TrackSet([Track(i) for i in range(n_t)], cfg.window, cfg.dt)
        est = np.full((n_t, steps, 2), np.nan)
        coeffs = np.zeros((steps, n_t, MAX_STORED_ROWS, 2))
        origin = np.zeros((steps, n_t))
        scale = np.ones((steps, n_t))
        has_fit = np.zeros((steps, n_t), dtype=bool)
        orders = np.full((steps, n_t), -1)
        secs = np.zeros(steps)
        failures = []
        violations = 0
        nonconv = 0
        for k, scan in enumerate(scans):
            # bootstrap on the first scan with labels: track birth is out of scope
            use_labels = cfg.association == "truth" or k == 0
            ts, _ = step_tracks(ts, scan.time, scan.points, scfg, R, gate=cfg.gate,
                                labels=scan.labels if use_labels else None, noise_mean=cfg.measurement.noise_mean)
            for tid, msg in ts.errors.items():
                failures.append({"step": scan.step, "track": tid, "error": msg})
            for i, tr in enumerate(ts.tracks):
                secs[k] += tr.fit_seconds
                if tr.fit is not None:
                    est[i, k] = tr.fit.poly(scan.time)
                    c = tr.fit.poly.coeffs
                    coeffs[k, i, :c.shape[0]] = c
                    origin[k, i], scale[k, i] = tr.fit.poly.time_origin, tr.fit.poly.time_scale
                    has_fit[k, i] = True
                    orders[k, i] = tr.fit.order
                    if tr.fit_seconds > 0:
                        violations += _order_bound_violations(tr.fit, len(tr.times))
                        nonconv += not tr.fit.converged
                elif tr.measurements:
                    est[i, k] = tr.measurements[-1]
        metrics = _per_step_metrics(cfg, truth, truth_fns, coeffs, origin, scale, has_fit)
        out["solvers"][scfg.label] = {
            "estimates": est, "coeffs": coeffs, "origin": origin, "scale": scale, "has_fit": has_fit,
            "orders": orders, "seconds": secs, "failures": failures, "violations": violations,
            "nonconverged": nonconv, "metrics": metrics,
        }
    return out


def _polys_at(coeffs, origin, scale, has_fit, k):
    return [Polynomial(coeffs[k, i], origin[k, i], scale[k, i]) for i in range(coeffs.shape[1]) if has_fit[k, i]]


def _per_step_metrics(cfg, truth, truth_fns, coeffs, origin, scale, has_fit,
                      mcfg: MetricConfig | None = None) -> dict:
    """Per-step metric arrays for one run and one solver."""
    mcfg = mcfg or cfg.metrics
    steps = cfg.steps
    est = np.full((truth.shape[0], steps, 2), np.nan)
    for k in range(steps):
        for i in range(truth.shape[0]):
            if has_fit[k, i]:
                est[i, k] = Polynomial(coeffs[k, i], origin[k, i], scale[k, i])((k + 1) * cfg.dt)
    res = {"sq_error": np.sum((est - truth) ** 2, axis=-1).sum(axis=0)}
    if cfg.kind == "polynomial":
        ospa_v = np.zeros(steps)
        star = np.full(steps, np.nan)
        ta = np.full(steps, np.nan)
        for k in range(steps):
            X = est[:, k][~np.isnan(est[:, k, 0])]
            ospa_v[k] = ospa_series(X[None], truth[:, k][None], mcfg.c, mcfg.p)[0]
            w = TimeWindow.sliding(k + 1, cfg.window, cfg.dt)
            if w.duration > 0:
                polys = _polys_at(coeffs, origin, scale, has_fit, k)
                star[k] = star_id(polys, truth_fns, w, mcfg)
                ta[k] = ta_star_id(star[k], w.duration)
        res.update(ospa=ospa_v, star_id=star, ta_star_id=ta)
    return res


def _aggregate(cfg: ScenarioConfig, labels: list, runs: list) -> tuple[dict, dict, dict]:
    per_step, summary, timing = {}, {}, {}
    for lab in labels:
        sq = np.array([r["solvers"][lab]["metrics"]["sq_error"] for r in runs])
        n_t = runs[0]["truth"].shape[0]
        rmse_series = np.sqrt(np.nanmean(sq, axis=0) / n_t)
        ps = {"rmse": rmse_series}
        summ = {"rmse": float(rmse_series.mean())}
        if cfg.kind == "polynomial":
            for m in ("ospa", "star_id", "ta_star_id"):
                arr = np.array([r["solvers"][lab]["metrics"][m] for r in runs])
                ps[m] = arr.mean(axis=0)
                summ[m] = float(np.nanmean(ps[m]))
        orders = np.array([r["solvers"][lab]["orders"] for r in runs], dtype=float)
        orders[orders < 0] = np.nan
        ps["order"] = np.nanmean(orders, axis=(0, 2))
        summ["mean_order"] = float(np.nanmean(orders))
        summ["violations"] = int(sum(r["solvers"][lab]["violations"] for r in runs))
        summ["nonconverged"] = int(sum(r["solvers"][lab]["nonconverged"] for r in runs))
        summ["failures"] = int(sum(len(r["solvers"][lab]["failures"]) for r in runs))
        secs = np.array([r["solvers"][lab]["seconds"] for r in runs])
        timing[lab] = {"mean_step_seconds": float(secs.mean()), "total_seconds": float(secs.sum())}
        per_step[lab] = ps
        summary[lab] = summ
    return per_step, summary, timing


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_reports(out: Path, spec: ExperimentSpec, per_step: dict, summary: dict, timing: dict,
                  seeds: list, failures: list, diagnostics: list) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "per_step.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solver", "step", "metric", "value"])
        for lab, ps in per_step.items():
            for metric, series in ps.items():
                for k, v in enumerate(series):
                    w.writerow([lab, k + 1, metric, _fmt(v)])
    cols = sorted({c for s in summary.values() for c in s})
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solver"] + cols)
        for lab, s in summary.items():
            w.writerow([lab] + [_fmt(s.get(c, "")) for c in cols])
    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["solver", "mean_step_seconds", "total_seconds"])
        for lab, t in timing.items():
            w.writerow([lab, _fmt(t["mean_step_seconds"]), _fmt(t["total_seconds"])])
    (out / "summary.json").write_text(json.dumps(
        {"schema_version": SCHEMA_VERSION, "summary": summary, "timing": timing}, indent=2, sort_keys=True))
    (out / "summary.txt").write_text(format_summary(spec.scenario, summary, timing))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "scenario": spec.scenario.to_dict(),
        "config_hash": spec.scenario.config_hash(),
        "solvers": [s.label for s in spec.solvers],
        "runs": spec.runs,
        "seed_base": spec.seed_base,
        "seeds": seeds,
        "failures": failures,
        "diagnostics": diagnostics,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def format_summary(cfg: ScenarioConfig, summary: dict, timing: dict) -> str:
    cols = ["rmse"] + (["ta_star_id", "ospa"] if cfg.kind == "polynomial" else []) + ["mean_order"]
    head = f"{'solver':<10}" + "".join(f"{c:>14}" for c in cols) + f"{'step time (s)':>16}"
    lines = [f"scenario: {cfg.name}", head]
    for lab, s in summary.items():
        lines.append(f"{lab:<10}" + "".join(f"{s[c]:>14.4f}" for c in cols)
                     + f"{timing[lab]['mean_step_seconds']:>16.6f}")
    return "\n".join(lines) + "\n"


def _save_run(out: Path, run: dict) -> None:
    d = out / "runs"
    d.mkdir(parents=True, exist_ok=True)
    arrays = {"truth": run["truth"], "seed": np.array(run["seed"])}
    for lab, s in run["solvers"].items():
        for key in ("coeffs", "origin", "scale", "has_fit", "orders"):
            arrays[f"{lab}/{key}"] = s[key]
    np.savez_compressed(d / f"run_{run['seed']}.npz", **arrays)


def _run_job(args):
    cfg, solvers, seed = args
    return run_single(cfg, solvers, seed)


def run_experiment(spec: ExperimentSpec) -> dict:
    """Simulate, track and score every run; write reports when ``spec.out`` is set."""
    diagnostics = validate_spec(spec)
    for m in diagnostics:
        log.warning(m)
    seeds = [spec.seed_base + r for r in range(spec.runs)]
    jobs = [(spec.scenario, spec.solvers, s) for s in seeds]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as ex:
            runs = list(ex.map(_run_job, jobs))
    else:
        runs = [_run_job(j) for j in jobs]
    labels = [s.label for s in spec.solvers]
    per_step, summary, timing = _aggregate(spec.scenario, labels, runs)
    failures = [{"seed": r["seed"], "solver": lab, **f} for r in runs for lab in labels
                for f in r["solvers"][lab]["failures"]]
    if spec.out is not None:
        out = Path(spec.out)
        write_reports(out, spec, per_step, summary, timing, seeds, failures, diagnostics)
        for r in runs:
            _save_run(out, r)
    return {"per_step": per_step, "summary": summary, "timing": timing, "failures": failures,
            "diagnostics": diagnostics, "runs": runs}


def recompute_metrics(run_dir: Path, cfg: ScenarioConfig, mcfg: MetricConfig | None = None) -> dict:
    """Metric summary from stored runs, optionally with different metric settings."""
    files = sorted(Path(run_dir).glob("run_*.npz"), key=lambda p: int(p.stem.split("_")[1]))
    if not files:
        raise FileNotFoundError(f"no stored runs in {run_dir}")
    truth_fns = _truth_callables(cfg)
    runs = []
    labels: list = []
    for f in files:
        z = np.load(f)
        labs = sorted({k.split("/")[0] for k in z.files if "/" in k})
        labels = labels or labs
        run = {"seed": int(z["seed"]), "truth": z["truth"], "solvers": {}}
        for lab in labs:
            g = {key: z[f"{lab}/{key}"] for key in ("coeffs", "origin", "scale", "has_fit", "orders")}
            g["metrics"] = _per_step_metrics(cfg, z["truth"], truth_fns, g["coeffs"], g["origin"], g["scale"],
                                             g["has_fit"], mcfg)
            g.update(violations=0, nonconverged=0, failures=[], seconds=np.zeros(cfg.steps))
            run["solvers"][lab] = g
        runs.append(run)
    per_step, summary, _ = _aggregate(cfg, labels, runs)
    for s in summary.values():
        for key in ("violations", "nonconverged", "failures"):
            s.pop(key)
    return {"per_step": per_step, "summary": summary}

