"""Scenario configuration, ground-truth simulation and scan generation.

Two truth generators are supported: a switching Wiener-process state-space
model (white noise on velocity or on acceleration, per segment) and fixed
piecewise polynomials.  Every run draws from three independent random streams
(process, measurement, clutter) spawned from ``seed``, so the data seen by
different solvers in the same run are identical.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .measurement import MeasurementKind, MeasurementModel, predict
from .metrics import MetricConfig
from .poly import Polynomial

CONTINUITY_TOL = 1e-9
HANDOVER_MODES = ("drop", "carry")


@dataclass(frozen=True)
class MotionSegment:
    model: str
    q: float
    start: int
    end: int

    def __post_init__(self):
        if self.model not in ("WPV", "WPA"):
            raise ValueError(f"unknown motion model {self.model!r}")
        if not self.q > 0:
            raise ValueError("power spectral density must be positive")
        if self.end < self.start:
            raise ValueError("segment ends before it starts")


@dataclass(frozen=True)
class PolySegment:
    """Polynomial piece on steps ``[start, end]`` in local time ``t - start*dt``.

    ``coeffs`` has one row per power and one column per position axis.
    """

    start: int
    end: int
    coeffs: tuple

    def polynomial(self, dt: float) -> Polynomial:
        return Polynomial(np.asarray(self.coeffs, dtype=float), self.start * dt, 1.0)

    def value(self, t, dt: float) -> np.ndarray:
        return self.polynomial(dt)(t)


@dataclass(frozen=True)
class TargetSpec:
    id: int
    segments: tuple


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    kind: str = "ssm"
    steps: int = 100
    dt: float = 1.0
    window: int = 10
    initial_position: tuple = (0.0, 0.0)
    initial_velocity: tuple = (10.0, 10.0)
    accel_handover: str = "drop"
    segments: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    measurement: MeasurementModel = field(default_factory=lambda: MeasurementModel.linear([100.0, 100.0]))
    detection_probability: float = 1.0
    clutter_rate: float = 0.0
    region: tuple = ((-170.0, 150.0), (-150.0, 300.0))
    association: str = "truth"
    gate: float | None = None
    seed: int = 0
    metrics: MetricConfig = field(default_factory=MetricConfig)

    def __post_init__(self):
        if self.kind not in ("ssm", "polynomial"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.steps < 1 or not self.dt > 0 or self.window < 1:
            raise ValueError("steps, dt and window must be positive")
        if not 0.0 <= self.detection_probability <= 1.0:
            raise ValueError("detection probability must lie in [0, 1]")
        if self.clutter_rate < 0:
            raise ValueError("clutter rate must be nonnegative")
        (x0, x1), (y0, y1) = self.region
        if not (x1 > x0 and y1 > y0):
            raise ValueError("surveillance region is empty")
        if self.accel_handover not in HANDOVER_MODES:
            raise ValueError(f"accel_handover must be one of {HANDOVER_MODES}")
        if self.association not in ("truth", "gnn"):
            raise ValueError("association must be 'truth' or 'gnn'")
        self.segments = [s if isinstance(s, MotionSegment) else MotionSegment(**s) for s in self.segments]
        self.targets = [t if isinstance(t, TargetSpec) else _target_from_dict(t) for t in self.targets]
        if self.kind == "ssm":
            check_segments(self.segments, self.steps)
        elif not self.targets:
            raise ValueError("polynomial scenarios need at least one target")
        else:
            for t in self.targets:
                check_poly_target(t, self.steps, self.dt)

    @property
    def n_targets(self) -> int:
        return 1 if self.kind == "ssm" else len(self.targets)

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.steps + 1) * self.dt

    def to_dict(self) -> dict:
        m = self.measurement
        return {
            "name": self.name,
            "kind": self.kind,
            "steps": self.steps,
            "dt": self.dt,
            "window": self.window,
            "initial_position": list(self.initial_position),
            "initial_velocity": list(self.initial_velocity),
            "accel_handover": self.accel_handover,
            "segments": [asdict(s) for s in self.segments],
            "targets": [
                {"id": t.id, "segments": [
                    {"start": s.start, "end": s.end, "coeffs": [list(r) for r in s.coeffs]} for s in t.segments
                ]} for t in self.targets
            ],
            "measurement": {
                "kind": m.kind.value,
                "noise_cov": m.noise_cov.tolist(),
                "noise_mean": m.noise_mean.tolist(),
                "sensor_origin": m.sensor_origin.tolist(),
            },
            "detection_probability": self.detection_probability,
            "clutter_rate": self.clutter_rate,
            "region": [list(r) for r in self.region],
            "association": self.association,
            "gate": self.gate,
            "seed": self.seed,
            "metrics": asdict(self.metrics),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _target_from_dict(d: dict) -> TargetSpec:
    segs = tuple(PolySegment(int(s["start"]), int(s["end"]), tuple(tuple(float(v) for v in row) for row in s["coeffs"]))
                 for s in d["segments"])
    return TargetSpec(int(d["id"]), segs)


def check_segments(segments, steps: int) -> None:
    """Motion segments must tile ``1..steps`` without gaps or overlaps."""
    if not segments:
        raise ValueError("state-space scenarios need motion segments")
    expected = 1
    for s in sorted(segments, key=lambda s: s.start):
        if s.start != expected:
            kind = "gap" if s.start > expected else "overlap"
            raise ValueError(f"motion segments have a {kind} at step {min(s.start, expected)}")
        expected = s.end + 1
    if expected != steps + 1:
        raise ValueError(f"motion segments cover steps 1..{expected - 1}, expected 1..{steps}")


def check_poly_target(target: TargetSpec, steps: int, dt: float) -> None:
    segs = target.segments
    if not segs or segs[0].start != 1 or segs[-1].end != steps:
        raise ValueError(f"target {target.id}: segments must span steps 1..{steps}")
    for a, b in zip(segs, segs[1:]):
        if b.start != a.end:
            raise ValueError(f"target {target.id}: consecutive segments must share their junction step")
        t = a.end * dt
        if np.max(np.abs(a.value(t, dt) - b.value(t, dt))) > CONTINUITY_TOL * max(1.0, np.max(np.abs(a.value(t, dt)))):
            raise ValueError(f"target {target.id}: position jumps at step {a.end}")


def load_scenario(path) -> ScenarioConfig:
    """Read a YAML scenario; ``builtin:<name>`` loads a packaged reference file."""
    path = str(path)
    if path.startswith("builtin:"):
        text = resources.files("tfot").joinpath("scenarios", path.split(":", 1)[1] + ".yaml").read_text()
    else:
        text = Path(path).read_text()
    return scenario_from_dict(yaml.safe_load(text))


def scenario_from_dict(d: dict) -> ScenarioConfig:
    d = dict(d)
    if "measurement" in d:
        m = dict(d["measurement"])
        m["kind"] = MeasurementKind(m.get("kind", "LinearPosition"))
        d["measurement"] = MeasurementModel(**m)
    if "metrics" in d:
        d["metrics"] = MetricConfig(**d["metrics"])
    for key in ("initial_position", "initial_velocity"):
        if key in d:
            d[key] = tuple(d[key])
    if "region" in d:
        d["region"] = tuple(tuple(r) for r in d["region"])
    known = set(ScenarioConfig.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    return ScenarioConfig(**d)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))


def run_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (process, measurement, clutter) generators for one run."""
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


# exact discretisations of white noise on velocity / acceleration, per axis
def wpv_matrices(dt: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    F = np.array([[1.0, dt], [0.0, 1.0]])
    Q = q * np.array([[dt**3 / 3, dt**2 / 2], [dt**2 / 2, dt]])
    return F, Q


def wpa_matrices(dt: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    F = np.array([[1.0, dt, dt**2 / 2], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    Q = q * np.array([
        [dt**5 / 20, dt**4 / 8, dt**3 / 6],
        [dt**4 / 8, dt**3 / 3, dt**2 / 2],
        [dt**3 / 6, dt**2 / 2, dt],
    ])
    return F, Q


def segment_at(segments, step: int) -> MotionSegment:
    for s in segments:
        if s.start <= step <= s.end:
            return s
    raise ValueError(f"no motion segment covers step {step}")


def simulate_ssm(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Kinematic states (steps, 3, 2): rows position, velocity, acceleration.

    Step 1 holds the initial state; step ``k`` is propagated from ``k - 1``
    with the model whose segment contains ``k``.  Acceleration enters WPA
    segments at zero; in WPV segments it is zeroed (``drop``) or kept constant
    and integrated deterministically (``carry``).
    """
    if cfg.kind != "ssm":
        raise ValueError("simulate_ssm needs a state-space scenario")
    check_segments(cfg.segments, cfg.steps)
    out = np.zeros((cfg.steps, 3, 2))
    out[0, 0] = cfg.initial_position
    out[0, 1] = cfg.initial_velocity
    cache = {}
    prev_model = segment_at(cfg.segments, 1).model
    for k in range(2, cfg.steps + 1):
        seg = segment_at(cfg.segments, k)
        key = (seg.model, seg.q)
        if key not in cache:
            F, Q = (wpv_matrices if seg.model == "WPV" else wpa_matrices)(cfg.dt, seg.q)
            cache[key] = (F, Q, np.linalg.cholesky(Q))
        F, Q, L = cache[key]
        x = out[k - 2].copy()
        if seg.model == "WPA":
            if prev_model == "WPV":
                x[2] = 0.0
            noise = L @ rng.standard_normal((3, 2))
            out[k - 1] = F @ x + noise
        else:
            noise = L @ rng.standard_normal((2, 2))
            pv = F @ x[:2] + noise
            if cfg.accel_handover == "carry":
                a = x[2]
                pv[0] += 0.5 * cfg.dt**2 * a
                pv[1] += cfg.dt * a
                out[k - 1, 2] = a
            out[k - 1, :2] = pv
        prev_model = seg.model
    return out


def simulate_polynomial_truth(targets, steps: int, dt: float = 1.0) -> np.ndarray:
    """Positions (n_targets, steps, d) evaluated from piecewise polynomials."""
    positions = []
    for tgt in targets:
        tgt = tgt if isinstance(tgt, TargetSpec) else _target_from_dict(tgt)
        check_poly_target(tgt, steps, dt)
        rows = []
        for k in range(1, steps + 1):
            seg = next(s for s in tgt.segments if s.start <= k <= s.end)
            rows.append(seg.value(k * dt, dt))
        positions.append(rows)
    return np.asarray(positions, dtype=float)


def trajectory_function(target: TargetSpec, dt: float):
    """Vectorised piecewise evaluation ``f(times) -> (len(times), d)``.

    Times before the first or after the last piece extrapolate that piece.
    """
    polys = [s.polynomial(dt) for s in target.segments]
    bounds = np.array([s.end * dt for s in target.segments[:-1]])

    def f(ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        idx = np.searchsorted(bounds, ts, side="left")
        out = np.empty((ts.size, polys[0].dim))
        for j in np.unique(idx):
            m = idx == j
            out[m] = polys[j](ts[m])
        return out
    return f


def truth_positions(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """(n_targets, steps, 2) true positions for one run."""
    if cfg.kind == "ssm":
        return simulate_ssm(cfg, rng)[None, :, 0, :]
    return simulate_polynomial_truth(cfg.targets, cfg.steps, cfg.dt)


@dataclass
class Scan:
    step: int
    time: float
    points: np.ndarray
    # target index for detections, -1 for clutter; for evaluation only
    labels: np.ndarray


def generate_scans(truth: np.ndarray, cfg: ScenarioConfig, meas_rng: np.random.Generator,
                   clutter_rng: np.random.Generator) -> list[Scan]:
    """Detections, clutter and shuffled order per step.

    Detection draws and measurement noise come from ``meas_rng``; clutter
    counts, locations and the shuffle from ``clutter_rng``.
    """
    model = cfg.measurement
    (x0, x1), (y0, y1) = cfg.region
    L = np.linalg.cholesky(model.noise_cov)
    scans = []
    for k in range(cfg.steps):
        pts, labels = [], []
        for i in range(truth.shape[0]):
            detected = meas_rng.random() < cfg.detection_probability
            noise = model.noise_mean + L @ meas_rng.standard_normal(model.dim)
            if detected:
                pts.append(predict(model, truth[i, k]) + noise)
                labels.append(i)
        n_c = clutter_rng.poisson(cfg.clutter_rate) if cfg.clutter_rate > 0 else 0
        if n_c:
            c = np.column_stack([clutter_rng.uniform(x0, x1, n_c), clutter_rng.uniform(y0, y1, n_c)])
            pts.extend(c)
            labels.extend([-1] * n_c)
        pts = np.asarray(pts, dtype=float).reshape(-1, model.dim)
        labels = np.asarray(labels, dtype=int)
        order = clutter_rng.permutation(len(pts))
        scans.append(Scan(k + 1, (k + 1) * cfg.dt, pts[order], labels[order]))
    return scans


def simulate_run(cfg: ScenarioConfig, seed: int) -> tuple[np.ndarray, list[Scan]]:
    proc, meas, clut = run_streams(seed)
    truth = truth_positions(cfg, proc)
    return truth, generate_scans(truth, cfg, meas, clut)


def write_scans_csv(scans: list[Scan], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "time", "index", "x", "y", "label"])
        for s in scans:
            for j, (p, lab) in enumerate(zip(s.points, s.labels)):
                w.writerow([s.step, repr(s.time), j, repr(float(p[0])), repr(float(p[1])), int(lab)])
