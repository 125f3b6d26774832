"""Measurement models: linear position and range-bearing with linearisation."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import linalg

from .poly import Polynomial, evaluate
from .wls import FitWindow


class MeasurementKind(str, Enum):
    LINEAR_POSITION = "LinearPosition"
    RANGE_BEARING = "RangeBearing"


@dataclass(frozen=True)
class MeasurementModel:
    kind: MeasurementKind = MeasurementKind.LINEAR_POSITION
    noise_cov: np.ndarray = field(default_factory=lambda: np.eye(2))
    noise_mean: np.ndarray | None = None
    sensor_origin: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        kind = MeasurementKind(self.kind)
        cov = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
            raise ValueError("noise_cov must be a symmetric matrix")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("noise_cov must be positive definite") from exc
        mean = np.zeros(cov.shape[0]) if self.noise_mean is None else np.asarray(self.noise_mean, dtype=float)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "noise_cov", cov)
        object.__setattr__(self, "noise_mean", mean)
        object.__setattr__(self, "sensor_origin", np.asarray(self.sensor_origin, dtype=float))

    @property
    def dim(self) -> int:
        return self.noise_cov.shape[0]

    @classmethod
    def linear(cls, variance) -> "MeasurementModel":
        cov = np.diag(np.asarray(variance, dtype=float)) if np.ndim(variance) == 1 else variance
        return cls(MeasurementKind.LINEAR_POSITION, cov)


def _offset(model: MeasurementModel, state) -> np.ndarray:
    d = np.asarray(state, dtype=float)[:2] - model.sensor_origin
    if not np.hypot(*d) > 0:
        raise ValueError("range-bearing measurement undefined at the sensor position")
    return d


def predict(model: MeasurementModel, state) -> np.ndarray:
    """Noise-free measurement of ``state``."""
    x = np.asarray(state, dtype=float)
    if model.kind is MeasurementKind.LINEAR_POSITION:
        if x.size != model.dim:
            raise ValueError(f"state dimension {x.size} does not match measurement dimension {model.dim}")
        return x.copy()
    d = _offset(model, x)
    return np.array([np.hypot(d[0], d[1]), np.arctan2(d[1], d[0])])


def measure(model: MeasurementModel, state, rng: np.random.Generator) -> np.ndarray:
    noise = rng.multivariate_normal(model.noise_mean, model.noise_cov)
    return predict(model, state) + noise


def jacobian(model: MeasurementModel, state) -> np.ndarray:
    if model.kind is MeasurementKind.LINEAR_POSITION:
        return np.eye(model.dim)
    dx, dy = _offset(model, state)
    r2 = dx * dx + dy * dy
    r = np.sqrt(r2)
    return np.array([[dx / r, dy / r], [-dy / r2, dx / r2]])


def build_linearized_window(model: MeasurementModel, window: FitWindow, prior_states) -> tuple[np.ndarray, np.ndarray]:
    """Linearise around prior state estimates, one per window step.

    Returns ``(delta_Y, J_block)``: the pseudo-measurements
    ``y_t - h(x_t) + J_t x_t`` (T, m) and the block-diagonal Jacobian
    (T*m, T*r).  The result is fed to the fitters as a FitWindow holding
    ``delta_Y`` together with ``jacobian=J_block``.
    """
    prior = np.asarray(prior_states, dtype=float)
    if prior.ndim != 2 or prior.shape[0] != window.size or not np.all(np.isfinite(prior)):
        raise ValueError("a prior state estimate is required for every window step")
    rows, blocks = [], []
    for y_t, x_t in zip(window.measurements, prior):
        J = jacobian(model, x_t)
        h = predict(model, x_t)
        resid = y_t - h
        if model.kind is MeasurementKind.RANGE_BEARING:
            # keep bearing innovations on the principal branch
            resid[1] = (resid[1] + np.pi) % (2 * np.pi) - np.pi
        rows.append(resid + J @ x_t)
        blocks.append(J)
    return np.array(rows), linalg.block_diag(*blocks)


def linearized_fit_window(model: MeasurementModel, window: FitWindow, prior: Polynomial | np.ndarray):
    """FitWindow and Jacobian for refitting with linearised measurements.

    ``prior`` is either an array of state estimates per step or a polynomial
    evaluated at the window times.
    """
    states = evaluate(prior, window.times) if isinstance(prior, Polynomial) else prior
    dY, J = build_linearized_window(model, window, states)
    return FitWindow(window.times, dY, window.variance, window.mean_noise, window.dt), J


def convert_range_bearing(measurement, noise_cov, sensor_origin=(0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Polar to Cartesian with first-order covariance propagation (no debiasing)."""
    rng_, brg = np.asarray(measurement, dtype=float)
    if not rng_ > 0:
        raise ValueError("range must be positive")
    c, s = np.cos(brg), np.sin(brg)
    pos = np.asarray(sensor_origin, dtype=float) + rng_ * np.array([c, s])
    G = np.array([[c, -rng_ * s], [s, rng_ * c]])
    return pos, G @ np.asarray(noise_cov, dtype=float) @ G.T
