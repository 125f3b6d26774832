"""Polynomial trajectory functions of time.

A trajectory over one fitting window is stored as a coefficient matrix with
one row per power of the local time ``(t - time_origin) / time_scale`` and one
column per state dimension.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np


@dataclass(frozen=True)
class Polynomial:
    coeffs: np.ndarray
    time_origin: float = 0.0
    time_scale: float = 1.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValueError(f"coeffs must be a non-empty (order+1, r) matrix, got shape {c.shape}")
        if not self.time_scale > 0:
            raise ValueError("time_scale must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "time_origin", float(self.time_origin))
        object.__setattr__(self, "time_scale", float(self.time_scale))

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def local_time(self, t):
        return (np.asarray(t, dtype=float) - self.time_origin) / self.time_scale

    def __call__(self, t):
        return evaluate(self, t)

    def trimmed(self) -> "Polynomial":
        """Drop trailing all-zero rows (keeps at least the constant row)."""
        nz = np.flatnonzero(np.any(self.coeffs != 0.0, axis=1))
        keep = int(nz[-1]) + 1 if nz.size else 1
        return Polynomial(self.coeffs[:keep], self.time_origin, self.time_scale)


def evaluate(poly: Polynomial, t):
    """Evaluate by Horner's scheme.

    Scalar ``t`` gives a length-r vector, an array of times gives ``(len(t), r)``.
    """
    s = poly.local_time(t)
    out = np.zeros(np.shape(s) + (poly.dim,))
    for row in poly.coeffs[::-1]:
        out = out * s[..., None] + row
    return out


def derivative_coeffs(coeffs: np.ndarray, d: int) -> np.ndarray:
    """Coefficients of the d-th derivative with respect to local time."""
    n = coeffs.shape[0]
    if d >= n:
        return np.zeros((1, coeffs.shape[1]))
    falling = np.array([factorial(i) / factorial(i - d) for i in range(d, n)])
    return coeffs[d:] * falling[:, None]


def derivative_at(poly: Polynomial, d: int, t):
    """d-th time derivative, including the ``time_scale**-d`` chain-rule factor."""
    if d < 0:
        raise ValueError("derivative order must be nonnegative")
    if d == 0:
        return evaluate(poly, t)
    dc = derivative_coeffs(poly.coeffs, d) / poly.time_scale**d
    return evaluate(Polynomial(dc, poly.time_origin, poly.time_scale), t)


@dataclass(frozen=True)
class TimeWindow:
    """Sampling steps ``k_prime..k`` (inclusive) of a sliding window."""

    k_prime: int
    k: int
    dt: float = 1.0
    capacity: int = 10

    def __post_init__(self):
        if self.k < self.k_prime:
            raise ValueError("window end precedes its start")
        if self.k - self.k_prime + 1 > self.capacity:
            raise ValueError(f"window holds {self.k - self.k_prime + 1} steps, capacity is {self.capacity}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @classmethod
    def sliding(cls, k: int, capacity: int, dt: float = 1.0) -> "TimeWindow":
        # the most recent `capacity` steps, steps counted from 1
        return cls(max(1, k - capacity + 1), k, dt, capacity)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(self.k_prime, self.k + 1)

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.dt

    @property
    def duration(self) -> float:
        return (self.k - self.k_prime) * self.dt


def local_mapping(times, mode: str = "start", dt: float | None = None) -> tuple[float, float]:
    """Return ``(origin, scale)`` for fitting over ``times``.

    ``"start"`` puts the origin at the first sample with one sampling interval
    as the unit; ``"centered"`` maps the window onto [-1, 1], which keeps the
    Vandermonde matrix well conditioned at high orders.
    """
    times = np.asarray(times, dtype=float)
    if mode == "start":
        if dt is None:
            dt = float(np.min(np.diff(times))) if times.size > 1 else 1.0
        return float(times[0]), float(dt)
    if mode == "centered":
        half = 0.5 * float(times[-1] - times[0])
        return 0.5 * float(times[0] + times[-1]), (half if half > 0 else 1.0)
    raise ValueError(f"unknown time mapping {mode!r}")


def vandermonde(window, order: int, origin: float = 0.0, scale: float = 1.0) -> np.ndarray:
    """Design matrix with rows ``[1, s, s**2, ..., s**order]``.

    ``window`` is a TimeWindow or an array of sample times.
    """
    times = window.times if isinstance(window, TimeWindow) else np.asarray(window, dtype=float)
    if times.size == 0:
        raise ValueError("empty window")
    if order < 0:
        raise ValueError("order must be nonnegative")
    if order + 1 > times.size:
        raise ValueError(f"order {order} needs at least {order + 1} samples, window has {times.size}")
    s = (times - origin) / scale
    return np.vander(s, order + 1, increasing=True)
