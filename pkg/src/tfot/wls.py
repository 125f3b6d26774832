"""Weighted least-squares machinery shared by all window solvers.

Measurements are stacked time-major, ``y = [y_1; y_2; ...; y_T]``, and the
coefficient matrix ``C`` of shape ``(order+1, r)`` is flattened row-major, so
entry ``i * r + d`` is the order-``i`` coefficient of dimension ``d``.  The
whitened design is ``A J (Z kron I_r)`` where ``A^T A`` is the inverse
measurement covariance and ``J`` an optional block-diagonal measurement
Jacobian.  With diagonal per-step covariance and no Jacobian the system
separates into one independent fit per dimension.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .poly import Polynomial, local_mapping, vandermonde


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class FitWindow:
    """Measurements over one sliding window.

    ``variance`` is either per-step ``(T, m, m)`` blocks, a single ``(m, m)``
    block shared by every step, or a full ``(T*m, T*m)`` matrix.
    """

    times: np.ndarray
    measurements: np.ndarray
    variance: np.ndarray
    mean_noise: np.ndarray | None = None
    dt: float | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        y = np.asarray(self.measurements, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape[0] != t.size:
            raise ValueError("one measurement row per time is required")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        m = y.shape[1]
        v = np.asarray(self.variance, dtype=float)
        if v.ndim == 0:
            v = np.broadcast_to(v * np.eye(m), (t.size, m, m))
        elif v.shape == (m, m):
            v = np.broadcast_to(v, (t.size, m, m))
        elif v.shape not in ((t.size, m, m), (t.size * m, t.size * m)):
            raise ValueError(f"variance shape {v.shape} incompatible with {t.size} steps of dimension {m}")
        mean = np.zeros(m) if self.mean_noise is None else np.asarray(self.mean_noise, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "measurements", y)
        object.__setattr__(self, "variance", v)
        object.__setattr__(self, "mean_noise", mean)

    @property
    def size(self) -> int:
        return self.times.size

    @property
    def meas_dim(self) -> int:
        return self.measurements.shape[1]

    @property
    def is_blocked(self) -> bool:
        return self.variance.ndim == 3

    def full_variance(self) -> np.ndarray:
        if self.is_blocked:
            return linalg.block_diag(*self.variance)
        return self.variance

    def spacing(self) -> float:
        if self.dt is not None:
            return float(self.dt)
        return float(np.min(np.diff(self.times))) if self.size > 1 else 1.0


@dataclass(frozen=True)
class WhitenedSystem:
    """``D(C) = ||y - Z vec(C)||^2`` in whitened, vectorised form."""

    Z: np.ndarray
    y: np.ndarray
    dim: int
    origin: float = 0.0
    scale: float = 1.0

    @property
    def order(self) -> int:
        return self.Z.shape[1] // self.dim - 1

    @property
    def n_coeffs(self) -> int:
        return self.Z.shape[1]

    def block(self, i: int) -> np.ndarray:
        """Whitened columns belonging to polynomial order ``i``."""
        return self.Z[:, i * self.dim:(i + 1) * self.dim]

    def truncate(self, order: int) -> "WhitenedSystem":
        if order > self.order:
            raise ValueError(f"system only holds orders up to {self.order}")
        return WhitenedSystem(self.Z[:, :(order + 1) * self.dim], self.y, self.dim, self.origin, self.scale)

    def as_matrix(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float).reshape(-1, self.dim)

    def polynomial(self, theta) -> Polynomial:
        return Polynomial(self.as_matrix(theta), self.origin, self.scale)


def mahalanobis_sq(z, P) -> float:
    """``z^T P^{-1} z`` through a Cholesky solve."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    try:
        cf = linalg.cho_factor(P, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError("covariance is not symmetric positive definite") from exc
    return float(z @ linalg.cho_solve(cf, z))


def _whitener(window: FitWindow):
    """Return a function applying ``A`` with ``A^T A = var^{-1}``."""
    v = window.variance
    if window.is_blocked:
        first = v[0]
        s = first[0, 0]
        if s > 0 and np.all(v == s * np.eye(v.shape[1])):
            # homogeneous noise: a scalar rescale, no factorisation needed
            k = 1.0 / np.sqrt(s)
            return lambda M: k * M
        try:
            chols = [linalg.cholesky(b, lower=True) for b in v]
        except linalg.LinAlgError as exc:
            raise ValueError("measurement covariance block is not positive definite") from exc
        m = v.shape[1]

        def apply(M):
            out = np.empty_like(M, dtype=float)
            for t, Lt in enumerate(chols):
                out[t * m:(t + 1) * m] = linalg.solve_triangular(Lt, M[t * m:(t + 1) * m], lower=True)
            return out
        return apply
    try:
        L = linalg.cholesky(v, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError("measurement covariance is not positive definite") from exc
    return lambda M: linalg.solve_triangular(L, M, lower=True)


def whiten(window: FitWindow, Z: np.ndarray, jacobian: np.ndarray | None = None,
           origin: float = 0.0, scale: float = 1.0) -> WhitenedSystem:
    """Whiten the design ``Z`` (T x (order+1)) and the window measurements.

    ``jacobian`` is the (T*m) x (T*r) block-diagonal measurement Jacobian for
    linearised measurements; without it the state dimension equals the
    measurement dimension.
    """
    T, m = window.measurements.shape
    if Z.shape[0] != T:
        raise ValueError("design matrix needs one row per window step")
    if jacobian is None:
        r = m
        design = np.kron(Z, np.eye(m))
    else:
        jacobian = np.asarray(jacobian, dtype=float)
        if jacobian.shape[0] != T * m or jacobian.shape[1] % T:
            raise ValueError("jacobian must be (T*m) x (T*r)")
        r = jacobian.shape[1] // T
        design = jacobian @ np.kron(Z, np.eye(r))
    target = (window.measurements - window.mean_noise).ravel()
    A = _whitener(window)
    return WhitenedSystem(A(design), A(target), r, origin, scale)


def build_system(window: FitWindow, order: int, mapping: str = "start",
                 jacobian: np.ndarray | None = None) -> WhitenedSystem:
    """Vandermonde design in window-local time, whitened."""
    origin, scale = local_mapping(window.times, mapping, window.spacing())
    Z = vandermonde(window.times, order, origin, scale)
    return whiten(window, Z, jacobian, origin, scale)


def fit_ls(sys: WhitenedSystem, rcond: float = 1e-12) -> np.ndarray:
    """Least-squares coefficients (order+1, r) via a QR factorisation."""
    Q, R = linalg.qr(sys.Z, mode="economic")
    d = np.abs(np.diag(R))
    if d.size == 0 or d.min() <= rcond * d.max():
        raise RankDeficientError("whitened design is rank deficient")
    theta = linalg.solve_triangular(R, Q.T @ sys.y)
    return sys.as_matrix(theta)


def residual(C, sys: WhitenedSystem) -> np.ndarray:
    return sys.y - sys.Z @ np.ravel(C)


def data_fit_error(C, sys: WhitenedSystem) -> float:
    r = residual(C, sys)
    return float(r @ r)


def gradient(C, sys: WhitenedSystem) -> np.ndarray:
    """Gradient of the data-fit error with respect to the flattened coefficients."""
    return -2.0 * sys.Z.T @ residual(C, sys)


def hessian(sys: WhitenedSystem) -> np.ndarray:
    return 2.0 * sys.Z.T @ sys.Z


def smoothness_constants(sys: WhitenedSystem) -> tuple[float, float]:
    """(L, l): extreme eigenvalues of the Hessian ``2 Z^T Z``."""
    ev = linalg.eigvalsh(hessian(sys))
    return float(ev[-1]), float(max(ev[0], 0.0))
