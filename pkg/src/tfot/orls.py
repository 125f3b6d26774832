"""Order-limited polynomial fitting by order-recursive least squares.

The cost ``D(C_g) + lam * (g + 1)`` is minimised by growing the order from
zero, one column block at a time, until the drop in data-fit error no longer
pays for the extra order or the order hits its upper bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .poly import Polynomial
from .wls import FitWindow, WhitenedSystem, build_system, fit_ls

COLLINEAR_RTOL = 1e-10
# stands in for lambda when the order-1 residual vanishes (noiseless lines)
LAMBDA_TINY = 1e-12


class CollinearColumnError(ArithmeticError):
    """The appended column lies (numerically) in the span of the current design."""


@dataclass
class FitResult:
    poly: Polynomial
    order: int
    data_error: float
    total_cost: float
    iterations: int
    solver: str
    lam: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def coeffs(self) -> np.ndarray:
        return self.poly.coeffs

    @property
    def converged(self) -> bool:
        return bool(self.diagnostics.get("converged", True))

    def summary(self) -> dict:
        return {
            "solver": self.solver,
            "order": self.order,
            "data_error": self.data_error,
            "total_cost": self.total_cost,
            "lambda": self.lam,
            "iterations": self.iterations,
            "converged": self.converged,
            "time_origin": self.poly.time_origin,
            "time_scale": self.poly.time_scale,
            "coeffs": self.poly.coeffs.tolist(),
        }


@dataclass(frozen=True)
class OrlsState:
    """LS fit at one order: ``theta`` is the flattened coefficient matrix and
    ``B`` the inverse Gram matrix of the whitened design ``Z``."""

    gamma: int
    theta: np.ndarray
    B: np.ndarray
    D: float
    Z: np.ndarray
    resid: np.ndarray
    dim: int

    @property
    def C_hat(self) -> np.ndarray:
        return self.theta.reshape(-1, self.dim)

    def error_per_dim(self, meas_dim: int | None = None) -> np.ndarray:
        m = meas_dim or self.dim
        return (self.resid.reshape(-1, m) ** 2).sum(axis=0)


def orls_init(Z0: np.ndarray, y: np.ndarray) -> OrlsState:
    """Direct LS at order zero."""
    Z0 = np.atleast_2d(np.asarray(Z0, dtype=float))
    if Z0.shape[0] != y.shape[0]:
        Z0 = Z0.T
    G = Z0.T @ Z0
    B = np.linalg.inv(G)
    theta = B @ (Z0.T @ y)
    e = y - Z0 @ theta
    return OrlsState(0, theta, B, float(e @ e), Z0, e, Z0.shape[1])


def _append_column(Z, theta, B, D, e, z):
    b = B @ (Z.T @ z)
    w = z - Z @ b
    denom = float(z @ w)
    if abs(denom) <= COLLINEAR_RTOL * float(z @ z):
        raise CollinearColumnError("appended column is numerically collinear with the design")
    num = float(z @ e)
    k = num / denom
    theta = np.concatenate([theta - b * k, [k]])
    n = B.shape[0]
    B_new = np.empty((n + 1, n + 1))
    B_new[:n, :n] = B + np.outer(b, b) / denom
    B_new[:n, n] = -b / denom
    B_new[n, :n] = -b / denom
    B_new[n, n] = 1.0 / denom
    # the downdate D - num^2/denom cancels badly once D is small; use the updated residual
    e = e - w * k
    D = float(e @ e)
    return np.column_stack([Z, z]), theta, B_new, D, e


def orls_extend(state: OrlsState, new_column: np.ndarray, y: np.ndarray) -> OrlsState:
    """Grow the fit by one order.

    ``new_column`` holds the whitened columns of the next order, ``(n,)`` or
    ``(n, r)``; multi-column blocks are appended one column at a time.
    """
    cols = np.asarray(new_column, dtype=float)
    if cols.ndim == 1:
        cols = cols[:, None]
    Z, theta, B, D, e = state.Z, state.theta, state.B, state.D, state.resid
    for j in range(cols.shape[1]):
        Z, theta, B, D, e = _append_column(Z, theta, B, D, e, cols[:, j])
    return OrlsState(state.gamma + 1, theta, B, D, Z, e, state.dim)


def prop2_interval(D1: float, n_steps: int) -> tuple[float, float]:
    if n_steps <= 2:
        raise ValueError("the lambda interval needs at least 3 samples in the window")
    return D1 / (n_steps - 2), D1


def lambda_bounds(window: FitWindow, mapping: str = "start", jacobian=None) -> tuple[float, float]:
    """Open-closed interval ``(D1 / (T - 2), D1]`` for the order penalty."""
    if window.size <= 2:
        raise ValueError("the lambda interval needs at least 3 samples in the window")
    sys = build_system(window, 1, mapping, jacobian)
    D1 = float(np.sum((sys.y - sys.Z @ fit_ls(sys).ravel()) ** 2))
    return prop2_interval(D1, window.size)


def gamma_upper_bound(D1: float, lam: float) -> float:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return D1 / lam + 1.0


def geometric_lambda(D1: float, n_steps: int) -> float:
    """Default order penalty: geometric mean of the interval ends."""
    lo, hi = prop2_interval(D1, n_steps)
    return max(math.sqrt(lo * hi), LAMBDA_TINY)


def max_fit_order(n_steps: int) -> int:
    """Highest order allowed in a window of ``n_steps`` samples.

    Interpolating orders (``n_steps - 1``) are excluded once there are three or
    more samples; shorter windows are simply interpolated.
    """
    return n_steps - 2 if n_steps >= 3 else n_steps - 1


def order_limited(sys: WhitenedSystem, lam: float, n_steps: int) -> FitResult:
    """Grid search over the order on a system holding every candidate order."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    top = min(max_fit_order(n_steps), sys.order)
    state = orls_init(sys.block(0), sys.y)
    history = [state.D]
    cap = top
    D1 = None
    reason = "max_order"
    while state.gamma < cap:
        try:
            nxt = orls_extend(state, sys.block(state.gamma + 1), sys.y)
        except CollinearColumnError:
            reason = "collinear"
            break
        if nxt.gamma == 1:
            D1 = nxt.D
            cap = min(top, math.floor(gamma_upper_bound(D1, lam)))
        history.append(nxt.D)
        if state.D - nxt.D <= lam:
            reason = "halting"
            break
        state = nxt
        if state.gamma >= cap:
            reason = "bound"
    poly = Polynomial(state.C_hat, sys.origin, sys.scale)
    return FitResult(
        poly=poly,
        order=state.gamma,
        data_error=state.D,
        total_cost=state.D + lam * (state.gamma + 1),
        iterations=len(history) - 1,
        solver="ORLS",
        lam=lam,
        diagnostics={"halted_by": reason, "D1": D1, "errors": history, "order_cap": cap},
    )


def fit_order_limited(window: FitWindow, lam: float | None = None, mapping: str = "start",
                      jacobian=None) -> FitResult:
    """Order-limited fit of one window.

    ``lam=None`` picks the geometric mean of the admissible interval, computed
    on this window.
    """
    if lam is not None and not lam > 0:
        raise ValueError("lambda must be positive")
    n = window.size
    top = max_fit_order(n)
    sys = build_system(window, max(top, 1) if n >= 2 else 0, mapping, jacobian)
    if lam is None:
        if n >= 3:
            D1 = float(np.sum((sys.y - sys.truncate(1).Z @ fit_ls(sys.truncate(1)).ravel()) ** 2))
            lam = geometric_lambda(D1, n)
        else:
            lam = LAMBDA_TINY
    return order_limited(sys, lam, n)


def fit_fixed_order(window: FitWindow, order: int, mapping: str = "start", jacobian=None) -> FitResult:
    """Plain weighted LS at ``min(order, T - 1)``."""
    g = min(order, window.size - 1)
    sys = build_system(window, g, mapping, jacobian)
    C = fit_ls(sys)
    D = float(np.sum((sys.y - sys.Z @ C.ravel()) ** 2))
    return FitResult(Polynomial(C, sys.origin, sys.scale), g, D, D, 1, "FixedOrder")
