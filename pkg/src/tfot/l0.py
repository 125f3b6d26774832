"""l0-regularised fitting with a hybrid Newton method.

Minimises ``D(C) + lam * ||C||_0`` where the l0 norm counts nonzero scalar
coefficients.  Each iteration guesses the support from one proximal
hard-thresholding step, takes a Newton step on the stationary equation
restricted to that support (or a gradient step when the Newton step fails the
descent test) and backtracks until the smooth part decreases sufficiently.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .orls import FitResult
from .poly import Polynomial
from .wls import FitWindow, WhitenedSystem, build_system, fit_ls, gradient, hessian, smoothness_constants

LIPSCHITZ_MARGIN = 0.99


@dataclass(frozen=True)
class NewtonParams:
    sigma: float = 5e-5
    beta: float = 0.5
    delta: float = 1e-10
    tau: float = 1.0
    lam: float = 1.0
    max_iters: int = 100
    tol: float = 1e-6
    max_backtracks: int = 50
    # "ls": LS fit hard-thresholded once; "zero": start from the origin
    init: str = "ls"
    # clamp tau to the bound under which the convergence theory holds
    strict: bool = False
    # clamp tau below 1/L, where the global minimiser is guaranteed tau-stationary
    lipschitz_cap: bool = False

    def __post_init__(self):
        if not 0 < self.sigma < 0.5:
            raise ValueError("sigma must lie in (0, 1/2)")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not (self.tau > 0 and self.lam > 0 and self.tol > 0):
            raise ValueError("tau, lambda and tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.init not in ("ls", "zero"):
            raise ValueError(f"unknown initialisation {self.init!r}")


def tau_upper_bound(L: float, delta: float, sigma: float, beta: float, n_orders: int) -> float:
    """Largest step parameter covered by the convergence analysis."""
    alpha = min((1 - 2 * sigma) / (L / delta - sigma), 2 * (1 - sigma) * delta / L, 1.0)
    return 2 * alpha * delta * beta / (n_orders * L * L)


def prox_l0(c, tau: float, lam: float):
    """Hard threshold at ``sqrt(2 tau lam)``; ties go to zero."""
    c = np.asarray(c, dtype=float)
    out = np.where(np.abs(c) > math.sqrt(2.0 * tau * lam), c, 0.0)
    return out if out.ndim else float(out)


def support_of(C, grad, tau: float, lam: float) -> np.ndarray:
    """Sorted indices with ``|c_i - tau * grad_i| >= sqrt(2 tau lam)``."""
    u = np.ravel(C) - tau * np.ravel(grad)
    return np.flatnonzero(np.abs(u) >= math.sqrt(2.0 * tau * lam))


def _complement(T: np.ndarray, n: int) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    mask[T] = False
    return np.flatnonzero(mask)


def stationary_residual(C, T, sys: WhitenedSystem) -> np.ndarray:
    """Stacked ``[grad_T D(C); C_Tbar]``; zero exactly at a solution of the
    support-restricted stationary equation."""
    theta = np.ravel(C)
    T = np.asarray(T, dtype=int)
    Tc = _complement(T, theta.size)
    g = gradient(theta, sys)
    return np.concatenate([g[T], theta[Tc]])


def newton_direction(C, T, sys: WhitenedSystem, tau: float = 1.0, delta: float = 1e-10,
                     H: np.ndarray | None = None) -> tuple[np.ndarray, bool]:
    """Newton direction on support ``T`` with the descent acceptance test.

    Returns ``(s, accepted)``; when the restricted Hessian cannot be factored
    or the test fails, ``s`` is the gradient direction and ``accepted`` is False.
    """
    theta = np.ravel(C)
    T = np.asarray(T, dtype=int)
    Tc = _complement(T, theta.size)
    g = gradient(theta, sys)
    H = hessian(sys) if H is None else H
    p = g[T]
    s = np.empty_like(theta)
    s[Tc] = -theta[Tc]
    if T.size:
        try:
            cf = linalg.cho_factor(H[np.ix_(T, T)], lower=True)
            s[T] = linalg.cho_solve(cf, H[np.ix_(T, Tc)] @ theta[Tc] - p)
        except (linalg.LinAlgError, ValueError):
            s[T] = -p
            return s, False
        if not np.all(np.isfinite(s)):
            s[T] = -p
            return s, False
        lhs = float(p @ s[T])
        rhs = -delta * float(s @ s) + float(theta[Tc] @ theta[Tc]) / (4.0 * tau)
        if lhs > rhs:
            s[T] = -p
            return s, False
    return s, True


def check_tau_stationary(C, tau: float, lam: float, sys: WhitenedSystem, tol: float = 1e-6) -> bool:
    """Whether ``C`` is a fixed point of the prox-gradient map.

    At the threshold the prox is two-valued, so both 0 and the gradient-step
    value are accepted there.
    """
    theta = np.ravel(C)
    u = theta - tau * gradient(theta, sys)
    thr = math.sqrt(2.0 * tau * lam)
    for ci, ui in zip(theta, u):
        scale = max(1.0, abs(ui))
        keeps = abs(ci - ui) <= tol * scale
        zero = abs(ci) <= tol * scale
        a = abs(ui)
        if abs(a - thr) <= tol * max(1.0, thr):
            ok = keeps or zero
        elif a > thr:
            ok = keeps
        else:
            ok = zero
        if not ok:
            return False
    return True


def lambda_floor(sys: WhitenedSystem, tau: float) -> float:
    """``min_i (tau / 2) * grad_i D(0)^2`` over the nonzero gradient entries."""
    g0 = np.abs(gradient(np.zeros(sys.n_coeffs), sys))
    nz = g0[g0 > 0]
    if nz.size == 0:
        warnings.warn("data-fit gradient vanishes at the origin; lambda floor is 0", RuntimeWarning)
        return 0.0
    return float(0.5 * tau * np.min(nz) ** 2)


def regularized_cost(theta, sys: WhitenedSystem, lam: float) -> float:
    r = sys.y - sys.Z @ theta
    return float(r @ r) + lam * int(np.count_nonzero(theta))


def solve_l0(sys: WhitenedSystem, params: NewtonParams, theta0=None) -> FitResult:
    """Hybrid Newton iterations on a whitened system."""
    n = sys.n_coeffs
    L, ell = smoothness_constants(sys)
    if ell <= 0:
        raise ValueError("data-fit error is not strongly convex (rank-deficient design)")
    delta = min(params.delta, 0.5 * ell)
    tau = params.tau
    if params.lipschitz_cap:
        tau = min(tau, LIPSCHITZ_MARGIN / L)
    if params.strict:
        tau = min(tau, tau_upper_bound(L, delta, params.sigma, params.beta, sys.order + 1))
    lam = params.lam
    H = hessian(sys)

    if theta0 is None:
        theta = prox_l0(fit_ls(sys).ravel(), tau, lam) if params.init == "ls" else np.zeros(n)
    else:
        theta = np.array(theta0, dtype=float).ravel()

    def smooth(th):
        r = sys.y - sys.Z @ th
        return float(r @ r)

    cost = smooth(theta) + lam * np.count_nonzero(theta)
    best_theta, best_cost = theta.copy(), cost
    history = [cost]
    T_prev = None
    converged = False
    newton_steps = gradient_steps = 0
    G_norm = math.inf
    it = 0
    for it in range(params.max_iters + 1):
        g = -2.0 * sys.Z.T @ (sys.y - sys.Z @ theta)
        T = support_of(theta, g, tau, lam)
        Tc = _complement(T, n)
        G_norm = math.hypot(float(np.linalg.norm(g[T])), float(np.linalg.norm(theta[Tc])))
        supp_ok = not np.any(theta[Tc] != 0.0)
        if T_prev is not None and supp_ok and np.array_equal(T, T_prev) and G_norm <= params.tol:
            converged = True
            break
        if it == params.max_iters:
            break

        s, accepted = newton_direction(theta, T, sys, tau, delta, H)
        newton_steps += accepted
        gradient_steps += not accepted

        # backtrack on the smooth part with the off-support entries zeroed
        base = np.zeros(n)
        base[T] = theta[T]
        f0 = smooth(base)
        sT = s[T]
        slope = float((-2.0 * sys.Z[:, T].T @ (sys.y - sys.Z @ base)) @ sT) if T.size else 0.0
        if slope >= 0.0 and T.size:
            # gradient fallback taken at the old point is not a descent direction here
            sT = 2.0 * sys.Z[:, T].T @ (sys.y - sys.Z @ base)
            slope = -float(sT @ sT)
        rho = 1.0
        trial = base.copy()
        for _ in range(params.max_backtracks):
            trial[T] = theta[T] + rho * sT
            if smooth(trial) <= f0 + params.sigma * rho * slope:
                break
            rho *= params.beta
        theta = trial
        cost = smooth(theta) + lam * np.count_nonzero(theta)
        history.append(cost)
        if cost < best_cost:
            best_theta, best_cost = theta.copy(), cost
        T_prev = T

    if not converged:
        theta = best_theta
    D = smooth(theta)
    poly = Polynomial(sys.as_matrix(theta), sys.origin, sys.scale)
    nz_rows = np.flatnonzero(np.any(poly.coeffs != 0.0, axis=1))
    return FitResult(
        poly=poly,
        order=int(nz_rows[-1]) if nz_rows.size else 0,
        data_error=D,
        total_cost=D + lam * int(np.count_nonzero(theta)),
        iterations=it,
        solver="L0Newton",
        lam=lam,
        diagnostics={
            "converged": converged,
            "stationarity_norm": G_norm if converged else None,
            "newton_steps": newton_steps,
            "gradient_steps": gradient_steps,
            "tau": tau,
            "delta": delta,
            "support": np.flatnonzero(theta).tolist(),
            "cost_history": history,
        },
    )


def fit_l0(window: FitWindow, gamma_max: int, params: NewtonParams, mapping: str = "start",
           jacobian=None) -> FitResult:
    if gamma_max + 1 > window.size:
        raise ValueError(f"gamma_max={gamma_max} needs at least {gamma_max + 1} samples")
    sys = build_system(window, gamma_max, mapping, jacobian)
    return solve_l0(sys, params)


def with_lambda(params: NewtonParams, lam: float) -> NewtonParams:
    return replace(params, lam=lam)
