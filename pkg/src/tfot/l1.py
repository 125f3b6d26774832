"""l1-regularised comparison fit solved with scaled-form ADMM.

Problem: ``min ||y - Z theta||^2 + lam * ||theta||_1`` split as
``theta = z`` with the quadratic in ``theta`` and the l1 term in ``z``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .orls import FitResult
from .poly import Polynomial
from .wls import FitWindow, WhitenedSystem, build_system


@dataclass(frozen=True)
class AdmmParams:
    lam: float = 1.0
    rho: float = 1.0
    max_iters: int = 5000
    abs_tol: float = 1e-9
    rel_tol: float = 1e-8

    def __post_init__(self):
        for name in ("lam", "rho", "abs_tol", "rel_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


def soft_threshold(v, kappa: float):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def l1_objective(theta, sys: WhitenedSystem, lam: float) -> float:
    r = sys.y - sys.Z @ theta
    return float(r @ r) + lam * float(np.abs(theta).sum())


def solve_l1(sys: WhitenedSystem, params: AdmmParams) -> FitResult:
    n = sys.n_coeffs
    rho, lam = params.rho, params.lam
    # theta-update solves (2 Z^T Z + rho I) theta = 2 Z^T y + rho (z - u)
    cf = linalg.cho_factor(2.0 * sys.Z.T @ sys.Z + rho * np.eye(n), lower=True)
    Zty2 = 2.0 * sys.Z.T @ sys.y
    z = np.zeros(n)
    u = np.zeros(n)
    obj0 = l1_objective(z, sys, lam)
    best_z, best_obj = z.copy(), obj0
    converged = False
    it = 0
    sqn = np.sqrt(n)
    for it in range(1, params.max_iters + 1):
        theta = linalg.cho_solve(cf, Zty2 + rho * (z - u))
        z_old = z
        z = soft_threshold(theta + u, lam / rho)
        u = u + theta - z
        r_norm = np.linalg.norm(theta - z)
        s_norm = rho * np.linalg.norm(z - z_old)
        eps_pri = sqn * params.abs_tol + params.rel_tol * max(np.linalg.norm(theta), np.linalg.norm(z))
        eps_dual = sqn * params.abs_tol + params.rel_tol * rho * np.linalg.norm(u)
        obj = l1_objective(z, sys, lam)
        if obj < best_obj:
            best_z, best_obj = z.copy(), obj
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
    # the last iterate is the sparse ADMM variable; fall back to the best one seen on failure
    final = z if converged else best_z
    r = sys.y - sys.Z @ final
    D = float(r @ r)
    C = sys.as_matrix(final)
    nz_rows = np.flatnonzero(np.any(C != 0.0, axis=1))
    return FitResult(
        poly=Polynomial(C, sys.origin, sys.scale),
        order=int(nz_rows[-1]) if nz_rows.size else 0,
        data_error=D,
        total_cost=D + lam * float(np.abs(final).sum()),
        iterations=it,
        solver="L1ADMM",
        lam=lam,
        diagnostics={"converged": converged, "initial_objective": obj0},
    )


def fit_l1_admm(window: FitWindow, gamma_max: int, params: AdmmParams, mapping: str = "start",
                jacobian=None) -> FitResult:
    if gamma_max + 1 > window.size:
        raise ValueError(f"gamma_max={gamma_max} needs at least {gamma_max + 1} samples")
    return solve_l1(build_system(window, gamma_max, mapping, jacobian), params)
