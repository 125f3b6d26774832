"""Solver selection and per-window dispatch shared by the tracker and the CLI."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import chi2

from .l0 import NewtonParams, lambda_floor, solve_l0
from .l1 import AdmmParams, solve_l1
from .poly import Polynomial
from .orls import LAMBDA_TINY, FitResult, fit_fixed_order, geometric_lambda, max_fit_order, order_limited
from .wls import FitWindow, build_system, fit_ls

SOLVER_KINDS = ("fixed", "orls", "l0", "l1")
# window sizes below this are interpolated by plain LS regardless of solver
MIN_REGULARIZED_SAMPLES = 3


@dataclass(frozen=True)
class SolverConfig:
    """``lam`` fixes the penalty; ``lam=None`` applies ``lam_policy`` per window.

    ``anchor="mean"`` fits the window after subtracting the mean measurement,
    so sparsity penalties act on offsets from the window centroid rather than
    on absolute positions.

    Policies: ``geometric`` is the geometric mean of ``(D1/(T-2), D1]``,
    ``floor`` is the l0 guidance bound ``min_i (tau/2) grad_i D(0)^2`` and
    ``min`` takes the smaller of the two and ``noise`` is the
    ``noise_quantile`` quantile of the data-fit reduction that pure noise
    produces when one penalised unit is added (chi-square with r degrees of
    freedom per order for ``orls``, one per coefficient otherwise).
    ``lam_scale`` multiplies the result.
    """

    kind: str = "orls"
    order: int = 1
    lam: float | None = None
    lam_policy: str = "geometric"
    lam_scale: float = 1.0
    noise_quantile: float = 0.99
    gamma_max: int | None = None
    cap: str = "bound"
    mapping: str = "start"
    anchor: str = "none"
    newton: NewtonParams = field(default_factory=NewtonParams)
    admm: AdmmParams = field(default_factory=AdmmParams)
    name: str | None = None

    def __post_init__(self):
        if self.kind not in SOLVER_KINDS:
            raise ValueError(f"unknown solver {self.kind!r}; choose from {SOLVER_KINDS}")
        if self.lam_policy not in ("geometric", "floor", "min", "noise"):
            raise ValueError(f"unknown lambda policy {self.lam_policy!r}")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.cap not in ("bound", "window"):
            raise ValueError(f"unknown order cap {self.cap!r}")
        if self.anchor not in ("none", "mean"):
            raise ValueError(f"unknown anchor {self.anchor!r}")
        if self.kind == "fixed" and self.order < 0:
            raise ValueError("order must be nonnegative")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "fixed":
            return f"fixed:{self.order}"
        return self.kind


def parse_solver(text: str) -> SolverConfig:
    """``fixed:2``, ``orls``, ``orls:lam=5``, ``l0:tau=0.5,lam_policy=min``, ``l1:rho=2``.

    ``label=<text>`` sets the report label; it defaults to the full string.
    """
    name, _, rest = text.partition(":")
    name = name.strip().lower()
    aliases = {"orlslimiting": "orls", "l0newton": "l0", "l1admm": "l1", "fixedorder": "fixed"}
    name = aliases.get(name, name)
    kw: dict = {"name": text.strip()}
    newton: dict = {}
    admm: dict = {}
    if rest:
        if name == "fixed" and "=" not in rest:
            kw["order"] = int(rest)
        else:
            for part in rest.split(","):
                key, _, val = part.partition("=")
                key = key.strip()
                if key in ("order", "gamma_max"):
                    kw[key] = int(val)
                elif key in ("lam", "lam_scale", "noise_quantile"):
                    kw[key] = float(val)
                elif key == "init":
                    newton[key] = val.strip()
                elif key in ("lam_policy", "mapping", "anchor", "cap"):
                    kw[key] = val.strip()
                elif key == "label":
                    kw["name"] = val.strip()
                elif key in ("sigma", "beta", "delta", "tau", "tol") or key in ("max_iters", "strict", "lipschitz_cap"):
                    target = admm if (name == "l1" and key == "max_iters") else newton
                    target[key] = (val.strip().lower() in ("1", "true", "yes")) if key in ("strict", "lipschitz_cap") else (
                        int(val) if key == "max_iters" else float(val))
                elif key in ("rho", "abs_tol", "rel_tol"):
                    admm[key] = float(val)
                else:
                    raise ValueError(f"unknown solver parameter {key!r}")
    if newton:
        kw["newton"] = NewtonParams(**newton)
    if admm:
        kw["admm"] = AdmmParams(**admm)
    return SolverConfig(kind=name, **kw)


# Solver set of the reference experiments.  Every regularised solver uses the
# 0.9999 noise quantile; l1 reuses the l0 penalty for comparability.
_SHARED = "lam_policy=noise,noise_quantile=0.9999"
_SPARSE = f"{_SHARED},mapping=centered,anchor=mean,gamma_max=3"
REFERENCE_SOLVERS = (
    "fixed:1",
    "fixed:2",
    f"orls:label=orls,{_SHARED}",
    f"l1:label=l1,{_SPARSE}",
    f"l0:label=l0,{_SPARSE},lipschitz_cap=1",
)


def window_d1(sys) -> float:
    """Order-1 LS data-fit error on a system holding at least order 1."""
    s1 = sys.truncate(1)
    r = s1.y - s1.Z @ fit_ls(s1).ravel()
    return float(r @ r)


def choose_lambda(cfg: SolverConfig, sys, n_steps: int) -> tuple[float, float]:
    """(lambda, D1) for one window."""
    D1 = window_d1(sys)
    if cfg.lam is not None:
        return cfg.lam, D1
    geo = geometric_lambda(D1, n_steps)
    if cfg.lam_policy == "geometric":
        lam = geo
    elif cfg.lam_policy == "noise":
        lam = float(chi2.ppf(cfg.noise_quantile, sys.dim if cfg.kind == "orls" else 1))
    else:
        floor = lambda_floor(sys, cfg.newton.tau)
        lam = floor if cfg.lam_policy == "floor" else min(geo, floor)
    return max(lam * cfg.lam_scale, LAMBDA_TINY), D1


def _shift_constant(res: FitResult, offset) -> FitResult:
    C = np.array(res.poly.coeffs)
    C[0] += offset
    res.poly = Polynomial(C, res.poly.time_origin, res.poly.time_scale)
    return res


def fit_window(window: FitWindow, cfg: SolverConfig, jacobian=None) -> FitResult:
    """Fit one window with the configured solver.

    Windows with fewer than three samples have no admissible penalty range and
    are fitted by plain LS at order ``min(1, T - 1)``.
    """
    if cfg.anchor == "mean" and jacobian is None:
        offset = window.measurements.mean(axis=0)
        shifted = FitWindow(window.times, window.measurements - offset, window.variance, window.mean_noise, window.dt)
        res = fit_window(shifted, replace(cfg, anchor="none"))
        res.diagnostics["anchor"] = offset.tolist()
        return _shift_constant(res, offset)
    n = window.size
    if cfg.kind == "fixed":
        return fit_fixed_order(window, cfg.order, cfg.mapping, jacobian)
    if n < MIN_REGULARIZED_SAMPLES:
        res = fit_fixed_order(window, 1, cfg.mapping, jacobian)
        res.diagnostics["fallback"] = "short_window"
        return res
    top = max_fit_order(n)
    sys = build_system(window, top, cfg.mapping, jacobian)
    lam, D1 = choose_lambda(cfg, sys, n)
    if cfg.kind == "orls":
        res = order_limited(sys, lam, n)
    else:
        cap = min(math.floor(D1 / lam + 1.0), top) if cfg.cap == "bound" else top
        if cfg.gamma_max is not None:
            cap = min(cap, cfg.gamma_max)
        cap = max(cap, 0)
        sub = sys.truncate(cap)
        if cfg.kind == "l0":
            res = solve_l0(sub, replace(cfg.newton, lam=lam))
        else:
            res = solve_l1(sub, replace(cfg.admm, lam=lam))
        res.diagnostics["gamma_max"] = cap
    res.diagnostics["D1"] = D1
    return res


def prediction(res: FitResult, t: float) -> np.ndarray:
    return res.poly(t)
