"""Sliding-window polynomial trajectory fitting with order and sparsity penalties."""
from .l0 import NewtonParams, check_tau_stationary, fit_l0, lambda_floor, prox_l0, solve_l0, support_of
from .l1 import AdmmParams, fit_l1_admm, solve_l1
from .measurement import MeasurementKind, MeasurementModel, convert_range_bearing, measure
from .metrics import MetricConfig, ospa, rmse_position, star_id, ta_star_id
from .multitarget import Assignment, Track, TrackSet, associate_gnn, step_tracks
from .orls import FitResult, fit_fixed_order, fit_order_limited, gamma_upper_bound, lambda_bounds, orls_extend
from .poly import Polynomial, TimeWindow, derivative_at, evaluate, vandermonde
from .scenario import ScenarioConfig, load_scenario, simulate_run
from .solvers import REFERENCE_SOLVERS, SolverConfig, fit_window, parse_solver
from .wls import FitWindow, WhitenedSystem, build_system, data_fit_error, fit_ls, mahalanobis_sq, whiten

__all__ = [
    "AdmmParams", "Assignment", "FitResult", "FitWindow", "MeasurementKind", "MeasurementModel",
    "MetricConfig", "NewtonParams", "Polynomial", "REFERENCE_SOLVERS", "ScenarioConfig", "SolverConfig",
    "TimeWindow", "Track", "TrackSet", "WhitenedSystem", "associate_gnn", "build_system",
    "check_tau_stationary", "convert_range_bearing", "data_fit_error", "derivative_at", "evaluate",
    "fit_fixed_order", "fit_l0", "fit_l1_admm", "fit_ls", "fit_order_limited", "fit_window",
    "gamma_upper_bound", "lambda_bounds", "lambda_floor", "load_scenario", "mahalanobis_sq", "measure",
    "orls_extend", "ospa", "parse_solver", "prox_l0", "rmse_position", "simulate_run", "solve_l0",
    "solve_l1", "star_id", "step_tracks", "support_of", "ta_star_id", "vandermonde", "whiten",
]
