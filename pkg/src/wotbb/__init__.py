"""Weak optimal transport solvers and Monte Carlo checks of their dynamic formulations."""

from .alphabeta import AlphaBetaResult, compose_optimizer, evaluate_alphabeta, solve_static_alphabeta
from .dynamics import (
    EnergyEstimate,
    epsilon_split_simulate,
    estimate_dynamic_objective,
    project_drift_on_initial,
    simulate_constant_drift,
    simulate_drift_plus_martingale,
)
from .errors import InfeasibleError, InternalError, NonConvergenceError, ValidationError
from .measures import (
    Coupling,
    DiscreteMeasure,
    barycentric_projection,
    check_convex_order,
    discretize_gaussian,
    load_measure,
    pushforward,
)
from .ot import TransportResult, mcov, solve_ot, t2
from .paths import PathBundle
from .sbm import SbmResult, TripleCoupling, bass_fixed_point_1d, simulate_bass_paths, solve_sbm
from .wot import WotResult, convex_order_projection, solve_barycentric_wot, verify_map_monotone_lipschitz

__all__ = [
    "AlphaBetaResult", "Coupling", "DiscreteMeasure", "EnergyEstimate", "InfeasibleError", "InternalError",
    "NonConvergenceError", "PathBundle", "SbmResult", "TransportResult", "TripleCoupling", "ValidationError",
    "WotResult", "barycentric_projection", "bass_fixed_point_1d", "check_convex_order", "compose_optimizer",
    "convex_order_projection", "discretize_gaussian", "epsilon_split_simulate", "estimate_dynamic_objective",
    "evaluate_alphabeta", "load_measure", "mcov", "project_drift_on_initial", "pushforward",
    "simulate_bass_paths", "simulate_constant_drift", "simulate_drift_plus_martingale", "solve_barycentric_wot",
    "solve_ot", "solve_sbm", "solve_static_alphabeta", "t2", "verify_map_monotone_lipschitz",
]
