"""Barycentric weak optimal transport and its convex-order projection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InternalError, ValidationError
from .fw import DEFAULT_MAX_ITER, FWProblem, frank_wolfe
from .measures import Coupling, DiscreteMeasure, check_convex_order, pushforward
from .ot import t2


@dataclass(frozen=True)
class WotResult:
    """Optimizer of the barycentric problem.

    ``map_values[i]`` is the conditional mean of the optimal coupling at the
    i-th atom of mu, i.e. the discrete gradient map; ``projection`` is its
    pushforward of mu, the closest measure to mu below nu in convex order.
    """

    value: float
    coupling: Coupling
    map_values: np.ndarray
    projection: DiscreteMeasure
    fw_gap: float
    iterations: int
    history: list = field(default_factory=list, repr=False)

    @property
    def mu(self) -> DiscreteMeasure:
        return self.coupling.mu

    def apply(self, x) -> np.ndarray:
        """Evaluate the barycentric map at a support point of mu."""
        return self.map_values[self.mu.index_of(x)]


def wot_problem(mu: DiscreteMeasure, nu: DiscreteMeasure) -> FWProblem:
    return FWProblem(
        source_weights=mu.weights,
        group=np.arange(mu.size),
        x_points=mu.points,
        x_weights=mu.weights,
        y_points=nu.points,
        y_weights=nu.weights,
    )


def solve_barycentric_wot(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-10,
                          max_iter: int = DEFAULT_MAX_ITER) -> WotResult:
    """Minimize sum_x mu(x) |mean(pi_x) - x|^2 over couplings of mu and nu."""
    if mu.dim != nu.dim:
        raise ValidationError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    problem = wot_problem(mu, nu)
    res = frank_wolfe(problem, tol=tol, max_iter=max_iter)
    coupling = Coupling(mu, nu, res.plan)
    bary = problem.barycenters(res.plan)
    return WotResult(
        value=max(res.value, 0.0),
        coupling=coupling,
        map_values=bary,
        projection=pushforward(mu, bary),
        fw_gap=res.fw_gap,
        iterations=res.iterations,
        history=res.history,
    )


def convex_order_projection(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-10,
                            wot: WotResult = None):
    """Return ``(eta_bar, t2_check)`` where t2_check = |T2bar(mu, nu) - T2(mu, eta_bar)|.

    eta_bar is certified to lie below nu in convex order.
    """
    wot = wot if wot is not None else solve_barycentric_wot(mu, nu, tol=tol)
    eta = wot.projection
    cert = check_convex_order(eta, nu, tol=1e-8)
    if not cert.verdict:
        raise InternalError(f"projection failed the convex-order certificate (margin {cert.margin:.3e})")
    return eta, abs(wot.value - t2(mu, eta).value)


@dataclass(frozen=True)
class LipschitzReport:
    passed: bool
    min_ratio: float
    max_ratio: float
    slack: float


def verify_map_monotone_lipschitz(map_values, support, slack: float = 1e-6) -> LipschitzReport:
    """Check that every difference quotient of a 1-D map lies in [-slack, 1 + slack]."""
    x = np.asarray(support, dtype=float)
    f = np.asarray(map_values, dtype=float)
    if (x.ndim == 2 and x.shape[1] != 1) or (f.ndim == 2 and f.shape[1] != 1):
        raise ValidationError("monotone/Lipschitz check is 1-D only")
    x, f = x.ravel(), f.ravel()
    if len(x) < 2 or len(x) != len(f):
        raise ValidationError("need at least two support points with one value each")
    i, j = np.triu_indices(len(x), k=1)
    dx = x[j] - x[i]
    ratios = (f[j] - f[i]) / dx
    lo, hi = float(ratios.min()), float(ratios.max())
    return LipschitzReport(lo >= -slack and hi <= 1.0 + slack, lo, hi, slack)
