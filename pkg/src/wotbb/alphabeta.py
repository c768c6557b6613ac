"""The alpha/beta functional: barycentric penalty minus Gaussian maximal covariance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .fw import DEFAULT_MAX_ITER, FWProblem, frank_wolfe
from .measures import Coupling, DiscreteMeasure
from .ot import mcov_value
from .sbm import SbmResult, TripleCoupling
from .wot import WotResult


@dataclass(frozen=True)
class AlphaBetaResult:
    alpha: float
    beta: float
    value: float
    triple: TripleCoupling
    coupling: Coupling
    fw_gap: float
    iterations: int
    gauss_n: int
    history: list = field(default_factory=list, repr=False)


def alphabeta_problem(mu: DiscreteMeasure, nu: DiscreteMeasure, gauss: DiscreteMeasure,
                      alpha: float, beta: float) -> FWProblem:
    n, k = mu.size, gauss.size
    return FWProblem(
        source_weights=np.outer(mu.weights, gauss.weights).ravel(),
        group=np.repeat(np.arange(n), k),
        x_points=mu.points,
        x_weights=mu.weights,
        y_points=nu.points,
        y_weights=nu.weights,
        alpha=alpha,
        beta=beta,
        z_points=np.tile(gauss.points, (n, 1)),
    )


def solve_static_alphabeta(mu: DiscreteMeasure, nu: DiscreteMeasure, gauss: DiscreteMeasure,
                           alpha: float, beta: float, tol: float = 1e-10,
                           max_iter: int = DEFAULT_MAX_ITER) -> AlphaBetaResult:
    """Minimize alpha * sum_x mu(x)|mean(pi_x) - x|^2 - beta * sum Gamma <y, z> over triple couplings.

    With w = (x, z) carrying mass mu(x) gauss(z) the feasible set is the
    transportation polytope between mu (x) gauss and nu, so the shared
    Frank-Wolfe engine applies unchanged.
    """
    if alpha <= 0 or beta <= 0:
        raise ValidationError("alpha and beta must be positive")
    if not (mu.dim == nu.dim == gauss.dim):
        raise ValidationError("mu, nu and the Gaussian grid must share a dimension")
    problem = alphabeta_problem(mu, nu, gauss, alpha, beta)
    res = frank_wolfe(problem, tol=tol, max_iter=max_iter)
    gamma = res.plan.reshape(mu.size, gauss.size, nu.size).transpose(0, 2, 1)
    triple = TripleCoupling(mu, nu, gauss, gamma)
    return AlphaBetaResult(
        alpha=alpha, beta=beta, value=res.value, triple=triple, coupling=triple.xy(),
        fw_gap=res.fw_gap, iterations=res.iterations, gauss_n=gauss.size, history=res.history,
    )


def alphabeta_objective(triple: TripleCoupling, alpha: float, beta: float) -> float:
    pi = triple.xy()
    b = pi.barycenters()
    quad = triple.mu.weights @ np.sum((b - triple.mu.points) ** 2, axis=1)
    return float(alpha * quad - beta * triple.covariance())


def compose_optimizer(wot: WotResult, sbm: SbmResult) -> Coupling:
    """pi(x, y) = mu(x) kappa_{T(x)}(y), T the barycentric map, kappa the SBM coupling."""
    kappa = sbm.martingale_coupling
    eta = kappa.mu
    if not eta.allclose(wot.projection, atol=1e-9):
        raise ValidationError("SBM first marginal does not match the WOT projection")
    if kappa.nu.size != wot.coupling.nu.size or not np.allclose(kappa.nu.points, wot.coupling.nu.points):
        raise ValidationError("SBM and WOT target measures differ")
    mu = wot.mu
    rows = np.empty((mu.size, kappa.nu.size))
    for i, tx in enumerate(wot.map_values):
        j = eta.index_of(tx)
        rows[i] = mu.weights[i] * kappa.weights[j] / kappa.weights[j].sum()
    return Coupling(mu, kappa.nu, rows)


def evaluate_alphabeta(pi: Coupling, gauss: DiscreteMeasure, alpha: float, beta: float) -> float:
    """sum_x mu(x) [alpha |mean(pi_x) - x|^2 - beta MCov(pi_x, gauss)], inner MCov solved exactly."""
    mu = pi.mu
    b = pi.barycenters()
    total = 0.0
    for i in range(mu.size):
        cov = mcov_value(pi.conditional(i), gauss)
        total += mu.weights[i] * (alpha * float(np.sum((b[i] - mu.points[i]) ** 2)) - beta * cov)
    return float(total)
