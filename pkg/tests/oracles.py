"""Independent reference computations used only by the tests."""

import cvxpy as cp
import mpmath
import numpy as np
from scipy import integrate
from scipy.stats import norm

from wotbb.measures import DiscreteMeasure

CLARABEL = {"solver": "CLARABEL", "tol_gap_abs": 1e-12, "tol_gap_rel": 1e-12, "tol_feas": 1e-12}


def normal_quantile(u: float) -> float:
    """High-precision standard normal quantile."""
    mpmath.mp.dps = 40
    return float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(u) - 1))


def wot_value_cvx(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    P = cp.Variable((mu.size, nu.size), nonneg=True)
    bary = P @ nu.points - cp.multiply(mu.weights[:, None], mu.points)
    obj = cp.sum(cp.multiply(1.0 / mu.weights[:, None], cp.square(bary)))
    prob = cp.Problem(cp.Minimize(obj), [cp.sum(P, axis=1) == mu.weights, cp.sum(P, axis=0) == nu.weights])
    prob.solve(**CLARABEL)
    return float(prob.value)


def alphabeta_value_cvx(mu, nu, gauss, alpha, beta) -> float:
    """min over Gamma(x, y, z) with (x,z)-marginal mu x gauss and y-marginal nu (1-D)."""
    n, m, k = mu.size, nu.size, gauss.size
    G = cp.Variable((n * k, m), nonneg=True)  # row (x, z), column y
    src = np.outer(mu.weights, gauss.weights).ravel()
    agg = np.kron(np.eye(n), np.ones((1, k)))
    y = nu.points[:, 0]
    bary = agg @ G @ y - mu.weights * mu.points[:, 0]
    z = np.tile(gauss.points[:, 0], n)
    cov = cp.sum(cp.multiply(np.outer(z, y), G))
    obj = alpha * cp.sum(cp.multiply(1.0 / mu.weights, cp.square(bary))) - beta * cov
    prob = cp.Problem(cp.Minimize(obj), [cp.sum(G, axis=1) == src, cp.sum(G, axis=0) == nu.weights])
    prob.solve(**CLARABEL)
    return float(prob.value)


def smoothed_step_quad(a: float, values: np.ndarray, jumps: np.ndarray) -> float:
    """E[T(a + Z)] for the step map T with the given values and jump points, by adaptive quadrature."""
    def T(w):
        return values[np.searchsorted(jumps, w, side="left")]

    edges = np.concatenate([[-np.inf], jumps - a, [np.inf]])
    total = 0.0
    for lo, hi, v in zip(edges[:-1], edges[1:], values):
        total += v * integrate.quad(norm.pdf, lo, hi, epsabs=1e-14)[0]
    return total


def step_covariance_quad(values: np.ndarray, thresholds: np.ndarray) -> float:
    """E[T(Z) Z] for a step map with the given thresholds."""
    edges = np.concatenate([[-np.inf], thresholds, [np.inf]])
    return sum(v * integrate.quad(lambda z: z * norm.pdf(z), lo, hi, epsabs=1e-14)[0]
               for lo, hi, v in zip(edges[:-1], edges[1:], values))
