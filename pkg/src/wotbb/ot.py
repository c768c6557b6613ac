"""Exact discrete optimal transport with dual certificates.

The transportation LP is solved with HiGHS (dual simplex, deterministic for
identical input). Dual potentials are repaired to be exactly feasible
(``v_y = min_x c(x, y) - u_x``) so that the reported duality gap is a valid
certificate. In d=1 the quadratic and covariance costs also have sort-based
closed forms, used as built-in cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import InternalError, ValidationError
from .measures import Coupling, DiscreteMeasure, second_moment

GAP_RTOL = 1e-9
DUAL_TOL = 1e-9
QUANTILE_TOL = 1e-8
COMONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class TransportResult:
    value: float
    coupling: Coupling
    dual_row: np.ndarray
    dual_col: np.ndarray
    gap: float

    def dual_violation(self, cost: np.ndarray) -> float:
        return float(np.max(self.dual_row[:, None] + self.dual_col[None, :] - cost))


def _transport_constraints(n: int, m: int):
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    return sparse.vstack([rows, cols]).tocsr()


def solve_ot(mu: DiscreteMeasure, nu: DiscreteMeasure, cost) -> TransportResult:
    """Minimize <cost, pi> over couplings of mu and nu."""
    cost = np.asarray(cost, dtype=float)
    n, m = mu.size, nu.size
    if cost.shape != (n, m):
        raise ValidationError(f"cost shape {cost.shape} != {(n, m)}")
    if not np.all(np.isfinite(cost)):
        raise ValidationError("cost matrix must be finite")
    if n == 1 or m == 1:
        # the coupling is forced
        pi, u = np.outer(mu.weights, nu.weights), None
    else:
        pi, u = transport_lp(mu.weights, nu.weights, cost)
    return _certify(mu, nu, cost, pi, u)


def transport_lp(a: np.ndarray, b: np.ndarray, cost: np.ndarray):
    """Raw transportation LP on weight vectors; returns (plan, row duals)."""
    n, m = cost.shape
    res = linprog(
        cost.ravel(),
        A_eq=_transport_constraints(n, m),
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status != 0:
        raise InternalError(f"transportation LP failed: {res.message}")
    return np.clip(res.x.reshape(n, m), 0.0, None), res.eqlin.marginals[:n]


def _certify(mu, nu, cost, pi, u) -> TransportResult:
    if u is None:
        u = np.zeros(mu.size)
    # exact dual feasibility by construction
    v = np.min(cost - u[:, None], axis=0)
    u = np.min(cost - v[None, :], axis=1)
    primal = float(np.sum(cost * pi))
    dual = float(mu.weights @ u + nu.weights @ v)
    gap = max(primal - dual, 0.0)
    if gap > GAP_RTOL * (1.0 + abs(primal)):
        raise InternalError(f"OT duality gap {gap:.3e} exceeds tolerance")
    return TransportResult(primal, Coupling(mu, nu, pi), u, v, gap)


def sq_dist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1)


def comonotone_coupling(rho: DiscreteMeasure, varrho: DiscreteMeasure, anti: bool = False) -> np.ndarray:
    """North-west corner rule on sorted 1-D supports (quantile coupling).

    With ``anti=True`` the second measure is traversed in decreasing order.
    """
    if rho.dim != 1 or varrho.dim != 1:
        raise ValidationError("comonotone coupling needs d=1")
    return _northwest(rho.weights, varrho.weights[::-1] if anti else varrho.weights, anti)


def _northwest(a: np.ndarray, b: np.ndarray, flip: bool = False) -> np.ndarray:
    ca = np.concatenate([[0.0], np.cumsum(a)])
    cb = np.concatenate([[0.0], np.cumsum(b)])
    ca[-1] = cb[-1] = 1.0
    lo = np.maximum(ca[:-1, None], cb[None, :-1])
    hi = np.minimum(ca[1:, None], cb[None, 1:])
    pi = np.clip(hi - lo, 0.0, None)
    return pi[:, ::-1] if flip else pi


def t2_quantile_1d(rho: DiscreteMeasure, varrho: DiscreteMeasure) -> float:
    """Integral of |F^-1 - G^-1|^2 over (0, 1), exact on the merged quantile grid."""
    pi = comonotone_coupling(rho, varrho)
    return float(np.sum(pi * sq_dist(rho.points, varrho.points)))


def wasserstein2_1d(rho: DiscreteMeasure, varrho: DiscreteMeasure) -> float:
    return float(np.sqrt(max(t2_quantile_1d(rho, varrho), 0.0)))


def t2(mu: DiscreteMeasure, nu: DiscreteMeasure) -> TransportResult:
    """Quadratic-cost optimal transport value and plan."""
    if mu.dim != nu.dim:
        raise ValidationError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    res = solve_ot(mu, nu, sq_dist(mu.points, nu.points))
    if mu.dim == 1:
        closed = t2_quantile_1d(mu, nu)
        if abs(closed - res.value) > QUANTILE_TOL:
            raise InternalError(f"t2 LP {res.value!r} disagrees with quantile formula {closed!r}")
    return res


def mcov_comonotone_1d(rho: DiscreteMeasure, varrho: DiscreteMeasure) -> float:
    pi = comonotone_coupling(rho, varrho)
    return float(rho.points[:, 0] @ pi @ varrho.points[:, 0])


def mcov(rho: DiscreteMeasure, varrho: DiscreteMeasure) -> TransportResult:
    """Maximal covariance sup_pi E<y, z>; solved as OT on cost -<y, z>.

    The returned ``value`` is the (positive-sign) supremum; the duals are those
    of the minimization with the sign of the cost flipped.
    """
    if rho.dim != varrho.dim:
        raise ValidationError(f"dimension mismatch: {rho.dim} vs {varrho.dim}")
    inner = rho.points @ varrho.points.T
    res = solve_ot(rho, varrho, -inner)
    value = -res.value
    if rho.dim == 1:
        fast = mcov_comonotone_1d(rho, varrho)
        if abs(fast - value) > COMONOTONE_TOL:
            raise InternalError(f"mcov LP {value!r} disagrees with comonotone value {fast!r}")
    return TransportResult(value, res.coupling, res.dual_row, res.dual_col, res.gap)


def mcov_value(rho: DiscreteMeasure, varrho: DiscreteMeasure) -> float:
    """MCov value only; sort-based in d=1, LP otherwise."""
    if rho.dim == 1:
        return mcov_comonotone_1d(rho, varrho)
    return mcov(rho, varrho).value


def w2_mcov_identity_check(rho: DiscreteMeasure, varrho: DiscreteMeasure) -> float:
    """|T2 - M2(rho) - M2(varrho) + 2 MCov|, zero up to solver precision."""
    return abs(t2(rho, varrho).value - second_moment(rho) - second_moment(varrho) + 2.0 * mcov(rho, varrho).value)
