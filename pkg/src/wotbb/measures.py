"""Finitely supported probability measures, couplings and convex order."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.stats import norm

from .errors import ValidationError

MERGE_TOL = 1e-9
WEIGHT_SUM_TOL = 1e-8
MAX_ATOMS = 200_000
CONVEX_ORDER_TOL = 1e-10


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValidationError(f"points must be a non-empty (n, d) array, got shape {arr.shape}")
    return arr


def _merge_sorted(points: np.ndarray, weights: np.ndarray, tol: float):
    """Lexicographic sort, then merge runs of atoms closer than ``tol`` (max-norm)."""
    order = np.lexsort(points.T[::-1])
    points, weights = points[order], weights[order]
    if len(points) == 1:
        return points, weights
    close = np.all(np.abs(np.diff(points, axis=0)) <= tol, axis=1)
    if not close.any():
        return points, weights
    group = np.concatenate([[0], np.cumsum(~close)])
    n_groups = group[-1] + 1
    w = np.bincount(group, weights=weights, minlength=n_groups)
    p = np.empty((n_groups, points.shape[1]))
    for k in range(points.shape[1]):
        s = np.bincount(group, weights=weights * points[:, k], minlength=n_groups)
        p[:, k] = s / w
    # a merged group keeps its first point exactly when all members coincide
    first = np.searchsorted(group, np.arange(n_groups))
    last = np.r_[first[1:], len(group)] - 1
    same = np.all(points[first] == points[last], axis=1)
    p[same] = points[first[same]]
    return p, w


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure with finitely many atoms in R^d.

    Construction canonicalizes: zero-weight atoms are dropped, atoms within
    ``MERGE_TOL`` of each other are merged, and atoms are sorted
    lexicographically. Weights are renormalized to sum to one after checking
    that they already do up to ``WEIGHT_SUM_TOL``.
    """

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = _as_points(self.points)
        if self.weights is None:
            w = np.full(len(pts), 1.0 / len(pts))
        else:
            w = np.asarray(self.weights, dtype=float).ravel()
        if len(w) != len(pts):
            raise ValidationError(f"{len(pts)} points but {len(w)} weights")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise ValidationError("points and weights must be finite")
        if np.any(w < 0):
            if w.min() < -1e-12:
                raise ValidationError(f"negative weight {w.min()}")
            w = np.clip(w, 0.0, None)
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f"weights sum to {total!r}, expected 1")
        keep = w > 0
        pts, w = pts[keep], w[keep]
        pts, w = _merge_sorted(pts, w, MERGE_TOL)
        w = w / w.sum()
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        return cls(np.atleast_1d(np.asarray(point, dtype=float))[None, :])

    @classmethod
    def from_samples(cls, samples) -> "DiscreteMeasure":
        """Empirical measure of a sample array of shape (N,) or (N, d)."""
        x = _as_points(samples)
        pts, counts = np.unique(x, axis=0, return_counts=True)
        return cls(pts, counts / counts.sum())

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"DiscreteMeasure(n={self.size}, d={self.dim})"

    def to_dict(self) -> dict:
        return {"dim": self.dim, "points": self.points.tolist(), "weights": self.weights.tolist()}

    def allclose(self, other: "DiscreteMeasure", atol: float = MERGE_TOL) -> bool:
        return (
            self.points.shape == other.points.shape
            and np.allclose(self.points, other.points, rtol=0, atol=atol)
            and np.allclose(self.weights, other.weights, rtol=0, atol=atol)
        )

    def index_of(self, point, atol: float = MERGE_TOL) -> int:
        """Index of the atom at ``point``; raises KeyError if absent."""
        dist = np.max(np.abs(self.points - np.atleast_1d(point)), axis=1)
        i = int(np.argmin(dist))
        if dist[i] > atol:
            raise KeyError(f"no atom within {atol} of {point}")
        return i


@dataclass(frozen=True, eq=False)
class Coupling:
    """Joint weights over support(mu) x support(nu).

    Row i normalized by ``mu.weights[i]`` is the disintegration at the i-th atom.
    """

    mu: DiscreteMeasure
    nu: DiscreteMeasure
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.mu.size, self.nu.size):
            raise ValidationError(f"coupling shape {w.shape} != {(self.mu.size, self.nu.size)}")
        w = np.clip(w, 0.0, None)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def marginal_error(self) -> float:
        return max(
            np.max(np.abs(self.weights.sum(axis=1) - self.mu.weights)),
            np.max(np.abs(self.weights.sum(axis=0) - self.nu.weights)),
        )

    def conditional(self, i: int) -> DiscreteMeasure:
        row = self.weights[i]
        return DiscreteMeasure(self.nu.points, row / row.sum())

    def barycenters(self) -> np.ndarray:
        """Conditional means mean(pi_x), one row per atom of mu."""
        rows = self.weights.sum(axis=1)
        if np.any(rows <= 0):
            raise ValidationError("coupling has a zero-mass row")
        return (self.weights @ self.nu.points) / rows[:, None]

    def transpose(self) -> "Coupling":
        return Coupling(self.nu, self.mu, self.weights.T)


@dataclass(frozen=True)
class ConvexOrderCertificate:
    """Outcome of a convex-order test with a replayable witness.

    For a positive verdict ``coupling`` is a martingale coupling. For a
    negative one the piecewise-affine convex function
    ``f(y) = max_k <slopes[k], y> + intercepts[k]`` integrates to more under
    mu than under nu, by ``margin``.
    """

    verdict: bool
    margin: float
    coupling: Optional[np.ndarray] = None
    slopes: Optional[np.ndarray] = None
    intercepts: Optional[np.ndarray] = None

    def test_function(self, y) -> np.ndarray:
        y = _as_points(y)
        return np.max(y @ self.slopes.T + self.intercepts, axis=1)

    def replay(self, mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-9) -> bool:
        """Re-check the witness against (mu, nu); returns the verdict it supports."""
        if self.verdict:
            pi = self.coupling
            if pi is None or np.any(pi < -tol):
                return False
            ok_marg = (
                np.max(np.abs(pi.sum(axis=1) - mu.weights)) <= tol
                and np.max(np.abs(pi.sum(axis=0) - nu.weights)) <= tol
            )
            drift = pi @ nu.points - pi.sum(axis=1)[:, None] * mu.points
            return bool(ok_marg and np.max(np.abs(drift)) <= tol)
        gap = mu.weights @ self.test_function(mu.points) - nu.weights @ self.test_function(nu.points)
        return not (gap > 0)


def mean(rho: DiscreteMeasure) -> np.ndarray:
    return rho.weights @ rho.points


def second_moment(rho: DiscreteMeasure) -> float:
    return float(rho.weights @ np.sum(rho.points**2, axis=1))


def variance(rho: DiscreteMeasure) -> float:
    m = mean(rho)
    return float(rho.weights @ np.sum((rho.points - m) ** 2, axis=1))


def quantile(rho: DiscreteMeasure, u):
    """Left-continuous generalized inverse CDF, ``inf{y : F(y) >= u}``. 1-D only."""
    if rho.dim != 1:
        raise ValidationError("quantile is defined for d=1 only")
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValidationError("quantile level must lie in (0, 1)")
    cdf = np.cumsum(rho.weights)
    idx = np.searchsorted(cdf, u - 1e-15, side="left")
    idx = np.minimum(idx, rho.size - 1)
    out = rho.points[idx, 0]
    return float(out) if out.ndim == 0 else out


def pushforward(rho: DiscreteMeasure, f: Union[Callable, np.ndarray]) -> DiscreteMeasure:
    """Image measure f#rho; ``f`` is a callable on points or an array of images per atom."""
    if callable(f):
        images = np.array([np.atleast_1d(f(p)) for p in rho.points], dtype=float)
    else:
        images = _as_points(f)
        if len(images) != rho.size:
            raise ValidationError("one image per support point is required")
    return DiscreteMeasure(images, rho.weights)


def barycentric_projection(pi: Coupling):
    """Return ``(map_values, image)`` with map_values[i] = mean(pi_{x_i}) and image = map#mu."""
    bary = pi.barycenters()
    return bary, pushforward(pi.mu, bary)


def discretize_gaussian(n: int, d: int = 1, max_atoms: int = MAX_ATOMS) -> DiscreteMeasure:
    """Midpoint-quantile grid for the standard normal, recentered to mean zero.

    d > 1 uses the d-fold product of the 1-D grid.
    """
    if n < 2 or d < 1:
        raise ValidationError("need n >= 2 and d >= 1")
    if n**d > max_atoms:
        raise ValidationError(f"n^d = {n**d} exceeds the atom budget {max_atoms}")
    grid = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    grid = grid - grid.mean()
    if d == 1:
        return DiscreteMeasure(grid[:, None], np.full(n, 1.0 / n))
    mesh = np.meshgrid(*([grid] * d), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return DiscreteMeasure(pts, np.full(len(pts), 1.0 / len(pts)))


def _check_dims(mu: DiscreteMeasure, nu: DiscreteMeasure):
    if mu.dim != nu.dim:
        raise ValidationError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


def _martingale_constraints(mu: DiscreteMeasure, nu: DiscreteMeasure):
    n, m, d = mu.size, nu.size, mu.dim
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    # sum_y pi(x, y) (y - x) = 0 per x and coordinate
    bary = []
    for k in range(d):
        diff = nu.points[None, :, k] - mu.points[:, None, k]
        bary.append(sparse.csr_matrix((diff.ravel(), (np.repeat(np.arange(n), m), np.arange(n * m))), shape=(n, n * m)))
    return rows, cols, sparse.vstack(bary)


def check_convex_order(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = CONVEX_ORDER_TOL) -> ConvexOrderCertificate:
    """Decide mu <=_c nu by martingale-coupling feasibility.

    First solves the slack LP ``min sum |barycenter residual|`` over couplings
    of mu and nu. A slack at most ``tol`` counts as feasible and the coupling is
    returned as witness. Otherwise the dual LP is solved to extract a convex
    piecewise-affine test function separating the two measures.
    """
    _check_dims(mu, nu)
    n, m, d = mu.size, nu.size, mu.dim
    rows, cols, bary = _martingale_constraints(mu, nu)
    nv = n * m
    ns = n * d
    a_eq = sparse.vstack([
        sparse.hstack([rows, sparse.csr_matrix((n, 2 * ns))]),
        sparse.hstack([cols, sparse.csr_matrix((m, 2 * ns))]),
        sparse.hstack([bary, sparse.eye(ns), -sparse.eye(ns)]),
    ]).tocsr()
    b_eq = np.concatenate([mu.weights, nu.weights, np.zeros(ns)])
    c = np.concatenate([np.zeros(nv), np.ones(2 * ns)])
    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"convex-order slack LP failed: {res.message}")
    slack = float(res.fun)
    if slack <= tol:
        pi = np.clip(res.x[:nv].reshape(n, m), 0.0, None)
        return ConvexOrderCertificate(True, slack, coupling=pi)
    slopes, intercepts = _separating_function(mu, nu)
    cert = ConvexOrderCertificate(False, 0.0, slopes=slopes, intercepts=intercepts)
    gap = float(mu.weights @ cert.test_function(mu.points) - nu.weights @ cert.test_function(nu.points))
    return ConvexOrderCertificate(False, gap, slopes=slopes, intercepts=intercepts)


def _separating_function(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Dual of the slack LP: max <mu,u> + <nu,v> s.t. u_x + v_y + <h_x, y - x> <= 0, |h| <= 1.

    Returns slopes h_x and intercepts u_x - <h_x, x> of f = max_x affine_x.
    """
    n, m, d = mu.size, nu.size, mu.dim
    ii = np.repeat(np.arange(n), m)
    jj = np.tile(np.arange(m), n)
    blocks = [
        sparse.csr_matrix((np.ones(n * m), (np.arange(n * m), ii)), shape=(n * m, n)),
        sparse.csr_matrix((np.ones(n * m), (np.arange(n * m), jj)), shape=(n * m, m)),
    ]
    for k in range(d):
        diff = nu.points[jj, k] - mu.points[ii, k]
        blocks.append(sparse.csr_matrix((diff, (np.arange(n * m), ii)), shape=(n * m, n)))
    a_ub = sparse.hstack(blocks).tocsr()
    c = -np.concatenate([mu.weights, nu.weights, np.zeros(n * d)])
    bounds = [(None, None)] * n + [(0, 0)] + [(None, None)] * (m - 1) + [(-1, 1)] * (n * d)
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(n * m), bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"convex-order dual LP failed: {res.message}")
    u = res.x[:n]
    h = np.stack([res.x[n + m + k * n: n + m + (k + 1) * n] for k in range(d)], axis=1)
    return h, u - np.sum(h * mu.points, axis=1)


def convex_order_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-12) -> bool:
    """Fast 1-D test: equal means and call prices E(X-k)+ dominated at all kinks."""
    if mu.dim != 1 or nu.dim != 1:
        raise ValidationError("convex_order_1d needs d=1")
    if abs(mean(mu)[0] - mean(nu)[0]) > tol:
        return False
    ks = np.union1d(mu.points[:, 0], nu.points[:, 0])
    call = lambda r: r.weights @ np.maximum(r.points[:, 0][:, None] - ks[None, :], 0.0)
    return bool(np.all(call(mu) <= call(nu) + tol))


def irreducible_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-9) -> bool:
    """mu <=_c nu with call-price gap strictly positive on the open hull of supp nu.

    The gap is piecewise linear with kinks at atoms of either measure, so
    checking those kinks suffices.
    """
    if not convex_order_1d(mu, nu, tol=1e-8):
        return False
    lo, hi = nu.points[0, 0], nu.points[-1, 0]
    if mu.points[0, 0] <= lo or mu.points[-1, 0] >= hi:
        return False
    ks = np.union1d(mu.points[:, 0], nu.points[:, 0])
    ks = ks[(ks > lo) & (ks < hi)]
    call = lambda r: r.weights @ np.maximum(r.points[:, 0][:, None] - ks[None, :], 0.0)
    return bool(np.all(call(nu) - call(mu) > tol))


def load_measure(path: Union[str, Path]) -> DiscreteMeasure:
    with open(path) as fh:
        data = json.load(fh)
    return measure_from_dict(data)


def measure_from_dict(data: dict) -> DiscreteMeasure:
    try:
        dim = int(data["dim"])
        pts = np.asarray(data["points"], dtype=float).reshape(-1, dim)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed measure record: {exc}") from exc
    return DiscreteMeasure(pts, data.get("weights"))


def dump_measure(rho: DiscreteMeasure, path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        json.dump(rho.to_dict(), fh)
