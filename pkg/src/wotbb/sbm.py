"""Stretched Brownian motion: the martingale LP against a discretized Gaussian,
and the 1-D Bass martingale fixed point."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.stats import norm

from .errors import InfeasibleError, InternalError, NonConvergenceError, ValidationError
from .measures import Coupling, DiscreteMeasure, check_convex_order, mean
from .ot import wasserstein2_1d
from .paths import (
    PathBundle,
    StepMartingale,
    assemble_bundle,
    brownian_increments,
    sample_initial,
)

MARTINGALE_TOL = 1e-8
MARGINAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TripleCoupling:
    """Weights Gamma(x, y, z) with (x, z)-marginal mu (x) gauss and y-marginal nu."""

    mu: DiscreteMeasure
    nu: DiscreteMeasure
    gauss: DiscreteMeasure
    weights: np.ndarray  # (n, m, k)

    def xy(self) -> Coupling:
        return Coupling(self.mu, self.nu, self.weights.sum(axis=2))

    def marginal_error(self) -> float:
        xz = self.weights.sum(axis=1) - np.outer(self.mu.weights, self.gauss.weights)
        y = self.weights.sum(axis=(0, 2)) - self.nu.weights
        return float(max(np.abs(xz).max(), np.abs(y).max()))

    def martingale_error(self) -> float:
        drift = np.einsum("xyk,yd->xd", self.weights, self.nu.points) - self.mu.weights[:, None] * self.mu.points
        return float(np.abs(drift).max())

    def covariance(self) -> float:
        """sum Gamma(x, y, z) <y, z>."""
        yz = self.nu.points @ self.gauss.points.T
        return float(np.einsum("xyk,yk->", self.weights, yz))


@dataclass(frozen=True)
class SbmResult:
    value: float
    triple: TripleCoupling
    martingale_coupling: Coupling
    duals: np.ndarray
    dual_value: float
    dual_gap: float
    dual_violation: float


def _sbm_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, gauss: DiscreteMeasure):
    n, m, k, d = mu.size, nu.size, gauss.size, mu.dim
    nv = n * m * k
    idx = np.arange(nv).reshape(n, m, k)
    ii, jj, kk = np.meshgrid(np.arange(n), np.arange(m), np.arange(k), indexing="ij")
    ii, jj, kk = ii.ravel(), jj.ravel(), kk.ravel()
    ones = np.ones(nv)
    a_xz = sparse.csr_matrix((ones, (ii * k + kk, idx.ravel())), shape=(n * k, nv))
    a_y = sparse.csr_matrix((ones, (jj, idx.ravel())), shape=(m, nv))
    blocks = [a_xz, a_y]
    for c in range(d):
        vals = nu.points[jj, c] - mu.points[ii, c]
        blocks.append(sparse.csr_matrix((vals, (ii, idx.ravel())), shape=(n, nv)))
    a_eq = sparse.vstack(blocks).tocsr()
    b_eq = np.concatenate([np.outer(mu.weights, gauss.weights).ravel(), nu.weights, np.zeros(n * d)])
    cost = -np.einsum("yd,kd->yk", nu.points, gauss.points)[jj, kk]
    return cost, a_eq, b_eq


def solve_sbm(mu: DiscreteMeasure, nu: DiscreteMeasure, gauss: DiscreteMeasure) -> SbmResult:
    """Maximize sum Gamma <y, z> over martingale triple couplings.

    The optimum equals sup over martingale couplings pi of
    sum_x mu(x) MCov(pi_x, gauss), since for a fixed (x, y)-marginal the
    z-part maximizes each inner covariance.
    """
    if not (mu.dim == nu.dim == gauss.dim):
        raise ValidationError("mu, nu and the Gaussian grid must share a dimension")
    cost, a_eq, b_eq = _sbm_lp(mu, nu, gauss)
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        cert = check_convex_order(mu, nu)
        raise InfeasibleError("no martingale coupling: mu is not below nu in convex order", cert)
    if res.status != 0:
        raise InternalError(f"SBM LP failed: {res.message}")
    gamma = np.clip(res.x, 0.0, None).reshape(mu.size, nu.size, gauss.size)
    triple = TripleCoupling(mu, nu, gauss, gamma)
    if triple.martingale_error() > MARTINGALE_TOL or triple.marginal_error() > MARGINAL_TOL:
        cert = check_convex_order(mu, nu)
        if not cert.verdict:
            raise InfeasibleError("no martingale coupling: mu is not below nu in convex order", cert)
        raise InternalError(
            f"SBM LP solution violates constraints (martingale {triple.martingale_error():.2e}, "
            f"marginal {triple.marginal_error():.2e})"
        )
    duals = res.eqlin.marginals
    dual_value = float(b_eq @ duals)
    reduced = cost - a_eq.T @ duals
    value = triple.covariance()
    return SbmResult(
        value=value,
        triple=triple,
        martingale_coupling=triple.xy(),
        duals=duals,
        dual_value=-dual_value,
        dual_gap=abs(-dual_value - value),
        dual_violation=float(max(0.0, -reduced.min())),
    )


@dataclass(frozen=True)
class BassResult:
    """Fixed point of the 1-D Bass construction between mu and nu.

    W_0 ~ ``alpha`` (atoms a_i carrying the weights of mu), grad phi is the
    step map with values nu.points and jumps at ``jumps``; the smoothed map
    g = grad phi * gamma pushes alpha to mu up to ``residual`` in W2.
    ``grid``/``phi_grad``/``smoothed_map`` tabulate both maps for inspection.
    """

    mu: DiscreteMeasure
    nu: DiscreteMeasure
    alpha: DiscreteMeasure
    atoms: np.ndarray  # a_i aligned with mu.points
    jumps: np.ndarray  # (m-1,)
    grid: np.ndarray
    phi_grad: np.ndarray
    smoothed_map: np.ndarray
    residual: float
    iterations: int
    residual_history: list = field(default_factory=list, repr=False)
    flagged: bool = False

    @property
    def degenerate(self) -> bool:
        return self.nu.size == 1

    def grad_phi(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return self.nu.points[np.searchsorted(self.jumps, w, side="left"), 0]

    def smooth(self, a) -> np.ndarray:
        return _smoothed(np.atleast_1d(np.asarray(a, dtype=float)), self.jumps, self.nu.points[:, 0])

    def leg(self) -> StepMartingale:
        if self.degenerate:
            return StepMartingale.constant(self.mu)
        th = self.jumps[None, :] - self.atoms[:, None]
        return StepMartingale(self.mu, self.nu.points[:, 0].copy(), th, "bass")

    def value(self) -> float:
        """E int_0^1 sigma_t dt of the Bass martingale."""
        return self.leg().trace_value()


def _smoothed(a: np.ndarray, t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """g(a) = E[grad phi(a + Z)] for the step map with values y and jump points t."""
    return y[0] + norm.cdf(a[:, None] - t[None, :]) @ np.diff(y)


def _bisect(f, target, lo, hi, iters: int = 200):
    """Vectorized bisection for an increasing f; returns x with f(x) ~ target."""
    lo = np.full_like(target, lo, dtype=float)
    hi = np.full_like(target, hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        up = f(mid) < target
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


def _jump_points(a: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Quantile levels of rho = sum p_i N(a_i, 1) at the cumulative weights of nu."""
    levels = np.cumsum(q)[:-1]
    cdf = lambda t: norm.cdf(t[:, None] - a[None, :]) @ p
    return _bisect(cdf, levels, a.min() - 12.0, a.max() + 12.0)


def bass_fixed_point_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, grid_size: int = 128,
                        tol: float = 1e-9, max_iter: int = 10_000, window: int = 20) -> BassResult:
    """Alternate (i) rho = alpha * gamma, (ii) grad phi = monotone map rho -> nu,
    (iii) g = grad phi * gamma, (iv) alpha <- g^{-1} # mu, until W2(g # alpha, mu) <= tol.

    Gaussian convolutions of the step map grad phi are evaluated in closed
    form. alpha is recentered to mean zero each round (the construction is
    translation invariant). ``flagged`` is set if the residual increased
    anywhere in the last ``window`` iterations.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise ValidationError("Bass fixed point is 1-D only")
    if grid_size < 2:
        raise ValidationError("grid_size must be >= 2")
    x, p = mu.points[:, 0], mu.weights
    y, q = nu.points[:, 0], nu.weights
    if nu.size == 1:
        if mu.size != 1 or abs(x[0] - y[0]) > 1e-12:
            raise InfeasibleError("point-mass target requires mu = nu", check_convex_order(mu, nu))
        grid = np.linspace(y[0] - 6.0, y[0] + 6.0, grid_size)
        const = np.full(grid_size, y[0])
        return BassResult(mu, nu, DiscreteMeasure([0.0]), np.zeros(1), np.empty(0), grid, const, const, 0.0, 0, [0.0])
    if abs(mean(mu)[0] - mean(nu)[0]) > 1e-9 or x.min() <= y.min() or x.max() >= y.max():
        cert = check_convex_order(mu, nu)
        if not cert.verdict:
            raise InfeasibleError("mu is not below nu in convex order", cert)
        raise NonConvergenceError("g is not invertible: an atom of mu sits on the boundary of conv(supp nu)")
    a = x - p @ x
    history = []
    t = None
    for it in range(max_iter + 1):
        t = _jump_points(a, p, q)
        g_a = _smoothed(a, t, y)
        res = float(np.sqrt(p @ (g_a - x) ** 2))
        history.append(res)
        if res <= tol:
            break
        if it == max_iter:
            raise NonConvergenceError(f"Bass iteration stalled at residual {res:.3e}", last_gap=res, iterations=it)
        a = _bisect(lambda s: _smoothed(s, t, y), x, t.min() - 40.0, t.max() + 40.0)
        if not np.all(np.isfinite(a)) or np.any(np.diff(a) <= 0):
            raise NonConvergenceError("g lost invertibility on an atom of mu", last_gap=res, iterations=it)
        a = a - p @ a
    lo = min(x.min(), y.min(), a.min()) - 6.0
    hi = max(x.max(), y.max(), a.max()) + 6.0
    grid = np.linspace(lo, hi, grid_size)
    tail = np.asarray(history[-window:])
    flagged = bool(np.any(np.diff(tail) > 0))
    return BassResult(
        mu=mu, nu=nu, alpha=DiscreteMeasure(a[:, None], p), atoms=a, jumps=t, grid=grid,
        phi_grad=y[np.searchsorted(t, grid, side="left")], smoothed_map=_smoothed(grid, t, y),
        residual=history[-1], iterations=len(history) - 1, residual_history=history, flagged=flagged,
    )


def simulate_leg(leg: StepMartingale, n_paths: int, n_steps: int, seed: int, workers: int = 1) -> PathBundle:
    """Paths of the martingale leg started from leg.start, exact in law on the grid."""
    if n_paths < 1 or n_steps < 1:
        raise ValidationError("n_paths and n_steps must be positive")
    idx, x0 = sample_initial(leg.start, seed, n_paths, workers)
    dB = brownian_increments(seed, n_paths, n_steps, 1, workers)
    times = np.linspace(0.0, 1.0, n_steps + 1)
    M, sig = leg.paths(idx, dB[:, :, 0], times)
    # path starts at the atom; the leg's own start value differs by the fixed-point residual
    target = (x0[:, :1] + (M - M[:, :1]))[:, :, None]
    drift = np.zeros((n_paths, n_steps, 1))
    return assemble_bundle(x0, idx, dB, drift, sig[:, :, None, None], target, seed, leg.start,
                           {"leg": leg.label, "martingale": M})


def simulate_bass_paths(bass: BassResult, n_paths: int, n_steps: int, seed: int = 0, workers: int = 1) -> PathBundle:
    """Sample W_0 ~ alpha and Brownian increments; M_t = E[grad phi(W_1) | W_t]."""
    return simulate_leg(bass.leg(), n_paths, n_steps, seed, workers)
