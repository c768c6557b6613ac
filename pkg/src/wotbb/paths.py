"""Monte Carlo path containers, seeded per-path random streams, martingale legs.

Every path draws its randomness from a Philox stream keyed by
(seed, stream id, path index), so results do not depend on how paths are
split across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .errors import ValidationError
from .measures import Coupling, DiscreteMeasure

STREAM_X0 = 0
STREAM_BROWNIAN = 1
STREAM_KERNEL = 2
STREAM_DRIFT = 3
STREAM_RESAMPLE = 4


def path_rng(seed: int, stream: int, path: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, path))
    return np.random.Generator(np.random.Philox(ss))


def _chunks(n: int, workers: int):
    bounds = np.linspace(0, n, max(1, workers) + 1).astype(int)
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1) if bounds[i + 1] > bounds[i]]


def draw_per_path(seed: int, stream: int, n_paths: int, shape: tuple, kind: str = "normal",
                  workers: int = 1) -> np.ndarray:
    """Stack of per-path draws with shape (n_paths, *shape)."""

    def work(lo_hi):
        lo, hi = lo_hi
        out = np.empty((hi - lo,) + tuple(shape))
        for p in range(lo, hi):
            rng = path_rng(seed, stream, p)
            out[p - lo] = rng.standard_normal(shape) if kind == "normal" else rng.random(shape)
        return out

    parts = _chunks(n_paths, workers)
    if workers <= 1 or len(parts) == 1:
        blocks = [work(c) for c in parts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(work, parts))
    return np.concatenate(blocks, axis=0)


def sample_atoms(weights: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF categorical sampling; one uniform per draw."""
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, uniforms, side="right"), len(weights) - 1)


def brownian_increments(seed: int, n_paths: int, n_steps: int, d: int, workers: int = 1) -> np.ndarray:
    dt = 1.0 / n_steps
    return np.sqrt(dt) * draw_per_path(seed, STREAM_BROWNIAN, n_paths, (n_steps, d), workers=workers)


def sample_initial(mu: DiscreteMeasure, seed: int, n_paths: int, workers: int = 1):
    u = draw_per_path(seed, STREAM_X0, n_paths, (), kind="uniform", workers=workers)
    idx = sample_atoms(mu.weights, u)
    return idx, mu.points[idx]


@dataclass
class PathBundle:
    """Discretized paths of dX = v dt + sigma dB on a uniform grid of [0, 1].

    The trajectory obeys ``X[k+1] = ((X[k] + v[k] dt) + sigma[k] dB[k]) + residual[k]``
    exactly in floating point. ``residual`` is zero for Euler legs; legs that
    are simulated exactly in law (martingale legs given in closed form) store
    the Ito remainder there, so that ``sigma`` is the true diffusion
    coefficient at the left endpoint.
    """

    x0: np.ndarray  # (P, d)
    x0_index: np.ndarray  # (P,)
    dB: np.ndarray  # (P, S, d)
    drift: np.ndarray  # (P, S, d)
    sigma: np.ndarray  # (P, S, d, d)
    X: np.ndarray  # (P, S+1, d)
    residual: np.ndarray  # (P, S, d)
    seed: int
    mu: Optional[DiscreteMeasure] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def n_steps(self) -> int:
        return self.dB.shape[1]

    @property
    def dim(self) -> int:
        return self.X.shape[2]

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    def brownian(self) -> np.ndarray:
        """B on the grid, B[:, 0] = 0."""
        P, S, d = self.dB.shape
        B = np.zeros((P, S + 1, d))
        np.cumsum(self.dB, axis=1, out=B[:, 1:])
        return B

    def terminal(self) -> np.ndarray:
        return self.X[:, -1]

    def replay(self) -> np.ndarray:
        return euler_recursion(self.x0, self.drift, self.sigma, self.dB, self.residual)

    # per-path accumulators
    def drift_energy(self) -> np.ndarray:
        return np.sum(np.sum(self.drift**2, axis=2), axis=1) * self.dt

    def cross_term(self) -> np.ndarray:
        B = self.brownian()[:, :-1]
        return np.sum(np.sum(B * self.drift, axis=2), axis=1) * self.dt

    def trace_term(self) -> np.ndarray:
        return np.sum(np.trace(self.sigma, axis1=2, axis2=3), axis=1) * self.dt


def euler_recursion(x0, drift, sigma, dB, residual) -> np.ndarray:
    P, S, d = dB.shape
    dt = 1.0 / S
    X = np.empty((P, S + 1, d))
    X[:, 0] = x0
    for k in range(S):
        X[:, k + 1] = ((X[:, k] + drift[:, k] * dt) + np.einsum("pij,pj->pi", sigma[:, k], dB[:, k])) + residual[:, k]
    return X


def assemble_bundle(x0, x0_index, dB, drift, sigma, target, seed, mu=None, meta=None) -> PathBundle:
    """Build a bundle whose recursion lands on ``target`` (P, S+1, d) up to rounding.

    Residuals are chosen step by step so that the stored trajectory is exactly
    the replay of the recursion.
    """
    P, S, d = dB.shape
    dt = 1.0 / S
    X = np.empty((P, S + 1, d))
    X[:, 0] = x0
    residual = np.empty((P, S, d))
    for k in range(S):
        pred = (X[:, k] + drift[:, k] * dt) + np.einsum("pij,pj->pi", sigma[:, k], dB[:, k])
        residual[:, k] = target[:, k + 1] - pred
        X[:, k + 1] = pred + residual[:, k]
    return PathBundle(x0, x0_index, dB, drift, sigma, X, residual, seed, mu, dict(meta or {}))


@dataclass(frozen=True)
class StepMartingale:
    """Martingale legs M_t = E[T_i(B_1) | B_t] with step maps T_i, one per start atom.

    ``T_i(z) = values[j]`` for ``thresholds[i, j-1] < z <= thresholds[i, j]``
    (thresholds padded by -inf/+inf), B a standard Brownian motion from 0.
    A Bass martingale with W_0 = a_i and monotone map grad phi with jump
    points t_j is the case ``thresholds[i, j] = t_j - a_i``. Conditional
    expectations and diffusion coefficients are closed-form Gaussian
    smoothings of step functions.
    """

    start: DiscreteMeasure
    values: np.ndarray  # (m,) sorted, the terminal atoms
    thresholds: np.ndarray  # (n_start, m - 1)
    label: str = "step"

    @classmethod
    def from_coupling(cls, kappa: Coupling, label: str = "lp_kernel") -> "StepMartingale":
        """Leg realizing a 1-D martingale coupling: T_i is the quantile map gamma -> kappa_i."""
        if kappa.mu.dim != 1:
            raise ValidationError("step-map legs are 1-D only")
        rows = kappa.weights / kappa.weights.sum(axis=1, keepdims=True)
        cum = np.cumsum(rows, axis=1)[:, :-1]
        with np.errstate(divide="ignore"):
            th = norm.ppf(np.clip(cum, 0.0, 1.0))
        th = np.maximum.accumulate(th, axis=1)
        return cls(kappa.mu, kappa.nu.points[:, 0].copy(), th, label)

    @classmethod
    def constant(cls, start: DiscreteMeasure) -> "StepMartingale":
        """Degenerate leg M_t = M_0."""
        return cls(start, start.points[:, 0].copy(), np.full((start.size, start.size - 1), np.nan), "constant")

    @property
    def is_constant(self) -> bool:
        return self.label == "constant"

    def _jumps(self):
        return np.diff(self.values)

    def conditional(self, i: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
        """f_t(b) = E[T_i(b + sqrt(1-t) Z)] for start indices i and positions b (vectorized)."""
        if self.is_constant:
            return self.values[i]
        s = np.sqrt(max(1.0 - t, 0.0))
        th = self.thresholds[i]
        arg = b[:, None] - th
        if s == 0.0:
            cdf = (arg > 0).astype(float)
        else:
            cdf = norm.cdf(arg / s)
        return self.values[0] + cdf @ self._jumps()

    def diffusion(self, i: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
        """d/db f_t(b); the Ito integrand of the leg."""
        if self.is_constant:
            return np.zeros(len(b))
        s = np.sqrt(max(1.0 - t, 0.0))
        if s == 0.0:
            return np.zeros(len(b))
        arg = (b[:, None] - self.thresholds[i]) / s
        return np.sum(norm.pdf(arg) * self._jumps(), axis=1) / s

    def start_values(self) -> np.ndarray:
        """f_0(0) per start atom; equals the start atom for an exact leg."""
        idx = np.arange(self.start.size)
        return self.conditional(idx, np.zeros(self.start.size), 0.0)

    def trace_value(self) -> float:
        """E int_0^1 sigma_t dt = E[T_i(Z) Z] averaged over start atoms (Stein identity)."""
        if self.is_constant:
            return 0.0
        per_atom = norm.pdf(self.thresholds) @ self._jumps()
        return float(self.start.weights @ per_atom)

    def terminal_law(self) -> DiscreteMeasure:
        if self.is_constant:
            return self.start
        cdf = norm.cdf(self.thresholds)
        p = np.diff(np.concatenate([np.zeros((len(cdf), 1)), cdf, np.ones((len(cdf), 1))], axis=1), axis=1)
        return DiscreteMeasure(self.values[:, None], self.start.weights @ p)

    def paths(self, start_index: np.ndarray, dW: np.ndarray, times: np.ndarray):
        """Evaluate the leg along Brownian increments.

        ``dW`` has shape (P, K) with variance matching the increments of
        ``times`` (K+1 leg-clock times in [0, 1]). Returns (M, sigma) with
        M of shape (P, K+1) and sigma (P, K) at left endpoints.
        """
        P, K = dW.shape
        W = np.zeros((P, K + 1))
        np.cumsum(dW, axis=1, out=W[:, 1:])
        M = np.empty((P, K + 1))
        sig = np.empty((P, K))
        for k in range(K + 1):
            M[:, k] = self.conditional(start_index, W[:, k], times[k])
            if k < K:
                sig[:, k] = self.diffusion(start_index, W[:, k], times[k])
        return M, sig
