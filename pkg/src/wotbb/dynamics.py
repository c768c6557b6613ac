"""Simulated admissible diffusions: constant-drift transport, the epsilon-split
construction, conditional-drift projection and dynamic-objective estimators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InfeasibleError, NonConvergenceError, ValidationError
from .measures import DiscreteMeasure, check_convex_order, discretize_gaussian, irreducible_1d, variance
from .ot import t2, wasserstein2_1d
from .paths import (
    STREAM_KERNEL,
    STREAM_RESAMPLE,
    PathBundle,
    StepMartingale,
    assemble_bundle,
    brownian_increments,
    draw_per_path,
    euler_recursion,
    sample_atoms,
    sample_initial,
)
from .sbm import bass_fixed_point_1d, solve_sbm

N_RESAMPLES = 20
BASS_MAX_ITER = 500


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float
    n_paths: int

    @classmethod
    def of(cls, samples: np.ndarray) -> "Estimate":
        n = len(samples)
        se = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(samples)), se, n)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "se": self.se, "n_paths": self.n_paths}


@dataclass(frozen=True)
class EnergyEstimate:
    drift: Estimate
    cross: Estimate
    trace: Estimate
    combined: Estimate
    alpha: float
    beta: float

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "beta": self.beta,
            "drift": self.drift.to_dict(), "cross": self.cross.to_dict(),
            "trace": self.trace.to_dict(), "combined": self.combined.to_dict(),
        }


def estimate_dynamic_objective(bundle: PathBundle, alpha: float, beta: float) -> EnergyEstimate:
    """Riemann sums of |v|^2, <B, v> (B at left endpoints) and tr sigma, averaged over paths."""
    drift = bundle.drift_energy()
    cross = bundle.cross_term()
    trace = bundle.trace_term()
    combined = alpha * drift - beta * (cross + trace)
    return EnergyEstimate(Estimate.of(drift), Estimate.of(cross), Estimate.of(trace),
                          Estimate.of(combined), float(alpha), float(beta))


def _check_sizes(n_paths: int, n_steps: int):
    if int(n_paths) < 2 or int(n_steps) < 1:
        raise ValidationError("need n_paths >= 2 and n_steps >= 1")


def _map_array(mu: DiscreteMeasure, map_values) -> np.ndarray:
    if callable(map_values):
        vals = np.asarray([np.atleast_1d(map_values(x)) for x in mu.points], dtype=float)
    else:
        vals = np.asarray(map_values, dtype=float)
    if vals.size != mu.size * mu.dim:
        raise ValidationError("map must give one finite point of the same dimension per atom of mu")
    vals = vals.reshape(mu.size, -1)
    if vals.shape[1] != mu.dim or not np.all(np.isfinite(vals)):
        raise ValidationError("map must give one finite point of the same dimension per atom of mu")
    return vals


def simulate_constant_drift(mu: DiscreteMeasure, map_values, n_paths: int, n_steps: int,
                            seed: int = 0, workers: int = 1) -> PathBundle:
    """dX = (T(X_0) - X_0) dt with sigma = 0; Brownian increments are still drawn for the cross term."""
    _check_sizes(n_paths, n_steps)
    vals = _map_array(mu, map_values)
    idx, x0 = sample_initial(mu, seed, n_paths, workers)
    dB = brownian_increments(seed, n_paths, n_steps, mu.dim, workers)
    v = vals[idx] - x0
    drift = np.broadcast_to(v[:, None, :], dB.shape).copy()
    sigma = np.zeros(dB.shape + (mu.dim,))
    t = np.arange(n_steps + 1) / n_steps
    target = x0[:, None, :] + t[None, :, None] * v[:, None, :]
    return assemble_bundle(x0, idx, dB, drift, sigma, target, seed, mu, {"kind": "constant_drift"})


@dataclass(frozen=True)
class LegChoice:
    leg: StepMartingale
    tolerance: float  # start-law error of the leg, in W2
    source: str


def martingale_leg(eta: DiscreteMeasure, nu: DiscreteMeasure, gauss_n: int = 32,
                   bass_tol: float = 1e-9) -> LegChoice:
    """Bass leg from eta to nu; the LP kernel of the discretized problem when Bass is unavailable.

    The Bass fixed point only exists for irreducible pairs. Reducible pairs
    (common for WOT projections, which touch nu's convex hull) fall back to
    a step-map leg realizing the optimal SBM coupling row by row.
    """
    if eta.dim != 1 or nu.dim != 1:
        raise ValidationError("martingale legs are 1-D only")
    if nu.size == 1:
        if eta.size != 1 or not eta.allclose(nu, atol=1e-9):
            raise InfeasibleError("point-mass target requires eta = nu", check_convex_order(eta, nu))
        return LegChoice(StepMartingale.constant(eta), 0.0, "constant")
    if irreducible_1d(eta, nu):
        try:
            bass = bass_fixed_point_1d(eta, nu, tol=bass_tol, max_iter=BASS_MAX_ITER)
            return LegChoice(bass.leg(), bass.residual, "bass")
        except NonConvergenceError:
            pass
    sbm = solve_sbm(eta, nu, discretize_gaussian(gauss_n))
    leg = StepMartingale.from_coupling(sbm.martingale_coupling)
    err = float(np.sqrt(eta.weights @ (leg.start_values() - eta.points[:, 0]) ** 2))
    return LegChoice(leg, err, "lp_kernel")


def _leg_window(leg: StepMartingale, start: np.ndarray, dB: np.ndarray, scale: float):
    """Run ``leg`` on increments dB / scale over a full unit leg clock."""
    k = dB.shape[1]
    times = np.linspace(0.0, 1.0, k + 1)
    return leg.paths(start, dB / scale, times)


@dataclass(frozen=True)
class SplitReport:
    eps: float
    drift: Estimate
    expected_drift: float
    deterministic: bool
    drift_discrepancy: float
    drift_tolerance: float
    drift_ok: bool
    terminal_w2: float
    leg_tolerance: float
    mc_error: float
    marginal_tolerance: float
    marginal_ok: bool
    leg: str

    @property
    def passed(self) -> bool:
        return self.drift_ok and self.marginal_ok

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["drift"] = self.drift.to_dict()
        out["passed"] = self.passed
        return out


def empirical_w2_error(nu: DiscreteMeasure, n: int, seed: int, resamples: int = N_RESAMPLES) -> float:
    """Mean W2 between nu and empirical measures of ``n`` i.i.d. draws from nu."""
    u = draw_per_path(seed, STREAM_RESAMPLE, resamples, (n,), kind="uniform")
    errs = [wasserstein2_1d(DiscreteMeasure.from_samples(nu.points[sample_atoms(nu.weights, row)]), nu)
            for row in u]
    return float(np.mean(errs))


def epsilon_split_simulate(mu: DiscreteMeasure, eta: DiscreteMeasure, nu: DiscreteMeasure, eps: float,
                           n_paths: int, n_steps: int, seed: int = 0, leg: Optional[LegChoice] = None,
                           workers: int = 1, gauss_n: int = 32):
    """Transport mu -> eta on [0, 1-eps] at speed 1/(1-eps), then a martingale eta -> nu
    squeezed into (1-eps, 1].

    Returns ``(bundle, report)``. Targets of the transport phase are drawn
    from the rows of the quadratic OT plan (Monge rows are deterministic).
    """
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie in (0, 1)")
    _check_sizes(n_paths, n_steps)
    if mu.dim != 1 or eta.dim != 1 or nu.dim != 1:
        raise ValidationError("the epsilon-split simulation is 1-D only")
    k1 = int(round((1.0 - eps) * n_steps))
    if abs(k1 - (1.0 - eps) * n_steps) > 1e-9 or k1 < 1 or k1 >= n_steps:
        raise ValidationError("(1 - eps) * n_steps must be an integer strictly between 0 and n_steps")
    cert = check_convex_order(eta, nu, tol=1e-8)
    if not cert.verdict:
        raise InfeasibleError("eta is not below nu in convex order", cert)
    leg = leg if leg is not None else martingale_leg(eta, nu, gauss_n)

    plan = t2(mu, eta)
    rows = plan.coupling.weights / mu.weights[:, None]
    idx, x0 = sample_initial(mu, seed, n_paths, workers)
    u = draw_per_path(seed, STREAM_KERNEL, n_paths, (), kind="uniform", workers=workers)
    cdf = np.cumsum(rows, axis=1)
    cdf[:, -1] = 1.0
    jdx = np.minimum(np.sum(u[:, None] >= cdf[idx], axis=1), eta.size - 1)
    y = eta.points[jdx]

    dB = brownian_increments(seed, n_paths, n_steps, 1, workers)
    v = (y - x0) / (1.0 - eps)
    drift = np.zeros_like(dB)
    drift[:, :k1] = v[:, None, :]
    M, sig = _leg_window(leg.leg, jdx, dB[:, k1:, 0], np.sqrt(eps))
    sigma = np.zeros(dB.shape + (1,))
    sigma[:, k1:, 0, 0] = sig / np.sqrt(eps)

    target = np.empty((n_paths, n_steps + 1, 1))
    frac = np.arange(k1 + 1) / k1
    target[:, : k1 + 1] = x0[:, None, :] + frac[None, :, None] * (y - x0)[:, None, :]
    target[:, k1:, 0] = y[:, :1] + (M - M[:, :1])
    bundle = assemble_bundle(x0, idx, dB, drift, sigma, target, seed, mu,
                             {"kind": "epsilon_split", "eps": eps, "leg": leg.source, "eta_index": jdx,
                              "martingale": M})

    energy = Estimate.of(bundle.drift_energy())
    expected = plan.value / (1.0 - eps)
    # rounding in the Riemann sums leaves an SE of order 1e-17 on deterministic energies
    deterministic = energy.se <= 1e-12 * (1.0 + abs(energy.mean))
    tol_drift = 1e-9 if deterministic else 3.0 * energy.se
    discrepancy = abs(energy.mean - expected)
    w2 = wasserstein2_1d(DiscreteMeasure.from_samples(bundle.terminal()), nu)
    mc = empirical_w2_error(nu, n_paths, seed)
    tol_marg = leg.tolerance + 3.0 * mc
    report = SplitReport(
        eps=float(eps), drift=energy, expected_drift=expected, deterministic=deterministic,
        drift_discrepancy=discrepancy, drift_tolerance=tol_drift, drift_ok=discrepancy <= tol_drift,
        terminal_w2=w2, leg_tolerance=leg.tolerance, mc_error=mc, marginal_tolerance=tol_marg,
        marginal_ok=w2 <= tol_marg, leg=leg.source,
    )
    return bundle, report


def simulate_drift_plus_martingale(mu: DiscreteMeasure, map_values, nu: DiscreteMeasure, n_paths: int,
                             n_steps: int, seed: int = 0, leg: Optional[LegChoice] = None,
                             workers: int = 1, gauss_n: int = 32) -> PathBundle:
    """dX = (T(X_0) - X_0) dt + sigma dB with sigma the martingale leg from T(X_0) to nu.

    Drift and martingale run together on [0, 1], driven by the same B, so
    X_1 = T(X_0) + M_1 - M_0.
    """
    _check_sizes(n_paths, n_steps)
    vals = _map_array(mu, map_values)
    if mu.dim != 1 or nu.dim != 1:
        raise ValidationError("the simulated process is 1-D only")
    eta = DiscreteMeasure(vals, mu.weights)
    leg = leg if leg is not None else martingale_leg(eta, nu, gauss_n)
    start = np.array([leg.leg.start.index_of(p, atol=1e-8) for p in vals])
    idx, x0 = sample_initial(mu, seed, n_paths, workers)
    dB = brownian_increments(seed, n_paths, n_steps, 1, workers)
    v = vals[idx] - x0
    drift = np.broadcast_to(v[:, None, :], dB.shape).copy()
    M, sig = _leg_window(leg.leg, start[idx], dB[:, :, 0], 1.0)
    sigma = sig[:, :, None, None]
    t = np.arange(n_steps + 1) / n_steps
    target = x0[:, None, :] + t[None, :, None] * v[:, None, :] + (M - M[:, :1])[:, :, None]
    return assemble_bundle(x0, idx, dB, drift, sigma, target, seed, mu,
                           {"kind": "drift_plus_martingale", "leg": leg.source, "martingale": M})


@dataclass(frozen=True)
class ProjectionReport:
    energy_before: float
    energy_after: float
    max_drift_change: float
    convex_order_margin: Optional[float] = None
    convex_order_tol: Optional[float] = None
    convex_order_ok: Optional[bool] = None

    @property
    def jensen_ok(self) -> bool:
        return self.energy_after <= self.energy_before + 1e-12


def project_drift_on_initial(bundle: PathBundle, nu: Optional[DiscreteMeasure] = None):
    """Replace v_t by its average over paths sharing the same X_0 atom; drop the diffusion.

    With ``nu`` given, the report also tests the projected terminal law
    against nu in convex order at tolerance 0.05 * std(nu).
    """
    P, S, d = bundle.drift.shape
    groups = bundle.x0_index
    n_groups = int(groups.max()) + 1
    sums = np.zeros((n_groups, S, d))
    np.add.at(sums, groups, bundle.drift)
    counts = np.bincount(groups, minlength=n_groups)
    means = sums / np.maximum(counts, 1)[:, None, None]
    drift = means[groups]
    sigma = np.zeros_like(bundle.sigma)
    residual = np.zeros_like(bundle.residual)
    X = euler_recursion(bundle.x0, drift, sigma, bundle.dB, residual)
    projected = PathBundle(bundle.x0, groups, bundle.dB, drift, sigma, X, residual, bundle.seed, bundle.mu,
                           {**bundle.meta, "projected": True})
    before = float(np.mean(bundle.drift_energy()))
    after = float(np.mean(projected.drift_energy()))
    change = float(np.max(np.abs(drift - bundle.drift))) if drift.size else 0.0
    margin = tol = ok = None
    if nu is not None:
        emp = DiscreteMeasure.from_samples(projected.terminal())
        tol = 0.05 * float(np.sqrt(variance(nu)))
        cert = check_convex_order(emp, nu, tol=tol)
        margin, ok = cert.margin, bool(cert.verdict)
    return projected, ProjectionReport(before, after, change, margin, tol, ok)
