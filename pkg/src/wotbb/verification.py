"""Seeded check batteries: static value identities, simulated dynamics, solver cross-checks.

Every check produces a :class:`Check` with the measured discrepancy, the
tolerance it is held to and a pass flag. Batteries are deterministic
functions of their :class:`SuiteConfig`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .alphabeta import compose_optimizer, evaluate_alphabeta, solve_static_alphabeta
from .dynamics import (
    empirical_w2_error,
    epsilon_split_simulate,
    estimate_dynamic_objective,
    martingale_leg,
    project_drift_on_initial,
    simulate_constant_drift,
    simulate_drift_plus_martingale,
)
from .measures import DiscreteMeasure, check_convex_order, discretize_gaussian
from .ot import mcov, mcov_comonotone_1d, t2, w2_mcov_identity_check, wasserstein2_1d
from .paths import (
    STREAM_DRIFT,
    PathBundle,
    brownian_increments,
    draw_per_path,
    euler_recursion,
    sample_initial,
)
from .sbm import bass_fixed_point_1d, simulate_bass_paths, solve_sbm
from .wot import solve_barycentric_wot, verify_map_monotone_lipschitz

SUITES = ("thm1", "lemma1", "thm2", "props")
ALPHA_BETA_GRID = ((1.0, 1.0), (2.0, 0.5), (0.5, 2.0))
EPS_GRID = (0.5, 0.25, 0.1)

# instance-family tags for seed derivation
_RANDOM, _CONVEX, _IRREDUCIBLE, _ALPHABETA, _DRIFT, _SPLIT, _SCALING = range(7)


@dataclass(frozen=True)
class SuiteConfig:
    seed: int = 0
    n_paths: int = 10_000
    n_steps: int = 200
    gauss_n: int = 32
    tol: float = 1e-10
    workers: int = 1


@dataclass
class Check:
    criterion: int
    name: str
    instance: str
    discrepancy: float
    tolerance: float
    passed: bool
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SuiteResult:
    suite: str
    config: SuiteConfig
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> dict:
        out = {}
        for c in self.checks:
            s = out.setdefault(str(c.criterion), {"checks": 0, "failed": 0, "worst_ratio": 0.0})
            s["checks"] += 1
            s["failed"] += int(not c.passed)
            ratio = c.discrepancy / c.tolerance if c.tolerance > 0 else (0.0 if c.discrepancy == 0 else np.inf)
            s["worst_ratio"] = float(max(s["worst_ratio"], ratio))
        for s in out.values():
            s["passed"] = s["failed"] == 0
        return out

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg.pop("workers")  # execution detail; results do not depend on it
        return {
            "suite": self.suite,
            "config": cfg,
            "passed": self.passed,
            "summary": self.summary(),
            "checks": [c.to_dict() for c in self.checks],
        }


def _check(criterion, name, instance, discrepancy, tolerance, passed=None, **info) -> Check:
    discrepancy = float(discrepancy)
    tolerance = float(tolerance)
    ok = discrepancy <= tolerance if passed is None else bool(passed)
    return Check(criterion, name, str(instance), discrepancy, tolerance, ok, info)


# ---------------------------------------------------------------- instances

def instance_rng(seed: int, family: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(family, index)))


def random_measure_1d(rng: np.random.Generator, max_atoms: int = 6, lo: float = -2.0, hi: float = 2.0,
                      min_atoms: int = 1) -> DiscreteMeasure:
    n = int(rng.integers(min_atoms, max_atoms + 1))
    return DiscreteMeasure(rng.uniform(lo, hi, n), rng.dirichlet(np.ones(n)))


def random_pair_1d(seed: int, index: int, family: int = _RANDOM):
    rng = instance_rng(seed, family, index)
    return random_measure_1d(rng, min_atoms=2), random_measure_1d(rng, min_atoms=2)


def convex_order_pair(seed: int, index: int):
    """mu random; nu = mu pushed through a random mean-preserving kernel."""
    rng = instance_rng(seed, _CONVEX, index)
    mu = random_measure_1d(rng, max_atoms=4, lo=-1.5, hi=1.5, min_atoms=2)
    pts, wts = [], []
    for x, p in zip(mu.points[:, 0], mu.weights):
        k = int(rng.integers(2, 4))
        off = rng.uniform(-0.5, 0.5, k)
        q = rng.dirichlet(np.ones(k))
        off -= q @ off
        pts.append(x + off)
        wts.append(p * q)
    return mu, DiscreteMeasure(np.concatenate(pts), np.concatenate(wts))


def irreducible_pair(seed: int, index: int, n: int = 4, m: int = 5):
    """Joint law of (E[Y|X], Y) for a strictly positive kernel; irreducible by construction."""
    rng = instance_rng(seed, _IRREDUCIBLE, index)
    y = np.sort(rng.uniform(-2.0, 2.0, m))
    joint = rng.uniform(0.2, 1.0, (n, m))
    joint /= joint.sum()
    mu = DiscreteMeasure(joint @ y / joint.sum(axis=1), joint.sum(axis=1))
    return mu, DiscreteMeasure(y, joint.sum(axis=0))


def path_dependent_bundle(mu: DiscreteMeasure, n_paths: int, n_steps: int, seed: int,
                          workers: int = 1) -> PathBundle:
    """Drift depending on X_0, the Brownian path and extra noise; random diffusion."""
    rng = instance_rng(seed, _DRIFT, 0)
    a, c, s = rng.normal(size=mu.size), rng.normal(), rng.uniform(0.1, 1.0)
    idx, x0 = sample_initial(mu, seed, n_paths, workers)
    dB = brownian_increments(seed, n_paths, n_steps, 1, workers)
    noise = draw_per_path(seed, STREAM_DRIFT, n_paths, (n_steps, 1), workers=workers)
    B = np.concatenate([np.zeros((n_paths, 1, 1)), np.cumsum(dB, axis=1)[:, :-1]], axis=1)
    drift = a[idx][:, None, None] + c * np.sin(3.0 * B) + s * noise
    sigma = np.full((n_paths, n_steps, 1, 1), 0.5)
    residual = np.zeros_like(dB)
    X = euler_recursion(x0, drift, sigma, dB, residual)
    return PathBundle(x0, idx, dB, drift, sigma, X, residual, seed, mu, {"kind": "path_dependent"})


def alphabeta_instance(seed: int, index: int):
    return random_pair_1d(seed, index, _ALPHABETA)


# ---------------------------------------------------------------- batteries

def battery_thm1(cfg: SuiteConfig) -> list:
    checks = []
    for i in range(20):
        mu, nu = random_pair_1d(cfg.seed, i)
        w = solve_barycentric_wot(mu, nu, tol=cfg.tol)
        eta = w.projection
        gap = abs(w.value - t2(mu, eta).value)
        cert = check_convex_order(eta, nu, tol=1e-8)
        checks.append(_check(1, "wot_value_equals_t2_to_projection", i, gap, 1e-6, gap <= 1e-6 and cert.verdict,
                             wot_value=w.value, convex_order=bool(cert.verdict), convex_margin=cert.margin))
        lip = verify_map_monotone_lipschitz(w.map_values, mu.points)
        excess = max(0.0, -lip.min_ratio, lip.max_ratio - 1.0)
        checks.append(_check(1, "projection_map_monotone_1lipschitz", i, excess, lip.slack,
                             min_ratio=lip.min_ratio, max_ratio=lip.max_ratio))
    for i in range(10):
        mu, nu = convex_order_pair(cfg.seed, i)
        w = solve_barycentric_wot(mu, nu, tol=cfg.tol)
        checks.append(_check(3, "wot_vanishes_in_convex_order", i, w.value, 1e-6))
    mu, nu = DiscreteMeasure.dirac(2.0), DiscreteMeasure([-1.0, 1.0])
    w = solve_barycentric_wot(mu, nu, tol=cfg.tol)
    exact = w.projection.allclose(DiscreteMeasure.dirac(0.0), atol=1e-9)
    checks.append(_check(4, "closed_form_dirac_two_point", "delta2_vs_pm1", abs(w.value - 4.0), 1e-8,
                         abs(w.value - 4.0) <= 1e-8 and exact, value=w.value, projection_is_delta0=exact))
    return checks


def battery_lemma1(cfg: SuiteConfig) -> list:
    checks = []
    cases = [("delta0_delta1_two_point", DiscreteMeasure.dirac(0.0), DiscreteMeasure.dirac(1.0),
              DiscreteMeasure([0.0, 2.0]))]
    for i in range(3):
        mu, nu = random_pair_1d(cfg.seed, i, _SPLIT)
        eta = solve_barycentric_wot(mu, nu, tol=cfg.tol).projection
        cases.append((f"random{i}", mu, eta, nu))
    for name, mu, eta, nu in cases:
        leg = martingale_leg(eta, nu, cfg.gauss_n)
        for eps in EPS_GRID:
            bundle, rep = epsilon_split_simulate(mu, eta, nu, eps, cfg.n_paths, cfg.n_steps, cfg.seed,
                                                 leg=leg, workers=cfg.workers)
            checks.append(_check(2, "split_drift_energy", f"{name}/eps={eps}", rep.drift_discrepancy,
                                 rep.drift_tolerance, energy=rep.drift.mean, se=rep.drift.se,
                                 expected=rep.expected_drift, deterministic=rep.deterministic, leg=rep.leg))
            checks.append(_check(2, "split_terminal_marginal", f"{name}/eps={eps}", rep.terminal_w2,
                                 rep.marginal_tolerance, leg_tolerance=rep.leg_tolerance, mc_error=rep.mc_error))
        projected, prep = project_drift_on_initial(bundle, nu)
        est = estimate_dynamic_objective(projected, 1.0, 0.0)
        checks.append(_check(10, "cross_term_projected_split", name, abs(est.cross.mean), 3.0 * est.cross.se,
                             mean=est.cross.mean, se=est.cross.se))
        checks.append(_check(2, "projected_terminal_below_nu", name, prep.convex_order_margin,
                             prep.convex_order_tol, bool(prep.convex_order_ok)))
    for i in range(20):
        rng = instance_rng(cfg.seed, _DRIFT, i)
        mu = random_measure_1d(rng)
        bundle = path_dependent_bundle(mu, 2000, 50, cfg.seed * 1000 + i, cfg.workers)
        _, rep = project_drift_on_initial(bundle)
        increase = rep.energy_after - rep.energy_before
        checks.append(_check(11, "projection_does_not_increase_energy", i, max(increase, 0.0), 1e-12,
                             before=rep.energy_before, after=rep.energy_after))
    return checks


def _dynamic_slack(est) -> float:
    return 0.02 * (abs(est.alpha * est.drift.mean) + abs(est.beta * est.trace.mean))


def battery_thm2(cfg: SuiteConfig) -> list:
    checks = []
    gauss = discretize_gaussian(cfg.gauss_n)
    for i in range(20):
        mu, nu = alphabeta_instance(cfg.seed, i)
        w = solve_barycentric_wot(mu, nu, tol=cfg.tol)
        bundle = simulate_drift_plus_martingale(mu, w.map_values, nu, cfg.n_paths, cfg.n_steps, cfg.seed + i,
                                          workers=cfg.workers, gauss_n=cfg.gauss_n)
        composite = compose_optimizer(w, solve_sbm(w.projection, nu, gauss))
        for alpha, beta in ALPHA_BETA_GRID:
            static = solve_static_alphabeta(mu, nu, gauss, alpha, beta, tol=cfg.tol).value
            est = estimate_dynamic_objective(bundle, alpha, beta)
            tol = 3.0 * est.combined.se + _dynamic_slack(est)
            checks.append(_check(8, "dynamic_objective_matches_static", f"{i}/a={alpha},b={beta}",
                                 abs(est.combined.mean - static), tol, dynamic=est.combined.mean,
                                 se=est.combined.se, static=static, leg=bundle.meta["leg"],
                                 composite=evaluate_alphabeta(composite, gauss, alpha, beta)))
        est = estimate_dynamic_objective(bundle, 1.0, 1.0)
        checks.append(_check(10, "cross_term_drift_plus_martingale", i, abs(est.cross.mean), 3.0 * est.cross.se,
                             mean=est.cross.mean, se=est.cross.se))
        const = simulate_constant_drift(mu, w.map_values, cfg.n_paths, cfg.n_steps, cfg.seed + 100 + i,
                                        workers=cfg.workers)
        est = estimate_dynamic_objective(const, 1.0, 1.0)
        checks.append(_check(10, "cross_term_constant_drift", i, abs(est.cross.mean), 3.0 * est.cross.se,
                             mean=est.cross.mean, se=est.cross.se))
    for i in range(10):
        mu, nu = random_pair_1d(cfg.seed, i, _SCALING)
        base = solve_static_alphabeta(mu, nu, gauss, 1.0, 1.0, tol=cfg.tol).value
        for c in (0.5, 3.0):
            scaled = solve_static_alphabeta(mu, nu, gauss, c, c, tol=cfg.tol).value
            checks.append(_check(9, "homogeneity", f"{i}/c={c}", abs(scaled - c * base), 1e-8))
        betas = (0.25, 0.5, 1.0, 2.0, 4.0)
        vals = [solve_static_alphabeta(mu, nu, gauss, 1.0, b, tol=cfg.tol).value for b in betas]
        rise = max(0.0, float(np.max(np.diff(vals))))
        checks.append(_check(9, "non_increasing_in_beta", i, rise, 1e-9, values=vals))
    return checks


def battery_props(cfg: SuiteConfig) -> list:
    checks = []
    for i in range(50):
        rho, varrho = random_pair_1d(cfg.seed, 1000 + i)
        lp = mcov(rho, varrho).value
        checks.append(_check(5, "mcov_lp_vs_comonotone", i, abs(lp - mcov_comonotone_1d(rho, varrho)), 1e-9))
        checks.append(_check(5, "w2_mcov_identity", i, w2_mcov_identity_check(rho, varrho), 1e-8))

    nu = DiscreteMeasure([-1.0, 1.0])
    prev, values = -np.inf, []
    for n in (2, 8, 32):
        g = discretize_gaussian(n)
        v = solve_sbm(DiscreteMeasure.dirac(0.0), nu, g).value
        checks.append(_check(6, "sbm_equals_mcov_point_start", f"n={n}", abs(v - mcov(nu, g).value), 1e-9, value=v))
        values.append(v)
    target = float(np.sqrt(2.0 / np.pi))
    monotone = bool(np.all(np.diff(values) > 0) and values[-1] < target)
    checks.append(_check(6, "approach_to_abs_gaussian_mean", "n=2,8,32", target - values[-1], np.inf, True,
                         values=values, limit=target, monotone_from_below=monotone))

    gauss = discretize_gaussian(cfg.gauss_n)
    for i in range(5):
        mu, nu = irreducible_pair(cfg.seed, i)
        bass = bass_fixed_point_1d(mu, nu)
        lp = solve_sbm(mu, nu, gauss).value
        bundle = simulate_bass_paths(bass, cfg.n_paths, cfg.n_steps, cfg.seed + i, cfg.workers)
        est = estimate_dynamic_objective(bundle, 0.0, 1.0)
        checks.append(_check(7, "bass_trace_vs_sbm_lp", i, abs(est.trace.mean - lp), 3.0 * est.trace.se + 0.02 * abs(lp),
                             simulated=est.trace.mean, se=est.trace.se, lp=lp, bass_value=bass.value(),
                             bass_residual=bass.residual))
        M = bundle.meta["martingale"]
        for label, samples, law in (("initial", M[:, 0], mu), ("terminal", M[:, -1], nu)):
            w2 = wasserstein2_1d(DiscreteMeasure.from_samples(samples), law)
            mc = empirical_w2_error(law, cfg.n_paths, cfg.seed + i)
            checks.append(_check(7, f"bass_{label}_marginal", i, w2, bass.residual + 3.0 * mc, mc_error=mc))

    for i in range(20):
        mu, nu = alphabeta_instance(cfg.seed, i)
        w = solve_barycentric_wot(mu, nu, tol=cfg.tol)
        sbm = solve_sbm(w.projection, nu, gauss)
        composite = compose_optimizer(w, sbm)
        for alpha, beta in ALPHA_BETA_GRID:
            direct = solve_static_alphabeta(mu, nu, gauss, alpha, beta, tol=cfg.tol).value
            comp = evaluate_alphabeta(composite, gauss, alpha, beta)
            checks.append(_check(8, "composite_vs_direct", f"{i}/a={alpha},b={beta}", abs(comp - direct),
                                 max(10.0 * cfg.tol, 1e-5), composite=comp, direct=direct))
    return checks


BATTERIES: dict = {
    "thm1": battery_thm1,
    "lemma1": battery_lemma1,
    "thm2": battery_thm2,
    "props": battery_props,
}


def run_suite(name: str, cfg: Optional[SuiteConfig] = None) -> SuiteResult:
    if name not in BATTERIES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    cfg = cfg or SuiteConfig()
    return SuiteResult(name, cfg, BATTERIES[name](cfg))
