"""Command-line entry point.

Every run emits one JSON record holding the resolved configuration, the
canonicalized inputs, the result and a ``runtime`` block (timestamp, wall
time, worker count). Everything outside ``runtime`` is a deterministic
function of the configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .alphabeta import compose_optimizer, evaluate_alphabeta, solve_static_alphabeta
from .dynamics import (
    epsilon_split_simulate,
    estimate_dynamic_objective,
    simulate_drift_plus_martingale,
)
from .errors import InfeasibleError, InternalError, NonConvergenceError, ValidationError
from .fw import DEFAULT_MAX_ITER
from .measures import (
    ConvexOrderCertificate,
    DiscreteMeasure,
    check_convex_order,
    discretize_gaussian,
    load_measure,
)
from .ot import mcov, t2, t2_quantile_1d, wasserstein2_1d
from .sbm import bass_fixed_point_1d, simulate_bass_paths, solve_sbm
from .verification import SUITES, SuiteConfig, run_suite
from .wot import convex_order_projection, solve_barycentric_wot, verify_map_monotone_lipschitz

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_NONCONVERGENCE = 3
EXIT_CHECK_FAILED = 4

COMMANDS = ("t2", "wot", "mcov", "sbm", "bass", "alphabeta", "dynamics", "verify")
MAX_CSV_PATHS = 100


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    mu: Optional[str] = None
    nu: Optional[str] = None
    gauss_n: int = 32
    alpha: float = 1.0
    beta: float = 1.0
    tol: float = 1e-10
    max_iter: int = DEFAULT_MAX_ITER
    paths: int = 10_000
    steps: int = 200
    seed: int = 0
    out: Optional[str] = None
    suite: Optional[str] = None
    eps: Optional[float] = None
    workers: int = 1

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        for name in ("gauss_n", "max_iter", "paths", "steps", "workers"):
            if getattr(self, name) < 1:
                raise ValidationError(f"--{name.replace('_', '-')} must be a positive integer")
        for name in ("alpha", "beta", "tol"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValidationError(f"--{name} must be positive")
        if self.seed < 0:
            raise ValidationError("--seed must be non-negative")
        if self.eps is not None and not 0.0 < self.eps < 1.0:
            raise ValidationError("--eps must lie in (0, 1)")
        if self.command == "verify" and self.suite not in SUITES:
            raise ValidationError(f"verify needs a suite from {SUITES}")
        if self.command != "verify" and (self.mu is None or self.nu is None):
            raise ValidationError(f"{self.command} needs --mu and --nu")

    def resolved(self) -> dict:
        """Configuration as embedded in records; execution-only fields excluded."""
        out = asdict(self)
        for key in ("out", "workers"):
            out.pop(key)
        return out


# ---------------------------------------------------------------- serialization

def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if np.isfinite(x):
            return x
        return "nan" if np.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, DiscreteMeasure):
        return to_jsonable(obj.to_dict())
    return obj


def dumps(record: dict) -> str:
    return json.dumps(to_jsonable(record), sort_keys=True, indent=2, allow_nan=False) + "\n"


def deterministic_part(record: dict) -> dict:
    """The record without its ``runtime`` block."""
    return {k: v for k, v in record.items() if k != "runtime"}


def certificate_dict(cert: Optional[ConvexOrderCertificate]) -> Optional[dict]:
    if cert is None:
        return None
    out = {"convex_order": bool(cert.verdict), "margin": cert.margin}
    if cert.verdict:
        out["martingale_coupling"] = cert.coupling
    else:
        out["test_function"] = {"form": "max_k <slopes[k], y> + intercepts[k]",
                                "slopes": cert.slopes, "intercepts": cert.intercepts}
    return out


def _write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _coupling_rows(mu: DiscreteMeasure, nu: DiscreteMeasure, weights: np.ndarray):
    for i in range(mu.size):
        for j in range(nu.size):
            if weights[i, j] > 0:
                yield [i, j, *mu.points[i], *nu.points[j], weights[i, j]]


def _coupling_header(d: int) -> list:
    return ["i", "j"] + [f"x{k}" for k in range(d)] + [f"y{k}" for k in range(d)] + ["weight"]


# ---------------------------------------------------------------- commands

class Outcome:
    def __init__(self, result: dict, tables: Optional[dict] = None, exit_code: int = EXIT_OK):
        self.result = result
        self.tables = tables or {}
        self.exit_code = exit_code


def _pair(cfg: ExperimentConfig):
    return load_measure(cfg.mu), load_measure(cfg.nu)


def cmd_t2(cfg, mu, nu) -> Outcome:
    res = t2(mu, nu)
    result = {"value": res.value, "gap": res.gap, "dual_row": res.dual_row, "dual_col": res.dual_col,
              "coupling": res.coupling.weights}
    if mu.dim == 1:
        result["quantile_value"] = t2_quantile_1d(mu, nu)
    table = (_coupling_header(mu.dim), _coupling_rows(mu, nu, res.coupling.weights))
    return Outcome(result, {"coupling": table})


def cmd_wot(cfg, mu, nu) -> Outcome:
    w = solve_barycentric_wot(mu, nu, tol=cfg.tol, max_iter=cfg.max_iter)
    eta, t2_check = convex_order_projection(mu, nu, wot=w)
    result = {"value": w.value, "fw_gap": w.fw_gap, "iterations": w.iterations, "map_values": w.map_values,
              "projection": eta, "t2_to_projection_residual": t2_check,
              "projection_certificate": certificate_dict(check_convex_order(eta, nu, tol=1e-8)),
              "coupling": w.coupling.weights}
    if mu.dim == 1 and mu.size >= 2:
        lip = verify_map_monotone_lipschitz(w.map_values, mu.points)
        result["map_monotone_1lipschitz"] = asdict(lip)
    table = (_coupling_header(mu.dim), _coupling_rows(mu, nu, w.coupling.weights))
    return Outcome(result, {"coupling": table})


def cmd_mcov(cfg, mu, nu) -> Outcome:
    res = mcov(mu, nu)
    result = {"value": res.value, "gap": res.gap, "coupling": res.coupling.weights}
    return Outcome(result, {"coupling": (_coupling_header(mu.dim), _coupling_rows(mu, nu, res.coupling.weights))})


def cmd_sbm(cfg, mu, nu) -> Outcome:
    res = solve_sbm(mu, nu, discretize_gaussian(cfg.gauss_n, mu.dim))
    kappa = res.martingale_coupling
    result = {"value": res.value, "dual_value": res.dual_value, "dual_gap": res.dual_gap,
              "dual_violation": res.dual_violation, "martingale_error": res.triple.martingale_error(),
              "marginal_error": res.triple.marginal_error(), "coupling": kappa.weights}
    return Outcome(result, {"coupling": (_coupling_header(mu.dim), _coupling_rows(mu, nu, kappa.weights))})


def cmd_bass(cfg, mu, nu) -> Outcome:
    bass = bass_fixed_point_1d(mu, nu, tol=max(cfg.tol, 1e-12), max_iter=cfg.max_iter)
    bundle = simulate_bass_paths(bass, cfg.paths, cfg.steps, cfg.seed, cfg.workers)
    est = estimate_dynamic_objective(bundle, 0.0, 1.0)
    M = bundle.meta["martingale"]
    result = {"value": bass.value(), "iterations": bass.iterations, "residual": bass.residual,
              "flagged": bass.flagged, "alpha": bass.alpha, "jumps": bass.jumps,
              "simulated_trace": est.trace.to_dict(),
              "initial_w2": wasserstein2_1d(DiscreteMeasure.from_samples(M[:, 0]), mu),
              "terminal_w2": wasserstein2_1d(DiscreteMeasure.from_samples(M[:, -1]), nu)}
    grid = (["w", "grad_phi", "smoothed"], zip(bass.grid, bass.phi_grad, bass.smoothed_map))
    return Outcome(result, {"maps": grid, "paths": _path_table(bundle)})


def cmd_alphabeta(cfg, mu, nu) -> Outcome:
    gauss = discretize_gaussian(cfg.gauss_n, mu.dim)
    res = solve_static_alphabeta(mu, nu, gauss, cfg.alpha, cfg.beta, tol=cfg.tol, max_iter=cfg.max_iter)
    result = {"value": res.value, "fw_gap": res.fw_gap, "iterations": res.iterations, "gauss_n": res.gauss_n,
              "coupling": res.coupling.weights}
    try:
        w = solve_barycentric_wot(mu, nu, tol=cfg.tol, max_iter=cfg.max_iter)
        comp = evaluate_alphabeta(compose_optimizer(w, solve_sbm(w.projection, nu, gauss)), gauss,
                                  cfg.alpha, cfg.beta)
        result["composite_value"] = comp
        result["composite_minus_direct"] = comp - res.value
    except (NonConvergenceError, InfeasibleError, InternalError) as exc:
        result["composite_value"] = None
        result["composite_error"] = str(exc)
    table = (_coupling_header(mu.dim), _coupling_rows(mu, nu, res.coupling.weights))
    return Outcome(result, {"coupling": table})


def _path_table(bundle):
    k = min(bundle.n_paths, MAX_CSV_PATHS)
    header = ["path", "step", "t", "x", "drift", "sigma"]

    def rows():
        for p in range(k):
            for s in range(bundle.n_steps + 1):
                v = bundle.drift[p, s, 0] if s < bundle.n_steps else 0.0
                sig = bundle.sigma[p, s, 0, 0] if s < bundle.n_steps else 0.0
                yield [p, s, s / bundle.n_steps, bundle.X[p, s, 0], v, sig]

    return header, rows()


def cmd_dynamics(cfg, mu, nu) -> Outcome:
    w = solve_barycentric_wot(mu, nu, tol=cfg.tol, max_iter=cfg.max_iter)
    if cfg.eps is not None:
        bundle, rep = epsilon_split_simulate(mu, w.projection, nu, cfg.eps, cfg.paths, cfg.steps, cfg.seed,
                                             workers=cfg.workers, gauss_n=cfg.gauss_n)
        result = {"mode": "epsilon_split", "report": rep.to_dict()}
    else:
        bundle = simulate_drift_plus_martingale(mu, w.map_values, nu, cfg.paths, cfg.steps, cfg.seed,
                                          workers=cfg.workers, gauss_n=cfg.gauss_n)
        gauss = discretize_gaussian(cfg.gauss_n)
        static = solve_static_alphabeta(mu, nu, gauss, cfg.alpha, cfg.beta, tol=cfg.tol, max_iter=cfg.max_iter)
        result = {"mode": "constant_drift_plus_martingale", "leg": bundle.meta["leg"], "static_value": static.value}
    est = estimate_dynamic_objective(bundle, cfg.alpha, cfg.beta)
    result["estimate"] = est.to_dict()
    result["terminal_w2"] = wasserstein2_1d(DiscreteMeasure.from_samples(bundle.terminal()), nu)
    result["replay_max_error"] = float(np.max(np.abs(bundle.replay() - bundle.X)))
    return Outcome(result, {"paths": _path_table(bundle)})


def cmd_verify(cfg) -> Outcome:
    res = run_suite(cfg.suite, SuiteConfig(seed=cfg.seed, n_paths=cfg.paths, n_steps=cfg.steps,
                                           gauss_n=cfg.gauss_n, tol=cfg.tol, workers=cfg.workers))
    result = res.to_dict()
    result["failures"] = [c.to_dict() for c in res.failures()]
    header = ["criterion", "name", "instance", "discrepancy", "tolerance", "passed"]
    rows = [[c.criterion, c.name, c.instance, c.discrepancy, c.tolerance, c.passed] for c in res.checks]
    return Outcome(result, {"checks": (header, rows)}, EXIT_OK if res.passed else EXIT_CHECK_FAILED)


HANDLERS = {"t2": cmd_t2, "wot": cmd_wot, "mcov": cmd_mcov, "sbm": cmd_sbm, "bass": cmd_bass,
            "alphabeta": cmd_alphabeta, "dynamics": cmd_dynamics}


def execute(cfg: ExperimentConfig) -> tuple:
    """Run one command; returns ``(exit_code, record, tables)``."""
    start = time.perf_counter()
    record = {"command": cfg.command, "config": cfg.resolved()}
    tables = {}
    try:
        cfg.validate()
        if cfg.command == "verify":
            outcome = cmd_verify(cfg)
        else:
            mu, nu = _pair(cfg)
            record["inputs"] = {"mu": mu, "nu": nu}
            outcome = HANDLERS[cfg.command](cfg, mu, nu)
        record["status"] = "ok" if outcome.exit_code == EXIT_OK else "checks_failed"
        record["result"] = outcome.result
        tables = outcome.tables
        code = outcome.exit_code
    except InfeasibleError as exc:
        code, record["status"] = EXIT_INFEASIBLE, "infeasible"
        record["error"] = str(exc)
        record["certificate"] = certificate_dict(exc.certificate)
    except NonConvergenceError as exc:
        code, record["status"] = EXIT_NONCONVERGENCE, "nonconvergence"
        record["error"] = str(exc)
        record["last_gap"] = exc.last_gap
        record["iterations"] = exc.iterations
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        code, record["status"] = EXIT_ERROR, "error"
        record["error"] = f"{type(exc).__name__}: {exc}"
    except InternalError as exc:
        code, record["status"] = EXIT_ERROR, "internal_error"
        record["error"] = str(exc)
    record["exit_code"] = code
    record["runtime"] = {
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "wall_time_s": time.perf_counter() - start,
        "workers": cfg.workers,
    }
    return code, record, tables


def write_outputs(cfg: ExperimentConfig, record: dict, tables: dict) -> list:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"verify-{cfg.suite}" if cfg.command == "verify" else cfg.command
    written = [out / f"{stem}.json"]
    written[0].write_text(dumps(record))
    for name, (header, rows) in tables.items():
        path = out / f"{stem}-{name}.csv"
        _write_csv(path, header, rows)
        written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mu", help="measure JSON file for the source")
    common.add_argument("--nu", help="measure JSON file for the target")
    common.add_argument("--gauss-n", type=int, default=32, help="atoms per axis of the Gaussian grid")
    common.add_argument("--alpha", type=float, default=1.0)
    common.add_argument("--beta", type=float, default=1.0)
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    common.add_argument("--paths", type=int, default=10_000)
    common.add_argument("--steps", type=int, default=200)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="directory for JSON and CSV output (stdout JSON if omitted)")
    common.add_argument("--workers", type=int, default=1, help="threads for path simulation")

    parser = argparse.ArgumentParser(prog="wotbb", description="Weak transport solvers and dynamic checks.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "t2": "quadratic optimal transport",
        "wot": "barycentric weak transport and convex-order projection",
        "mcov": "maximal covariance",
        "sbm": "stretched Brownian motion value (martingale LP)",
        "bass": "1-D Bass martingale fixed point and simulated paths",
        "alphabeta": "the alpha/beta functional",
        "dynamics": "simulate the constant-drift-plus-martingale process (or the eps-split with --eps)",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "dynamics":
            p.add_argument("--eps", type=float, default=None)
    pv = sub.add_parser("verify", parents=[common], help="run a check battery")
    pv.add_argument("suite", choices=SUITES)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        command=args.command, mu=args.mu, nu=args.nu, gauss_n=args.gauss_n, alpha=args.alpha, beta=args.beta,
        tol=args.tol, max_iter=args.max_iter, paths=args.paths, steps=args.steps, seed=args.seed,
        out=args.out, suite=getattr(args, "suite", None), eps=getattr(args, "eps", None), workers=args.workers,
    )


def _print_table(record: dict, stream) -> None:
    for c in record.get("result", {}).get("checks", []):
        flag = "PASS" if c["passed"] else "FAIL"
        tol = c["tolerance"]
        bound = f"{tol:.3e}" if isinstance(tol, float) else str(tol)
        print(f"{flag}  [{c['criterion']:>2}] {c['name']:<40} {c['instance']:<24} "
              f"{c['discrepancy']:.3e} <= {bound}", file=stream)


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    code, record, tables = execute(cfg)
    if cfg.command == "verify":
        _print_table(to_jsonable(record), sys.stderr)
    if cfg.out is not None:
        try:
            write_outputs(cfg, record, tables)
        except OSError as exc:
            print(f"error: cannot write output: {exc}", file=sys.stderr)
            return EXIT_ERROR
    else:
        sys.stdout.write(dumps(record))
    return code


if __name__ == "__main__":
    sys.exit(main())
