"""Compare the composite coupling (barycentric map, then SBM kernel) with the direct
alpha/beta optimum, statically and for the simulated constant-drift-plus-martingale process."""

import argparse

from wotbb.alphabeta import compose_optimizer, evaluate_alphabeta, solve_static_alphabeta
from wotbb.dynamics import estimate_dynamic_objective, simulate_drift_plus_martingale
from wotbb.measures import DiscreteMeasure, discretize_gaussian
from wotbb.sbm import solve_sbm
from wotbb.verification import alphabeta_instance
from wotbb.wot import solve_barycentric_wot


def compare(mu, nu, gauss, alpha, beta):
    w = solve_barycentric_wot(mu, nu)
    comp = evaluate_alphabeta(compose_optimizer(w, solve_sbm(w.projection, nu, gauss)), gauss, alpha, beta)
    direct = solve_static_alphabeta(mu, nu, gauss, alpha, beta).value
    return w, comp, direct


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gauss-n", type=int, default=32)
    ap.add_argument("--instances", type=int, default=5)
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--steps", type=int, default=200)
    args = ap.parse_args()
    gauss = discretize_gaussian(args.gauss_n)

    pm1 = DiscreteMeasure([-1.0, 1.0])
    print("mu = nu = uniform on {-1, 1}")
    print(f"{'beta':>6} {'composite':>12} {'direct':>12}")
    for beta in (0.01, 0.1, 0.5, 1.0, 2.0):
        _, comp, direct = compare(pm1, pm1, gauss, 1.0, beta)
        print(f"{beta:6.2f} {comp:12.6f} {direct:12.6f}")

    print("\nrandom instances, alpha = beta = 1")
    print(f"{'i':>3} {'composite':>12} {'direct':>12} {'dynamic':>12} {'se':>9}")
    for i in range(args.instances):
        mu, nu = alphabeta_instance(0, i)
        w, comp, direct = compare(mu, nu, gauss, 1.0, 1.0)
        bundle = simulate_drift_plus_martingale(mu, w.map_values, nu, args.paths, args.steps, seed=i, gauss_n=args.gauss_n)
        est = estimate_dynamic_objective(bundle, 1.0, 1.0)
        print(f"{i:3d} {comp:12.6f} {direct:12.6f} {est.combined.mean:12.6f} {est.combined.se:9.2e}")


if __name__ == "__main__":
    main()
