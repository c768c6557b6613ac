"""SBM value from a point mass to the two-point law as the Gaussian grid is refined.

The continuum value is E|Z| = sqrt(2/pi); the discrete values approach it from below.
"""

import argparse

import numpy as np

from wotbb.measures import DiscreteMeasure, discretize_gaussian
from wotbb.ot import mcov
from wotbb.sbm import solve_sbm


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[2, 4, 8, 16, 32, 64, 128, 256])
    args = ap.parse_args()
    limit = np.sqrt(2 / np.pi)
    nu = DiscreteMeasure([-1.0, 1.0])
    print(f"{'n':>5} {'sbm':>16} {'mcov':>16} {'|diff|':>10} {'limit - sbm':>12}")
    for n in args.sizes:
        g = discretize_gaussian(n)
        v = solve_sbm(DiscreteMeasure.dirac(0.0), nu, g).value
        m = mcov(nu, g).value
        print(f"{n:5d} {v:16.12f} {m:16.12f} {abs(v - m):10.1e} {limit - v:12.3e}")


if __name__ == "__main__":
    main()
