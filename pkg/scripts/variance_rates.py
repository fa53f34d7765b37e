"""Between/within variance split of the DCG utility estimator over an N grid.

Prints both terms per kind with their fitted log-log slopes in N.
    python scripts/variance_rates.py [--q 8] [--reps 100] [--target utility|grad_norm_sq]
"""

import argparse

import numpy as np

from plqmc import dataio
from plqmc.estimators import variance_decomposition
from plqmc.propensity import loglog_slope
from plqmc.scorer import ScorerParams


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--q", type=int, default=8)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--list-size", type=int, default=5)
    ap.add_argument("--target", default="utility", choices=["utility", "grad_norm_sq"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    pool = dataio.synthetic_stream(args.list_size, 5, 256, args.seed).queries
    w = np.random.default_rng(args.seed).standard_normal(5) / np.sqrt(5)
    grid = [2**k for k in range(2, 9)]
    res = variance_decomposition(
        pool, ScorerParams("linear", 5, w), ["MC", "QMC"], args.q, grid,
        args.reps, args.reps, args.seed, target=args.target, threads=args.threads,
    )
    for kind in ("MC", "SobolScrambled"):
        rows = [r for r in res.rows if r["kind"] == kind]
        within = [r["mean_within_variance"] for r in rows]
        between = [r["var_between_queries"] for r in rows]
        print(kind)
        for r in rows:
            print(f"  N={r['N']:>4}  between={r['var_between_queries']:.3e}  within={r['mean_within_variance']:.3e}")
        print(f"  within slope {loglog_slope(grid, within):+.3f}; between max/min {max(between) / min(between):.3f}")


if __name__ == "__main__":
    main()
