"""Propensity MSE of MC vs scrambled-Sobol sampling for several list sizes.

Prints the table and fitted log-log slopes. Usage:
    python scripts/propensity_mse.py [--sizes 5,25,50] [--reps 200] [--out results/propensity]
"""

import argparse
from pathlib import Path

from plqmc import dataio
from plqmc.propensity import loglog_slope, mse_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="5,25,50")
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--out", type=Path, default=Path("results/propensity"))
    args = ap.parse_args()

    grid = [2**k for k in range(2, 11)]
    sizes = [int(s) for s in args.sizes.split(",")]
    exp = mse_experiment(sizes, grid, args.reps, ["MC", "QMC"], args.seed, threads=args.threads)
    dataio.write_results(exp.rows, args.out / "propensity_mse.csv", exp.header)

    print(f"{'size':>4} {'kind':>15} {'n':>5} {'mse':>12} {'se':>10}")
    for r in exp.rows:
        print(f"{r['list_size']:>4} {r['kind']:>15} {r['n']:>5} {r['mse_mean']:>12.4e} {r['mse_se']:>10.2e}")
    for size in sizes:
        for kind in ("MC", "SobolScrambled"):
            ys = [r["mse_mean"] for r in exp.rows if r["list_size"] == size and r["kind"] == kind]
            print(f"list size {size:>2} {kind:>15}: slope {loglog_slope(grid, ys):+.3f}")


if __name__ == "__main__":
    main()
