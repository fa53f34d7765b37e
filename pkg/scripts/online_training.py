"""Paired-seed online PG-rank runs with MC and QMC sampling on a synthetic stream.

    python scripts/online_training.py [--seeds 10] [--items 20] [--batches 200] [--arch mlp]
"""

import argparse

import numpy as np

from plqmc import dataio
from plqmc.scorer import TrainConfig, auc, train_pg_rank


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--items", type=int, default=20)
    ap.add_argument("--feature-dim", type=int, default=10)
    ap.add_argument("--batch-size", type=int, default=64)
    ap.add_argument("--batches", type=int, default=200)
    ap.add_argument("--mc-samples", type=int, default=8)
    ap.add_argument("--lr", type=float, default=0.1)
    ap.add_argument("--arch", default="mlp", choices=["mlp", "linear"])
    args = ap.parse_args()

    curves = {"MC": [], "QMC": []}
    for seed in range(args.seeds):
        stream = dataio.synthetic_stream(args.items, args.feature_dim, args.batches * args.batch_size, seed)
        for kind in curves:
            cfg = TrainConfig(
                learning_rate=args.lr, batch_size=args.batch_size, mc_samples=args.mc_samples,
                kind=kind, seed=seed, architecture=args.arch,
            )
            curves[kind].append(train_pg_rank(stream, cfg).column("dcg"))
    mc, qmc = np.array(curves["MC"]), np.array(curves["QMC"])
    for step in sorted({0, args.batches // 4, args.batches // 2, args.batches - 1}):
        print(f"batch {step:>4}: DCG MC={mc[:, step].mean():.4f}  QMC={qmc[:, step].mean():.4f}")
    wins = sum(auc(q) >= auc(m) for q, m in zip(qmc, mc))
    print(f"QMC area under DCG curve >= MC in {wins}/{args.seeds} paired seeds")


if __name__ == "__main__":
    main()
