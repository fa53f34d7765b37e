"""Command-line entry point: ``plqmc {propensity-mse,variance-decomposition,train,replay}``.

Each run writes a CSV table plus a JSON metadata file whose ``config`` block
reproduces the CSV byte for byte via ``plqmc replay``. Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from plqmc import __version__, dataio, estimators, propensity, scorer
from plqmc.lowdisc import SequenceKind, derive_seed

METADATA_SCHEMA = 1


class UsageError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return values


def _kinds(text: str) -> list[str]:
    try:
        return [SequenceKind.parse(v).value for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None, help="output directory (default $PLQMC_OUT_DIR or ./results)")
    p.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
    p.add_argument("--quick", action="store_true", help="desk-scale preset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plqmc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"plqmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("propensity-mse", help="propensity MSE of MC vs QMC sampling")
    p.add_argument("--list-sizes", type=_int_list, default=[5, 25, 50])
    p.add_argument("--n-min-log2", type=int, default=2)
    p.add_argument("--n-max-log2", type=int, default=10)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--kinds", type=_kinds, default=["MC", "SobolScrambled"])
    _common(p)

    p = sub.add_parser("variance-decomposition", help="between/within variance of the utility estimator")
    p.add_argument("--q", type=int, default=8, help="queries per batch")
    p.add_argument("--n-grid", type=_int_list, default=None, help="explicit N values (overrides log2 range)")
    p.add_argument("--n-min-log2", type=int, default=2)
    p.add_argument("--n-max-log2", type=int, default=8)
    p.add_argument("--outer-reps", type=int, default=100)
    p.add_argument("--inner-reps", type=int, default=100)
    p.add_argument("--kinds", type=_kinds, default=["MC", "SobolScrambled"])
    p.add_argument("--list-size", type=int, default=5)
    p.add_argument("--feature-dim", type=int, default=5)
    p.add_argument("--pool-size", type=int, default=256)
    p.add_argument("--target", choices=("utility", "grad_norm_sq"), default="utility")
    _common(p)

    p = sub.add_parser("train", help="online PG-rank training with simulated feedback")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="libsvm file with qid")
    src.add_argument("--synthetic", action="store_true")
    p.add_argument("--n-items", type=int, default=100)
    p.add_argument("--feature-dim", type=int, default=10)
    p.add_argument("--n-queries", type=int, default=20000)
    p.add_argument("--mc-type", choices=("MC", "QMC"), default="QMC")
    p.add_argument("--mc-samples", type=int, default=8)
    p.add_argument("--batch-size", type=int, default=1000)
    p.add_argument("--learning-rate", type=float, default=None, help="default 0.1 synthetic, 0.001 with --data")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--architecture", choices=scorer.ARCHITECTURES, default="mlp")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--reward", choices=estimators.REWARDS, default="dcg")
    _common(p)

    p = sub.add_parser("replay", help="rerun from a metadata JSON file")
    p.add_argument("metadata", type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--threads", type=int, default=None)
    return parser


# ------------------------------------------------------------------ runs --


def _apply_quick(command: str, cfg: dict) -> dict:
    if not cfg.get("quick"):
        return cfg
    presets = {
        "propensity-mse": {"list_sizes": [5], "n_max_log2": 8, "reps": 50},
        "variance-decomposition": {"q": 4, "n_grid": [4, 16], "outer_reps": 30, "inner_reps": 30},
        "train": {"n_items": 20, "n_queries": 64 * 50, "batch_size": 64},
    }
    return {**cfg, **presets[command], "quick": False, "quick_applied": True}


def _check_positive(cfg: dict, *names: str) -> None:
    for name in names:
        if cfg.get(name) is not None and cfg[name] < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")


def _run_propensity(cfg: dict, out: Path) -> dict:
    _check_positive(cfg, "reps", "threads")
    if not 0 <= cfg["n_min_log2"] <= cfg["n_max_log2"] <= 30:
        raise UsageError("need 0 <= --n-min-log2 <= --n-max-log2 <= 30")
    grid = [2**k for k in range(cfg["n_min_log2"], cfg["n_max_log2"] + 1)]
    exp = propensity.mse_experiment(
        cfg["list_sizes"], grid, cfg["reps"], cfg["kinds"], cfg["seed"], threads=cfg["threads"]
    )
    dataio.write_results(exp.rows, out / "propensity_mse.csv", exp.header)
    return {"outputs": ["propensity_mse.csv"], "experiment": exp.metadata}


def _harness_scorer(feature_dim: int, seed: int) -> scorer.ScorerParams:
    rng = np.random.default_rng(derive_seed(seed, 11))
    return scorer.ScorerParams("linear", feature_dim, rng.standard_normal(feature_dim) / np.sqrt(feature_dim))


def _run_variance(cfg: dict, out: Path) -> dict:
    _check_positive(cfg, "q", "list_size", "feature_dim", "pool_size", "threads")
    if cfg["outer_reps"] < 30 or cfg["inner_reps"] < 30:
        raise UsageError("--outer-reps and --inner-reps must be at least 30")
    if cfg["pool_size"] < cfg["q"]:
        raise UsageError("--pool-size must be at least --q")
    grid = cfg["n_grid"] or [2**k for k in range(cfg["n_min_log2"], cfg["n_max_log2"] + 1)]
    pool = dataio.synthetic_stream(cfg["list_size"], cfg["feature_dim"], cfg["pool_size"], cfg["seed"])
    res = estimators.variance_decomposition(
        pool.queries,
        _harness_scorer(cfg["feature_dim"], cfg["seed"]),
        cfg["kinds"],
        cfg["q"],
        grid,
        cfg["outer_reps"],
        cfg["inner_reps"],
        cfg["seed"],
        target=cfg["target"],
        threads=cfg["threads"],
    )
    dataio.write_results(res.rows, out / "variance_decomposition.csv", res.header)
    return {
        "outputs": ["variance_decomposition.csv"],
        "experiment": {
            "integrand": "DCG" if cfg["target"] == "utility" else "squared norm of the policy gradient",
            "query_pool": "synthetic_stream(list_size, feature_dim, pool_size, seed)",
            "scorer": "linear, weights N(0, 1/feature_dim) seeded by derive_seed(seed, 11)",
            "var_between_queries": "variance of batch means minus mean_within_variance / inner_reps",
        },
    }


def _run_train(cfg: dict, out: Path) -> dict:
    _check_positive(cfg, "n_items", "feature_dim", "n_queries", "mc_samples", "batch_size", "epochs", "hidden", "threads")
    lr = cfg["learning_rate"]
    if lr is None:
        lr = 0.001 if cfg["data"] else 0.1
    if cfg["data"]:
        try:
            stream = dataio.load_libsvm(cfg["data"])
        except OSError as exc:
            raise RuntimeError(f"cannot read data file {cfg['data']}: {exc.strerror or exc}") from exc
    else:
        stream = dataio.synthetic_stream(cfg["n_items"], cfg["feature_dim"], cfg["n_queries"], cfg["seed"])
    try:
        config = scorer.TrainConfig(
            learning_rate=lr,
            batch_size=cfg["batch_size"],
            mc_samples=cfg["mc_samples"],
            kind=cfg["mc_type"],
            epochs=cfg["epochs"],
            seed=cfg["seed"],
            architecture=cfg["architecture"],
            hidden=cfg["hidden"],
            reward=cfg["reward"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    log = scorer.train_pg_rank(stream, config)
    dataio.write_results(log.records, out / "train_log.csv", log.header)
    scorer.save_checkpoint(log.params, out / "checkpoint.bin")
    return {
        "outputs": ["train_log.csv", "checkpoint.bin"],
        "experiment": {
            "learning_rate": lr,
            "n_batches": len(log.records),
            "loss": "negative mean of log-probability times reward over the training samples, before the update",
            "dcg": "mean DCG of one sampled ranking shown per query, before the update",
            "ctr": "mean clicks per displayed list, position bias 1/k",
        },
    }


RUNNERS = {
    "propensity-mse": _run_propensity,
    "variance-decomposition": _run_variance,
    "train": _run_train,
}


def _jsonable(cfg: dict) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}


def run(command: str, cfg: dict, out: Path) -> None:
    effective = _apply_quick(command, cfg)
    out.mkdir(parents=True, exist_ok=True)
    info = RUNNERS[command](effective, out)
    meta = {
        "schema": METADATA_SCHEMA,
        "package_version": __version__,
        "subcommand": command,
        "config": _jsonable({k: v for k, v in cfg.items() if k not in ("out",)}),
        **info,
    }
    stem = command.replace("-", "_")
    dataio.write_metadata(meta, out / f"{stem}.json")


def _replay(args, parser) -> tuple[str, dict, Path]:
    try:
        meta = json.loads(Path(args.metadata).read_text(encoding="utf-8"))
        command, cfg = meta["subcommand"], dict(meta["config"])
    except (OSError, ValueError, KeyError) as exc:
        raise RuntimeError(f"cannot read metadata {args.metadata}: {exc}") from exc
    if command not in RUNNERS:
        parser.error(f"unknown subcommand {command!r} in {args.metadata}")
    defaults = vars(parser.parse_args([command] + (["--synthetic"] if command == "train" else [])))
    defaults.pop("command")
    defaults.update(cfg)
    if command == "train" and defaults.get("data"):
        defaults["data"] = Path(defaults["data"])
        defaults["synthetic"] = False
    if args.threads is not None:
        defaults["threads"] = args.threads
    out = args.out or Path(args.metadata).parent
    return command, defaults, out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    warnings.simplefilter("default")
    try:
        if args.command == "replay":
            command, cfg, out = _replay(args, parser)
        else:
            command, cfg = args.command, vars(args).copy()
            cfg.pop("command")
            out = args.out or dataio.output_dir()
        run(command, cfg, Path(out))
    except UsageError as exc:
        parser.error(str(exc))
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 1
        print(f"plqmc: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
