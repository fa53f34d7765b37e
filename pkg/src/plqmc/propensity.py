"""Placement propensities P(rank(i) = k) under a Plackett-Luce policy.

Estimates are empirical placement frequencies of sampled rankings, so they
are averages of permutation matrices and therefore doubly stochastic.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from plqmc import gumbel_pl
from plqmc.lowdisc import SequenceKind, derive_seed, generate_batch

REFERENCE_MC_LOG2 = 20
_KIND_CODES = {SequenceKind.MC: 0, SequenceKind.HALTON: 1, SequenceKind.SOBOL: 2}


@dataclass(frozen=True)
class PropensityMatrix:
    p: np.ndarray  # p[item, position]
    n_samples: int | None = None  # None for exact matrices


def placement_frequencies(rankings: np.ndarray) -> np.ndarray:
    """Average permutation matrix of ``rankings (..., n, L)`` -> ``(..., L, L)``."""
    *lead, n, size = rankings.shape
    flat = rankings.reshape(-1, n, size)
    offsets = (np.arange(flat.shape[0])[:, None, None] * size + flat) * size + np.arange(size)
    counts = np.bincount(offsets.ravel(), minlength=flat.shape[0] * size * size)
    return (counts.reshape(*lead, size, size) / n).astype(np.float64)


def estimate_propensities(scores, kind, n: int, seed: int) -> PropensityMatrix:
    s = gumbel_pl._as_scores(scores)
    if n < 1:
        raise ValueError(f"sample count must be positive, got {n}")
    u = generate_batch(kind, n, s.size, 1, seed)[0]
    ranks = gumbel_pl.sample_rankings(s, u)
    return PropensityMatrix(placement_frequencies(ranks), n)


def exact_propensities(scores) -> PropensityMatrix:
    s = gumbel_pl._as_scores(scores)
    size = s.size
    p = np.zeros((size, size))
    for ranking, prob in gumbel_pl.enumerate_pl(s):
        p[list(ranking), np.arange(size)] += prob
    return PropensityMatrix(p)


def reference_propensities(scores, seed: int, log2_samples: int = REFERENCE_MC_LOG2):
    """Exact matrix for short lists, otherwise a large MC estimate.

    Returns ``(matrix, description)``; the description goes into run metadata.
    """
    s = gumbel_pl._as_scores(scores)
    if s.size <= gumbel_pl.MAX_ENUMERATION:
        return exact_propensities(s).p, "exact enumeration"
    total = 2**log2_samples
    chunk = max(1, min(total, 2**22 // s.size))
    acc = np.zeros((s.size, s.size))
    for i, start in enumerate(range(0, total, chunk)):
        m = min(chunk, total - start)
        u = generate_batch(SequenceKind.MC, m, s.size, 1, derive_seed(seed, i))[0]
        acc += placement_frequencies(gumbel_pl.sample_rankings_batch(s, u)) * m
    return acc / total, f"MC reference with 2^{log2_samples} samples"


def experiment_scores(list_size: int, seed: int) -> np.ndarray:
    """Standard-normal item scores for a list, fixed by ``(seed, list_size)``."""
    return np.random.default_rng(derive_seed(seed, list_size)).standard_normal(list_size)


@dataclass
class MSEExperiment:
    rows: list[dict]
    metadata: dict = field(default_factory=dict)

    header = ("list_size", "kind", "n", "mse_mean", "mse_se")


def _cell(scores, reference, kind: SequenceKind, n: int, reps: int, seed: int):
    u = generate_batch(kind, n, scores.size, reps, seed, _warn=False)
    ranks = gumbel_pl.sample_rankings_batch(scores, u)
    err = np.mean((placement_frequencies(ranks) - reference) ** 2, axis=(-2, -1))
    se = float(np.std(err, ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan")
    return float(np.mean(err)), se


def mse_experiment(
    list_sizes,
    n_grid,
    replications: int,
    kinds,
    seed: int,
    threads: int = 1,
) -> MSEExperiment:
    """Entrywise propensity MSE against a reference, for every (list size, kind, n).

    Each cell draws its ``replications`` randomizations from a seed derived from
    ``(seed, list_size, kind, n)``, so the table does not depend on ``threads``.
    """
    if replications < 1:
        raise ValueError("replications must be positive")
    kinds = [SequenceKind.parse(k) for k in kinds]
    tasks, meta_refs = [], {}
    refs = {}
    for size in list_sizes:
        scores = experiment_scores(size, seed)
        refs[size], meta_refs[str(size)] = reference_propensities(scores, derive_seed(seed, size, 99))
        for kind in kinds:
            for n in n_grid:
                cell_seed = derive_seed(seed, size, _KIND_CODES[kind], n)
                tasks.append((size, kind, n, scores, cell_seed))

    def run(task):
        size, kind, n, scores, cell_seed = task
        return _cell(scores, refs[size], kind, n, replications, cell_seed)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, tasks))
    rows = [
        {"list_size": size, "kind": kind.value, "n": n, "mse_mean": mean, "mse_se": se}
        for (size, kind, n, _, _), (mean, se) in zip(tasks, results)
    ]
    metadata = {
        "mse_definition": "mean over all item x position entries of squared error, "
        "averaged over replications; mse_se is the standard error over replications",
        "reference": meta_refs,
        "score_distribution": "standard normal, seeded per list size",
    }
    return MSEExperiment(rows, metadata)


def loglog_slope(n, values) -> float:
    """Least-squares slope of log(values) against log(n)."""
    return float(np.polyfit(np.log(np.asarray(n, float)), np.log(np.asarray(values, float)), 1)[0])
