"""Sampling estimators of ranking utility, IPS utility and the score-function gradient.

Every estimator averages over a batch of queries Q and N Plackett-Luce samples
per query, each query driven by its own randomization of an N x |q| point set.
``variance_decomposition`` splits the variance of the utility estimator into a
between-batch part and a within-batch (sampling) part.

A scorer is any object with ``score(features)`` and ``backprop(features, upstream)``
(see ``plqmc.scorer.ScorerParams``).
"""

from __future__ import annotations

from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from plqmc import gumbel_pl, metrics
from plqmc.lowdisc import SequenceKind, derive_seed, generate_batch
from plqmc.propensity import estimate_propensities

REWARDS = ("dcg", "clicks")
_KIND_CODES = {SequenceKind.MC: 0, SequenceKind.HALTON: 1, SequenceKind.SOBOL: 2}


class PositivityError(ValueError):
    def __init__(self, index: int, message: str):
        super().__init__(f"record {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class UtilityEstimate:
    value: float
    q_batch: int
    n_samples: int
    kind: SequenceKind


@dataclass(frozen=True)
class GradientEstimate:
    g: np.ndarray
    q_batch: int
    n_samples: int
    norm_sq: float
    surrogate: float = 0.0  # mean of log-prob * reward over the samples
    mean_reward: float = 0.0


def _groups(queries) -> dict[int, list[int]]:
    """Query positions grouped by list size, sizes ascending."""
    out: dict[int, list[int]] = defaultdict(list)
    for i, q in enumerate(queries):
        out[q.size].append(i)
    return dict(sorted(out.items()))


def _stack(queries, idx):
    feats = np.stack([queries[i].features for i in idx])
    rel = np.stack([queries[i].rel for i in idx])
    return feats, rel


def _rewards(rankings, rel, reward: str, rng, max_grade: float) -> np.ndarray:
    if reward == "dcg":
        return metrics.dcg_batch(rankings, rel)
    u = rng.random(rankings.shape)
    return (u < metrics.click_probabilities(rankings, rel, max_grade)).sum(axis=-1).astype(float)


def _check(queries, n: int):
    if not queries:
        raise ValueError("query batch is empty")
    if n < 1:
        raise ValueError(f"samples per query must be positive, got {n}")


def utility_estimate(queries, scorer, kind, n: int, seed: int, reward: str = "dcg", max_grade: float = 1.0):
    """Mean reward over Q queries x N sampled rankings."""
    _check(queries, n)
    kind = SequenceKind.parse(kind)
    total = 0.0
    rng = np.random.default_rng(derive_seed(seed, 3))
    for size, idx in _groups(queries).items():
        feats, rel = _stack(queries, idx)
        s = scorer.score(feats)
        u = generate_batch(kind, n, size, len(idx), derive_seed(seed, size))
        ranks = gumbel_pl.sample_rankings_batch(s[:, None, :], u)
        total += _rewards(ranks, rel[:, None, :], reward, rng, max_grade).sum()
    return UtilityEstimate(total / (len(queries) * n), len(queries), n, kind)


def policy_gradient(
    queries, scorer, kind, n: int, seed: int, reward: str = "dcg", max_grade: float = 1.0
) -> GradientEstimate:
    """Score-function gradient ``mean(reward * grad log pi)`` over Q queries x N samples."""
    _check(queries, n)
    kind = SequenceKind.parse(kind)
    scale = 1.0 / (len(queries) * n)
    g = None
    surrogate = mean_reward = 0.0
    rng = np.random.default_rng(derive_seed(seed, 3))
    for size, idx in _groups(queries).items():
        feats, rel = _stack(queries, idx)
        s = scorer.score(feats)[:, None, :]
        u = generate_batch(kind, n, size, len(idx), derive_seed(seed, size), _warn=False)
        ranks = gumbel_pl.sample_rankings_batch(s, u)
        r = _rewards(ranks, rel[:, None, :], reward, rng, max_grade)  # (B, N)
        upstream = np.einsum("bn,bnl->bl", r, gumbel_pl.log_prob_grad_batch(ranks, s)) * scale
        part = scorer.backprop(feats, upstream)
        g = part if g is None else g + part
        surrogate += float(np.sum(r * gumbel_pl.log_prob_batch(ranks, s))) * scale
        mean_reward += float(r.sum()) * scale
    return GradientEstimate(g, len(queries), n, float(g @ g), surrogate, mean_reward)


def evaluate_displayed(queries, scorer, seed: int, max_grade: float = 1.0) -> tuple[float, float]:
    """DCG and clicks-per-list of one MC-sampled ranking shown per query."""
    rng = np.random.default_rng(seed)
    dcg_sum = clicks = 0.0
    for size, idx in _groups(queries).items():
        feats, rel = _stack(queries, idx)
        s = scorer.score(feats)
        ranks = gumbel_pl.sample_rankings_batch(s, rng.random(s.shape))
        dcg_sum += float(metrics.dcg_batch(ranks, rel).sum())
        clicks += float(metrics.simulate_clicks(ranks, rel, rng.random(s.shape), max_grade).sum())
    return dcg_sum / len(queries), clicks / len(queries)


# -------------------------------------------------------------------- IPS --


@dataclass(frozen=True)
class LoggedRanking:
    """One logged impression.

    ``logging_prob`` is h(r|q) for full-ranking IPS; ``propensities[i, k]`` is
    h(i, k|q) and ``clicks[k]`` the click at position k for position-based IPS.
    """

    features: np.ndarray
    ranking: np.ndarray
    reward: float = 0.0
    logging_prob: float | None = None
    propensities: np.ndarray | None = None
    clicks: np.ndarray | None = None


def ips_utility(
    logged: Sequence[LoggedRanking],
    target,
    mode: str = "full-ranking",
    *,
    kind=SequenceKind.SOBOL,
    n: int = 1024,
    seed: int = 0,
) -> float:
    """Importance-weighted estimate of the target policy's utility from logged rankings.

    ``full-ranking``: mean of ``reward * pi(r|q) / h(r|q)``.
    ``position-based``: mean over records of
    ``sum_k clicks[k] / log2(k+1) * pi(r_k, k) / h(r_k, k)``, with the target
    placement propensities estimated from ``n`` samples of ``kind``.
    """
    if not logged:
        raise ValueError("no logged records")
    values = []
    for i, rec in enumerate(logged):
        s = np.asarray(target.score(rec.features), dtype=np.float64)
        r = gumbel_pl._check_ranking(rec.ranking, s.size)
        if mode == "full-ranking":
            if rec.logging_prob is None or not rec.logging_prob > 0:
                raise PositivityError(i, f"logging probability must be positive, got {rec.logging_prob}")
            weight = np.exp(gumbel_pl.log_prob(r, s)) / rec.logging_prob
            values.append(rec.reward * weight)
        elif mode == "position-based":
            if rec.propensities is None or rec.clicks is None:
                raise ValueError(f"record {i}: position-based IPS needs propensities and clicks")
            positions = np.arange(s.size)
            h = np.asarray(rec.propensities, dtype=np.float64)[r, positions]
            if np.any(~(h > 0)):
                k = int(np.argmin(h > 0))
                raise PositivityError(i, f"propensity of item {r[k]} at position {k + 1} is {h[k]}")
            pi = estimate_propensities(s, kind, n, derive_seed(seed, i)).p[r, positions]
            gain = np.asarray(rec.clicks, dtype=np.float64) * metrics.discounts(s.size)
            values.append(float(np.sum(gain * pi / h)))
        else:
            raise ValueError(f"unknown IPS mode {mode!r}")
    return float(np.mean(values))


# ----------------------------------------------------- variance harness ----


@dataclass
class VarianceDecomposition:
    rows: list[dict]
    samples: dict = field(default_factory=dict)  # (kind, N) -> (outer, inner) estimates

    header = ("kind", "Q", "N", "var_between_queries", "mean_within_variance", "total_variance")


def _outer(pool, scorer, kind, q, n, inner, target, batch_seed, cell_seed):
    rng = np.random.default_rng(batch_seed)
    chosen = [pool[i] for i in rng.choice(len(pool), size=q, replace=False)]
    values = np.zeros(inner)
    grads = 0.0
    for size, idx in _groups(chosen).items():
        feats, rel = _stack(chosen, idx)
        s = scorer.score(feats)
        u = generate_batch(kind, n, size, inner * len(idx), derive_seed(cell_seed, size), _warn=False)
        u = u.reshape(inner, len(idx), n, size)
        ranks = gumbel_pl.sample_rankings_batch(s[None, :, None, :], u)
        r = metrics.dcg_batch(ranks, rel[None, :, None, :])  # (inner, B, N)
        if target == "utility":
            values += r.sum(axis=(1, 2)) / (q * n)
        else:
            glp = gumbel_pl.log_prob_grad_batch(ranks, s[None, :, None, :])
            upstream = np.einsum("ibn,ibnl->ibl", r, glp) / (q * n)
            grads = grads + scorer.backprop(feats, upstream)  # (inner, P)
    if target != "utility":
        values = np.sum(np.square(grads), axis=-1)
    return values


def variance_decomposition(
    query_pool,
    scorer,
    kinds,
    q: int,
    n_grid,
    outer_reps: int,
    inner_reps: int,
    seed: int,
    target: str = "utility",
    threads: int = 1,
) -> VarianceDecomposition:
    """Law-of-total-variance split of the DCG utility estimator (or of the gradient's squared norm).

    Outer replication o draws a batch of ``q`` queries from the pool; the same
    batches are reused for every (kind, N) cell. Within each batch,
    ``inner_reps`` fresh randomizations give the conditional variance.

    ``var_between_queries`` is the ANOVA estimate of Var_Q[E_N[F|Q]]: the
    variance of the per-batch means minus ``mean_within_variance / inner_reps``.
    """
    if outer_reps < 30 or inner_reps < 30:
        raise ValueError("variance decomposition needs at least 30 outer and 30 inner reps")
    if len(query_pool) < q:
        raise ValueError(f"query pool of {len(query_pool)} is smaller than the batch size {q}")
    if target not in ("utility", "grad_norm_sq"):
        raise ValueError(f"unknown target {target!r}")
    kinds = [SequenceKind.parse(k) for k in kinds]
    pool = list(query_pool)
    rows, samples = [], {}
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        for kind in kinds:
            for n in n_grid:
                futures = [
                    ex.submit(
                        _outer, pool, scorer, kind, q, n, inner_reps, target,
                        derive_seed(seed, 7, o),
                        derive_seed(seed, _KIND_CODES[kind], n, o),
                    )
                    for o in range(outer_reps)
                ]
                vals = np.stack([f.result() for f in futures])  # (outer, inner)
                within = vals.var(axis=1, ddof=1)
                between = vals.mean(axis=1).var(ddof=1) - within.mean() / inner_reps
                rows.append(
                    {
                        "kind": kind.value,
                        "Q": q,
                        "N": n,
                        "var_between_queries": float(between),
                        "mean_within_variance": float(within.mean()),
                        "total_variance": float(vals.var(ddof=1)),
                    }
                )
                samples[(kind, n)] = vals
    return VarianceDecomposition(rows, samples)
