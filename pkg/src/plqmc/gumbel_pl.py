"""Plackett-Luce rankings: Gumbel-perturbed argsort sampling, log-likelihood and its score gradient.

Rankings are integer arrays listing item indices from the top position down.
Batched helpers (``*_batch``) operate along the last axis and broadcast over
any leading axes.
"""

from __future__ import annotations

import itertools

import numpy as np

from plqmc.lowdisc import PointSet

EPS = 2.0**-32
MAX_ENUMERATION = 8


class SizeLimitError(ValueError):
    """Exhaustive enumeration requested for a list that is too long."""


def _as_scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size < 1:
        raise ValueError("scores must be a non-empty vector")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s


def _check_ranking(ranking, size: int) -> np.ndarray:
    r = np.asarray(ranking)
    if r.shape != (size,) or not np.array_equal(np.sort(r), np.arange(size)):
        raise ValueError(f"ranking {ranking!r} is not a permutation of {size} items")
    return r.astype(np.intp)


def gumbel_transform(u):
    """Standard Gumbel variates ``-log(-log(u))`` with u clamped to [2^-32, 1 - 2^-32]."""
    u = np.clip(np.asarray(u, dtype=np.float64), EPS, 1.0 - EPS)
    return -np.log(-np.log(u))


def sample_rankings_batch(scores: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Descending stable argsort of ``scores + gumbel(u)`` along the last axis.

    ``scores`` has shape ``(..., L)`` and must broadcast against ``u`` of shape
    ``(..., N, L)`` once a sample axis is inserted, i.e. pass ``scores[..., None, :]``
    yourself or a plain ``(L,)`` vector.
    """
    keys = np.asarray(scores) + gumbel_transform(u)
    return np.argsort(-keys, axis=-1, kind="stable")


def sample_rankings(scores, points) -> np.ndarray:
    """One ranking per row of ``points``; returns an ``(n, |scores|)`` int array."""
    s = _as_scores(scores)
    u = points.values if isinstance(points, PointSet) else np.asarray(points, dtype=np.float64)
    if u.ndim != 2 or u.shape[1] != s.size:
        raise ValueError(f"point set of shape {u.shape} does not match {s.size} scores")
    return sample_rankings_batch(s, u)


def _stepwise_lse(sorted_scores: np.ndarray) -> np.ndarray:
    """logsumexp of the items still unplaced at each step (last axis)."""
    return np.flip(np.logaddexp.accumulate(np.flip(sorted_scores, -1), axis=-1), -1)


def log_prob_batch(rankings: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Log-probabilities of ``rankings (..., L)`` under scores broadcastable to them."""
    s = np.broadcast_to(scores, rankings.shape)
    ordered = np.take_along_axis(s, rankings, axis=-1)
    return np.sum(ordered - _stepwise_lse(ordered), axis=-1)


def log_prob_grad_batch(rankings: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Gradients of ``log_prob_batch`` with respect to the scores, same shape as ``rankings``.

    The item at position i takes ``1 - sum_{j<=i} softmax_j(item)``; the cumulative
    sum is carried in log space so extreme scores do not overflow.
    """
    s = np.broadcast_to(scores, rankings.shape)
    ordered = np.take_along_axis(s, rankings, axis=-1)
    log_cum = np.logaddexp.accumulate(-_stepwise_lse(ordered), axis=-1)
    by_position = 1.0 - np.exp(ordered + log_cum)
    grad = np.empty_like(by_position)
    np.put_along_axis(grad, rankings, by_position, axis=-1)
    return grad


def log_prob(ranking, scores) -> float:
    s = _as_scores(scores)
    r = _check_ranking(ranking, s.size)
    return float(log_prob_batch(r, s))


def log_prob_grad(ranking, scores) -> np.ndarray:
    s = _as_scores(scores)
    r = _check_ranking(ranking, s.size)
    return log_prob_grad_batch(r, s)


def enumerate_pl(scores) -> list[tuple[tuple[int, ...], float]]:
    """Every ranking of the list with its exact probability (lists of at most 8 items)."""
    s = _as_scores(scores)
    if s.size > MAX_ENUMERATION:
        raise SizeLimitError(f"enumeration is capped at {MAX_ENUMERATION} items, got {s.size}")
    perms = np.array(list(itertools.permutations(range(s.size))), dtype=np.intp)
    probs = np.exp(log_prob_batch(perms, s))
    return [(tuple(int(i) for i in p), float(q)) for p, q in zip(perms, probs)]
