"""Ranking quality (DCG/NDCG) and a position-biased click simulator.

DCG uses linear gains and a ``log2(k + 1)`` discount. Clicks follow an
examination hypothesis: position k is examined with probability 1/k and an
examined item is clicked with probability ``grade / max_grade``.
"""

from __future__ import annotations

import numpy as np


def discounts(size: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, size + 2, dtype=np.float64))


def _check(ranking, rel) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(ranking, dtype=np.intp)
    g = np.asarray(rel, dtype=np.float64)
    if r.shape[-1] != g.shape[-1]:
        raise ValueError(f"ranking of length {r.shape[-1]} does not match {g.shape[-1]} grades")
    return r, g


def _cutoff(size: int, cutoff) -> int:
    if cutoff is None:
        return size
    if not 1 <= cutoff <= size:
        raise ValueError(f"cutoff must lie in [1, {size}], got {cutoff}")
    return int(cutoff)


def dcg_batch(rankings: np.ndarray, rel: np.ndarray, cutoff: int | None = None) -> np.ndarray:
    """DCG along the last axis; ``rel`` broadcasts against ``rankings``."""
    r, g = _check(rankings, rel)
    k = _cutoff(r.shape[-1], cutoff)
    gains = np.take_along_axis(np.broadcast_to(g, r.shape), r, axis=-1)[..., :k]
    return gains @ discounts(k)


def dcg(ranking, rel, cutoff: int | None = None) -> float:
    return float(dcg_batch(ranking, rel, cutoff))


def ideal_dcg(rel, cutoff: int | None = None) -> float:
    g = np.sort(np.asarray(rel, dtype=np.float64))[::-1]
    k = _cutoff(g.size, cutoff)
    return float(g[:k] @ discounts(k))


def ndcg(ranking, rel, cutoff: int | None = None) -> float:
    """DCG normalized by the ideal ordering; 0 when no item is relevant."""
    best = ideal_dcg(rel, cutoff)
    return dcg(ranking, rel, cutoff) / best if best > 0 else 0.0


def click_probabilities(ranking, rel, max_grade: float = 1.0) -> np.ndarray:
    r, g = _check(ranking, rel)
    if max_grade <= 0:
        return np.zeros(r.shape, dtype=np.float64)
    seen = 1.0 / np.arange(1, r.shape[-1] + 1, dtype=np.float64)
    return seen * np.take_along_axis(np.broadcast_to(g, r.shape), r, axis=-1) / max_grade


def simulate_clicks(ranking, rel, u, max_grade: float = 1.0) -> np.ndarray:
    """Binary clicks per position: click at k iff ``u[k] < (1/k) * rel[r_k] / max_grade``."""
    probs = click_probabilities(ranking, rel, max_grade)
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != probs.shape[-1]:
        raise ValueError("one uniform draw per position is required")
    return (u < probs).astype(np.int8)


def ctr(clicks) -> float:
    """Mean number of clicks per displayed list."""
    lists = [np.asarray(c) for c in clicks]
    if not lists:
        raise ValueError("ctr needs at least one list")
    return float(np.mean([c.sum() for c in lists]))
