"""Scoring functions for PG-rank and the online training loop.

Two architectures share a flat parameter vector:

* ``linear``: ``s = x @ w`` (optionally ``+ b``)
* ``mlp``: ``s = tanh(x @ W1.T + b1) @ w2 + b2``, flattened as ``W1, b1, w2, b2``

Backpropagation is written out by hand; ``backprop_scores`` returns the exact
gradient of ``sum(upstream * scores)``.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from plqmc import estimators
from plqmc.lowdisc import NonPowerOfTwoWarning, SequenceKind, derive_seed, is_power_of_two

ARCHITECTURES = ("linear", "mlp")


@dataclass(frozen=True)
class ScorerParams:
    architecture: str
    feature_dim: int
    weights: np.ndarray
    hidden: int = 64
    bias: bool = False

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (param_count(self.architecture, self.feature_dim, self.hidden, self.bias),):
            raise ValueError(f"{w.size} weights do not fit a {self.architecture} scorer")
        if not np.all(np.isfinite(w)):
            raise ValueError("scorer weights must be finite")
        object.__setattr__(self, "weights", w)

    def _unpack(self):
        w, d, h = self.weights, self.feature_dim, self.hidden
        if self.architecture == "linear":
            return w[:d], (w[d] if self.bias else 0.0)
        w1 = w[: h * d].reshape(h, d)
        b1 = w[h * d : h * d + h]
        w2 = w[h * d + h : h * d + 2 * h]
        return w1, b1, w2, w[-1]

    def _check(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.shape[-1] != self.feature_dim:
            raise ValueError(f"features have dimension {x.shape[-1]}, scorer expects {self.feature_dim}")
        return x

    def score(self, features) -> np.ndarray:
        x = self._check(features)
        if self.architecture == "linear":
            w, b = self._unpack()
            return x @ w + b
        w1, b1, w2, b2 = self._unpack()
        return np.tanh(x @ w1.T + b1) @ w2 + b2

    def backprop(self, features, upstream) -> np.ndarray:
        """Gradient of ``sum(upstream * score(features))`` w.r.t. the weights.

        ``upstream`` may carry extra leading axes in front of the score shape;
        those axes are kept, giving one gradient per leading index.
        """
        x = self._check(features)
        up = np.asarray(upstream, dtype=np.float64)
        lead = up.shape[: up.ndim - (x.ndim - 1)]
        if up.shape[len(lead) :] != x.shape[:-1]:
            raise ValueError(f"upstream shape {up.shape} does not match scores {x.shape[:-1]}")
        xf = x.reshape(-1, self.feature_dim)
        uf = up.reshape(-1, xf.shape[0])
        if self.architecture == "linear":
            parts = [uf @ xf]
            if self.bias:
                parts.append(uf.sum(axis=1, keepdims=True))
        else:
            w1, b1, w2, _ = self._unpack()
            act = np.tanh(xf @ w1.T + b1)
            da = uf[:, :, None] * (w2 * (1.0 - act**2))[None]
            parts = [
                np.einsum("emh,md->ehd", da, xf).reshape(uf.shape[0], -1),
                da.sum(axis=1),
                uf @ act,
                uf.sum(axis=1, keepdims=True),
            ]
        return np.concatenate(parts, axis=1).reshape(lead + (self.weights.size,))


def param_count(architecture: str, feature_dim: int, hidden: int = 64, bias: bool = False) -> int:
    if architecture == "linear":
        return feature_dim + int(bias)
    return hidden * feature_dim + 2 * hidden + 1


def init_params(
    architecture: str, feature_dim: int, seed: int, hidden: int = 64, bias: bool = False
) -> ScorerParams:
    """Fan-in uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer."""
    rng = np.random.default_rng(seed)
    if architecture == "linear":
        bound = 1.0 / np.sqrt(feature_dim)
        w = rng.uniform(-bound, bound, feature_dim + int(bias))
    else:
        b_in, b_out = 1.0 / np.sqrt(feature_dim), 1.0 / np.sqrt(hidden)
        w = np.concatenate(
            [
                rng.uniform(-b_in, b_in, hidden * feature_dim + hidden),
                rng.uniform(-b_out, b_out, hidden + 1),
            ]
        )
    return ScorerParams(architecture, feature_dim, w, hidden, bias)


def zeros_like(params: ScorerParams) -> ScorerParams:
    return replace(params, weights=np.zeros_like(params.weights))


def score(params: ScorerParams, features) -> np.ndarray:
    return params.score(features)


def backprop_scores(params: ScorerParams, features, upstream) -> np.ndarray:
    return params.backprop(features, upstream)


# ------------------------------------------------------------ checkpoints --

CHECKPOINT_MAGIC = b"PLQMCCK1"
_ARCH_TAGS = {"linear": 0, "mlp": 1}
_HEADER = struct.Struct("<8sIIIIQ")  # magic, arch, bias, feature_dim, hidden, n_params


def save_checkpoint(params: ScorerParams, path) -> None:
    header = _HEADER.pack(
        CHECKPOINT_MAGIC,
        _ARCH_TAGS[params.architecture],
        int(params.bias),
        params.feature_dim,
        params.hidden,
        params.weights.size,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(params.weights.astype("<f8").tobytes())


def load_checkpoint(path) -> ScorerParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, arch, bias, feature_dim, hidden, n = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (magic {magic!r})")
    if len(blob) != _HEADER.size + 8 * n:
        raise ValueError(f"{path}: expected {n} parameters")
    weights = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    name = {v: k for k, v in _ARCH_TAGS.items()}[arch]
    return ScorerParams(name, feature_dim, weights, hidden, bool(bias))


# --------------------------------------------------------------- training --


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 1000
    mc_samples: int = 8
    kind: SequenceKind = SequenceKind.SOBOL
    epochs: int = 1
    seed: int = 0
    architecture: str = "mlp"
    hidden: int = 64
    reward: str = "dcg"

    def __post_init__(self):
        self.kind = SequenceKind.parse(self.kind)
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        for name in ("batch_size", "mc_samples", "epochs", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.reward not in estimators.REWARDS:
            raise ValueError(f"reward must be one of {estimators.REWARDS}")
        if self.kind is not SequenceKind.MC and not is_power_of_two(self.mc_samples):
            warnings.warn(
                f"mc_samples={self.mc_samples} is not a power of two; QMC balance is lost",
                NonPowerOfTwoWarning,
                stacklevel=3,
            )


@dataclass
class TrainingLog:
    records: list[dict] = field(default_factory=list)
    initial: ScorerParams | None = None
    params: ScorerParams | None = None

    header = ("batch_idx", "dcg", "ctr", "loss", "grad_norm_sq")

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=np.float64)


def _batches(stream, batch_size: int, epochs: int):
    if hasattr(stream, "batches"):
        for _ in range(epochs):
            yield from stream.batches(batch_size)
    else:
        batches = list(stream)
        for _ in range(epochs):
            yield from batches


def train_pg_rank(
    stream,
    config: TrainConfig,
    eval_hooks: Sequence[Callable[[int, ScorerParams, dict], None]] = (),
    params: ScorerParams | None = None,
    max_grade: float | None = None,
) -> TrainingLog:
    """Online PG-rank: for each batch, evaluate the current policy, then take one SGD step.

    ``stream`` is a ``Dataset`` (re-batched every epoch) or an iterable of query
    batches. Evaluation shows one Plackett-Luce ranking per query, drawn from a
    generator seeded by ``(config.seed, batch_idx)`` only, so runs that differ
    only in ``config.kind`` see common evaluation noise.
    """
    if params is None:
        feature_dim = stream.feature_dim if hasattr(stream, "feature_dim") else None
        if feature_dim is None:
            raise ValueError("params must be given when the stream has no feature_dim")
        params = init_params(config.architecture, feature_dim, config.seed, config.hidden)
    if max_grade is None:
        max_grade = getattr(stream, "max_grade", 1.0) or 1.0
    log = TrainingLog(initial=params)
    for batch_idx, batch in enumerate(_batches(stream, config.batch_size, config.epochs)):
        dcg_mean, ctr_mean = estimators.evaluate_displayed(
            batch, params, derive_seed(config.seed, 1, batch_idx), max_grade
        )
        est = estimators.policy_gradient(
            batch,
            params,
            config.kind,
            config.mc_samples,
            derive_seed(config.seed, 2, batch_idx),
            reward=config.reward,
            max_grade=max_grade,
        )
        if not (np.all(np.isfinite(est.g)) and np.isfinite(est.surrogate)):
            raise TrainingDiverged(f"non-finite gradient at batch {batch_idx}")
        record = {
            "batch_idx": batch_idx,
            "dcg": dcg_mean,
            "ctr": ctr_mean,
            "loss": -est.surrogate,
            "grad_norm_sq": est.norm_sq,
        }
        log.records.append(record)
        for hook in eval_hooks:
            hook(batch_idx, params, record)
        if config.learning_rate != 0:
            params = replace(params, weights=params.weights + config.learning_rate * est.g)
    log.params = params
    return log


def auc(values: Iterable[float]) -> float:
    """Area under a per-batch metric curve (trapezoid rule, unit spacing)."""
    v = np.asarray(list(values), dtype=np.float64)
    return float(np.trapezoid(v)) if v.size > 1 else float(v.sum())
