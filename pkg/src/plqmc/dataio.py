"""LTR datasets (libsvm with qid), synthetic query streams, and CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np


class ParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Query:
    qid: str
    features: np.ndarray  # (items, feature_dim)
    rel: np.ndarray

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"query {self.qid!r} needs a non-empty 2-D feature matrix")
        if self.rel.shape != (self.features.shape[0],):
            raise ValueError(f"query {self.qid!r}: one relevance grade per item is required")
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"query {self.qid!r} has non-finite features")

    @property
    def size(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class Dataset:
    queries: tuple[Query, ...]
    feature_dim: int
    max_grade: float

    def __len__(self) -> int:
        return len(self.queries)

    def batches(self, batch_size: int) -> Iterator[list[Query]]:
        for start in range(0, len(self.queries), batch_size):
            yield list(self.queries[start : start + batch_size])


def parse_libsvm_qid(lines: Iterable[str] | str) -> Dataset:
    """Read ``<grade> qid:<id> <idx>:<val> ...`` lines.

    Consecutive lines with the same qid form one query; a qid that reappears
    after another one starts a new query. Missing feature indices are zero.
    """
    if isinstance(lines, str):
        lines = io.StringIO(lines)
    groups: list[tuple[str, list[float], list[dict[int, float]]]] = []
    feature_dim = 0
    for line_no, raw in enumerate(lines, start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        tokens = body.split()
        try:
            grade = float(tokens[0])
        except ValueError:
            raise ParseError(line_no, f"non-numeric grade {tokens[0]!r}") from None
        if not math.isfinite(grade) or grade < 0:
            raise ParseError(line_no, f"grade must be finite and non-negative, got {tokens[0]!r}")
        if len(tokens) < 2 or not tokens[1].startswith("qid:") or len(tokens[1]) == 4:
            raise ParseError(line_no, "expected 'qid:<id>' after the grade")
        qid = tokens[1][4:]
        row: dict[int, float] = {}
        last = 0
        for tok in tokens[2:]:
            idx_s, sep, val_s = tok.partition(":")
            try:
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise ParseError(line_no, f"malformed feature {tok!r}") from None
            if not sep or idx <= last:
                raise ParseError(line_no, f"feature indices must be 1-based and ascending at {tok!r}")
            if not math.isfinite(val):
                raise ParseError(line_no, f"non-finite feature value {tok!r}")
            row[idx] = val
            last = idx
        feature_dim = max(feature_dim, last)
        if not groups or groups[-1][0] != qid:
            groups.append((qid, [], []))
        groups[-1][1].append(grade)
        groups[-1][2].append(row)
    if not groups:
        raise EmptyDatasetError("no data lines found")
    queries = []
    for qid, grades, rows in groups:
        feats = np.zeros((len(rows), feature_dim))
        for i, row in enumerate(rows):
            for idx, val in row.items():
                feats[i, idx - 1] = val
        queries.append(Query(qid, feats, np.asarray(grades)))
    max_grade = max(float(q.rel.max()) for q in queries)
    return Dataset(tuple(queries), feature_dim, max_grade)


def load_libsvm(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm_qid(fh)


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return ""
        if float(x).is_integer() and abs(x) < 2**53:
            return str(int(x))
        return f"{float(x):.17g}"
    return str(x)


def format_libsvm(dataset: Dataset) -> str:
    out = []
    for q in dataset.queries:
        for grade, row in zip(q.rel, q.features):
            feats = " ".join(f"{j + 1}:{_num(v)}" for j, v in enumerate(row) if v != 0)
            out.append(f"{_num(grade)} qid:{q.qid}" + (f" {feats}" if feats else ""))
    return "\n".join(out) + "\n"


def synthetic_stream(n_items: int, feature_dim: int, n_queries: int, seed: int) -> Dataset:
    """Gaussian item features; an item is relevant iff a hidden linear score beats the query median."""
    if min(n_items, feature_dim, n_queries) < 1:
        raise ValueError("n_items, feature_dim and n_queries must be positive")
    rng = np.random.default_rng(int(seed) & (2**64 - 1))
    hidden = rng.standard_normal(feature_dim)
    feats = rng.standard_normal((n_queries, n_items, feature_dim))
    latent = feats @ hidden
    rel = (latent > np.median(latent, axis=1, keepdims=True)).astype(np.float64)
    queries = tuple(Query(str(i), feats[i], rel[i]) for i in range(n_queries))
    return Dataset(queries, feature_dim, float(rel.max()))


def write_results(rows: Sequence[dict], path, header: Sequence[str]) -> None:
    """CSV with a fixed header; floats round-trip (17 significant digits), NaN as empty."""
    if not rows:
        raise ValueError("refusing to write an empty table")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_num(row[col]) for col in header])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc


def read_results(path) -> list[dict]:
    """Inverse of ``write_results``: numeric cells become floats, empty cells NaN."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))

    def conv(v: str):
        if v == "":
            return float("nan")
        try:
            return float(v)
        except ValueError:
            return v

    return [{k: conv(v) for k, v in row.items()} for row in rows]


def write_metadata(meta: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def output_dir(default: str | os.PathLike = "results") -> Path:
    return Path(os.environ.get("PLQMC_OUT_DIR", default))
