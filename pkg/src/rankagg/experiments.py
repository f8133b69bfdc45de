"""Synthetic data, cross-validation folds and the ranking-input robustness sweep.

Every random draw comes from a named sub-stream of one user seed, so the
dataset, the folds and the sweep are reproducible independently of each other.
"""

from __future__ import annotations

import csv
import io
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metrics import MetricSpec
from .model import PartialRanking, QueryInstance, order_by_scores
from .unsup import DEFAULT_RRF_C, scorer

MAX_EMPTY_RETRIES = 100


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def planted_grades(n: int, y_max: int) -> np.ndarray:
    """Grade per planted position: equal-size buckets, best bucket gets ``y_max``."""
    return y_max - (np.arange(n) * (y_max + 1)) // n


def _noisy_input(truth: np.ndarray, missing_rate: float, noise: float, rng: np.random.Generator) -> PartialRanking:
    for _ in range(MAX_EMPTY_RETRIES):
        order = truth.copy()
        swaps = rng.random(order.size - 1) < noise
        for t in np.flatnonzero(swaps):
            order[t], order[t + 1] = order[t + 1], order[t]
        kept = order[rng.random(order.size) >= missing_rate]
        if kept.size:
            return PartialRanking.from_order(int(j) for j in kept)
    raise RuntimeError(f"could not draw a non-empty input in {MAX_EMPTY_RETRIES} attempts")


def generate_synthetic(
    n_queries: int,
    n_items: int,
    m_inputs: int,
    missing_rate: float = 0.5,
    noise: float = 0.1,
    y_max: int = 2,
    seed: int = 1,
) -> list[QueryInstance]:
    """Labeled queries whose inputs are noisy, incomplete copies of a planted ranking.

    Per query a random permutation is planted and graded by position
    bucket. Each input takes one left-to-right pass of adjacent swaps (each
    with probability ``noise``), then drops every item independently with
    probability ``missing_rate``. Empty inputs are redrawn.
    """
    if n_queries < 1 or n_items < 1 or m_inputs < 1:
        raise ValueError("n_queries, n_items and m_inputs must be >= 1")
    if not 0.0 <= missing_rate < 1.0:
        raise ValueError("missing_rate must lie in [0, 1)")
    if not 0.0 <= noise <= 0.5:
        raise ValueError("noise must lie in [0, 0.5]")
    if y_max < 1:
        raise ValueError("y_max must be >= 1")
    rng = substream(seed, "dataset")
    grades = planted_grades(n_items, y_max)
    width = len(str(n_items - 1))
    out = []
    for k in range(n_queries):
        truth = rng.permutation(n_items)
        labels = np.empty(n_items, dtype=np.int64)
        labels[truth] = grades
        inputs = tuple(_noisy_input(truth, missing_rate, noise, rng) for _ in range(m_inputs))
        out.append(QueryInstance(
            query_id=str(k + 1),
            n=n_items,
            inputs=inputs,
            labels=tuple(int(y) for y in labels),
            doc_names=tuple(f"d{j:0{width}d}" for j in range(n_items)),
        ))
    return out


def kfold(instances: Sequence[QueryInstance], k: int = 5, seed: int = 1):
    """``k`` (train, valid, test) splits: fold ``i`` tests, fold ``i+1`` validates."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(instances) < k:
        raise ValueError(f"{len(instances)} queries cannot fill {k} folds")
    perm = substream(seed, "folds").permutation(len(instances))
    folds = [[instances[i] for i in part] for part in np.array_split(perm, k)]
    splits = []
    for i in range(k):
        valid_idx = (i + 1) % k
        train = [q for f, fold in enumerate(folds) if f not in (i, valid_idx) for q in fold]
        splits.append((train, folds[valid_idx], folds[i]))
    return splits


@dataclass(frozen=True)
class SweepRow:
    method: str
    size: int
    repetition: int
    metric: str
    value: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    summary: dict[tuple[str, int], tuple[float, float]]  # (method, size) -> (mean, std)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "size", "repetition", "metric", "value"])
        for r in self.rows:
            writer.writerow([r.method, r.size, r.repetition, r.metric, f"{r.value:.6f}"])
        for (method, size), (mean, std) in self.summary.items():
            writer.writerow([method, size, "ALL", "mean", f"{mean:.6f}"])
            writer.writerow([method, size, "ALL", "std", f"{std:.6f}"])
        return buf.getvalue()


def robustness_sweep(
    instances: Sequence[QueryInstance],
    methods: Sequence[str] = ("borda", "rrf", "stagg-bc", "stagg-rrf"),
    sizes: Sequence[int] = (5, 10, 15, 20),
    repetitions: int = 20,
    metric: str | MetricSpec = "ndcg@5",
    seed: int = 1,
    rrf_c: float = DEFAULT_RRF_C,
) -> SweepResult:
    """Mean metric of each method when every query keeps only ``size`` random inputs.

    Inputs are subsampled per query without replacement; each (size,
    repetition) subsample is shared by all methods.
    """
    spec = metric if isinstance(metric, MetricSpec) else MetricSpec.parse(metric)
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    available = min(q.m for q in instances)
    for s in sizes:
        if not 1 <= s <= available:
            raise ValueError(f"size {s} exceeds the {available} inputs available")
    scorers = {m: scorer(m, rrf_c) for m in methods}
    labels = [q.label_array() for q in instances]
    rng = substream(seed, "sweep")
    rows = []
    per_cell: dict[tuple[str, int], list[float]] = {(m, s): [] for s in sizes for m in methods}
    for s in sizes:
        for rep in range(repetitions):
            subsets = [
                q.with_inputs([q.inputs[i] for i in sorted(rng.choice(q.m, size=s, replace=False))])
                for q in instances
            ]
            for method in methods:
                values = [spec(order_by_scores(scorers[method](q)), y) for q, y in zip(subsets, labels)]
                value = float(np.mean(values))
                rows.append(SweepRow(method, s, rep + 1, spec.name, value))
                per_cell[(method, s)].append(value)
    summary = {
        key: (float(np.mean(vals)), float(np.std(vals)))
        for key, vals in sorted(per_cell.items(), key=lambda kv: (list(methods).index(kv[0][0]), kv[0][1]))
    }
    return SweepResult(rows, summary)
