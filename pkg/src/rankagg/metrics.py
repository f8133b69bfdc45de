"""Graded-relevance evaluation: NDCG@k, ERR and RBP."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import AggregateRun, QueryInstance


@dataclass(frozen=True)
class MetricSpec:
    kind: str  # "NDCG", "ERR" or "RBP"
    k: int = 0  # NDCG cutoff, 0 = full depth
    rbp_p: float = 0.95
    y_max: int = 2

    def __post_init__(self) -> None:
        if self.kind not in ("NDCG", "ERR", "RBP"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.k < 0:
            raise ValueError("cutoff must be >= 0")
        if not 0.0 <= self.rbp_p <= 1.0:
            raise ValueError("rbp_p must lie in [0, 1]")
        if self.y_max < 1:
            raise ValueError("y_max must be >= 1")

    @property
    def name(self) -> str:
        if self.kind == "NDCG":
            return f"ndcg@{self.k}" if self.k else "ndcg"
        return self.kind.lower()

    @classmethod
    def parse(cls, text: str, rbp_p: float = 0.95, y_max: int = 2) -> "MetricSpec":
        """Parse names like ``ndcg@5``, ``ndcg``, ``err`` or ``rbp``."""
        name = text.strip().lower()
        kind, _, cutoff = name.partition("@")
        if kind == "ndcg":
            try:
                k = int(cutoff) if cutoff else 0
            except ValueError:
                raise ValueError(f"bad NDCG cutoff in {text!r}") from None
            return cls("NDCG", k, rbp_p, y_max)
        if kind in ("err", "rbp") and not cutoff:
            return cls(kind.upper(), 0, rbp_p, y_max)
        raise ValueError(f"unknown metric {text!r}")

    def __call__(self, ranking: Sequence[int], labels: Sequence[float]) -> float:
        if self.kind == "NDCG":
            return ndcg(ranking, labels, self.k)
        if self.kind == "ERR":
            return err(ranking, labels, self.y_max)
        return rbp(ranking, labels, self.rbp_p)


def gain(labels) -> np.ndarray:
    return np.exp2(np.asarray(labels, dtype=np.float64)) - 1.0


def discount(positions) -> np.ndarray:
    """``1 / log2(1 + pos)`` for 1-based positions."""
    return 1.0 / np.log2(1.0 + np.asarray(positions, dtype=np.float64))


def dcg_max(labels, k: int = 0) -> float:
    labels = np.asarray(labels, dtype=np.float64)
    k = labels.size if k <= 0 else min(k, labels.size)
    ideal = np.sort(labels)[::-1][:k]
    return float(np.sum(gain(ideal) * discount(np.arange(1, k + 1))))


def ndcg(ranking: Sequence[int], labels: Sequence[float], k: int = 0) -> float:
    """NDCG at cutoff ``k`` (0 or ``k > n`` means full depth).

    Queries whose labels are all zero score 1.0.
    """
    labels = np.asarray(labels, dtype=np.float64)
    ideal = dcg_max(labels, k)
    if ideal == 0.0:
        return 1.0
    k = labels.size if k <= 0 else min(k, labels.size)
    top = labels[np.asarray(ranking, dtype=np.int64)[:k]]
    return float(np.sum(gain(top) * discount(np.arange(1, top.size + 1))) / ideal)


def satisfaction(labels, y_max: int) -> np.ndarray:
    return gain(labels) / 2.0**y_max


def err(ranking: Sequence[int], labels: Sequence[float], y_max: int = 2) -> float:
    """Expected reciprocal rank with satisfaction ``(2^y - 1) / 2^y_max``."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size and labels.max() > y_max:
        raise ValueError(f"label {labels.max()} exceeds y_max={y_max}")
    sat = satisfaction(labels[np.asarray(ranking, dtype=np.int64)], y_max)
    reach = np.concatenate(([1.0], np.cumprod(1.0 - sat)[:-1]))
    return float(np.sum(sat * reach / np.arange(1, sat.size + 1)))


def rbp(ranking: Sequence[int], labels: Sequence[float], p: float = 0.95) -> float:
    """Rank-biased precision on raw grades: ``(1-p) sum y_pos p^(pos-1)``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    ys = np.asarray(labels, dtype=np.float64)[np.asarray(ranking, dtype=np.int64)]
    return float((1.0 - p) * np.sum(ys * p ** np.arange(ys.size)))


@dataclass
class MetricTable:
    metrics: list[str]
    per_query: dict[str, dict[str, float]]

    def mean(self, metric: str) -> float:
        return float(np.mean([row[metric] for row in self.per_query.values()]))

    @property
    def means(self) -> dict[str, float]:
        return {name: self.mean(name) for name in self.metrics}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["qid", "metric", "value"])
        for qid, row in self.per_query.items():
            for name in self.metrics:
                writer.writerow([qid, name, f"{row[name]:.6f}"])
        for name in self.metrics:
            writer.writerow(["ALL", name, f"{self.mean(name):.6f}"])
        return buf.getvalue()


def evaluate_run(
    run: AggregateRun,
    instances: Sequence[QueryInstance] | Mapping[str, QueryInstance],
    specs: Sequence[MetricSpec],
) -> MetricTable:
    """Per-query and mean metric values of ``run`` against labeled ``instances``."""
    if not specs:
        raise ValueError("no metrics requested")
    by_qid = instances if isinstance(instances, Mapping) else {q.query_id: q for q in instances}
    if not run.rankings:
        raise ValueError("run is empty")
    table = MetricTable([s.name for s in specs], {})
    for qid, entries in run.rankings.items():
        if qid not in by_qid:
            raise ValueError(f"run references unknown query {qid!r}")
        q = by_qid[qid]
        labels = q.label_array()
        ranking = [item for item, _ in entries]
        if any(item < 0 or item >= q.n for item in ranking):
            raise ValueError(f"run references unknown item for query {qid!r}")
        if sorted(ranking) != list(range(q.n)):
            raise ValueError(f"run for query {qid!r} does not rank each of its {q.n} items exactly once")
        table.per_query[qid] = {s.name: s(ranking, labels) for s in specs}
    return table
