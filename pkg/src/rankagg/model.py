"""Domain types shared across the toolkit.

Positions inside ranking inputs are 1-based (the top item of an input has
position 1). Ranks inside the engine are 0-based (rank 0 is best). Items that
an input does not rank simply have no entry in that input's position map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

MAPPING_KINDS = ("BF", "MF", "TF")
OBJECTIVE_KINDS = ("NDCG_s", "ERR_s", "RBP_s")


class InstanceError(ValueError):
    """Raised when query data violates an instance invariant."""


@dataclass(frozen=True)
class PartialRanking:
    """Positions of the present subset of a query's items in one ranking input."""

    positions: Mapping[int, int]

    def __post_init__(self) -> None:
        positions = dict(self.positions)
        for item, pos in positions.items():
            if item < 0:
                raise InstanceError(f"negative item id {item}")
            if pos < 1:
                raise InstanceError(f"position {pos} of item {item} is below 1")
        if sorted(positions.values()) != list(range(1, len(positions) + 1)):
            raise InstanceError("positions must be exactly 1..k with no ties or gaps")
        object.__setattr__(self, "positions", MappingProxyType(positions))

    def __len__(self) -> int:
        return len(self.positions)

    def __contains__(self, item: object) -> bool:
        return item in self.positions

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PartialRanking):
            return NotImplemented
        return dict(self.positions) == dict(other.positions)

    def __hash__(self) -> int:
        return hash(frozenset(self.positions.items()))

    @classmethod
    def from_order(cls, items: Iterable[int]) -> "PartialRanking":
        """Build a ranking from items listed best first."""
        return cls({item: pos for pos, item in enumerate(items, start=1)})

    def order(self) -> list[int]:
        """Present items, best first."""
        return sorted(self.positions, key=self.positions.__getitem__)

    def position_array(self, n: int) -> np.ndarray:
        """Length-``n`` integer array of positions with 0 marking absent items."""
        arr = np.zeros(n, dtype=np.int64)
        for item, pos in self.positions.items():
            if item >= n:
                raise InstanceError(f"item id {item} out of range for n={n}")
            arr[item] = pos
        return arr


@dataclass(frozen=True)
class QueryInstance:
    """One query: its items, ranking inputs and optional graded labels."""

    query_id: str
    n: int
    inputs: tuple[PartialRanking, ...]
    labels: tuple[int, ...] | None = None
    doc_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if self.n < 1:
            raise InstanceError(f"query {self.query_id}: n must be >= 1")
        if not self.inputs:
            raise InstanceError(f"query {self.query_id}: at least one ranking input required")
        for tau in self.inputs:
            for item in tau.positions:
                if item >= self.n:
                    raise InstanceError(
                        f"query {self.query_id}: item id {item} out of range for n={self.n}"
                    )
        if self.labels is not None:
            labels = tuple(int(y) for y in self.labels)
            if len(labels) != self.n:
                raise InstanceError(f"query {self.query_id}: expected {self.n} labels")
            if any(y < 0 for y in labels):
                raise InstanceError(f"query {self.query_id}: grades must be >= 0")
            object.__setattr__(self, "labels", labels)
        names = tuple(self.doc_names) if self.doc_names else tuple(str(j) for j in range(self.n))
        if len(names) != self.n:
            raise InstanceError(f"query {self.query_id}: expected {self.n} doc names")
        if len(set(names)) != self.n:
            raise InstanceError(f"query {self.query_id}: duplicate document name")
        object.__setattr__(self, "doc_names", names)

    @property
    def m(self) -> int:
        return len(self.inputs)

    def label_array(self) -> np.ndarray:
        if self.labels is None:
            raise InstanceError(f"query {self.query_id} has no relevance labels")
        return np.asarray(self.labels, dtype=np.float64)

    def with_inputs(self, inputs: Sequence[PartialRanking]) -> "QueryInstance":
        return QueryInstance(self.query_id, self.n, tuple(inputs), self.labels, self.doc_names)


def reindex(
    query_id: str,
    doc_names: Sequence[str],
    input_positions: Sequence[Mapping[str, int]],
    labels: Sequence[int] | Mapping[str, int] | None = None,
) -> QueryInstance:
    """Build a :class:`QueryInstance` from externally keyed data.

    Documents get dense ids ``0..n-1`` in the order of ``doc_names``. Each
    input's raw positions (any increasing integers) are compacted to
    ``1..k`` keeping their relative order.
    """
    if len(set(doc_names)) != len(doc_names):
        seen: set[str] = set()
        dup = next(d for d in doc_names if d in seen or seen.add(d))
        raise InstanceError(f"query {query_id}: duplicate document key {dup!r}")
    index = {name: j for j, name in enumerate(doc_names)}
    inputs = []
    for i, raw in enumerate(input_positions):
        for name in raw:
            if name not in index:
                raise InstanceError(f"query {query_id}: input {i + 1} ranks unknown document {name!r}")
        values = list(raw.values())
        if len(set(values)) != len(values):
            raise InstanceError(f"query {query_id}: duplicate position in input {i + 1}")
        ordered = sorted(raw, key=raw.__getitem__)
        inputs.append(PartialRanking.from_order(index[name] for name in ordered))
    if isinstance(labels, Mapping):
        labels = [labels[name] for name in doc_names]
    return QueryInstance(
        query_id=query_id,
        n=len(doc_names),
        inputs=tuple(inputs),
        labels=None if labels is None else tuple(labels),
        doc_names=tuple(doc_names),
    )


@dataclass(frozen=True)
class RankDistribution:
    """Probability mass over 0-based ranks ``0..len(mass)-1``."""

    mass: np.ndarray

    def __post_init__(self) -> None:
        mass = np.asarray(self.mass, dtype=np.float64)
        if mass.ndim != 1 or mass.size == 0:
            raise ValueError("mass must be a non-empty vector")
        if np.any(mass < -1e-12) or np.any(mass > 1 + 1e-12):
            raise ValueError("mass entries must lie in [0, 1]")
        if abs(mass.sum() - 1.0) > 1e-9:
            raise ValueError(f"mass sums to {mass.sum()!r}, not 1")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    def __len__(self) -> int:
        return self.mass.size

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.mass.size), self.mass))

    def expect(self, values: np.ndarray) -> float:
        """Expectation of ``values[r]`` under this distribution."""
        return float(np.dot(values[: self.mass.size], self.mass))


def order_by_scores(scores: np.ndarray) -> np.ndarray:
    """Item ids sorted by descending score; equal scores go by ascending id."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


@dataclass
class AggregateRun:
    """Final rankings per query, each a list of ``(item_id, score)`` best first."""

    rankings: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    doc_names: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def add_scores(self, query: QueryInstance, scores: np.ndarray) -> None:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (query.n,):
            raise ValueError(f"query {query.query_id}: expected {query.n} scores")
        if not np.all(np.isfinite(scores)):
            raise ValueError(f"query {query.query_id}: non-finite score")
        order = order_by_scores(scores)
        self.rankings[query.query_id] = [(int(j), float(scores[j])) for j in order]
        self.doc_names[query.query_id] = query.doc_names

    def ranking(self, query_id: str) -> list[int]:
        return [item for item, _ in self.rankings[query_id]]

    def validate(self) -> None:
        for qid, entries in self.rankings.items():
            for (a, sa), (b, sb) in zip(entries, entries[1:]):
                if not (math.isfinite(sa) and math.isfinite(sb)):
                    raise ValueError(f"query {qid}: non-finite score")
                if sa < sb or (sa == sb and a > b):
                    raise ValueError(f"query {qid}: entries out of order at item {b}")

    def __len__(self) -> int:
        return len(self.rankings)


def feature_dimension(mapping_kind: str, factor_rank: int, n_inputs: int,
                      drop_singular_values: bool = False) -> int:
    if mapping_kind == "BF":
        return n_inputs
    if mapping_kind == "MF":
        return (2 if drop_singular_values else 3) * factor_rank * n_inputs
    if mapping_kind == "TF":
        return 2 * factor_rank
    raise ValueError(f"unknown mapping kind {mapping_kind!r}")


@dataclass(frozen=True)
class AggregationModel:
    """Linear scoring model learned by supervised aggregation.

    ``n_inputs``, ``seed`` and the feature switches are needed to recompute the
    feature table at prediction time.
    """

    weights: tuple[float, ...]
    sigma: float = 0.01
    mapping_kind: str = "BF"
    factor_rank: int = 5
    objective_kind: str = "NDCG_s"
    rbp_p: float = 0.95
    y_max: int = 2
    n_inputs: int = 0
    seed: int = 0
    drop_singular_values: bool = False
    minmax: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.mapping_kind not in MAPPING_KINDS:
            raise ValueError(f"unknown mapping kind {self.mapping_kind!r}")
        if self.objective_kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.objective_kind!r}")
        if not 0.0 <= self.rbp_p <= 1.0:
            raise ValueError("rbp_p must lie in [0, 1]")
        d = feature_dimension(self.mapping_kind, self.factor_rank, self.n_inputs,
                              self.drop_singular_values)
        if len(self.weights) != d:
            raise ValueError(
                f"weights have dimension {len(self.weights)}, mapping "
                f"{self.mapping_kind} with p={self.factor_rank}, m={self.n_inputs} needs {d}"
            )

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)
