"""Rank aggregation with pairwise-contest rank distributions."""

from .model import (
    AggregateRun,
    AggregationModel,
    PartialRanking,
    QueryInstance,
    RankDistribution,
    reindex,
)
from .unsup import borda, rrf, stagg_bc, stagg_rrf

__all__ = [
    "AggregateRun",
    "AggregationModel",
    "PartialRanking",
    "QueryInstance",
    "RankDistribution",
    "borda",
    "reindex",
    "rrf",
    "stagg_bc",
    "stagg_rrf",
]

__version__ = "0.1.0"
