"""Unsupervised aggregators: Borda Count, RRF and their rank-distribution versions.

All four score every item and sort descending; equal scores are ordered by
ascending item id.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .model import AggregateRun, QueryInstance
from .rankdist import rank_pmfs, unsup_contest_matrix

DEFAULT_RRF_C = 40.0


def borda_scores(q: QueryInstance) -> np.ndarray:
    """Sum of ``n - position`` over the inputs that rank each item.

    Missing items contribute nothing and no normalization by the number of
    appearances is applied.
    """
    scores = np.zeros(q.n)
    for tau in q.inputs:
        pos = tau.position_array(q.n)
        present = pos > 0
        scores[present] += q.n - pos[present]
    return scores


def rrf_scores(q: QueryInstance, C: float = DEFAULT_RRF_C) -> np.ndarray:
    if not C > 0:
        raise ValueError("RRF constant C must be positive")
    scores = np.zeros(q.n)
    for tau in q.inputs:
        pos = tau.position_array(q.n)
        present = pos > 0
        scores[present] += 1.0 / (C + pos[present])
    return scores


def expected_ranks(q: QueryInstance, denominator: str = "global") -> np.ndarray:
    """``(m, n)`` matrix of expected 0-based ranks, one row per input."""
    out = np.empty((q.m, q.n))
    for i, tau in enumerate(q.inputs):
        # column sums: total probability that the others beat item j
        out[i] = unsup_contest_matrix(tau, q.n, denominator).sum(axis=0)
    return out


def stagg_bc_scores(q: QueryInstance, denominator: str = "global") -> np.ndarray:
    """Expected Borda score ``(1/m) sum_i E[n - R(x, tau_i)]``.

    By linearity only the expected ranks are needed, not the full PMFs.
    """
    return (q.n - expected_ranks(q, denominator)).sum(axis=0) / q.m


def stagg_rrf_scores(q: QueryInstance, C: float = DEFAULT_RRF_C, denominator: str = "global") -> np.ndarray:
    """Expected reciprocal rank ``sum_i E[1 / (R(x, tau_i) + C)]`` over exact rank PMFs."""
    if not C > 0:
        raise ValueError("RRF constant C must be positive")
    weights = 1.0 / (np.arange(q.n) + C)
    scores = np.zeros(q.n)
    for tau in q.inputs:
        scores += rank_pmfs(unsup_contest_matrix(tau, q.n, denominator)) @ weights
    return scores


def _run(q: QueryInstance, scores: np.ndarray) -> AggregateRun:
    run = AggregateRun()
    run.add_scores(q, scores)
    return run


def borda(q: QueryInstance) -> AggregateRun:
    return _run(q, borda_scores(q))


def rrf(q: QueryInstance, C: float = DEFAULT_RRF_C) -> AggregateRun:
    return _run(q, rrf_scores(q, C))


def stagg_bc(q: QueryInstance) -> AggregateRun:
    return _run(q, stagg_bc_scores(q))


def stagg_rrf(q: QueryInstance, C: float = DEFAULT_RRF_C) -> AggregateRun:
    return _run(q, stagg_rrf_scores(q, C))


METHODS = ("borda", "rrf", "stagg-bc", "stagg-rrf")


def scorer(method: str, rrf_c: float = DEFAULT_RRF_C) -> Callable[[QueryInstance], np.ndarray]:
    if method == "borda":
        return borda_scores
    if method == "rrf":
        return lambda q: rrf_scores(q, rrf_c)
    if method == "stagg-bc":
        return stagg_bc_scores
    if method == "stagg-rrf":
        return lambda q: stagg_rrf_scores(q, rrf_c)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def aggregate(
    instances: Sequence[QueryInstance],
    method: str,
    rrf_c: float = DEFAULT_RRF_C,
    threads: int | None = 1,
) -> AggregateRun:
    """Aggregate every query with ``method``; output order follows ``instances``."""
    score = scorer(method, rrf_c)
    workers = threads or os.cpu_count() or 1
    if workers > 1 and len(instances) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_scores = list(pool.map(score, instances))
    else:
        all_scores = [score(q) for q in instances]
    run = AggregateRun()
    for q, s in zip(instances, all_scores):
        run.add_scores(q, s)
    return run
