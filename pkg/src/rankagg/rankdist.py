"""Pairwise contest probabilities and the rank distributions built from them.

An item's rank is the number of pairwise contests it loses, so its
distribution is Poisson-binomial over the contest probabilities. The exact
PMF comes from the add-one-opponent recursion; a discretized normal
approximation is used where the objective must be differentiated.

A contest matrix ``C`` stores ``C[i, j] = P(item i beats item j)``; the
diagonal is ignored.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .model import PartialRanking, RankDistribution

PairwiseProbFn = Callable[[int, int], float]

VARIANCE_FLOOR = 1e-6
MAX_BRUTE_FORCE = 20


def _unsup_base(delta: float, n: int) -> float:
    return delta / n


def pairwise_prob_unsup(
    tau: PartialRanking,
    n: int,
    i: int,
    j: int,
    denominator: str = "global",
    base: Callable[[float, int], float] = _unsup_base,
) -> float:
    """Probability that item ``i`` beats item ``j`` according to input ``tau``.

    With ``p = base(|pos_i - pos_j|, denom)`` the item placed lower receives
    ``min(p, 1 - p)`` and the item placed higher ``max(p, 1 - p)``. When
    either item is missing from ``tau`` the contest is a coin flip.

    ``denominator`` selects ``n`` (``"global"``) or the number of items
    present in ``tau`` (``"subset"``).
    """
    if i == j:
        raise ValueError("an item does not contest itself")
    if n < 2:
        raise ValueError("pairwise contests need n >= 2")
    pi = tau.positions.get(i)
    pj = tau.positions.get(j)
    if pi is None or pj is None or pi == pj:
        return 0.5
    denom = n if denominator == "global" else len(tau)
    p = base(abs(pi - pj), denom)
    return min(p, 1.0 - p) if pi > pj else max(p, 1.0 - p)


def unsup_contest_matrix(
    tau: PartialRanking,
    n: int,
    denominator: str = "global",
    base: Callable[[np.ndarray, int], np.ndarray] = _unsup_base,
) -> np.ndarray:
    """Vectorized :func:`pairwise_prob_unsup` for every ordered pair."""
    pos = tau.position_array(n).astype(np.float64)
    present = pos > 0
    denom = n if denominator == "global" else max(len(tau), 1)
    p = base(np.abs(pos[:, None] - pos[None, :]), denom)
    lo = np.minimum(p, 1.0 - p)
    hi = np.maximum(p, 1.0 - p)
    both = present[:, None] & present[None, :]
    out = np.full((n, n), 0.5)
    below = both & (pos[:, None] > pos[None, :])
    above = both & (pos[:, None] < pos[None, :])
    out[below] = lo[below]
    out[above] = hi[above]
    np.fill_diagonal(out, 0.0)
    return out


def pairwise_prob_sup(scores: Sequence[float], sigma: float, i: int, j: int) -> float:
    """``P(s_i > s_j)`` for independent ``s_k ~ N(scores[k], sigma^2)``."""
    if i == j:
        raise ValueError("an item does not contest itself")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    si, sj = float(scores[i]), float(scores[j])
    if not (math.isfinite(si) and math.isfinite(sj)):
        raise ValueError("scores must be finite")
    return float(ndtr((si - sj) / (sigma * math.sqrt(2.0))))


def sup_contest_matrix(scores: np.ndarray, sigma: float) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    out = ndtr((scores[:, None] - scores[None, :]) / (sigma * math.sqrt(2.0)))
    np.fill_diagonal(out, 0.0)
    return out


def matrix_prob_fn(contest: np.ndarray) -> PairwiseProbFn:
    return lambda i, j: float(contest[i, j])


def _opponent_probs(prob: PairwiseProbFn, j: int, others: Sequence[int]) -> np.ndarray:
    if j in others:
        raise ValueError(f"item {j} listed among its own opponents")
    ps = np.array([prob(i, j) for i in others], dtype=np.float64)
    if np.any(~np.isfinite(ps)) or np.any(ps < 0.0) or np.any(ps > 1.0):
        raise ValueError("contest probabilities must lie in [0, 1]")
    return ps


def poisson_binomial_pmf(ps: np.ndarray) -> np.ndarray:
    pmf = np.zeros(ps.size + 1)
    pmf[0] = 1.0
    for t, p in enumerate(ps, start=1):
        # P_t(r) = P_{t-1}(r-1) p + P_{t-1}(r) (1-p)
        pmf[1 : t + 1] = pmf[0:t] * p + pmf[1 : t + 1] * (1.0 - p)
        pmf[0] *= 1.0 - p
    return pmf


def rank_distribution_dp(prob: PairwiseProbFn, j: int, others: Sequence[int]) -> RankDistribution:
    """Exact rank distribution of ``j`` against ``others`` by the add-one recursion."""
    return RankDistribution(poisson_binomial_pmf(_opponent_probs(prob, j, others)))


def rank_pmfs(contest: np.ndarray) -> np.ndarray:
    """Exact rank PMFs of all items at once; row ``j`` is item ``j``'s PMF over ``0..n-1``.

    Opponents are added in ascending id order, matching
    :func:`rank_distribution_dp` with ``others = [0, ..., n-1] \\ {j}``.
    """
    n = contest.shape[0]
    c = contest.copy()
    np.fill_diagonal(c, 0.0)
    pmf = np.zeros((n, n))
    pmf[:, 0] = 1.0
    for t, i in enumerate(range(n)):
        p = c[i][:, None]
        top = min(t + 1, n - 1)
        pmf[:, 1 : top + 1] = pmf[:, 0:top] * p + pmf[:, 1 : top + 1] * (1.0 - p)
        pmf[:, :1] *= 1.0 - p
    return pmf


def rank_mean(prob: PairwiseProbFn, j: int, others: Sequence[int]) -> float:
    """Expected rank of ``j``: the sum of its opponents' win probabilities."""
    return float(np.sum(_opponent_probs(prob, j, others)))


def normal_rank_pmf(mu: float, var: float, n: int) -> np.ndarray:
    r = np.arange(n, dtype=np.float64)
    e = np.exp(-((r - mu) ** 2) / (2.0 * max(var, VARIANCE_FLOOR)))
    return e / e.sum()


def rank_distribution_normal(prob: PairwiseProbFn, j: int, others: Sequence[int]) -> RankDistribution:
    """Normal approximation of the rank distribution, sampled at ranks ``0..len(others)``.

    Uses mean ``sum p`` and variance ``sum p(1-p)`` (floored at
    ``VARIANCE_FLOOR``), then renormalizes the sampled density.
    """
    if len(others) < 1:
        raise ValueError("the normal approximation needs at least one opponent")
    ps = _opponent_probs(prob, j, others)
    mu = float(ps.sum())
    var = float(np.sum(ps * (1.0 - ps)))
    return RankDistribution(normal_rank_pmf(mu, var, len(others) + 1))


def brute_force_rank_distribution(prob: PairwiseProbFn, j: int, others: Sequence[int]) -> RankDistribution:
    """Rank PMF by enumerating every win/loss outcome of the contests (test oracle)."""
    if len(others) > MAX_BRUTE_FORCE:
        raise ValueError(f"too many opponents for enumeration ({len(others)} > {MAX_BRUTE_FORCE})")
    ps = _opponent_probs(prob, j, others)
    mass = np.zeros(ps.size + 1)
    for outcome in itertools.product((0, 1), repeat=ps.size):
        weight = 1.0
        for won, p in zip(outcome, ps):
            weight *= p if won else 1.0 - p
        mass[sum(outcome)] += weight
    return RankDistribution(mass)
