"""Supervised aggregation: expected ranking objectives and gradient-ascent training.

Each item's score is a Gaussian ``N(f(x), sigma^2)`` with ``f(x) = <w, psi(x)>``.
Pairwise win probabilities are Gaussian CDFs of score differences, and an
item's rank distribution is approximated by a normal with the Poisson-binomial
mean and variance, sampled at integer ranks and renormalized. The objective is
``sum_j sum_r value(j, r) * P(R_j = r)`` where ``value`` is the per-rank
contribution of NDCG, ERR or RBP.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .features import FeatureTable, map_features
from .metrics import MetricSpec, dcg_max, gain, satisfaction
from .model import AggregateRun, AggregationModel, QueryInstance, order_by_scores
from .rankdist import VARIANCE_FLOOR, rank_pmfs, sup_contest_matrix

logger = logging.getLogger(__name__)

DEFAULT_LR_GRID = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
DEFAULT_SIGMA_GRID = (1e-1, 1e-2, 1e-3, 1e-4)
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ObjectiveKind:
    kind: str = "NDCG_s"
    rbp_p: float = 0.95
    y_max: int = 2

    def __post_init__(self) -> None:
        if self.kind not in ("NDCG_s", "ERR_s", "RBP_s"):
            raise ValueError(f"unknown objective {self.kind!r}")
        if not 0.0 <= self.rbp_p <= 1.0:
            raise ValueError("rbp_p must lie in [0, 1]")
        if self.y_max < 1:
            raise ValueError("y_max must be >= 1")

    @classmethod
    def parse(cls, name: str, rbp_p: float = 0.95, y_max: int = 2) -> "ObjectiveKind":
        key = name.strip().lower().removesuffix("_s")
        kinds = {"ndcg": "NDCG_s", "err": "ERR_s", "rbp": "RBP_s"}
        if key not in kinds:
            raise ValueError(f"unknown objective {name!r}")
        return cls(kinds[key], rbp_p, y_max)


def score_items(features: FeatureTable | np.ndarray, w: np.ndarray) -> np.ndarray:
    values = features.values if isinstance(features, FeatureTable) else np.asarray(features)
    w = np.asarray(w, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != w.size:
        raise ValueError(f"feature dimension {values.shape[-1]} does not match weights ({w.size})")
    return values @ w


def err_stop_matrix(labels: np.ndarray, scores: np.ndarray, y_max: int) -> np.ndarray:
    """``stop[j, r]``: chance a user reaches rank ``r`` and stops at item ``j``.

    The items passed over are the first ``r`` items, other than ``j``, of
    the ranking sorted by ``scores``.
    """
    n = labels.size
    sat = satisfaction(labels, y_max)
    order = order_by_scores(scores)
    sorted_cont = 1.0 - sat[order]
    stop = np.empty((n, n))
    for slot, j in enumerate(order):
        rest = np.delete(sorted_cont, slot)
        stop[j, 0] = 1.0
        stop[j, 1:] = np.cumprod(rest)
    return stop * sat[:, None]


def value_matrix(labels: np.ndarray, scores: np.ndarray, obj: ObjectiveKind) -> tuple[np.ndarray, float]:
    """Per-(item, rank) contributions and a constant offset of the objective."""
    n = labels.size
    r = np.arange(n, dtype=np.float64)
    if obj.kind == "NDCG_s":
        ideal = dcg_max(labels)
        if ideal == 0.0:
            return np.zeros((n, n)), 1.0
        return np.outer(gain(labels), 1.0 / np.log2(2.0 + r)) / ideal, 0.0
    if obj.kind == "RBP_s":
        return (1.0 - obj.rbp_p) * np.outer(labels, obj.rbp_p**r), 0.0
    return err_stop_matrix(labels, scores, obj.y_max) / (r + 1.0), 0.0


def _normal_pmfs(contest: np.ndarray):
    n = contest.shape[0]
    mu = contest.sum(axis=0)
    var = (contest * (1.0 - contest)).sum(axis=0)
    var_f = np.maximum(var, VARIANCE_FLOOR)
    diff = np.arange(n, dtype=np.float64)[None, :] - mu[:, None]
    e = np.exp(-(diff**2) / (2.0 * var_f[:, None]))
    P = e / e.sum(axis=1, keepdims=True)
    return P, diff, var, var_f


def expected_objective(
    q: QueryInstance,
    scores: np.ndarray,
    sigma: float,
    obj: ObjectiveKind,
    exact: bool = False,
) -> float:
    """Expected NDCG, ERR or RBP of ``q`` under Gaussian score noise ``sigma``.

    ``exact=True`` uses exact Poisson-binomial rank distributions instead of
    the normal approximation; it is meant for diagnostics only.
    """
    labels = q.label_array()
    scores = np.asarray(scores, dtype=np.float64)
    values, offset = value_matrix(labels, scores, obj)
    contest = sup_contest_matrix(scores, sigma)
    P = rank_pmfs(contest) if exact else _normal_pmfs(contest)[0]
    return float(np.sum(values * P) + offset)


def objective_and_gradient(
    q: QueryInstance,
    features: FeatureTable | np.ndarray,
    w: np.ndarray,
    sigma: float,
    obj: ObjectiveKind,
) -> tuple[float, np.ndarray]:
    """Expected objective and its gradient with respect to ``w``.

    ERR stop probabilities and the NDCG normalizer are held constant; every
    other dependency (including the PMF renormalization) is differentiated.
    """
    X = features.values if isinstance(features, FeatureTable) else np.asarray(features)
    labels = q.label_array()
    scores = score_items(X, w)
    values, offset = value_matrix(labels, scores, obj)
    contest = sup_contest_matrix(scores, sigma)
    P, diff, var, var_f = _normal_pmfs(contest)
    objective = float(np.sum(values * P) + offset)

    # d/d e_r of sum_r V_r e_r / Z, written per unit of P
    centered = P * (values - np.sum(values * P, axis=1, keepdims=True))
    g_mu = np.sum(centered * diff, axis=1) / var_f
    g_var = np.sum(centered * diff**2, axis=1) / (2.0 * var_f**2)
    g_var = np.where(var > VARIANCE_FLOOR, g_var, 0.0)

    # contest[i, j] enters mu_j with weight 1 and var_j with weight 1 - 2 c
    g_contest = g_mu[None, :] + g_var[None, :] * (1.0 - 2.0 * contest)
    z = (scores[:, None] - scores[None, :]) / (sigma * _SQRT2)
    density = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi) / (sigma * _SQRT2)
    B = g_contest * density
    np.fill_diagonal(B, 0.0)
    g_scores = B.sum(axis=1) - B.sum(axis=0)
    return objective, X.T @ g_scores


def objective_gradient(q, features, w, sigma, obj) -> np.ndarray:
    return objective_and_gradient(q, features, w, sigma, obj)[1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate_grid: tuple[float, ...] = DEFAULT_LR_GRID
    sigma_grid: tuple[float, ...] = DEFAULT_SIGMA_GRID
    max_iterations: int = 500
    objective: ObjectiveKind = field(default_factory=ObjectiveKind)
    mapping_kind: str = "BF"
    factor_rank: int = 5
    seed: int = 1
    select_metric: str = "ndcg@10"
    drop_singular_values: bool = False
    minmax: bool = False

    def __post_init__(self) -> None:
        if not self.learning_rate_grid or not self.sigma_grid:
            raise ValueError("grids must be non-empty")
        if any(not lr > 0 for lr in self.learning_rate_grid):
            raise ValueError("learning rates must be positive")
        if any(not s > 0 for s in self.sigma_grid):
            raise ValueError("sigma values must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass(frozen=True)
class LogRow:
    grid_lr: float
    grid_sigma: float
    iteration: int
    train_objective: float
    valid_metric: float


@dataclass
class FitResult:
    model: AggregationModel
    log: list[LogRow]
    best_lr: float
    best_sigma: float
    best_iteration: int
    best_valid_metric: float

    def log_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["grid_lr", "grid_sigma", "iteration", "train_objective", "valid_metric"])
        for row in self.log:
            writer.writerow([repr(row.grid_lr), repr(row.grid_sigma), row.iteration,
                             repr(row.train_objective), repr(row.valid_metric)])
        return buf.getvalue()


def _features_for(instances: Sequence[QueryInstance], config: TrainConfig) -> list[FeatureTable]:
    return [
        map_features(q, config.mapping_kind, config.factor_rank, config.seed,
                     config.drop_singular_values, config.minmax)
        for q in instances
    ]


def _mean_metric(metric: MetricSpec, instances, tables, w) -> float:
    values = [metric(order_by_scores(score_items(t, w)), q.label_array()) for q, t in zip(instances, tables)]
    return float(np.mean(values))


def fit(
    train_set: Sequence[QueryInstance],
    valid_set: Sequence[QueryInstance],
    config: TrainConfig = TrainConfig(),
) -> FitResult:
    """Grid search over (learning rate, sigma) with full-batch gradient ascent.

    Every grid point starts from ``w = 0`` and runs up to
    ``config.max_iterations`` steps on the mean training objective. The
    returned model holds the iterate (over all grid points and iterations)
    with the best validation metric; ties keep the earliest.
    """
    if not train_set or not valid_set:
        raise ValueError("training and validation sets must be non-empty")
    for q in list(train_set) + list(valid_set):
        q.label_array()
    m_values = {q.m for q in list(train_set) + list(valid_set)}
    if config.mapping_kind != "TF" and len(m_values) > 1:
        raise ValueError(f"mapping {config.mapping_kind} needs a fixed input count, got {sorted(m_values)}")
    obj = config.objective
    metric = MetricSpec.parse(config.select_metric, obj.rbp_p, obj.y_max)
    train_tables = _features_for(train_set, config)
    valid_tables = _features_for(valid_set, config)
    d = train_tables[0].d

    log: list[LogRow] = []
    best = None  # (metric, lr, sigma, iteration, w)
    for lr in config.learning_rate_grid:
        for sigma in config.sigma_grid:
            w = np.zeros(d)
            for it in range(config.max_iterations + 1):
                total, grad = 0.0, np.zeros(d)
                for q, t in zip(train_set, train_tables):
                    o, g = objective_and_gradient(q, t, w, sigma, obj)
                    total += o
                    grad += g
                objective = total / len(train_set)
                grad /= len(train_set)
                if not (math.isfinite(objective) and np.all(np.isfinite(grad)) and np.all(np.isfinite(w))):
                    logger.warning("lr=%g sigma=%g: non-finite objective at iteration %d, grid point abandoned",
                                   lr, sigma, it)
                    break
                valid = _mean_metric(metric, valid_set, valid_tables, w)
                log.append(LogRow(lr, sigma, it, objective, valid))
                if best is None or valid > best[0]:
                    best = (valid, lr, sigma, it, w.copy())
                if it < config.max_iterations:
                    w = w + lr * grad
    if best is None:
        raise ValueError("every grid point produced a non-finite objective")
    valid, lr, sigma, it, w = best
    model = AggregationModel(
        weights=tuple(w),
        sigma=sigma,
        mapping_kind=config.mapping_kind,
        factor_rank=config.factor_rank,
        objective_kind=obj.kind,
        rbp_p=obj.rbp_p,
        y_max=obj.y_max,
        n_inputs=train_set[0].m,
        seed=config.seed,
        drop_singular_values=config.drop_singular_values,
        minmax=config.minmax,
    )
    return FitResult(model, log, lr, sigma, it, valid)


def predict(model: AggregationModel, instances: QueryInstance | Sequence[QueryInstance]) -> AggregateRun:
    """Rank each query by the model's linear scores over recomputed features."""
    if isinstance(instances, QueryInstance):
        instances = [instances]
    run = AggregateRun()
    for q in instances:
        if model.mapping_kind != "TF" and q.m != model.n_inputs:
            raise ValueError(f"query {q.query_id} has {q.m} inputs, the model expects {model.n_inputs}")
        table = map_features(q, model.mapping_kind, model.factor_rank, model.seed,
                             model.drop_singular_values, model.minmax)
        run.add_scores(q, score_items(table, model.w))
    return run
