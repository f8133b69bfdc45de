"""Item feature mappings for the supervised model.

* ``BF``: normalized Borda position per input.
* ``MF``: rank-p SVD of each input's pairwise preference matrix.
* ``TF``: rank-p CP decomposition of the stacked item x item x input tensor.

The SVD (one-sided Jacobi) and CP-ALS solvers are implemented here.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import MAPPING_KINDS, PartialRanking, QueryInstance, feature_dimension

CP_RIDGE = 1e-10


def preference_matrix(tau: PartialRanking, n: int) -> np.ndarray:
    """``P[a, b] = +1`` if ``tau`` puts ``a`` above ``b``, ``-1`` if below, else 0."""
    pos = tau.position_array(n)
    present = pos > 0
    both = present[:, None] & present[None, :]
    return np.where(both, np.sign(pos[None, :] - pos[:, None]), 0).astype(np.float64)


@dataclass(frozen=True)
class SVDResult:
    U: np.ndarray  # n x p, orthonormal columns
    s: np.ndarray  # p singular values, non-increasing
    V: np.ndarray  # n x p, orthonormal columns

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.T


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Rounds of disjoint column pairs covering every pair once (``n`` even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        P = np.array(players[:half])
        Q = np.array(players[half:][::-1])
        rounds.append((P, Q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _complete_orthonormal(U: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace the columns of ``U`` not flagged ``good`` by an orthonormal complement."""
    n = U.shape[0]
    r = int(good.sum())
    if r == U.shape[1]:
        return U
    Q, _ = np.linalg.qr(np.hstack([U[:, good], np.eye(n)]))
    out = U.copy()
    out[:, ~good] = Q[:, r : r + int((~good).sum())]
    return out


def jacobi_svd(M: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60) -> SVDResult:
    """Full SVD of a square or tall matrix by one-sided (Hestenes) Jacobi rotations.

    Column pairs are rotated until mutually orthogonal; disjoint pairs are
    processed together in round-robin order. Columns left with (numerically)
    zero norm get an orthonormal completion in ``U``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] < M.shape[1]:
        raise ValueError("expected a matrix with at least as many rows as columns")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    rows, cols = M.shape
    width = cols + (cols % 2)
    A = np.zeros((rows, width))
    A[:, :cols] = M
    V = np.eye(width)
    norm = np.linalg.norm(M)
    floor = (1e-12 * norm) ** 2
    rounds = _round_robin(width) if width > 1 else []
    for _ in range(max_sweeps):
        worst = 0.0
        for P, Q in rounds:
            ap, aq = A[:, P], A[:, Q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            scale = np.maximum(np.sqrt(alpha * beta), floor)
            ratio = np.abs(gamma) / np.where(scale > 0, scale, 1.0)
            rotate = (ratio > tol) & (scale > 0)
            if not rotate.any():
                continue
            worst = max(worst, float(ratio[rotate].max()))
            g = np.where(rotate, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = np.where(rotate, 1.0 / np.sqrt(1.0 + t * t), 1.0)
            s = np.where(rotate, c * t, 0.0)
            A[:, P], A[:, Q] = c * ap - s * aq, s * ap + c * aq
            vp, vq = V[:, P], V[:, Q]
            V[:, P], V[:, Q] = c * vp - s * vq, s * vp + c * vq
        if worst <= tol:
            break
    A, V = A[:, :cols], V[:cols, :cols]
    sv = np.linalg.norm(A, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, A, V = sv[order], A[:, order], V[:, order]
    good = sv > max(1e-13 * (sv[0] if sv.size else 0.0), 0.0)
    U = np.zeros((rows, cols))
    U[:, good] = A[:, good] / sv[good]
    U = _complete_orthonormal(U, good)
    return SVDResult(U, sv, V)


def truncated_svd(M: np.ndarray, p: int) -> SVDResult:
    """Top-``p`` singular triplets of ``M``."""
    M = np.asarray(M, dtype=np.float64)
    if not 1 <= p <= min(M.shape):
        raise ValueError(f"factor rank p={p} must lie in 1..{min(M.shape)}")
    if M.shape[0] < M.shape[1]:
        t = jacobi_svd(M.T)
        return SVDResult(t.V[:, :p].copy(), t.s[:p].copy(), t.U[:, :p].copy())
    full = jacobi_svd(M)
    return SVDResult(full.U[:, :p].copy(), full.s[:p].copy(), full.V[:, :p].copy())


@dataclass(frozen=True)
class CPResult:
    U: np.ndarray  # n x p
    V: np.ndarray  # n x p
    W: np.ndarray  # m x p
    weights: np.ndarray  # lambda, p non-negative
    errors: list[float] = field(default_factory=list)  # Frobenius error after each sweep

    def reconstruct(self) -> np.ndarray:
        return np.einsum("j,aj,bj,kj->abk", self.weights, self.U, self.V, self.W)


def _normalize_columns(F: np.ndarray, previous: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(F, axis=0)
    zero = norms == 0.0
    out = np.where(zero, previous, F / np.where(zero, 1.0, norms))
    return out, norms


def cp_als(
    T: np.ndarray | Sequence[np.ndarray],
    p: int,
    max_sweeps: int = 50,
    tol: float = 1e-6,
    seed: int = 0,
) -> CPResult:
    """Rank-``p`` CP decomposition of a 3-way tensor by alternating least squares.

    ``T`` is an ``n1 x n2 x m`` array or a sequence of ``m`` slices. Each
    factor is solved exactly with the other two fixed through the Khatri-Rao
    normal equations ``F (G + ridge I)^+`` and its columns are rescaled to unit
    norm, the scale going into ``weights``. Iteration stops after
    ``max_sweeps`` or once the fit error changes by less than ``tol``
    relative to ``||T||``.
    """
    if not isinstance(T, np.ndarray):
        T = np.stack([np.asarray(s, dtype=np.float64) for s in T], axis=2)
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 3:
        raise ValueError("expected a 3-way tensor")
    if p < 1:
        raise ValueError("factor rank must be >= 1")
    n1, n2, m = T.shape
    rng = np.random.default_rng(seed)
    U, _ = _normalize_columns(rng.uniform(-0.5, 0.5, (n1, p)), np.eye(n1, p))
    V, _ = _normalize_columns(rng.uniform(-0.5, 0.5, (n2, p)), np.eye(n2, p))
    W, _ = _normalize_columns(rng.uniform(-0.5, 0.5, (m, p)), np.eye(m, p))
    lam = np.zeros(p)
    norm_t = float(np.linalg.norm(T))
    if norm_t == 0.0:
        return CPResult(U, V, W, lam, [0.0])
    ridge = CP_RIDGE * np.eye(p)
    errors: list[float] = []
    for _ in range(max_sweeps):
        G = (V.T @ V) * (W.T @ W)
        U, lam = _normalize_columns(np.einsum("abk,bj,kj->aj", T, V, W) @ np.linalg.pinv(G + ridge), U)
        G = (U.T @ U) * (W.T @ W)
        V, lam = _normalize_columns(np.einsum("abk,aj,kj->bj", T, U, W) @ np.linalg.pinv(G + ridge), V)
        G = (U.T @ U) * (V.T @ V)
        W, lam = _normalize_columns(np.einsum("abk,aj,bj->kj", T, U, V) @ np.linalg.pinv(G + ridge), W)
        error = float(np.linalg.norm(T - np.einsum("j,aj,bj,kj->abk", lam, U, V, W)))
        errors.append(error)
        if len(errors) > 1 and abs(errors[-2] - error) < tol * norm_t:
            break
    return CPResult(U, V, W, lam, errors)


@dataclass(frozen=True)
class FeatureTable:
    values: np.ndarray  # n x d
    mapping_kind: str
    factor_rank: int = 0

    @property
    def d(self) -> int:
        return self.values.shape[1]


def borda_features(q: QueryInstance) -> np.ndarray:
    out = np.zeros((q.n, q.m))
    for i, tau in enumerate(q.inputs):
        pos = tau.position_array(q.n)
        present = pos > 0
        out[present, i] = (q.n - pos[present]) / q.n
    return out


def _orient(F: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Column signs making each column agree with ``reference`` (+1 on ties)."""
    return np.where(reference @ F < 0, -1.0, 1.0)


def svd_features(q: QueryInstance, p: int, drop_singular_values: bool = False) -> np.ndarray:
    blocks = []
    for tau in q.inputs:
        P = preference_matrix(tau, q.n)
        f = truncated_svd(P, p)
        # (u, v) -> (-u, -v) leaves the factorization unchanged; pin it per query
        signs = _orient(f.U, P.sum(axis=1))
        f = SVDResult(f.U * signs, f.s, f.V * signs)
        blocks.append(f.U)
        if not drop_singular_values:
            blocks.append(np.broadcast_to(f.s, (q.n, p)))
        blocks.append(f.V)
    return np.hstack(blocks)


def tensor_features(q: QueryInstance, p: int, seed: int = 0) -> np.ndarray:
    slices = [preference_matrix(tau, q.n) for tau in q.inputs]
    cp = cp_als(slices, p, seed=seed)
    # Components are only defined up to order and paired sign flips; sort by
    # weight and point U with, and V against, each item's net pairwise wins.
    order = np.argsort(-cp.weights, kind="stable")
    wins = sum(slices).sum(axis=1)
    U, V = cp.U[:, order], cp.V[:, order]
    return np.hstack([U * _orient(U, wins), V * _orient(V, -wins)])


def map_features(
    q: QueryInstance,
    kind: str,
    p: int = 5,
    seed: int = 0,
    drop_singular_values: bool = False,
    minmax: bool = False,
) -> FeatureTable:
    """Feature table for one query under mapping ``kind`` (``BF``, ``MF`` or ``TF``).

    ``drop_singular_values`` removes the per-input singular value columns of
    ``MF`` (they are constant within a query). ``minmax`` rescales every
    column to [0, 1] within the query; constant columns become 0.
    """
    if kind not in MAPPING_KINDS:
        raise ValueError(f"unknown mapping kind {kind!r}")
    if kind in ("MF", "TF") and not 1 <= p <= q.n:
        raise ValueError(f"factor rank p={p} must lie in 1..n={q.n} for query {q.query_id}")
    if kind == "BF":
        values = borda_features(q)
    elif kind == "MF":
        values = svd_features(q, p, drop_singular_values)
    else:
        values = tensor_features(q, p, seed)
    if minmax:
        lo, hi = values.min(axis=0), values.max(axis=0)
        span = hi - lo
        values = np.where(span > 0, (values - lo) / np.where(span > 0, span, 1.0), 0.0)
    assert values.shape[1] == feature_dimension(kind, p, q.m, drop_singular_values)
    return FeatureTable(np.ascontiguousarray(values), kind, p if kind != "BF" else 0)


def features_csv(instances: Sequence[QueryInstance], tables: Sequence[FeatureTable]) -> str:
    """Debug dump ``qid,docid,f1,...,fd``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    d = tables[0].d if tables else 0
    writer.writerow(["qid", "docid"] + [f"f{k}" for k in range(1, d + 1)])
    for q, table in zip(instances, tables):
        for j in range(q.n):
            writer.writerow([q.query_id, q.doc_names[j]] + [repr(float(x)) for x in table.values[j]])
    return buf.getvalue()
