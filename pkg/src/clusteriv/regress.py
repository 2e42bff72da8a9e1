"""Least-squares kernel and cluster-centering primitives.

Every estimator in the package reduces to a handful of operations on an
``N``-row design: an orthogonal-decomposition least-squares solve, cluster
means, and the within-cluster transformation ``v_i - mean(v over cluster c(i))``.
Cluster indicator dummies are never materialized here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, RankDeficient

EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class ClusterIndex:
    """Mapping between units and clusters.

    Group ids are dense ``0..G-1`` and assigned by first appearance of each
    label, so the mapping is stable under any reordering that keeps the
    relative order of first appearances.

    Attributes
    ----------
    labels : ndarray
        Original cluster label for each group id.
    group_of : ndarray of int
        Group id of every unit.
    sizes : ndarray of int
        ``n_g`` for every group.
    """

    labels: np.ndarray
    group_of: np.ndarray
    sizes: np.ndarray
    _order: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self._order is None:
            object.__setattr__(self, "_order", np.argsort(self.group_of, kind="stable"))

    @classmethod
    def from_labels(cls, labels: Sequence) -> "ClusterIndex":
        arr = np.asarray(labels)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionMismatch("cluster labels must be a non-empty 1-d sequence")
        uniq, first, inverse = np.unique(arr, return_index=True, return_inverse=True)
        rank = np.empty(uniq.size, dtype=np.int64)
        by_first = np.argsort(first, kind="stable")
        rank[by_first] = np.arange(uniq.size)
        group_of = rank[inverse.reshape(-1)]
        return cls.from_group_ids(group_of, labels=uniq[by_first])

    @classmethod
    def from_group_ids(cls, group_of: Sequence[int], labels=None) -> "ClusterIndex":
        """Build from integer ids that are already dense ``0..G-1``."""
        g = np.asarray(group_of, dtype=np.int64).reshape(-1)
        if g.size == 0 or g.min() < 0:
            raise DimensionMismatch("group ids must be non-negative")
        sizes = np.bincount(g)
        if np.any(sizes == 0):
            raise DimensionMismatch("group ids must be dense 0..G-1")
        if labels is None:
            labels = np.arange(sizes.size)
        return cls(np.asarray(labels), g, sizes)

    @property
    def n_units(self) -> int:
        return int(self.group_of.size)

    @property
    def n_clusters(self) -> int:
        return int(self.sizes.size)

    def members(self, g: int) -> np.ndarray:
        """Unit indices of group ``g`` in ascending order."""
        starts = np.concatenate(([0], np.cumsum(self.sizes)))
        return self._order[starts[g]:starts[g + 1]]

    def dummies(self) -> np.ndarray:
        """Dense ``N x G`` indicator matrix. Meant for tests and oracles."""
        out = np.zeros((self.n_units, self.n_clusters))
        out[np.arange(self.n_units), self.group_of] = 1.0
        return out

    def take(self, groups: Sequence[int]) -> tuple[np.ndarray, "ClusterIndex"]:
        """Rows of the listed groups (repeats allowed), re-indexed by draw order.

        Returns the selected unit indices and a new index in which the k-th
        drawn group becomes group ``k``.
        """
        groups = np.asarray(groups, dtype=np.int64)
        rows = [self.members(g) for g in groups]
        new_ids = np.repeat(np.arange(groups.size), self.sizes[groups])
        return np.concatenate(rows), ClusterIndex.from_group_ids(new_ids)


@dataclass
class LeastSquaresSolution:
    coefficients: np.ndarray
    residuals: np.ndarray
    rank_ok: bool
    gram_condition: float
    rank: int


def _check_rows(v: np.ndarray, n: int, what: str) -> None:
    if v.shape[0] != n:
        raise DimensionMismatch(f"{what} has {v.shape[0]} rows, expected {n}")


def ols_fit(X, y, *, raise_on_rank_deficient: bool = False) -> LeastSquaresSolution:
    """Least squares of ``y`` on the columns of ``X``.

    Uses a column-pivoted QR decomposition. Numerical rank counts singular
    values above ``max(N, p) * eps * sigma_max``. For rank-deficient designs
    the minimum-norm solution is returned with ``rank_ok=False`` unless
    ``raise_on_rank_deficient`` is set.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    _check_rows(y, n, "y")
    if p < 1 or n < p:
        raise DimensionMismatch(f"need N >= p >= 1, got N={n}, p={p}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite entries")

    q, r, piv = sla.qr(X, mode="economic", pivoting=True)
    sv = np.linalg.svd(r, compute_uv=False)
    tol = max(n, p) * EPS * sv[0] if sv[0] > 0 else 0.0
    rank = int(np.sum(sv > tol)) if sv[0] > 0 else 0
    cond = float((sv[0] / sv[-1]) ** 2) if sv[-1] > 0 else float("inf")

    if rank == p:
        qty = q.T @ y
        sol = sla.solve_triangular(r, qty)
        coef = np.empty_like(sol)
        coef[piv] = sol
    else:
        if raise_on_rank_deficient:
            raise RankDeficient(f"design has numerical rank {rank} < {p} columns")
        coef = sla.lstsq(X, y, cond=tol / sv[0] if sv[0] > 0 else None)[0]
    resid = y - X @ coef
    return LeastSquaresSolution(coef, resid, rank == p, cond, rank)


def residualize(v, W) -> np.ndarray:
    """Residuals of every column of ``v`` regressed on ``W``.

    ``W`` must have full column rank; a design with zero columns returns ``v``
    unchanged.
    """
    v = np.asarray(v, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    _check_rows(v, W.shape[0], "v")
    if W.shape[1] == 0:
        return v.copy()
    if not np.all(np.isfinite(W)):
        raise ValueError("W contains non-finite entries")
    q, r, _ = sla.qr(W, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size and (diag[0] == 0 or diag[-1] <= max(W.shape) * EPS * diag[0]):
        raise RankDeficient("control design is rank deficient")
    return v - q @ (q.T @ v)


def cluster_sums(v, idx: ClusterIndex) -> np.ndarray:
    """Per-group sums; shape ``(G,)`` or ``(G, k)``."""
    v = np.asarray(v, dtype=np.float64)
    _check_rows(v, idx.n_units, "v")
    if v.ndim == 1:
        return np.bincount(idx.group_of, weights=v, minlength=idx.n_clusters)
    out = np.empty((idx.n_clusters, v.shape[1]))
    for j in range(v.shape[1]):
        out[:, j] = np.bincount(idx.group_of, weights=v[:, j], minlength=idx.n_clusters)
    return out


def cluster_means(v, idx: ClusterIndex) -> np.ndarray:
    sums = cluster_sums(v, idx)
    if sums.ndim == 1:
        return sums / idx.sizes
    return sums / idx.sizes[:, None]


def center_by_cluster(v, idx: ClusterIndex) -> np.ndarray:
    """Subtract each unit's cluster mean. Singleton clusters become exactly 0."""
    v = np.asarray(v, dtype=np.float64)
    out = v - cluster_means(v, idx)[idx.group_of]
    out[idx.sizes[idx.group_of] == 1] = 0.0
    return out


def count_varying_clusters(v_centered, idx: ClusterIndex, tol: float = 1e-12) -> int:
    """Number of clusters in which a cluster-centered vector is not identically zero."""
    varies = cluster_sums(np.abs(np.asarray(v_centered)) > tol, idx) > 0
    return int(np.sum(varies))
