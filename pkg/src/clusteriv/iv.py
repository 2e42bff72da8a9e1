"""Just-identified two-stage least squares with cluster-robust covariance.

Two routes are provided. :func:`tsls_fit` handles a general regressor matrix
``V`` instrumented by ``W`` of the same width and returns the full sandwich
covariance. :func:`fwl_scalar_fit` handles the case every estimator in this
package actually needs: one endogenous regressor, one instrument, and a block
of exogenous controls that are partialled out first. The two agree exactly,
which the test-suite checks on randomized designs.

Neither route materializes the projection ``P_W`` or the block-diagonal
middle matrix; cluster scores are accumulated per group and outer-producted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, RankDeficient, WeakIdentification
from .regress import EPS, ClusterIndex, cluster_sums, residualize

TOL_IDENT = 1e-10


@dataclass
class TslsFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    crse_cov: np.ndarray
    n_clusters: int
    instrumented_gram: np.ndarray

    @property
    def crse(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.crse_cov), 0.0, None))


@dataclass
class ScalarIvFit:
    """Scalar IV fit after partialling out controls.

    ``s_zd`` and ``s_zy`` are the cross-moments ``N^-1 sum z*_i d*_i`` and
    ``N^-1 sum z*_i y*_i`` of the residualized variables, so that
    ``tau_hat = s_zy / s_zd``.
    """

    tau_hat: float
    se: float
    residuals: np.ndarray
    s_zd: float
    s_zy: float
    per_cluster_scores: np.ndarray
    z_resid: np.ndarray
    d_resid: np.ndarray
    df_factor: float = 1.0


def _as_matrix(a, n: int, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] != n:
        raise DimensionMismatch(f"{name} has {a.shape[0]} rows, expected {n}")
    return a


def _rms(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(a * a, axis=0))


def _df_factor(idx: ClusterIndex, df_correction: bool) -> float:
    g = idx.n_clusters
    if not df_correction:
        return 1.0
    if g < 2:
        raise DimensionMismatch("df correction needs at least two clusters")
    return g / (g - 1)


def check_identification(V: np.ndarray, W: np.ndarray, tol: float = TOL_IDENT) -> None:
    """Raise WeakIdentification when ``N^-1 W'V`` is numerically singular.

    Columns are first scaled to unit root-mean-square so the test is
    invariant to the units of each variable.
    """
    sv, sw = _rms(V), _rms(W)
    if np.any(sv == 0) or np.any(sw == 0):
        raise WeakIdentification("a regressor or instrument column is identically zero")
    m = (W / sw).T @ (V / sv) / V.shape[0]
    smin = np.linalg.svd(m, compute_uv=False)[-1]
    if not smin > tol:
        raise WeakIdentification(
            f"instrument cross-moment matrix is numerically singular (smallest singular value {smin:.3g})"
        )


def _projection_factors(V: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal factors of ``P_W V``.

    With thin QRs ``W = Q R`` and ``Q'V = Q2 R2`` we have ``P_W V = Q Q2 R2``
    and ``V'P_W V = R2'R2``. Working with ``R2`` instead of inverting the
    Gram matrix keeps the sensitivity at ``cond(Q'V)`` rather than its square.
    Returns ``(Q, Q2, R2)``.
    """
    q, r = np.linalg.qr(W)
    d = np.abs(np.diag(r))
    if d.size == 0 or d.min() <= max(W.shape) * EPS * d.max():
        raise RankDeficient("instrument matrix W'W is singular")
    q2, r2 = np.linalg.qr(q.T @ V)
    d2 = np.abs(np.diag(r2))
    if d2.size == 0 or d2.min() <= max(V.shape) * EPS * d2.max():
        raise RankDeficient("instrumented Gram matrix V'P_W V is singular")
    return q, q2, r2


def _sandwich(q, q2, r2, r: np.ndarray, idx: ClusterIndex) -> np.ndarray:
    """``R2^-1 Q2' S'S Q2 R2^-T`` with ``S`` the per-cluster sums of ``Q * r``."""
    scores = cluster_sums(q * r[:, None], idx) @ q2
    half = sla.solve_triangular(r2, scores.T, check_finite=False)
    cov = half @ half.T
    return 0.5 * (cov + cov.T)


def crse_from_parts(V, W, residuals, idx: ClusterIndex, *, df_correction: bool = False) -> np.ndarray:
    """Cluster-robust sandwich ``A^-1 (V'P_W Omega P_W V) A^-1`` with ``A = V'P_W V``.

    ``Omega`` is block diagonal with blocks ``r_[g] r_[g]'``; it is assembled
    implicitly from per-cluster scores ``sum_{i in g} (P_W V)_i r_i``.
    """
    r = np.asarray(residuals, dtype=np.float64).reshape(-1)
    n = r.size
    if n != idx.n_units:
        raise DimensionMismatch(f"residuals have length {n}, index covers {idx.n_units} units")
    V = _as_matrix(V, n, "V")
    W = _as_matrix(W, n, "W")
    q, q2, r2 = _projection_factors(V, W)
    return _sandwich(q, q2, r2, r, idx) * _df_factor(idx, df_correction)


def tsls_fit(u, V, W, idx: ClusterIndex, *, df_correction: bool = False,
             tol_ident: float = TOL_IDENT) -> TslsFit:
    """Two-stage least squares of ``u`` on ``V`` instrumented by ``W``.

    Parameters
    ----------
    u : array_like, shape (N,)
    V, W : array_like, shape (N, m)
        Regressors and instruments; exogenous regressors appear in both.
    idx : ClusterIndex
    df_correction : bool
        Multiply the covariance by ``G / (G - 1)``. Off by default.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    n = u.size
    if n != idx.n_units:
        raise DimensionMismatch(f"u has length {n}, index covers {idx.n_units} units")
    V = _as_matrix(V, n, "V")
    W = _as_matrix(W, n, "W")
    if V.shape != W.shape:
        raise DimensionMismatch(f"V {V.shape} and W {W.shape} must have the same shape")
    check_identification(V, W, tol_ident)
    q, q2, r2 = _projection_factors(V, W)
    beta = sla.solve_triangular(r2, q2.T @ (q.T @ u))
    resid = u - V @ beta
    cov = _sandwich(q, q2, r2, resid, idx) * _df_factor(idx, df_correction)
    return TslsFit(beta, resid, cov, idx.n_clusters, r2.T @ r2)


def fwl_scalar_fit(u, d_star, z_star, Wc, idx: ClusterIndex, *, df_correction: bool = False,
                   tol_ident: float = TOL_IDENT) -> ScalarIvFit:
    """Scalar 2SLS coefficient of ``d_star`` after partialling out ``Wc``.

    ``Wc`` may be ``None`` or have zero columns, in which case nothing is
    partialled out. The residuals returned are those of the full regression
    with ``Wc`` among both regressors and instruments.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    n = u.size
    if n != idx.n_units:
        raise DimensionMismatch(f"u has length {n}, index covers {idx.n_units} units")
    d = np.asarray(d_star, dtype=np.float64).reshape(-1)
    z = np.asarray(z_star, dtype=np.float64).reshape(-1)
    if d.size != n or z.size != n:
        raise DimensionMismatch("u, d_star and z_star must have equal length")
    stacked = np.column_stack([u, d, z])
    if Wc is not None:
        Wc = _as_matrix(Wc, n, "Wc")
        if Wc.shape[1] >= n:
            raise RankDeficient(f"{Wc.shape[1]} controls leave no variation among {n} units")
        if Wc.shape[1] > 0:
            stacked = residualize(stacked, Wc)
    y_w, d_w, z_w = stacked.T

    s_zd = float(z_w @ d_w) / n
    s_zy = float(z_w @ y_w) / n
    # scale by the raw inputs so an instrument lying in the span of Wc is caught
    scale = float(_rms(z) * _rms(d))
    if not scale > 0 or abs(s_zd) < tol_ident * scale:
        raise WeakIdentification(
            f"partialled instrument-treatment cross-moment {s_zd:.3g} is numerically zero"
        )
    tau = s_zy / s_zd
    resid = y_w - d_w * tau
    scores = cluster_sums(z_w * resid, idx)
    fac = _df_factor(idx, df_correction)
    se = float(np.sqrt(fac * (scores @ scores)) / (n * abs(s_zd)))
    return ScalarIvFit(tau, se, resid, s_zd, s_zy, scores, z_w, d_w, fac)
