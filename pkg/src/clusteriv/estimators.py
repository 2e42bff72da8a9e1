"""The eight estimation strategies for a binary treatment with clustered data.

=========  =========================================  ==========================
tag        regression                                 controls partialled out
=========  =========================================  ==========================
2sls       2sls(Y ~ 1 + D | 1 + Z)                    intercept
2sfe       2sls(Y ~ D + C | Z + C)                    cluster indicators
2sls-x     2sls(Y ~ 1 + D + X | 1 + Z + X)            intercept, X
2sfe-x     2sls(Y ~ D + C + X | Z + C + X)            cluster indicators, X
ols        ols(Y ~ 1 + D)                             intercept
fe         ols(Y ~ D + C)                             cluster indicators
ols-x      ols(Y ~ 1 + D + X)                         intercept, X
fe-x       ols(Y ~ D + C + X)                         cluster indicators, X
=========  =========================================  ==========================

OLS is 2SLS with the treatment as its own instrument, so all eight share one
code path. Cluster indicators are handled by within-cluster centering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ClusterConstantCovariate,
    ClusterIVError,
    DataError,
    DegenerateInstrument,
    DegenerateWithinVariation,
    DimensionMismatch,
    NonBinaryColumn,
)
from .iv import ScalarIvFit, fwl_scalar_fit
from .regress import ClusterIndex, center_by_cluster, count_varying_clusters, ols_fit

STRATEGIES = ("2sls", "2sfe", "2sls-x", "2sfe-x", "ols", "fe", "ols-x", "fe-x")
Z_CRIT = 1.96
# centered columns below this (relative) size are treated as cluster-constant
CONST_TOL = 1e-10


def _binary(name: str, v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    bad = ~np.isin(arr, (0.0, 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise NonBinaryColumn(name, arr[i], row=i)
    return arr


@dataclass
class Dataset:
    """Observed outcome, binary treatment and instrument, covariates, clusters."""

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    idx: ClusterIndex
    x: np.ndarray | None = None
    x_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        n = self.y.size
        if not np.all(np.isfinite(self.y)):
            raise DataError("outcome contains non-finite values")
        self.d = _binary("treatment", self.d)
        self.z = _binary("instrument", self.z)
        if self.d.size != n or self.z.size != n or self.idx.n_units != n:
            raise DimensionMismatch("y, d, z and cluster index must cover the same units")
        if n < 2:
            raise DataError("need at least two units")
        if self.x is not None:
            x = np.asarray(self.x, dtype=np.float64)
            if x.ndim == 1:
                x = x[:, None]
            if x.shape[0] != n:
                raise DimensionMismatch(f"covariates have {x.shape[0]} rows, expected {n}")
            if not np.all(np.isfinite(x)):
                raise DataError("covariates contain non-finite values")
            if x.shape[1] == 0:
                x = None
            self.x = x
        p = 0 if self.x is None else self.x.shape[1]
        if not self.x_names:
            self.x_names = [f"x{j + 1}" for j in range(p)]
        if len(self.x_names) != p:
            raise DimensionMismatch("x_names does not match the number of covariate columns")

    @classmethod
    def from_arrays(cls, y, d, z, clusters, x=None, x_names: Sequence[str] | None = None) -> "Dataset":
        return cls(y, d, z, ClusterIndex.from_labels(clusters), x, list(x_names or []))

    @property
    def n_units(self) -> int:
        return self.y.size

    @property
    def n_clusters(self) -> int:
        return self.idx.n_clusters

    @property
    def n_covariates(self) -> int:
        return 0 if self.x is None else self.x.shape[1]

    def select_covariates(self, names: Sequence[str]) -> "Dataset":
        """Copy keeping only the named covariate columns (possibly none)."""
        missing = [nm for nm in names if nm not in self.x_names]
        if missing:
            raise DataError(f"unknown covariates: {', '.join(missing)}")
        cols = [self.x_names.index(nm) for nm in names]
        x = self.x[:, cols] if cols else None
        return Dataset(self.y, self.d, self.z, self.idx, x, list(names))

    def take_clusters(self, groups: Sequence[int]) -> "Dataset":
        """Dataset made of the listed clusters, repeated draws becoming distinct groups."""
        rows, idx = self.idx.take(groups)
        x = None if self.x is None else self.x[rows]
        return Dataset(self.y[rows], self.d[rows], self.z[rows], idx, x, list(self.x_names))


@dataclass
class FitResult:
    strategy: str
    tau_hat: float
    se: float
    ci_low: float
    ci_high: float
    coefficients: dict[str, float]
    residuals: np.ndarray
    per_cluster_scores: np.ndarray
    n_units: int
    n_clusters: int
    s_zd: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, *, residuals: bool = False) -> dict:
        out = {
            "strategy": self.strategy,
            "tau_hat": self.tau_hat,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "coefficients": dict(self.coefficients),
            "n_units": self.n_units,
            "n_clusters": self.n_clusters,
            "s_zd": self.s_zd,
            "diagnostics": dict(self.diagnostics),
            "per_cluster_scores": self.per_cluster_scores.tolist(),
        }
        if residuals:
            out["residuals"] = self.residuals.tolist()
        return out


@dataclass
class StrategyFailure:
    """Placeholder for a strategy that could not be fit in a batch."""

    strategy: str
    error: str
    message: str

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "error": self.error, "message": self.message}


def _cluster_constant_columns(xc: np.ndarray, x: np.ndarray) -> list[int]:
    scale = 1.0 + np.max(np.abs(x), axis=0)
    return [j for j in range(x.shape[1]) if np.max(np.abs(xc[:, j])) < CONST_TOL * scale[j]]


def _result(strategy: str, fit: ScalarIvFit, coefs: dict, data: Dataset, diag: dict) -> FitResult:
    half = Z_CRIT * fit.se
    return FitResult(
        strategy=strategy,
        tau_hat=fit.tau_hat,
        se=fit.se,
        ci_low=fit.tau_hat - half,
        ci_high=fit.tau_hat + half,
        coefficients=coefs,
        residuals=fit.residuals,
        per_cluster_scores=fit.per_cluster_scores,
        n_units=data.n_units,
        n_clusters=data.n_clusters,
        s_zd=fit.s_zd,
        diagnostics=diag,
    )


def _check_clusters(data: Dataset) -> None:
    if data.n_clusters < 2:
        raise DataError("cluster-robust inference needs at least two clusters")


def _pooled(data: Dataset, strategy: str, instrument: np.ndarray, use_x: bool,
            df_correction: bool) -> FitResult:
    _check_clusters(data)
    if np.ptp(instrument) == 0:
        raise DegenerateInstrument(f"{strategy}: instrument is constant across all units")
    ones = np.ones((data.n_units, 1))
    names = ["intercept"]
    controls = ones
    if use_x and data.x is not None:
        controls = np.column_stack([ones, data.x])
        names += data.x_names
    fit = fwl_scalar_fit(data.y, data.d, instrument, controls, data.idx, df_correction=df_correction)
    rest = ols_fit(controls, data.y - data.d * fit.tau_hat).coefficients
    coefs = {"treatment": fit.tau_hat, **dict(zip(names, map(float, rest)))}
    return _result(strategy, fit, coefs, data, {"df_factor": fit.df_factor})


def _within(data: Dataset, strategy: str, instrument: np.ndarray, use_x: bool,
            df_correction: bool) -> FitResult:
    _check_clusters(data)
    idx = data.idx
    yc = center_by_cluster(data.y, idx)
    dc = center_by_cluster(data.d, idx)
    zc = center_by_cluster(instrument, idx)
    n_z = count_varying_clusters(zc, idx)
    if n_z == 0:
        raise DegenerateWithinVariation(
            f"{strategy} is degenerate: the instrument is constant within every cluster"
        )
    if count_varying_clusters(dc, idx) == 0:
        raise DegenerateWithinVariation(
            f"{strategy} is degenerate: the treatment is constant within every cluster"
        )
    xc = None
    names: list[str] = []
    if use_x and data.x is not None:
        xc = center_by_cluster(data.x, idx)
        bad = _cluster_constant_columns(xc, data.x)
        if bad:
            raise ClusterConstantCovariate([data.x_names[j] for j in bad])
        names = list(data.x_names)
    fit = fwl_scalar_fit(yc, dc, zc, xc, idx, df_correction=df_correction)
    coefs = {"treatment": fit.tau_hat}
    if xc is not None:
        rest = ols_fit(xc, yc - dc * fit.tau_hat).coefficients
        coefs.update(zip(names, map(float, rest)))
    diag = {"df_factor": fit.df_factor, "n_clusters_with_within_variation": n_z}
    return _result(strategy, fit, coefs, data, diag)


def fit_strategy(data: Dataset, strategy: str, *, df_correction: bool = False) -> FitResult:
    """Fit one of the tags in :data:`STRATEGIES`."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")
    base = strategy.removesuffix("-x")
    use_x = strategy.endswith("-x")
    instrument = data.z if base in ("2sls", "2sfe") else data.d
    if base in ("2sfe", "fe"):
        return _within(data, strategy, instrument, use_x, df_correction)
    return _pooled(data, strategy, instrument, use_x, df_correction)


def fit_canonical_2sls(data: Dataset, **kw) -> FitResult:
    return fit_strategy(data, "2sls", **kw)


def fit_2sfe(data: Dataset, **kw) -> FitResult:
    """2SLS with cluster fixed effects, computed on cluster-centered variables."""
    return fit_strategy(data, "2sfe", **kw)


def fit_2sls_x(data: Dataset, **kw) -> FitResult:
    return fit_strategy(data, "2sls-x", **kw)


def fit_2sfe_x(data: Dataset, **kw) -> FitResult:
    """Covariate-adjusted 2SFE.

    Covariates that are constant within every cluster are absorbed by the
    fixed effects; they raise :class:`ClusterConstantCovariate` rather than
    being dropped silently.
    """
    return fit_strategy(data, "2sfe-x", **kw)


def fit_ols_family(data: Dataset, strategy: str, **kw) -> FitResult:
    if strategy not in ("ols", "fe", "ols-x", "fe-x"):
        raise ValueError(f"{strategy!r} is not an OLS strategy")
    return fit_strategy(data, strategy, **kw)


def fit_all(data: Dataset, strategies: Sequence[str] = STRATEGIES, *,
            fe_covariates: Sequence[str] | None = None,
            df_correction: bool = False) -> list[FitResult | StrategyFailure]:
    """Fit every requested strategy, recording failures instead of raising.

    ``fe_covariates`` restricts the covariates used by ``2sfe-x`` and ``fe-x``,
    e.g. to leave out cluster-level covariates that fixed effects absorb.
    Results follow the canonical tag order.
    """
    unknown = [s for s in strategies if s not in STRATEGIES]
    if unknown:
        raise ValueError(f"unknown strategies: {', '.join(unknown)}")
    fe_data = data if fe_covariates is None else data.select_covariates(fe_covariates)
    out: list[FitResult | StrategyFailure] = []
    for s in STRATEGIES:
        if s not in strategies:
            continue
        d = fe_data if s in ("2sfe-x", "fe-x") else data
        try:
            out.append(fit_strategy(d, s, df_correction=df_correction))
        except ClusterIVError as exc:
            out.append(StrategyFailure(s, type(exc).__name__, str(exc)))
    return out
