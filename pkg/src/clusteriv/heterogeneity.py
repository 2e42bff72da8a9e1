"""Joint inference for (2sls, 2sfe) and the cluster-heterogeneity test.

Under homogeneous clusters both estimators target the same effect, so a
large standardized difference between them is evidence that clusters differ
in distribution. The analytic standard error of the difference uses the
per-cluster scores of both fits; a pairs-cluster bootstrap is offered as a
cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ClusterIVError, NonPositiveSeDiff, TooFewValidReplicates
from .estimators import Z_CRIT, Dataset, fit_2sfe, fit_canonical_2sls
from .rng import ordered_map, substream

MAX_FAIL_FRACTION = 0.2


@dataclass
class JointHetResult:
    """Joint covariance of the two estimates and the heterogeneity t-test.

    ``se_diff`` comes from the squared-difference-of-scores form;
    ``se_diff_sq_expanded`` holds ``var_ls + var_fe - 2 cov`` computed from
    ``cov2`` so the two can be compared.
    """

    tau_ls: float
    tau_fe: float
    cov2: np.ndarray
    se_diff: float
    t_stat: float
    p_value: float
    method: str = "analytic"
    se_diff_sq_expanded: float | None = None
    bootstrap_reps: int | None = None
    n_failed: int = 0

    @property
    def reject(self) -> bool:
        return abs(self.t_stat) > Z_CRIT

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "tau_ls": self.tau_ls,
            "tau_fe": self.tau_fe,
            "cov2": self.cov2.tolist(),
            "se_diff": self.se_diff,
            "se_diff_sq_expanded": self.se_diff_sq_expanded,
            "t_stat": self.t_stat,
            "p_value": self.p_value,
            "reject_5pct": self.reject,
            "bootstrap_reps": self.bootstrap_reps,
            "n_failed": self.n_failed,
        }


def _two_sided_p(t: float) -> float:
    return float(2.0 * stats.norm.sf(abs(t)))


def joint_cov(data: Dataset) -> JointHetResult:
    """Analytic joint cluster-robust covariance of ``(tau_2sls, tau_2sfe)``."""
    ls = fit_canonical_2sls(data)
    fe = fit_2sfe(data)
    n = data.n_units
    # per-cluster scores normalized so that se^2 = sum of squares
    a = ls.per_cluster_scores / (n * ls.s_zd)
    b = fe.per_cluster_scores / (n * fe.s_zd)
    v_ls = float(a @ a)
    v_fe = float(b @ b)
    c = float(a @ b)
    cov2 = np.array([[v_ls, c], [c, v_fe]])
    diff = a - b
    se_diff_sq = float(diff @ diff)
    if not se_diff_sq > 0:
        raise NonPositiveSeDiff("the two estimators have identical cluster scores; se_diff is zero")
    se_diff = float(np.sqrt(se_diff_sq))
    t = (ls.tau_hat - fe.tau_hat) / se_diff
    return JointHetResult(
        tau_ls=ls.tau_hat,
        tau_fe=fe.tau_hat,
        cov2=cov2,
        se_diff=se_diff,
        t_stat=t,
        p_value=_two_sided_p(t),
        se_diff_sq_expanded=v_ls + v_fe - 2.0 * c,
    )


def hettest(data: Dataset) -> JointHetResult:
    """Test of homogeneous clusters; rejects at 5% when ``|t| > 1.96``."""
    return joint_cov(data)


@dataclass
class BootstrapResult:
    tau_ls: float
    tau_fe: float
    replicates: np.ndarray  # (n_valid, 3): tau_ls, tau_fe, tau_ls - tau_fe
    se_diff: float
    t_stat: float
    p_value: float
    B: int
    seed: int
    n_failed: int
    failures: list[str] = field(default_factory=list)

    def to_het_result(self) -> JointHetResult:
        cov2 = np.cov(self.replicates[:, :2], rowvar=False)
        return JointHetResult(
            tau_ls=self.tau_ls,
            tau_fe=self.tau_fe,
            cov2=cov2,
            se_diff=self.se_diff,
            t_stat=self.t_stat,
            p_value=self.p_value,
            method="bootstrap",
            se_diff_sq_expanded=float(cov2[0, 0] + cov2[1, 1] - 2 * cov2[0, 1]),
            bootstrap_reps=self.B,
            n_failed=self.n_failed,
        )

    def to_dict(self, *, replicates: bool = True) -> dict:
        out = {
            "method": "bootstrap",
            "tau_ls": self.tau_ls,
            "tau_fe": self.tau_fe,
            "se_diff": self.se_diff,
            "t_stat": self.t_stat,
            "p_value": self.p_value,
            "B": self.B,
            "seed": self.seed,
            "n_valid": int(self.replicates.shape[0]),
            "n_failed": self.n_failed,
            "sd": {
                "tau_ls": float(np.std(self.replicates[:, 0], ddof=1)),
                "tau_fe": float(np.std(self.replicates[:, 1], ddof=1)),
                "diff": self.se_diff,
            },
        }
        if replicates:
            out["replicates"] = {
                "tau_ls": self.replicates[:, 0].tolist(),
                "tau_fe": self.replicates[:, 1].tolist(),
                "diff": self.replicates[:, 2].tolist(),
            }
        return out


def bootstrap_replicate(data: Dataset, draws) -> tuple[float, float]:
    """Refit both estimators on the clusters listed in ``draws``."""
    boot = data.take_clusters(draws)
    return fit_canonical_2sls(boot).tau_hat, fit_2sfe(boot).tau_hat


def cluster_bootstrap(data: Dataset, B: int, seed: int, *, threads: int | None = 1) -> BootstrapResult:
    """Pairs-cluster bootstrap of ``tau_2sls``, ``tau_2sfe`` and their difference.

    Each replicate draws ``G`` clusters with replacement from stream
    ``(seed, b)``. Replicates on which either estimator is degenerate are
    excluded and counted; more than 20% exclusions is an error.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    G = data.n_clusters
    if G < 2:
        raise ValueError("cluster bootstrap needs at least two clusters")
    ls = fit_canonical_2sls(data).tau_hat
    fe = fit_2sfe(data).tau_hat

    def one(b: int):
        draws = substream(seed, b).integers(0, G, size=G)
        try:
            return bootstrap_replicate(data, draws)
        except ClusterIVError as exc:
            return type(exc).__name__

    results = ordered_map(one, range(B), threads)
    good = [r for r in results if isinstance(r, tuple)]
    failures = [r for r in results if not isinstance(r, tuple)]
    if len(failures) > MAX_FAIL_FRACTION * B or not good:
        raise TooFewValidReplicates(f"{len(failures)} of {B} bootstrap replicates failed")
    reps = np.array(good, dtype=np.float64).reshape(-1, 2)
    reps = np.column_stack([reps, reps[:, 0] - reps[:, 1]])
    se_diff = float(np.std(reps[:, 2], ddof=1)) if reps.shape[0] > 1 else float("nan")
    t = (ls - fe) / se_diff if se_diff > 0 else float("nan")
    p = _two_sided_p(t) if np.isfinite(t) else float("nan")
    return BootstrapResult(ls, fe, reps, se_diff, t, p, B, seed, len(failures), failures)
