"""Seeded Monte Carlo lab.

Two data-generating processes:

* ``gen_homogeneous`` -- identically distributed clusters with Poisson sizes,
  a cluster-level covariate ``x_star`` and a unit-level covariate
  ``x_prime``; used to compare the four 2SLS strategies (MSE, coverage,
  interval length).
* ``gen_heterogeneous`` -- two cluster types whose outcome level and
  instrument probability differ by ``delta``; used to study the
  heterogeneity t-test.

Replicate ``b`` of a run always draws from stream ``(seed, b)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .diagnostics import fe_weights
from .errors import ClusterIVError
from .estimators import Z_CRIT, Dataset, fit_strategy
from .heterogeneity import joint_cov
from .regress import ClusterIndex
from .rng import ordered_map, substream

TYPES = ("a", "c", "n")
TABLE2_STRATEGIES = ("2sls", "2sfe", "2sls-x", "2sfe-x")


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(int(seed))


@dataclass(frozen=True)
class HomogeneousSimConfig:
    n_clusters: int = 200
    cluster_size_mean: float = 10.0
    e_range: tuple[float, float] = (0.4, 0.6)
    compliance_probs: tuple[float, float, float] = (0.3, 0.5, 0.2)
    sigma_x: float = 1.0
    sigma_eta: float = 1.0
    type_means: tuple[float, float, float] = (2.0, 0.0, -3.0)
    tau: float = 1.0

    def __post_init__(self):
        if abs(sum(self.compliance_probs) - 1.0) > 1e-12 or min(self.compliance_probs) < 0:
            raise ValueError("compliance probabilities must be non-negative and sum to 1")
        if self.sigma_x < 0 or self.sigma_eta < 0:
            raise ValueError("sigma_x and sigma_eta must be >= 0")
        if self.n_clusters < 2 or self.cluster_size_mean <= 0:
            raise ValueError("need at least two clusters and a positive mean size")
        lo, hi = self.e_range
        if not 0 <= lo <= hi <= 1:
            raise ValueError("e_range must satisfy 0 <= low <= high <= 1")

    @property
    def eps_variance(self) -> float:
        """Marginal variance of the unit error: unit noise plus type-mean mixture."""
        p = np.asarray(self.compliance_probs)
        mu = np.asarray(self.type_means)
        return float(1.0 + p @ mu ** 2 - (p @ mu) ** 2)


@dataclass
class HomogeneousTruth:
    """Latent draws behind one homogeneous dataset."""

    types: np.ndarray  # 0 = always-taker, 1 = complier, 2 = never-taker
    e_g: np.ndarray
    x_star: np.ndarray
    eta: np.ndarray
    alpha: np.ndarray
    tau: float
    eps_conditional_variance: float = 1.0
    eps_variance: float = 4.0
    eps_variance_stated: float = 4.0


def _poisson_sizes(rng: np.random.Generator, mean: float, G: int) -> np.ndarray:
    n = rng.poisson(mean, size=G)
    while np.any(n < 1):
        bad = n < 1
        n[bad] = rng.poisson(mean, size=int(bad.sum()))
    return n


def gen_homogeneous(config: HomogeneousSimConfig, seed) -> tuple[Dataset, HomogeneousTruth]:
    """Draw one homogeneous-cluster dataset.

    Outcome: ``Y = tau D + x_star_g + x_prime + alpha_g + eps`` with
    ``alpha_g = x_star_g + eta_g`` and ``eps ~ N(mean of the unit's type, 1)``.
    Cluster sizes are Poisson, redrawn until positive.
    """
    rng = _generator(seed)
    c = config
    G = c.n_clusters
    sizes = _poisson_sizes(rng, c.cluster_size_mean, G)
    g = np.repeat(np.arange(G), sizes)
    n = g.size
    e = rng.uniform(*c.e_range, size=G)
    types = rng.choice(3, size=n, p=c.compliance_probs)
    z = (rng.random(n) < e[g]).astype(np.float64)
    d = (types == 0) + z * (types == 1)
    x_star = rng.normal(0.0, c.sigma_x, size=G)
    x_prime = rng.normal(0.0, 1.0, size=n)
    eta = rng.normal(0.0, c.sigma_eta, size=G)
    alpha = x_star + eta
    eps = rng.normal(np.asarray(c.type_means)[types], 1.0)
    y = c.tau * d + x_star[g] + x_prime + alpha[g] + eps

    idx = ClusterIndex.from_group_ids(g)
    data = Dataset(y, d, z, idx, np.column_stack([x_star[g], x_prime]), ["x_star", "x_prime"])
    truth = HomogeneousTruth(types, e, x_star, eta, alpha, c.tau, 1.0, c.eps_variance, 4.0)
    return data, truth


@dataclass(frozen=True)
class HeteroSimConfig:
    """Two cluster types; the second half of clusters carries effect ``delta``.

    ``tau_second_type`` plants a different treatment effect in the second
    type (defaults to ``tau``). ``e_override`` fixes every instrument
    probability to one value instead of the logistic link.
    """

    n_clusters: int = 100
    cluster_size: int = 20
    delta: float = 0.0
    pi_c: float = 0.7
    pi_n: float = 0.3
    tau: float = 0.0
    tau_second_type: float | None = None
    e_override: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.delta):
            raise ValueError("delta must be finite")
        if abs(self.pi_c + self.pi_n - 1.0) > 1e-12 or min(self.pi_c, self.pi_n) < 0:
            raise ValueError("pi_c and pi_n must be non-negative and sum to 1")
        if self.n_clusters < 2 or self.cluster_size < 1:
            raise ValueError("need at least two clusters of positive size")

    @property
    def n_first_type(self) -> int:
        return self.n_clusters // 2

    def cluster_params(self) -> dict[str, np.ndarray]:
        """Per-cluster ``alpha_g``, ``e_g`` and complier effect ``tau_c_g``."""
        G = self.n_clusters
        second = np.arange(G) >= self.n_first_type
        alpha = np.where(second, self.delta, 0.0)
        if self.e_override is None:
            e = 1.0 / (1.0 + np.exp(-0.5 * alpha))
        else:
            e = np.full(G, float(self.e_override))
        t2 = self.tau if self.tau_second_type is None else self.tau_second_type
        tau_c = np.where(second, t2, self.tau)
        return {"alpha": alpha, "e": e, "tau_c": tau_c}


def gen_heterogeneous(config: HeteroSimConfig, seed) -> Dataset:
    """Draw one heterogeneous-cluster dataset: ``Y = alpha_g + tau_g D + eps``."""
    rng = _generator(seed)
    c = config
    p = c.cluster_params()
    g = np.repeat(np.arange(c.n_clusters), c.cluster_size)
    n = g.size
    complier = rng.random(n) < c.pi_c
    z = (rng.random(n) < p["e"][g]).astype(np.float64)
    d = z * complier
    y = p["alpha"][g] + p["tau_c"][g] * d + rng.normal(0.0, 1.0, size=n)
    return Dataset(y, d, z, ClusterIndex.from_group_ids(g))


@dataclass
class SimSummary:
    """Aggregated Monte Carlo output.

    ``per_strategy`` holds MSE/coverage/interval-length metrics for the
    homogeneous design; ``metrics`` holds the t-test summaries for the
    heterogeneous design. Every aggregate carries a Monte Carlo standard
    error under a ``*_mcse`` key.
    """

    kind: str
    params: dict
    n_reps: int
    n_failed_reps: int
    seed: int
    per_strategy: dict[str, dict] = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    histogram: dict | None = None
    draws: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params,
            "n_reps": self.n_reps,
            "n_failed_reps": self.n_failed_reps,
            "seed": self.seed,
            "per_strategy": self.per_strategy,
            "metrics": self.metrics,
            "histogram": self.histogram,
        }

    def to_csv(self) -> str:
        """Per-strategy table (homogeneous) or histogram bins (heterogeneous)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.per_strategy:
            keys = list(next(iter(self.per_strategy.values())).keys())
            w.writerow(["strategy", *keys])
            for s, row in self.per_strategy.items():
                w.writerow([s, *(repr(row[k]) if isinstance(row[k], float) else row[k] for k in keys)])
        elif self.histogram is not None:
            w.writerow(["bin_low", "bin_high", "count"])
            edges, counts = self.histogram["edges"], self.histogram["counts"]
            for lo, hi, k in zip(edges[:-1], edges[1:], counts):
                w.writerow([repr(lo), repr(hi), k])
        return buf.getvalue()


def _mean_mcse(v: np.ndarray) -> tuple[float, float]:
    m = float(np.mean(v))
    se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
    return m, se


def _prop_mcse(p: float, r: int) -> float:
    return float(np.sqrt(p * (1 - p) / r)) if r > 0 else float("nan")


def run_table2(sigma_x: float, sigma_eta: float, n_reps: int, seed: int, *,
               config: HomogeneousSimConfig | None = None, threads: int | None = 1) -> SimSummary:
    """MSE, 95% coverage and mean interval length of the four 2SLS strategies.

    ``2sls-x`` adjusts for both covariates; ``2sfe-x`` adjusts for
    ``x_prime`` only because ``x_star`` is absorbed by the fixed effects.
    """
    cfg = replace(config or HomogeneousSimConfig(), sigma_x=sigma_x, sigma_eta=sigma_eta)

    def one(b: int):
        data, _ = gen_homogeneous(cfg, substream(seed, b))
        fe_data = data.select_covariates(["x_prime"])
        row = []
        for s in TABLE2_STRATEGIES:
            try:
                f = fit_strategy(fe_data if s == "2sfe-x" else data, s)
                row.append((f.tau_hat, f.se))
            except ClusterIVError:
                row.append((np.nan, np.nan))
        return row

    res = np.array(ordered_map(one, range(n_reps), threads), dtype=np.float64).reshape(n_reps, -1, 2)
    per = {}
    draws = {}
    for k, s in enumerate(TABLE2_STRATEGIES):
        tau, se = res[:, k, 0], res[:, k, 1]
        ok = np.isfinite(tau)
        tau, se = tau[ok], se[ok]
        r = int(ok.sum())
        sq = (tau - cfg.tau) ** 2
        cover = np.abs(tau - cfg.tau) <= Z_CRIT * se
        length = 2 * Z_CRIT * se
        mse, mse_se = _mean_mcse(sq)
        cov = float(np.mean(cover))
        ln, ln_se = _mean_mcse(length)
        bias, bias_se = _mean_mcse(tau - cfg.tau)
        per[s] = {
            "mse": mse,
            "mse_mcse": mse_se,
            "coverage": cov,
            "coverage_mcse": _prop_mcse(cov, r),
            "mean_ci_length": ln,
            "mean_ci_length_mcse": ln_se,
            "bias": bias,
            "bias_mcse": bias_se,
            "n_valid": r,
        }
        draws[s] = res[:, k, :]
    n_failed = int(np.sum(~np.all(np.isfinite(res[:, :, 0]), axis=1)))
    params = asdict(cfg)
    params["eps_variance"] = cfg.eps_variance
    params["sigma_alpha2_stated"] = sigma_x ** 2 + sigma_eta ** 2
    return SimSummary("table2", params, n_reps, n_failed, seed, per, draws=draws)


def _histogram(t: np.ndarray, width: float = 0.5) -> dict:
    lo = np.floor(t.min() / width) * width
    hi = np.ceil(t.max() / width) * width
    if hi <= lo:
        hi = lo + width
    edges = np.round(np.arange(lo, hi + width / 2, width), 12)
    counts, _ = np.histogram(t, bins=edges)
    return {"edges": edges.tolist(), "counts": counts.tolist(), "width": width}


def run_hettest_mc(delta: float, n_reps: int, seed: int, *, config: HeteroSimConfig | None = None,
                   threads: int | None = 1, bin_width: float = 0.5) -> SimSummary:
    """Distribution of the heterogeneity t-statistic and both point estimates."""
    cfg = replace(config or HeteroSimConfig(), delta=delta)

    def one(b: int):
        data = gen_heterogeneous(cfg, substream(seed, b))
        try:
            j = joint_cov(data)
            return (j.tau_ls, j.tau_fe, j.t_stat, j.se_diff)
        except ClusterIVError:
            return (np.nan,) * 4

    res = np.array(ordered_map(one, range(n_reps), threads), dtype=np.float64).reshape(n_reps, 4)
    ok = np.all(np.isfinite(res), axis=1)
    good = res[ok]
    r = int(ok.sum())
    tau_ls, tau_fe, t = good[:, 0], good[:, 1], good[:, 2]
    m_ls, m_ls_se = _mean_mcse(tau_ls)
    m_fe, m_fe_se = _mean_mcse(tau_fe)
    m_t, m_t_se = _mean_mcse(t)
    rej = float(np.mean(np.abs(t) > Z_CRIT))
    ks = stats.kstest(t, "norm")
    metrics = {
        "mean_tau_ls": m_ls,
        "mean_tau_ls_mcse": m_ls_se,
        "mean_tau_fe": m_fe,
        "mean_tau_fe_mcse": m_fe_se,
        "mean_t": m_t,
        "mean_t_mcse": m_t_se,
        "rejection_rate": rej,
        "rejection_rate_mcse": _prop_mcse(rej, r),
        "ks_stat_vs_normal": float(ks.statistic),
        "ks_pvalue_vs_normal": float(ks.pvalue),
        "n_valid": r,
    }
    draws = {"tau_ls": tau_ls, "tau_fe": tau_fe, "t": t}
    return SimSummary("hettest", asdict(cfg), n_reps, n_reps - r, seed,
                      metrics=metrics, histogram=_histogram(t, bin_width), draws=draws)


@dataclass
class PlimCheck:
    estimator: str
    predicted: float
    mc_mean: float
    mc_se: float
    n_reps: int

    @property
    def z_score(self) -> float:
        return (self.mc_mean - self.predicted) / self.mc_se

    @property
    def within_3se(self) -> bool:
        return abs(self.z_score) <= 3.0

    def to_dict(self) -> dict:
        return {**asdict(self), "z_score": self.z_score, "within_3se": self.within_3se}


def oracle_plim_check(config: HeteroSimConfig, n_reps: int, seed: int, *,
                      threads: int | None = 1) -> list[PlimCheck]:
    """Compare Monte Carlo means with the weighted complier-effect limits.

    Weights use the known design: complier share ``pi_c``, instrument
    variance ``e_g (1 - e_g)`` and within-cluster correlation ``1 / n_g``
    (independent assignment). The 2sls check is included only when every
    cluster has the same instrument probability.
    """
    p = config.cluster_params()
    G, n = config.n_clusters, config.cluster_size
    sizes = np.full(G, float(n))
    equal_e = bool(np.all(p["e"] == p["e"][0]))
    w = fe_weights(sizes, 1.0 / sizes, p["e"] * (1 - p["e"]), np.full(G, config.pi_c), p["tau_c"],
                   equal_e=equal_e)

    def one(b: int):
        data = gen_heterogeneous(config, substream(seed, b))
        try:
            return (fit_strategy(data, "2sls").tau_hat, fit_strategy(data, "2sfe").tau_hat)
        except ClusterIVError:
            return (np.nan, np.nan)

    res = np.array(ordered_map(one, range(n_reps), threads), dtype=np.float64).reshape(n_reps, 2)
    res = res[np.all(np.isfinite(res), axis=1)]
    out = []
    m, se = _mean_mcse(res[:, 1])
    out.append(PlimCheck("2sfe", w.plim_2sfe, m, se, res.shape[0]))
    if equal_e:
        m, se = _mean_mcse(res[:, 0])
        out.append(PlimCheck("2sls", w.plim_2sls, m, se, res.shape[0]))
    return out
