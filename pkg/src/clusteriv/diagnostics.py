"""Design and efficiency diagnostics for choosing between 2sls and 2sfe.

Sample quantities (:func:`design_diagnostics`) describe how much of the
instrument's variation lies within clusters. The remaining functions evaluate
closed-form efficiency comparisons for a user-supplied outcome model with
cluster effects of variance ``sigma_alpha2`` and unit errors of variance
``sigma_eps2``; nothing here estimates those variance components from data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllZeroWeights, DegenerateInstrument
from .estimators import Dataset
from .regress import center_by_cluster, cluster_means, count_varying_clusters


@dataclass
class DesignDiagnostics:
    """Within/total moments of the instrument.

    ``phi_hat`` is ``(Zbar_g - Zbar)^2 / S_Z``, a one-draw proxy for the
    within-cluster correlation of the instrument; treat it as descriptive.
    """

    n_units: int
    n_clusters: int
    s_z: float
    s_z_in: float
    kappa_hat: float
    c_hat: float
    phi_hat: np.ndarray
    s_zd: float
    s_zd_in: float
    n_effective_clusters: int
    notes: list[str] = field(default_factory=list)

    @property
    def fe_admissible(self) -> bool:
        return self.n_effective_clusters > 0

    def to_dict(self) -> dict:
        return {
            "n_units": self.n_units,
            "n_clusters": self.n_clusters,
            "s_z": self.s_z,
            "s_z_in": self.s_z_in,
            "kappa_hat": self.kappa_hat,
            "c_hat": self.c_hat,
            "phi_hat": self.phi_hat.tolist(),
            "phi_hat_is_single_draw_proxy": True,
            "s_zd": self.s_zd,
            "s_zd_in": self.s_zd_in,
            "n_effective_clusters": self.n_effective_clusters,
            "fe_admissible": self.fe_admissible,
            "notes": list(self.notes),
        }


def design_diagnostics(data: Dataset) -> DesignDiagnostics:
    idx = data.idx
    n = data.n_units
    z, d = data.z, data.d
    zc = z - z.mean()
    s_z = float(zc @ zc) / n
    if s_z == 0:
        raise DegenerateInstrument("instrument is constant across all units")
    zw = center_by_cluster(z, idx)
    dw = center_by_cluster(d, idx)
    s_z_in = float(zw @ zw) / n
    kappa = s_z_in / s_z
    phi = (cluster_means(z, idx) - z.mean()) ** 2 / s_z
    c_hat = float(idx.sizes.astype(float) ** 2 @ phi) / n
    n_eff = count_varying_clusters(zw, idx)
    notes = []
    if n_eff == 0:
        notes.append("instrument is constant within every cluster: 2sfe is degenerate and inadmissible")
    return DesignDiagnostics(
        n_units=n,
        n_clusters=idx.n_clusters,
        s_z=s_z,
        s_z_in=s_z_in,
        kappa_hat=kappa,
        c_hat=c_hat,
        phi_hat=phi,
        s_zd=float(zc @ (d - d.mean())) / n,
        s_zd_in=float(zw @ dw) / n,
        n_effective_clusters=n_eff,
        notes=notes,
    )


@dataclass(frozen=True)
class EfficiencyModel:
    sigma_alpha2: float
    sigma_eps2: float
    kappa: float
    c: float
    pi_c: float = 1.0
    sigma_z2: float = 0.25

    def __post_init__(self):
        if self.sigma_alpha2 < 0:
            raise ValueError("sigma_alpha2 must be >= 0")
        if not self.sigma_eps2 > 0:
            raise ValueError("sigma_eps2 must be > 0")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")
        if self.c < 0:
            raise ValueError("c must be >= 0")
        if not 0 < self.pi_c <= 1:
            raise ValueError("pi_c must lie in (0, 1]")
        if not 0 < self.sigma_z2 <= 0.25:
            raise ValueError("sigma_z2 must lie in (0, 0.25]")

    @property
    def variance_ratio(self) -> float:
        return self.sigma_alpha2 / self.sigma_eps2


def asymptotic_variances(model: EfficiencyModel) -> tuple[float, float]:
    """Scaled asymptotic variances ``(v_2sls, v_2sfe)``."""
    m = model
    denom = m.sigma_z2 * m.pi_c ** 2
    v_ls = (m.sigma_eps2 + m.sigma_alpha2 * m.c) / denom
    v_fe = m.sigma_eps2 / (m.kappa * denom)
    return v_ls, v_fe


def efficiency_ratio(model: EfficiencyModel) -> float:
    """``v_2sls / v_2sfe = kappa * (1 + c * sigma_alpha2 / sigma_eps2)``.

    Values above one favour 2sfe.
    """
    return model.kappa * (1.0 + model.variance_ratio * model.c)


def efficiency_cutoff(kappa: float, c: float) -> float:
    """Threshold on ``sigma_alpha2 / sigma_eps2`` above which 2sfe is more efficient.

    Returns 0 when ``kappa == 1`` (no within-cluster loss) and ``inf`` when
    ``c == 0`` with ``kappa < 1`` (2sfe never wins).
    """
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    if c < 0:
        raise ValueError("c must be >= 0")
    if kappa == 1:
        return 0.0
    if c == 0:
        return float("inf")
    return (1.0 - kappa) / kappa / c


def equal_size_ratio(n_bar: float, phi_bar: float, variance_ratio: float) -> float:
    """Efficiency ratio for equal cluster sizes ``n_bar`` and mean correlation ``phi_bar``."""
    return (1.0 - phi_bar) * (1.0 + variance_ratio * n_bar * phi_bar)


def independent_assignment_ratio(n_bar: float, variance_ratio: float) -> float:
    """Efficiency ratio when the instrument is uncorrelated within clusters."""
    return (1.0 - 1.0 / n_bar) * (1.0 + variance_ratio)


def covariate_adjustment_ratios(model: EfficiencyModel, var_proj: float) -> tuple[float, float]:
    """Limits of ``se2(2sls-x)/se2(2sls)`` and ``se2(2sls-x)/se2(2sfe)``.

    ``var_proj`` is the variance of the linear projection of the cluster
    effect on ``(1, X*_g)`` for a cluster-constant covariate ``X*_g``.
    """
    m = model
    if not 0 <= var_proj <= m.sigma_alpha2:
        raise ValueError("var_proj must lie in [0, sigma_alpha2]")
    first = 1.0 - var_proj * m.c / (m.sigma_eps2 + m.sigma_alpha2 * m.c)
    return first, first * efficiency_ratio(m)


@dataclass
class HeteroWeights:
    kappa_2sfe: np.ndarray
    kappa_2sls: np.ndarray | None
    tau_c: np.ndarray
    plim_2sfe: float
    plim_2sls: float | None

    def to_dict(self) -> dict:
        return {
            "kappa_2sfe": self.kappa_2sfe.tolist(),
            "kappa_2sls": None if self.kappa_2sls is None else self.kappa_2sls.tolist(),
            "tau_c": self.tau_c.tolist(),
            "plim_2sfe": self.plim_2sfe,
            "plim_2sls": self.plim_2sls,
        }


def fe_weights(n_g, phi_g, sigma_zg2, pi_cg, tau_cg, *, equal_e: bool = False) -> HeteroWeights:
    """Weights on cluster-specific complier effects implied by 2sfe (and 2sls).

    The 2sfe weight of cluster ``g`` is proportional to
    ``n_g (1 - phi_g) sigma_zg2 pi_cg``. When every cluster shares the same
    instrument probability (``equal_e``), 2sls also averages the cluster
    effects, with weights proportional to ``n_g pi_cg``.
    """
    n_g, phi_g, sigma_zg2, pi_cg, tau_cg = (
        np.asarray(a, dtype=np.float64).reshape(-1) for a in (n_g, phi_g, sigma_zg2, pi_cg, tau_cg)
    )
    G = n_g.size
    if any(a.size != G for a in (phi_g, sigma_zg2, pi_cg, tau_cg)):
        raise ValueError("all per-cluster inputs must have the same length")
    raw = n_g * (1.0 - phi_g) * sigma_zg2 * pi_cg
    if np.any(raw < 0):
        raise ValueError("weight numerators must be non-negative")
    if not raw.sum() > 0:
        raise AllZeroWeights("every cluster has zero 2sfe weight")
    k_fe = raw / raw.sum()
    k_ls = None
    plim_ls = None
    if equal_e:
        raw_ls = n_g * pi_cg
        if not raw_ls.sum() > 0:
            raise AllZeroWeights("every cluster has zero 2sls weight")
        k_ls = raw_ls / raw_ls.sum()
        plim_ls = float(k_ls @ tau_cg)
    return HeteroWeights(k_fe, k_ls, tau_cg, float(k_fe @ tau_cg), plim_ls)
