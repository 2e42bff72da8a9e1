"""Cluster-aware instrumental-variable estimation.

Canonical 2SLS and fixed-effects 2SLS (2SFE) with cluster-robust standard
errors, a 2SLS-vs-2SFE heterogeneity test, design diagnostics for choosing
between them, and Monte Carlo designs for checking them.
"""

__version__ = "0.1.0"

from .diagnostics import (
    DesignDiagnostics,
    EfficiencyModel,
    HeteroWeights,
    asymptotic_variances,
    covariate_adjustment_ratios,
    design_diagnostics,
    efficiency_cutoff,
    efficiency_ratio,
    equal_size_ratio,
    fe_weights,
    independent_assignment_ratio,
)
from .errors import (
    AllZeroWeights,
    ClusterConstantCovariate,
    ClusterIVError,
    DataError,
    DegenerateInstrument,
    DegenerateWithinVariation,
    DimensionMismatch,
    MissingValue,
    NonBinaryColumn,
    NonPositiveSeDiff,
    NumericalError,
    ParseError,
    RankDeficient,
    TooFewValidReplicates,
    WeakIdentification,
)
from .estimators import (
    STRATEGIES,
    Dataset,
    FitResult,
    StrategyFailure,
    fit_2sfe,
    fit_2sfe_x,
    fit_2sls_x,
    fit_all,
    fit_canonical_2sls,
    fit_ols_family,
    fit_strategy,
)
from .heterogeneity import BootstrapResult, JointHetResult, cluster_bootstrap, hettest, joint_cov
from .io import InputSpec, LoadReport, load_csv, read_csv
from .iv import ScalarIvFit, TslsFit, crse_from_parts, fwl_scalar_fit, tsls_fit
from .regress import (
    ClusterIndex,
    LeastSquaresSolution,
    center_by_cluster,
    cluster_means,
    cluster_sums,
    ols_fit,
    residualize,
)
from .rng import substream
from .simlab import (
    HeteroSimConfig,
    HomogeneousSimConfig,
    PlimCheck,
    SimSummary,
    gen_heterogeneous,
    gen_homogeneous,
    oracle_plim_check,
    run_hettest_mc,
    run_table2,
)

__all__ = [
    "__version__",
    "DesignDiagnostics",
    "EfficiencyModel",
    "HeteroWeights",
    "asymptotic_variances",
    "covariate_adjustment_ratios",
    "design_diagnostics",
    "efficiency_cutoff",
    "efficiency_ratio",
    "equal_size_ratio",
    "fe_weights",
    "independent_assignment_ratio",
    "AllZeroWeights",
    "ClusterConstantCovariate",
    "ClusterIVError",
    "DataError",
    "DegenerateInstrument",
    "DegenerateWithinVariation",
    "DimensionMismatch",
    "MissingValue",
    "NonBinaryColumn",
    "NonPositiveSeDiff",
    "NumericalError",
    "ParseError",
    "RankDeficient",
    "TooFewValidReplicates",
    "WeakIdentification",
    "STRATEGIES",
    "Dataset",
    "FitResult",
    "StrategyFailure",
    "fit_2sfe",
    "fit_2sfe_x",
    "fit_2sls_x",
    "fit_all",
    "fit_canonical_2sls",
    "fit_ols_family",
    "fit_strategy",
    "BootstrapResult",
    "JointHetResult",
    "cluster_bootstrap",
    "hettest",
    "joint_cov",
    "InputSpec",
    "LoadReport",
    "load_csv",
    "read_csv",
    "ScalarIvFit",
    "TslsFit",
    "crse_from_parts",
    "fwl_scalar_fit",
    "tsls_fit",
    "ClusterIndex",
    "LeastSquaresSolution",
    "center_by_cluster",
    "cluster_means",
    "cluster_sums",
    "ols_fit",
    "residualize",
    "substream",
    "HeteroSimConfig",
    "HomogeneousSimConfig",
    "PlimCheck",
    "SimSummary",
    "gen_heterogeneous",
    "gen_homogeneous",
    "oracle_plim_check",
    "run_hettest_mc",
    "run_table2",
]
