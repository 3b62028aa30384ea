"""Multiple imputation by chained equations with principal-component regression models."""

from .data import (
    IncompleteData,
    ROLE_ANALYSIS,
    ROLE_AUXILIARY,
    ROLE_MAR,
    complete_case_rows,
    load_csv,
    response_proportions,
    write_csv,
)
from .engine import (
    ImputationSpec,
    MultiplyImputedSet,
    STRATEGIES,
    initialize_fill,
    prepass_single_impute,
    quickpred_select,
    run_chain,
    run_impute,
)
from .imputers import (
    LinearModelDraw,
    draw_linear_params,
    draw_predictive,
    pmm_impute,
)
from .pca import (
    EnumerationRule,
    PcaResult,
    enumerate_components,
    max_components,
    pca,
    standardize,
)
from .pooling import (
    ParameterId,
    PooledEstimate,
    analyze_set,
    estimate_parameter,
    moment_parameter_ids,
    rubin_pool,
)
from .simulation import (
    MethodSetting,
    SimulationCondition,
    StudySettings,
    ampute,
    calibrate_intercept,
    coarsen,
    compute_cic,
    compute_ciw,
    compute_prb,
    generate_complete,
    mar_diagnostics,
    run_study,
)

__version__ = "0.1.0"

__all__ = [
    "EnumerationRule",
    "ImputationSpec",
    "IncompleteData",
    "LinearModelDraw",
    "MethodSetting",
    "MultiplyImputedSet",
    "ParameterId",
    "PcaResult",
    "PooledEstimate",
    "ROLE_ANALYSIS",
    "ROLE_AUXILIARY",
    "ROLE_MAR",
    "STRATEGIES",
    "SimulationCondition",
    "StudySettings",
    "ampute",
    "analyze_set",
    "calibrate_intercept",
    "coarsen",
    "complete_case_rows",
    "compute_cic",
    "compute_ciw",
    "compute_prb",
    "draw_linear_params",
    "draw_predictive",
    "enumerate_components",
    "estimate_parameter",
    "generate_complete",
    "initialize_fill",
    "load_csv",
    "mar_diagnostics",
    "max_components",
    "moment_parameter_ids",
    "pca",
    "pmm_impute",
    "prepass_single_impute",
    "quickpred_select",
    "response_proportions",
    "rubin_pool",
    "run_chain",
    "run_impute",
    "run_study",
    "standardize",
    "write_csv",
    "__version__",
]
