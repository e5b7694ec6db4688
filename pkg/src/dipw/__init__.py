"""Denoised IPW Lasso: interpretable treatment-effect models from experiments.

The package covers the full workflow: ingest or simulate randomized-trial
data, build (denoised) IPW pseudo-outcomes, fit sparse linear effect models
and forest baselines, and score them with uplift curves and AUUC.
"""

__version__ = "0.1.0"

from .data import (
    Dataset,
    FoldPlan,
    StandardizationRecord,
    load_csv,
    make_folds,
    one_hot_count,
    standardize,
    train_test_split,
    write_csv,
)
from .estimators import (
    CateModel,
    EstimatorConfig,
    fit_dipw_algo1,
    fit_dipw_algo2,
    fit_dr,
    fit_ipw,
    fit_t_learner,
    model_from_dict,
    predict_cate,
)
from .evaluation import (
    SubgroupReport,
    UpliftCurve,
    auuc_table,
    budget_gain,
    diagnostics_report,
    rmse_cate,
    subgroup_ate,
    uplift_band,
    uplift_curve,
)
from .forest import (
    ForestLearner,
    ForestSpec,
    RegressionForest,
    cross_fit_predict,
    fit_forest,
    predict_forest,
)
from .lasso import PenaltySpec, SparseLinearFit, cv_lasso, fit_lasso, lambda_path
from .sim import DgpSpec, ReplicationReport, SimulatedSample, generate, null_dgp, run_replications
from .transform import (
    DenoisingDiagnostics,
    PseudoOutcomeSet,
    aipw_transform,
    b_star,
    denoise,
    ipw_transform,
    ipw_weight,
    noise_decomposition_check,
)

__all__ = [
    "CateModel",
    "Dataset",
    "DenoisingDiagnostics",
    "DgpSpec",
    "EstimatorConfig",
    "FoldPlan",
    "ForestLearner",
    "ForestSpec",
    "PenaltySpec",
    "PseudoOutcomeSet",
    "RegressionForest",
    "ReplicationReport",
    "SimulatedSample",
    "SparseLinearFit",
    "StandardizationRecord",
    "SubgroupReport",
    "UpliftCurve",
    "aipw_transform",
    "auuc_table",
    "b_star",
    "budget_gain",
    "cross_fit_predict",
    "cv_lasso",
    "denoise",
    "diagnostics_report",
    "fit_dipw_algo1",
    "fit_dipw_algo2",
    "fit_dr",
    "fit_forest",
    "fit_ipw",
    "fit_lasso",
    "fit_t_learner",
    "generate",
    "ipw_transform",
    "ipw_weight",
    "lambda_path",
    "load_csv",
    "make_folds",
    "model_from_dict",
    "noise_decomposition_check",
    "null_dgp",
    "one_hot_count",
    "predict_cate",
    "predict_forest",
    "rmse_cate",
    "run_replications",
    "standardize",
    "subgroup_ate",
    "train_test_split",
    "uplift_band",
    "uplift_curve",
    "write_csv",
]
