"""Distributionally robust individualized treatment rules from multi-source data."""

from .core_optim import AdamHyper, AdamState, adam_minimize, adam_update, finite_diff_grad, init_adam
from .errors import (
    ArmCoverageError,
    ClassCoverageError,
    InputError,
    NumericError,
    ParameterError,
    PdroItrError,
    PositivityError,
)
from .evaluation import (
    EvalReport,
    constant_propensity,
    doubly_robust_value,
    empirical_policy_value,
    fit_logistic_propensity,
    naive_policy,
    worst_case_value,
)
from .membership_model import (
    SoftmaxConfig,
    SoftmaxModel,
    fit_softmax,
    log_likelihood,
    membership_probs,
    predict_membership,
)
from .nn_regressor import (
    MlpConfig,
    MlpModel,
    SourceCate,
    cate_values,
    estimate_source_cate,
    fit_mlp,
    linear_mlp,
    predict,
)
from .pdro_learner import (
    DELTA_GRID_DEFAULT,
    NuisanceSet,
    OptConfig,
    PdroPolicy,
    decide,
    default_bandwidth,
    fit_dro,
    fit_pdro,
    fit_rho,
    phi_h,
    policy_from_dict,
    policy_to_dict,
    robust_score,
    robust_scores,
    smoothed_objective,
    tune_delta,
)
from .simplex import SimplexVector
from .synthetic import (
    Dataset,
    ScenarioSpec,
    dirichlet_draws,
    gen_source,
    gen_source_natural,
    gen_target,
    read_dataset_csv,
    sample_dirichlet,
    scenario_spec,
    true_membership_probs,
    true_target_cate,
    write_dataset_csv,
)

__all__ = [
    "AdamHyper",
    "AdamState",
    "adam_minimize",
    "adam_update",
    "finite_diff_grad",
    "init_adam",
    "SimplexVector",
    "PdroItrError",
    "InputError",
    "ParameterError",
    "NumericError",
    "ArmCoverageError",
    "ClassCoverageError",
    "PositivityError",
    "MlpConfig",
    "MlpModel",
    "SourceCate",
    "cate_values",
    "estimate_source_cate",
    "fit_mlp",
    "linear_mlp",
    "predict",
    "SoftmaxConfig",
    "SoftmaxModel",
    "fit_softmax",
    "log_likelihood",
    "membership_probs",
    "predict_membership",
    "DELTA_GRID_DEFAULT",
    "NuisanceSet",
    "OptConfig",
    "PdroPolicy",
    "decide",
    "default_bandwidth",
    "fit_dro",
    "fit_pdro",
    "fit_rho",
    "phi_h",
    "policy_from_dict",
    "policy_to_dict",
    "robust_score",
    "robust_scores",
    "smoothed_objective",
    "tune_delta",
    "Dataset",
    "ScenarioSpec",
    "dirichlet_draws",
    "gen_source",
    "gen_source_natural",
    "gen_target",
    "read_dataset_csv",
    "sample_dirichlet",
    "scenario_spec",
    "true_membership_probs",
    "true_target_cate",
    "write_dataset_csv",
    "EvalReport",
    "constant_propensity",
    "doubly_robust_value",
    "empirical_policy_value",
    "fit_logistic_propensity",
    "naive_policy",
    "worst_case_value",
]
