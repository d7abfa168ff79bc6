"""Off-policy evaluation of contextual-bandit policies.

The central estimator weights logged outcomes by the outcome-marginal
density ratio w(y) = p_target(y) / p_behavior(y) — equal to the conditional
mean of the per-record policy ratio given the outcome — instead of the
per-record ratio itself, which provably never increases the exact variance.
The package ships the full comparison family (direct method, IPW, DR and its
truncated/shrunk variants, embedding- and representation-marginal weighting,
self-normalized forms, binary-treatment-effect versions), regression-based
weight fitting with an enforced sample-splitting discipline, an exact
finite-environment oracle for every variance identity and bound, synthetic
generators with known ground truth, and a seed-replicated experiment
harness behind the `mr-ope` command-line tool.
"""

from ._validation import (
    ConfigurationError,
    DegenerateWeightsError,
    IngestionError,
    SupportViolationError,
    UnsupportedEstimatorError,
)
from .domain import (
    AlphaArgmaxPolicy,
    EstimateReport,
    FunctionRatio,
    LoggedDataset,
    Policy,
    PolicyRatio,
    SoftmaxLinearPolicy,
    SoftmaxScorePolicy,
    TabularEnvironment,
    TabularPolicy,
    policy_from_json,
    policy_to_json,
    read_logged_dataset,
    rng_from,
    sample_logged_dataset,
    write_logged_dataset,
)
from .estimators import (
    ATE_METHODS,
    DEFAULT_LAMBDA,
    DEFAULT_TAU,
    ESTIMATORS,
    EstimatorInputs,
    ate_estimate,
    dm_estimate,
    dr_estimate,
    dros_estimate,
    estimate,
    gmdr_estimate,
    gmips_estimate,
    ipw_estimate,
    mr_alt_estimate,
    mr_estimate,
    self_normalize,
    shrink_weights,
    sndr_estimate,
    snipw_estimate,
    snmr_estimate,
    switch_dr_estimate,
)
from .weightfit import (
    DEFAULT_RATIO_FLOOR,
    DISCRETE_MODE_THRESHOLD,
    DiscreteRatioTable,
    MlpRegressor,
    OutcomeModel,
    SoftmaxClassifier,
    fit_ate_weights,
    fit_behavior_policy,
    fit_h_model,
    fit_marginal_ratio,
    fit_outcome_model,
    fit_representation_ratio,
    make_ate_ratio,
    make_policy_ratio,
    ratio_model_from_json,
    ratio_model_to_json,
    split_dataset,
)
from .oracle import (
    CheckResult,
    OracleReport,
    exact_moments,
    exact_variance,
    marginal_ratio_forms,
    oracle_report,
    run_oracle_checks,
    true_ate,
    true_marginal_ratio,
    true_policy_ratio,
    true_policy_value,
    variance_check,
)
from .synth import (
    ClassificationBandit,
    SaitoGroundTruth,
    SaitoSetupConfig,
    SinGroundTruth,
    SinSetupConfig,
    classification_to_bandit,
    make_blobs_csv,
    random_tabular_env,
    saito_generate,
    sin_generate,
)
from .harness import (
    SweepConfig,
    SweepResult,
    ate_error,
    ate_preset_env,
    exact_weight_replication,
    run_ate_experiment,
    run_sweep,
    write_sweep_outputs,
)

__version__ = "0.1.0"
