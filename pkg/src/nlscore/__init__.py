"""Normalized-likelihood speaker verification scoring under domain mismatch.

Core pieces: a spherical two-variance Gaussian backend with exact
closed-form scoring, a maximum-likelihood linear transform connecting
mismatched enrollment and test conditions, decoupled (DSD) and
domain-adaptation (DAT) scorers plus a multi-domain (MDT) baseline, a
synthetic cross-domain world generator with known ground truth, and an
EER evaluation harness with deterministic experiment drivers.
"""

from .adapt import (
    DomainTransform,
    LabelMixConfig,
    TrainConfig,
    TrainResult,
    dat_log_score,
    dsd_log_score,
    fit_transform,
    mdt_estimate,
    mix_labels,
    objective_and_gradient,
    train_transform,
    transform_apply,
    transformed_predictive_log_density,
)
from .dataset import LabeledDataset, concat
from .errors import (
    ConfigError,
    EstimationError,
    EvalError,
    ModelError,
    NlscoreError,
    ParseError,
    TrainError,
    TrainWarning,
)
from .experiments import (
    ExperimentConfig,
    ResultRow,
    format_count_table,
    format_method_table,
    format_proportion_table,
    run_table1_sweep,
    run_table2_experiment,
    run_table3_sweep,
)
from .model import (
    DomainStats,
    EnrollmentModel,
    StatsOptions,
    build_enrollment_model,
    enrollment_models_from_dataset,
    estimate_domain_stats,
    marginal_log_density,
    nl_log_score,
    predictive_log_density,
)
from .scoring import (
    EerResult,
    ScoreRecord,
    ScoringArtifacts,
    Trial,
    compute_eer,
    make_trials,
    score_trials,
)
from .simulate import DomainChannel, WorldConfig, WorldTruth, generate_world

__version__ = "0.1.0"
