"""Training and calibration evaluation of classifiers from probabilistic labels."""

__version__ = "0.1.0"

from .core import (
    ClassDistribution,
    ConfigurationError,
    Dataset,
    DegenerateFoldError,
    DegenerateSplitError,
    FeatureVector,
    ImageGrid,
    InsufficientDataError,
    Seed,
    UndefinedMetricError,
    one_hot,
    split_dataset,
)
from .prob_label import (
    CorruptionSpec,
    GaussianClassConditional,
    LogisticFeatureModel,
    bayes_posterior,
    corrupt_posterior,
    fit_gaussian_class_conditional,
    fit_logistic_feature_model,
    gaussian_log_density,
    logistic_posterior,
    smooth_labels,
)
from .network import NetworkSpec, Parameters, forward, init_parameters, predict_proba
from .trainers import (
    TrainConfig,
    backward,
    cross_entropy_loss,
    cross_validate_lambda,
    regularized_loss,
    train,
    train_two_stage,
)
from .metrics import (
    MetricsReport,
    accuracy,
    compute_report,
    decision_boundary_grid,
    expected_calibration_error,
    hosmer_lemeshow,
    reliability_table,
    roc_auc,
)
from .experiments import (
    DEFAULT_MIXTURE,
    MixtureSpec,
    SweepResult,
    SyntheticImageConfig,
    extract_roi_means,
    generate_synthetic_images,
    run_accuracy_vs_n,
    run_distillation_experiment,
    run_imbalance_vs_ece,
    sample_mixture,
    true_posterior,
)
