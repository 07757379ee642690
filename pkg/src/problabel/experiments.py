"""Monte-Carlo benchmark sweeps and the synthetic-imaging distillation run.

Two tracks:

* a two-component Gaussian mixture benchmark, sweeping training-set size
  (accuracy) and class imbalance (calibration) over seeded repetitions, with
  a logistic-regression classifier on the raw 2-D features;
* a synthetic grayscale-image task in which class information lives in the
  mean intensities of three fixed regions of interest, used to exercise the full
  pipeline: fit a logistic feature model, derive probabilistic labels, and
  train a small CNN on raw pixels under each label strategy.

Each repetition derives its own sub-seed as a pure function of the master
seed, the axis index, the repetition index, and the strategy name, so
serial and parallel execution agree bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import (
    ClassDistribution,
    ConfigurationError,
    Dataset,
    FeatureVector,
    ImageGrid,
    Seed,
    split_indices,
)
from .metrics import accuracy, compute_report, expected_calibration_error
from .network import (
    NetworkSpec,
    Parameters,
    conv2d,
    dense,
    flatten,
    maxpool,
    predict_proba,
    relu,
    sigmoid,
)
from .prob_label import (
    GaussianClassConditional,
    LogisticFeatureModel,
    bayes_posterior,
    bayes_posterior_batch,
    fit_logistic_feature_model,
    logistic_posterior,
)
from .rng import Prng
from .trainers import (
    DEFAULT_LAMBDA_GRID,
    TrainConfig,
    cross_validate_lambda,
    train,
    train_two_stage,
)

SWEEP_STRATEGIES = ("hard", "correct-prob", "incorrect-prob", "regularized")
DISTILL_STRATEGIES = ("hard", "soft", "prob", "reg")

_FULL_BATCH = 1 << 30

# classifier protocol for the mixture benchmark: full-batch gradient
# descent on standardized features
_SWEEP_EPOCHS = 500
_SWEEP_LR = 0.1
_SWEEP_CV_FOLDS = 3
_FALLBACK_LAMBDA = 1.0


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    """Gaussian mixture with one component per class."""

    means: tuple
    covariances: tuple
    weights: ClassDistribution

    def __post_init__(self) -> None:
        means = tuple(np.asarray(m, dtype=float) for m in self.means)
        covs = tuple(np.asarray(c, dtype=float) for c in self.covariances)
        if len(means) != len(covs) or len(means) != self.weights.k:
            raise ValueError("component count must match the weight vector")
        chols = tuple(np.linalg.cholesky(c) for c in covs)  # raises if not PD
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "_chols", chols)

    @property
    def k(self) -> int:
        return self.weights.k

    @property
    def dim(self) -> int:
        return self.means[0].size

    def to_class_conditional(self) -> GaussianClassConditional:
        return GaussianClassConditional(self.k, self.means, self.covariances, self.weights)

    def with_swapped_means(self) -> "MixtureSpec":
        """Means reversed between classes: systematically misleading but
        structurally valid posteriors."""
        return MixtureSpec(tuple(reversed(self.means)), self.covariances, self.weights)


DEFAULT_MIXTURE = MixtureSpec(
    means=(np.array([5.0, 3.0]), np.array([4.0, 4.0])),
    covariances=(
        np.array([[1.0, 0.5], [0.5, 1.0]]),
        np.array([[1.0, 0.7], [0.7, 1.0]]),
    ),
    weights=ClassDistribution(np.array([0.5, 0.5])),
)


def sample_mixture(spec: MixtureSpec, counts, seed: Seed) -> Dataset:
    """Exactly counts[k] instances drawn from component k, labeled k."""
    counts = [int(c) for c in counts]
    if len(counts) != spec.k:
        raise ValueError("need one count per component")
    if any(c < 0 for c in counts):
        raise ValueError("counts must be >= 0")
    if sum(counts) == 0:
        raise ValueError("cannot sample an empty dataset")
    prng = Prng(seed.value)
    d = spec.dim
    inputs: list[FeatureVector] = []
    labels: list[int] = []
    for cls, count in enumerate(counts):
        mean, chol = spec.means[cls], spec._chols[cls]
        for _ in range(count):
            eps = np.array([prng.normal() for _ in range(d)])
            inputs.append(FeatureVector(mean + chol @ eps))
            labels.append(cls)
    return Dataset(tuple(inputs), np.array(labels), spec.k)


def true_posterior(spec: MixtureSpec, x) -> ClassDistribution:
    """Exact class posterior under the generating mixture."""
    return bayes_posterior(spec.to_class_conditional(), x)


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Per-strategy mean/std of a metric along one axis, over repetitions."""

    axis: tuple
    strategies: tuple
    means: dict
    stds: dict
    reps: int

    def series(self, strategy: str) -> np.ndarray:
        return np.asarray(self.means[strategy])


def save_sweep_csv(sweep: SweepResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["axis", "strategy", "rep_mean", "rep_std", "reps"])
        for strategy in sweep.strategies:
            for i, value in enumerate(sweep.axis):
                writer.writerow(
                    [
                        str(value),
                        strategy,
                        repr(float(sweep.means[strategy][i])),
                        repr(float(sweep.stds[strategy][i])),
                        str(sweep.reps),
                    ]
                )


def logistic_network(dim: int = 2) -> NetworkSpec:
    """Logistic regression as a one-unit dense network with sigmoid head."""
    return NetworkSpec((dim,), (dense(1), sigmoid()))


def fold_standardization(params: Parameters, mu: np.ndarray, sd: np.ndarray) -> Parameters:
    """Rewrite a logistic model fit on (x - mu) / sd to act on raw x."""
    w = params.tensor("0.dense.W")[:, 0]
    b = float(params.tensor("0.dense.b")[0])
    w_raw = w / sd
    b_raw = b - float(w @ (mu / sd))
    return params.with_values(np.concatenate([w_raw, [b_raw]]))


def _standardize_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale-only standardization: divide by the pooled per-coordinate std.

    Keeping the origin (no centering) preserves the geometry that tiny
    training pools carry; a two-point pool centered and scaled per
    coordinate collapses onto (+-1, +-1) corners and loses its orientation.
    """
    pooled = float(np.sqrt(x.var(axis=0).mean()))
    if pooled < 1e-9:
        pooled = 1.0
    mu = np.zeros(x.shape[1])
    return mu, np.full(x.shape[1], pooled)


def _to_distributions(matrix: np.ndarray) -> tuple:
    return tuple(ClassDistribution(row) for row in matrix)


def _feature_dataset(x: np.ndarray, labels: np.ndarray, k: int, soft=None) -> Dataset:
    return Dataset(tuple(FeatureVector(row) for row in x), labels, k, soft)


def _sweep_config(n: int, seed: Seed) -> TrainConfig:
    return TrainConfig(
        learning_rate=_SWEEP_LR,
        epochs=_SWEEP_EPOCHS,
        batch_size=_FULL_BATCH,
        seed=seed,
    )


def _choose_lambda(data: Dataset, seed: Seed) -> float:
    """Cross-validated penalty weight; fixed fallback when CV is ill-posed."""
    counts = data.class_counts()
    if len(data) < 10 or counts.min() < _SWEEP_CV_FOLDS:
        return _FALLBACK_LAMBDA
    return cross_validate_lambda(
        logistic_network(data.inputs[0].dim),
        data,
        DEFAULT_LAMBDA_GRID,
        _SWEEP_CV_FOLDS,
        _sweep_config(len(data), seed),
    )


def _train_strategy(
    net: NetworkSpec,
    strategy: str,
    x_std: np.ndarray,
    labels: np.ndarray,
    correct_soft: np.ndarray,
    incorrect_soft: np.ndarray,
    train_seed: Seed,
    cv_seed: Seed,
    k: int,
) -> Parameters:
    config = _sweep_config(labels.size, train_seed)
    if strategy == "hard":
        data = _feature_dataset(x_std, labels, k)
        return train(net, data, replace(config, label_strategy="hard")).params
    if strategy == "correct-prob":
        data = _feature_dataset(x_std, labels, k, _to_distributions(correct_soft))
        return train(net, data, replace(config, label_strategy="probabilistic")).params
    if strategy == "incorrect-prob":
        data = _feature_dataset(x_std, labels, k, _to_distributions(incorrect_soft))
        return train(net, data, replace(config, label_strategy="probabilistic")).params
    if strategy == "regularized":
        # pairs the anchored two-stage trainer with the misleading labels,
        # exercising recovery from a bad prior
        data = _feature_dataset(x_std, labels, k, _to_distributions(incorrect_soft))
        lam = _choose_lambda(data, cv_seed)
        return train_two_stage(net, data, replace(config, lam=lam)).theta_final
    raise ValueError(f"unknown strategy {strategy!r}")


def _run_sweep(
    spec: MixtureSpec,
    axis: tuple,
    counts_for,
    metric: str,
    reps: int,
    strategies: tuple,
    test_counts,
    seed: Seed,
    tag: str,
) -> SweepResult:
    for s in strategies:
        if s not in SWEEP_STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}")
    test_data = sample_mixture(spec, test_counts, seed.derive(tag, "test"))
    test_x_raw = test_data.feature_matrix()
    test_y = test_data.hard_labels
    correct_model = spec.to_class_conditional()
    incorrect_model = spec.with_swapped_means().to_class_conditional()
    net = logistic_network(spec.dim)
    values = {s: np.zeros((len(axis), reps)) for s in strategies}
    for ai, axis_value in enumerate(axis):
        counts = counts_for(axis_value)
        for rep in range(reps):
            pool = sample_mixture(spec, counts, seed.derive(tag, "data", ai, rep))
            x_raw = pool.feature_matrix()
            mu, sd = _standardize_stats(x_raw)
            x_std = (x_raw - mu) / sd
            test_std = (test_x_raw - mu) / sd
            correct_soft = bayes_posterior_batch(correct_model, x_raw)
            incorrect_soft = bayes_posterior_batch(incorrect_model, x_raw)
            # one training seed per repetition: strategies share their
            # initialization, so per-rep comparisons are paired
            train_seed = seed.derive(tag, "train", ai, rep)
            for strategy in strategies:
                params = _train_strategy(
                    net,
                    strategy,
                    x_std,
                    pool.hard_labels,
                    correct_soft,
                    incorrect_soft,
                    train_seed,
                    seed.derive(tag, "cv", ai, rep),
                    spec.k,
                )
                scores = predict_proba(net, params, test_std)[:, 1]
                if metric == "accuracy":
                    values[strategy][ai, rep] = accuracy(scores, test_y)
                else:
                    values[strategy][ai, rep] = expected_calibration_error(scores, test_y)
    return SweepResult(
        axis=tuple(axis),
        strategies=tuple(strategies),
        means={s: tuple(float(v) for v in values[s].mean(axis=1)) for s in strategies},
        stds={s: tuple(float(v) for v in values[s].std(axis=1)) for s in strategies},
        reps=reps,
    )


def run_accuracy_vs_n(
    spec: MixtureSpec,
    n_values=None,
    reps: int = 100,
    strategies: tuple = SWEEP_STRATEGIES,
    test_counts=(1000, 1000),
    seed: Seed = Seed(0),
) -> SweepResult:
    """Test accuracy as the (balanced) training-set size grows.

    Per repetition: draw n/2 fresh instances per class, attach the
    strategy's soft labels, train the logistic classifier, and score the
    shared test set.
    """
    if n_values is None:
        n_values = tuple(range(2, 61, 2))
    n_values = tuple(int(n) for n in n_values)
    if any(n < 2 or n % 2 for n in n_values):
        raise ValueError("n values must be even and >= 2 (balanced draws)")
    return _run_sweep(
        spec,
        n_values,
        lambda n: (n // 2, n // 2),
        "accuracy",
        reps,
        strategies,
        test_counts,
        seed,
        "acc-sweep",
    )


def run_imbalance_vs_ece(
    spec: MixtureSpec,
    majority: int = 10,
    minority_values=None,
    reps: int = 100,
    strategies: tuple = ("hard", "correct-prob"),
    test_counts=(1000, 1000),
    seed: Seed = Seed(0),
) -> SweepResult:
    """Calibration error as the class balance of the training pool varies.

    The majority-class count stays fixed while the minority count sweeps the
    axis; the test set stays balanced.
    """
    if minority_values is None:
        minority_values = tuple(range(1, majority + 1))
    minority_values = tuple(int(m) for m in minority_values)
    if any(m < 1 or m > majority for m in minority_values):
        raise ValueError("minority counts must lie in [1, majority]")
    return _run_sweep(
        spec,
        minority_values,
        lambda m: (majority, m),
        "ece",
        reps,
        strategies,
        test_counts,
        seed,
        "ece-sweep",
    )


# ---------------------------------------------------------------------------
# Synthetic-imaging track
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoiRect:
    """Rectangular region of interest (top/left corner, size in pixels)."""

    top: int
    left: int
    height: int
    width: int

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1 or self.top < 0 or self.left < 0:
            raise ValueError("ROI must have positive size and non-negative corner")

    def overlaps(self, other: "RoiRect") -> bool:
        return not (
            self.top + self.height <= other.top
            or other.top + other.height <= self.top
            or self.left + self.width <= other.left
            or other.left + other.width <= self.left
        )


def default_rois(image_size: int) -> tuple:
    """Three disjoint square ROIs scaled to the image size (8x8 at size 32)."""
    side = max(image_size // 4, 1)
    step = image_size // 8
    return (
        RoiRect(step, step, side, side),
        RoiRect(step, 5 * step, side, side),
        RoiRect(5 * step, step, side, side),
    )


@dataclass(frozen=True, eq=False)
class SyntheticImageConfig:
    """Layout and noise model for the synthetic grayscale task.

    Each image is a constant base intensity, plus a per-ROI additive offset
    drawn from the label's offset distribution (Gaussian around the
    configured means), plus independent pixel noise. Class 0 is drawn with
    probability ``class0_prior``. ``rois=None`` selects the size-scaled
    default layout.
    """

    image_size: int = 32
    rois: tuple | None = None
    class0_offset_means: tuple = (0.10, 0.10, 0.10)
    class1_offset_means: tuple = (0.25, 0.0, 0.0)
    offset_std: float = 0.08
    noise_std: float = 0.05
    class0_prior: float = 0.62
    base_intensity: float = 0.4

    def __post_init__(self) -> None:
        rois = tuple(self.rois) if self.rois is not None else default_rois(self.image_size)
        if len(self.class0_offset_means) != len(rois) or len(
            self.class1_offset_means
        ) != len(rois):
            raise ConfigurationError("offset means must match the ROI count")
        for roi in rois:
            if roi.top + roi.height > self.image_size or roi.left + roi.width > self.image_size:
                raise ConfigurationError(f"ROI {roi} exceeds the image bounds")
        for i, a in enumerate(rois):
            for b in rois[i + 1 :]:
                if a.overlaps(b):
                    raise ConfigurationError(f"ROIs {a} and {b} overlap")
        if not 0.0 < self.class0_prior < 1.0:
            raise ConfigurationError("class0_prior must lie strictly in (0, 1)")
        if self.offset_std < 0 or self.noise_std < 0:
            raise ConfigurationError("spreads must be >= 0")
        if not 0.0 <= self.base_intensity <= 1.0:
            raise ConfigurationError("base intensity must lie in [0, 1]")
        object.__setattr__(self, "rois", rois)


def extract_roi_means(image: ImageGrid, roi_layout) -> FeatureVector:
    """Mean pixel intensity of each region, in layout order."""
    matrix = image.to_matrix()
    values = []
    for roi in roi_layout:
        if roi.top + roi.height > image.height or roi.left + roi.width > image.width:
            raise ValueError(f"ROI {roi} exceeds the image bounds")
        patch = matrix[roi.top : roi.top + roi.height, roi.left : roi.left + roi.width]
        values.append(float(patch.mean()))
    return FeatureVector(np.array(values))


def generate_synthetic_images(
    config: SyntheticImageConfig, n: int, seed: Seed
) -> tuple[Dataset, Dataset]:
    """Seeded image corpus plus the paired noiseless offset features.

    Per image the stream is consumed in a fixed order: one uniform for the
    label, one normal per ROI offset, then one normal per pixel (row-major)
    when noise_std > 0. Pixels clip to [0, 1]; the feature vector keeps the
    raw offsets.
    """
    if n < 1:
        raise ValueError("need at least one image")
    prng = Prng(seed.value)
    size = config.image_size
    offset_means = (
        np.array(config.class0_offset_means, dtype=float),
        np.array(config.class1_offset_means, dtype=float),
    )
    images: list[ImageGrid] = []
    features: list[FeatureVector] = []
    labels: list[int] = []
    for _ in range(n):
        label = 0 if prng.uniform() < config.class0_prior else 1
        offsets = np.array(
            [
                offset_means[label][j] + config.offset_std * prng.normal()
                for j in range(len(config.rois))
            ]
        )
        pixels = np.full((size, size), config.base_intensity)
        for j, roi in enumerate(config.rois):
            pixels[roi.top : roi.top + roi.height, roi.left : roi.left + roi.width] += offsets[j]
        if config.noise_std > 0.0:
            noise = prng.normals(size * size).reshape(size, size)
            pixels = pixels + config.noise_std * noise
        images.append(ImageGrid.from_matrix(np.clip(pixels, 0.0, 1.0)))
        features.append(FeatureVector(offsets))
        labels.append(label)
    label_arr = np.array(labels)
    return (
        Dataset(tuple(images), label_arr, 2),
        Dataset(tuple(features), label_arr, 2),
    )


def reduced_cnn(image_size: int = 32) -> NetworkSpec:
    """Compact two-conv network with a sigmoid output head."""
    return NetworkSpec(
        (image_size, image_size),
        (
            conv2d(8),
            relu(),
            maxpool(),
            conv2d(16),
            relu(),
            maxpool(),
            flatten(),
            dense(64),
            relu(),
            dense(1),
            sigmoid(),
        ),
    )


@dataclass(frozen=True, eq=False)
class DistillationResult:
    reports: dict
    params: dict
    loss_traces: dict
    chosen_lambda: float
    feature_model: LogisticFeatureModel
    network: NetworkSpec


def run_distillation_experiment(
    config: SyntheticImageConfig,
    train_config: TrainConfig,
    seed: Seed,
    n: int = 505,
    train_fraction: float = 0.7,
    lambda_grid=DEFAULT_LAMBDA_GRID,
    cv_folds: int = 2,
) -> DistillationResult:
    """Full pipeline over the synthetic image corpus, one CNN per strategy.

    Images split stratified into train/holdout; the logistic feature model
    fits on the training offsets + hard labels; its posteriors become the
    probabilistic labels. Strategies: hard one-hots, smoothed one-hots,
    probabilistic targets, and the anchored two-stage run with
    cross-validated penalty weight. Evaluation uses raw holdout pixels only.
    """
    images, features = generate_synthetic_images(config, n, seed.derive("images"))
    train_idx, hold_idx = split_indices(
        images.hard_labels, 2, train_fraction, seed.derive("split"), stratified=True
    )
    train_images = images.subset(train_idx)
    hold_images = images.subset(hold_idx)
    train_features = features.subset(train_idx)

    feature_model = fit_logistic_feature_model(
        train_features.feature_matrix(), train_features.hard_labels
    )
    prob_labels = tuple(
        logistic_posterior(feature_model, fv) for fv in train_features.inputs
    )
    train_with_soft = train_images.with_soft_labels(prob_labels)

    net = reduced_cnn(config.image_size)
    hold_y = hold_images.hard_labels

    def seeded(tag: str) -> TrainConfig:
        return replace(train_config, seed=Seed(seed.derive("train", tag).value))

    reports: dict = {}
    params: dict = {}
    traces: dict = {}

    result = train(net, train_images, replace(seeded("hard"), label_strategy="hard"))
    params["hard"], traces["hard"] = result.params, result.loss_trace

    result = train(net, train_images, replace(seeded("soft"), label_strategy="soft"))
    params["soft"], traces["soft"] = result.params, result.loss_trace

    result = train(
        net, train_with_soft, replace(seeded("prob"), label_strategy="probabilistic")
    )
    params["prob"], traces["prob"] = result.params, result.loss_trace

    chosen = cross_validate_lambda(
        net,
        train_with_soft,
        lambda_grid,
        cv_folds,
        seeded("cv"),
    )
    two_stage = train_two_stage(net, train_with_soft, replace(seeded("reg"), lam=chosen))
    params["reg"], traces["reg"] = two_stage.theta_final, two_stage.stage2_trace

    for strategy in DISTILL_STRATEGIES:
        scores = predict_proba(net, params[strategy], hold_images.inputs)[:, 1]
        reports[strategy] = compute_report(scores, hold_y)
    return DistillationResult(reports, params, traces, chosen, feature_model, net)


def train_boundary_model(
    spec: MixtureSpec, n: int, strategy: str, seed: Seed
) -> tuple[NetworkSpec, Parameters, Dataset]:
    """One benchmark training run whose model acts on raw 2-D coordinates.

    Used to export decision-boundary models: the internal standardization is
    folded back into the dense weights so the saved model scores unscaled
    points. Returns (network, parameters, training pool).
    """
    if strategy not in ("hard", "correct-prob", "incorrect-prob"):
        raise ValueError(f"unsupported boundary strategy {strategy!r}")
    pool = sample_mixture(spec, (n // 2, n - n // 2), seed.derive("boundary-data", n))
    x_raw = pool.feature_matrix()
    mu, sd = _standardize_stats(x_raw)
    x_std = (x_raw - mu) / sd
    correct = bayes_posterior_batch(spec.to_class_conditional(), x_raw)
    incorrect = bayes_posterior_batch(
        spec.with_swapped_means().to_class_conditional(), x_raw
    )
    net = logistic_network(spec.dim)
    params = _train_strategy(
        net,
        strategy,
        x_std,
        pool.hard_labels,
        correct,
        incorrect,
        seed.derive("boundary-train", n, strategy),
        seed.derive("boundary-cv", n),
        spec.k,
    )
    return net, fold_standardization(params, mu, sd), pool


_DISTILL_METRICS = ("accuracy", "auc", "hl", "ece")


def _metric_value(report, metric: str) -> float:
    return {
        "accuracy": report.accuracy,
        "auc": report.auc,
        "hl": report.hl_statistic,
        "ece": report.ece,
    }[metric]


def save_distill_csv(result: DistillationResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", *DISTILL_STRATEGIES])
        for metric in _DISTILL_METRICS:
            writer.writerow(
                [metric]
                + [repr(_metric_value(result.reports[s], metric)) for s in DISTILL_STRATEGIES]
            )


def format_distill_table(result: DistillationResult) -> str:
    """Aligned text rendering of the per-strategy metrics table."""
    header = ["metric"] + list(DISTILL_STRATEGIES)
    rows = [
        [metric]
        + [f"{_metric_value(result.reports[s], metric):.4f}" for s in DISTILL_STRATEGIES]
        for metric in _DISTILL_METRICS
    ]
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    lines = [
        "  ".join(str(cell).ljust(widths[i]) for i, cell in enumerate(row))
        for row in [header] + rows
    ]
    return "\n".join(lines)
