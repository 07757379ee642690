"""Loss regimes, gradients, and seeded mini-batch training.

Four label strategies share one loop: ``hard`` (one-hot targets), ``soft``
(epsilon-smoothed one-hots), ``probabilistic`` (the dataset's soft labels),
and ``regularized`` (hard targets plus a quadratic penalty pulling the
parameters toward an anchor). The anchor penalty is applied as an exact
proximal update after each gradient step — an explicit gradient step on
lam * ||theta - anchor||^2 diverges once lam * learning_rate is large,
while the proximal form is stable for every lam and reduces to plain
gradient descent at lam = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    ClassDistribution,
    ConfigurationError,
    Dataset,
    DegenerateFoldError,
    Seed,
    one_hot,
)
from .network import (
    NetworkSpec,
    Parameters,
    as_batch,
    backprop_layers,
    head_probabilities,
    init_parameters,
    predict_proba,
    run_layers,
)
from .prob_label import smooth_labels
from .rng import Prng, derive_seed

LOG_CLAMP = 1e-12

LABEL_STRATEGIES = ("hard", "soft", "probabilistic", "regularized")


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer hyperparameters and label strategy for one training run."""

    learning_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 32
    lam: float = 0.0
    epsilon_smoothing: float = 0.1
    weight_decay: float = 0.0
    seed: Seed = field(default_factory=lambda: Seed(0))
    convergence_tol: float = 0.0
    label_strategy: str = "hard"

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.lam < 0:
            raise ConfigurationError("lam must be >= 0")
        if not 0.0 <= self.epsilon_smoothing < 1.0:
            raise ConfigurationError("epsilon_smoothing must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")
        if self.label_strategy not in LABEL_STRATEGIES:
            raise ConfigurationError(f"unknown label strategy {self.label_strategy!r}")


@dataclass(frozen=True, eq=False)
class TrainResult:
    params: Parameters
    loss_trace: tuple


@dataclass(frozen=True, eq=False)
class TwoStageResult:
    theta_p: Parameters
    theta_final: Parameters
    stage1_trace: tuple
    stage2_trace: tuple


def cross_entropy_loss(pred: ClassDistribution, target: ClassDistribution) -> float:
    """-sum_k target_k * log(pred_k), predictions clamped below at 1e-12."""
    if pred.k != target.k:
        raise ValueError("distributions must share the class count")
    return float(-(target.probs @ np.log(np.maximum(pred.probs, LOG_CLAMP))))


def regularized_loss(
    batch_loss: float, params: Parameters, anchor: Parameters, lam: float
) -> float:
    """batch_loss + lam * ||theta - anchor||^2."""
    if params.layout != anchor.layout:
        raise ValueError("parameters and anchor must share a layout")
    delta = params.values - anchor.values
    return batch_loss + lam * float(delta @ delta)


def _batch_ce(probs: np.ndarray, targets: np.ndarray) -> float:
    return float(-np.mean(np.sum(targets * np.log(np.maximum(probs, LOG_CLAMP)), axis=1)))


def _targets_matrix(targets, k: int) -> np.ndarray:
    if isinstance(targets, np.ndarray):
        return np.asarray(targets, dtype=float)
    return np.array(
        [t.probs if isinstance(t, ClassDistribution) else t for t in targets],
        dtype=float,
    )


def backward(
    spec: NetworkSpec,
    params: Parameters,
    batch,
    targets,
    anchor: Parameters | None = None,
    lam: float = 0.0,
) -> np.ndarray:
    """Analytic gradient of the mean batch loss, flat over all parameters.

    With an anchor, the penalty gradient 2 * lam * (theta - anchor) is added.
    """
    x = as_batch(batch)
    t = _targets_matrix(targets, spec.n_classes)
    if t.shape != (x.shape[0], spec.n_classes):
        raise ValueError("target matrix must be (n, K)")
    logits, caches = run_layers(spec, params, x, keep_cache=True)
    probs = head_probabilities(spec, logits)
    n = x.shape[0]
    if spec._head == "sigmoid":
        d_logits = ((probs[:, 1] - t[:, 1]) / n)[:, None]
    else:
        d_logits = (probs - t) / n
    grad = backprop_layers(spec, params, caches, d_logits)
    if anchor is not None and lam != 0.0:
        grad = grad + 2.0 * lam * (params.values - anchor.values)
    return grad


def resolve_targets(data: Dataset, config: TrainConfig) -> np.ndarray:
    """(n, K) target matrix implied by the configured label strategy."""
    k = data.k
    strategy = config.label_strategy
    if strategy in ("hard", "regularized"):
        return np.array([one_hot(int(y), k).probs for y in data.hard_labels])
    if strategy == "soft":
        return np.array(
            [
                smooth_labels(one_hot(int(y), k), config.epsilon_smoothing).probs
                for y in data.hard_labels
            ]
        )
    if data.soft_labels is None:
        raise ConfigurationError("probabilistic strategy needs dataset soft labels")
    return data.soft_label_matrix()


def train(
    spec: NetworkSpec,
    data: Dataset,
    config: TrainConfig,
    anchor: Parameters | None = None,
    init: Parameters | None = None,
) -> TrainResult:
    """Seeded mini-batch gradient descent for the configured epochs.

    Batches are reshuffled every epoch from the seed-derived stream (a single
    full batch runs unshuffled; the mean gradient is order-independent).
    The loss trace records the optimized objective per epoch, averaged over
    batches at their pre-update parameters. A positive ``convergence_tol``
    stops early once the epoch loss moves less than the tolerance.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if spec.n_classes != data.k:
        raise ConfigurationError("network head and dataset class count differ")
    if config.label_strategy == "regularized" and anchor is None:
        raise ConfigurationError("regularized strategy needs an anchor")
    targets = resolve_targets(data, config)
    x_all = as_batch(data.inputs)
    n = len(data)
    theta = (init if init is not None else init_parameters(spec, config.seed.value)).values.copy()
    lam = config.lam if config.label_strategy == "regularized" else 0.0
    anchor_vals = anchor.values if anchor is not None else None
    lr = config.learning_rate
    decay = config.weight_decay
    batch_size = min(config.batch_size, n)
    shuffler = Prng(derive_seed(config.seed.value, "shuffle")) if batch_size < n else None
    params = Parameters(theta.copy(), spec.layout)
    trace: list[float] = []
    for _ in range(config.epochs):
        if shuffler is not None:
            order = shuffler.permutation(n)
        else:
            order = range(n)
        epoch_losses: list[float] = []
        for start in range(0, n, batch_size):
            idx = list(order[start : start + batch_size])
            xb, tb = x_all[idx], targets[idx]
            logits, caches = run_layers(spec, params, xb, keep_cache=True)
            probs = head_probabilities(spec, logits)
            loss = _batch_ce(probs, tb)
            if decay > 0.0:
                loss += decay * float(params.values @ params.values)
            if lam > 0.0:
                delta = params.values - anchor_vals
                loss += lam * float(delta @ delta)
            epoch_losses.append(loss)
            m = xb.shape[0]
            if spec._head == "sigmoid":
                d_logits = ((probs[:, 1] - tb[:, 1]) / m)[:, None]
            else:
                d_logits = (probs - tb) / m
            grad = backprop_layers(spec, params, caches, d_logits)
            if decay > 0.0:
                grad = grad + 2.0 * decay * params.values
            theta = params.values - lr * grad
            if lam > 0.0:
                # exact proximal step for lam * ||theta - anchor||^2
                theta = anchor_vals + (theta - anchor_vals) / (1.0 + 2.0 * lam * lr)
            params = Parameters(theta, spec.layout)
        trace.append(float(np.mean(epoch_losses)))
        if (
            config.convergence_tol > 0.0
            and len(trace) >= 2
            and abs(trace[-2] - trace[-1]) < config.convergence_tol
        ):
            break
    return TrainResult(params, tuple(trace))


def train_two_stage(spec: NetworkSpec, data: Dataset, config: TrainConfig) -> TwoStageResult:
    """Probabilistic-target stage, then anchored hard-label fine-tuning.

    Stage 1 trains on the dataset's soft labels from a fresh initialization;
    stage 2 continues from the stage-1 parameters with hard targets plus the
    lam-weighted pull toward them. Both stages draw from the same seed.
    """
    stage1 = train(spec, data, replace(config, label_strategy="probabilistic"))
    stage2 = train(
        spec,
        data,
        replace(config, label_strategy="regularized"),
        anchor=stage1.params,
        init=stage1.params,
    )
    return TwoStageResult(stage1.params, stage2.params, stage1.loss_trace, stage2.loss_trace)


def stratified_folds(labels: np.ndarray, folds: int, prng: Prng) -> list[np.ndarray]:
    """Seeded stratified fold assignment; every fold keeps every class."""
    labels = np.asarray(labels, dtype=int)
    assignments = [[] for _ in range(folds)]
    for cls in np.unique(labels):
        members = [int(i) for i in np.flatnonzero(labels == cls)]
        if len(members) < folds:
            raise DegenerateFoldError(
                f"class {cls} has {len(members)} instance(s) for {folds} folds"
            )
        prng.shuffle(members)
        for pos, idx in enumerate(members):
            assignments[pos % folds].append(idx)
    return [np.array(sorted(fold)) for fold in assignments]


def cross_validate_lambda(
    spec: NetworkSpec,
    data: Dataset,
    candidates,
    folds: int,
    config: TrainConfig,
) -> float:
    """Pick the penalty weight maximizing mean validation accuracy.

    Stage-1 parameters are shared across candidates within each fold (the
    anchor does not depend on lam). Ties break toward the larger candidate.
    """
    candidates = sorted(float(c) for c in candidates)
    if not candidates:
        raise ValueError("need at least one candidate")
    if folds < 2 or folds > len(data):
        raise ValueError("folds must lie in [2, n]")
    prng = Prng(derive_seed(config.seed.value, "cv-folds"))
    fold_indices = stratified_folds(data.hard_labels, folds, prng)
    all_indices = set(range(len(data)))
    scores = np.zeros((len(candidates), folds))
    for f, val_idx in enumerate(fold_indices):
        train_idx = sorted(all_indices - set(int(i) for i in val_idx))
        fold_train = data.subset(train_idx)
        fold_val = data.subset(val_idx)
        fold_seed = Seed(derive_seed(config.seed.value, "cv-fold", f))
        stage1 = train(
            spec,
            fold_train,
            replace(config, label_strategy="probabilistic", seed=fold_seed),
        )
        val_x = as_batch(fold_val.inputs)
        for c, lam in enumerate(candidates):
            stage2 = train(
                spec,
                fold_train,
                replace(config, label_strategy="regularized", lam=lam, seed=fold_seed),
                anchor=stage1.params,
                init=stage1.params,
            )
            probs = predict_proba(spec, stage2.params, val_x)
            predicted = probs.argmax(axis=1)
            scores[c, f] = float(np.mean(predicted == fold_val.hard_labels))
    means = scores.mean(axis=1)
    best = 0
    for c in range(1, len(candidates)):
        if means[c] >= means[best]:  # >= : ties go to the larger lam
            best = c
    return candidates[best]


DEFAULT_LAMBDA_GRID = (0.0, 0.001, 0.01, 0.1, 1.0, 10.0, 100.0)
