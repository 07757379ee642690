"""Expert feature models and probabilistic-label construction.

Probabilistic labels are class posteriors p(Y | z) computed from a fitted
feature model — either Gaussian class-conditionals combined by Bayes' rule
or a logistic model — and used as training targets in place of one-hot
labels. Smoothing and corruption baselines live here too.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .core import ClassDistribution, FeatureVector, InsufficientDataError

if TYPE_CHECKING:  # pragma: no cover
    from .trainers import TrainConfig


class UniformFallbackWarning(RuntimeWarning):
    """All class joints underflowed; a uniform posterior was substituted."""


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return np.asarray(features, dtype=float)
    return np.array(
        [f.values if isinstance(f, FeatureVector) else f for f in features],
        dtype=float,
    )


def _as_vector(z) -> np.ndarray:
    if isinstance(z, FeatureVector):
        return z.values
    return np.asarray(z, dtype=float)


@dataclass(frozen=True, eq=False)
class GaussianClassConditional:
    """Per-class Gaussian densities plus class priors.

    Positive-definiteness of every covariance is checked at construction by
    Cholesky factorization; the factors are cached for density evaluation.
    """

    k: int
    means: tuple
    covariances: tuple
    priors: ClassDistribution

    def __post_init__(self) -> None:
        means = tuple(np.asarray(m, dtype=float) for m in self.means)
        covs = tuple(np.asarray(c, dtype=float) for c in self.covariances)
        if not (len(means) == len(covs) == self.k == self.priors.k):
            raise ValueError("means, covariances, and priors must agree with K")
        d = means[0].size
        chols = []
        for mean, cov in zip(means, covs):
            if mean.shape != (d,) or cov.shape != (d, d):
                raise ValueError("inconsistent feature dimensions")
            if not np.allclose(cov, cov.T, atol=1e-9):
                raise ValueError("covariance must be symmetric")
            chols.append(np.linalg.cholesky(cov))  # raises if not PD
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "_chols", tuple(chols))

    @property
    def dim(self) -> int:
        return self.means[0].size

    def class_log_densities(self, z) -> np.ndarray:
        """log p(z | Y=k) for every class, via the cached Cholesky factors."""
        z = _as_vector(z)
        out = np.empty(self.k)
        for i, (mean, chol) in enumerate(zip(self.means, self._chols)):
            out[i] = _log_density_cholesky(z, mean, chol)
        return out

    def to_json(self) -> dict:
        return {
            "K": self.k,
            "priors": list(self.priors.probs),
            "classes": [
                {"mean": list(m), "cov": [list(row) for row in c]}
                for m, c in zip(self.means, self.covariances)
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "GaussianClassConditional":
        return cls(
            k=int(doc["K"]),
            means=tuple(np.array(c["mean"], dtype=float) for c in doc["classes"]),
            covariances=tuple(np.array(c["cov"], dtype=float) for c in doc["classes"]),
            priors=ClassDistribution(np.array(doc["priors"], dtype=float)),
        )


@dataclass(frozen=True, eq=False)
class LogisticFeatureModel:
    """Binary posterior model p(Y=1 | z) = sigmoid(w.z + b)."""

    weights: np.ndarray
    bias: float

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 1 or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be a finite 1-D vector")
        if not math.isfinite(self.bias):
            raise ValueError("bias must be finite")
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", float(self.bias))

    def score(self, z) -> float:
        return float(self.weights @ _as_vector(z) + self.bias)

    def to_json(self) -> dict:
        return {"weights": list(self.weights), "bias": self.bias}

    @classmethod
    def from_json(cls, doc: dict) -> "LogisticFeatureModel":
        return cls(np.array(doc["weights"], dtype=float), float(doc["bias"]))


def _log_density_cholesky(z: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> float:
    d = mean.size
    white = np.linalg.solve(chol, z - mean)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (d * math.log(2.0 * math.pi) + log_det + float(white @ white))


def gaussian_log_density(z, mean, covariance) -> float:
    """Log multivariate-normal density at ``z``.

    Raises ``numpy.linalg.LinAlgError`` when the covariance is not positive
    definite.
    """
    mean = np.asarray(mean, dtype=float)
    chol = np.linalg.cholesky(np.asarray(covariance, dtype=float))
    return _log_density_cholesky(_as_vector(z), mean, chol)


def posterior_from_log_joints(log_joints: np.ndarray) -> ClassDistribution:
    """Normalize log joint scores into a posterior (log-sum-exp path).

    Invariant under adding any common constant to all entries. If every
    entry is -inf, falls back to the uniform distribution and emits a
    :class:`UniformFallbackWarning`.
    """
    log_joints = np.asarray(log_joints, dtype=float)
    top = np.max(log_joints)
    if not np.isfinite(top):
        warnings.warn(
            "all class joints vanished; returning uniform posterior",
            UniformFallbackWarning,
            stacklevel=2,
        )
        return ClassDistribution(np.full(log_joints.size, 1.0 / log_joints.size))
    weights = np.exp(log_joints - top)
    return ClassDistribution(weights / weights.sum())


def bayes_posterior(model: GaussianClassConditional, z) -> ClassDistribution:
    """Posterior p(Y | z) from class-conditional densities and priors."""
    with np.errstate(divide="ignore"):
        log_priors = np.log(model.priors.probs)
    return posterior_from_log_joints(log_priors + model.class_log_densities(z))


def bayes_posterior_batch(model: GaussianClassConditional, points: np.ndarray) -> np.ndarray:
    """(n, K) posterior matrix for a batch of points; same math as
    :func:`bayes_posterior`, vectorized over rows."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    log_joint = np.empty((n, model.k))
    with np.errstate(divide="ignore"):
        log_priors = np.log(model.priors.probs)
    d = model.dim
    for i, (mean, chol) in enumerate(zip(model.means, model._chols)):
        white = np.linalg.solve(chol, (points - mean).T)
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        quad = np.sum(white * white, axis=0)
        log_joint[:, i] = log_priors[i] - 0.5 * (
            d * math.log(2.0 * math.pi) + log_det + quad
        )
    top = np.max(log_joint, axis=1, keepdims=True)
    weights = np.exp(log_joint - top)
    return weights / weights.sum(axis=1, keepdims=True)


def fit_gaussian_class_conditional(
    features,
    hard_labels,
    priors: ClassDistribution | None = None,
) -> GaussianClassConditional:
    """Fit per-class sample means and maximum-likelihood covariances.

    Covariances divide by the class count (not count - 1). Whenever a class
    covariance fails Cholesky, a diagonal jitter of 1e-6 * trace / d is added
    (doubled on retry) until it succeeds. Priors default to empirical class
    frequencies.
    """
    points = _as_matrix(features)
    labels = np.asarray(hard_labels, dtype=int)
    if points.shape[0] != labels.size:
        raise ValueError("features and labels must align")
    k = int(labels.max()) + 1 if priors is None else priors.k
    d = points.shape[1]
    means, covs = [], []
    counts = np.zeros(k)
    for cls in range(k):
        cls_points = points[labels == cls]
        counts[cls] = cls_points.shape[0]
        if cls_points.shape[0] < 2:
            raise InsufficientDataError(
                f"class {cls} has {cls_points.shape[0]} instance(s); need >= 2"
            )
        mean = cls_points.mean(axis=0)
        centered = cls_points - mean
        cov = centered.T @ centered / cls_points.shape[0]
        means.append(mean)
        covs.append(_jitter_to_pd(cov, d))
    if priors is None:
        priors = ClassDistribution(counts / counts.sum())
    return GaussianClassConditional(k, tuple(means), tuple(covs), priors)


def _jitter_to_pd(cov: np.ndarray, d: int) -> np.ndarray:
    jitter = 1e-6 * max(float(np.trace(cov)) / d, 1e-12)
    for _ in range(60):
        try:
            np.linalg.cholesky(cov)
            return cov
        except np.linalg.LinAlgError:
            cov = cov + jitter * np.eye(d)
            jitter *= 2.0
    raise np.linalg.LinAlgError("could not repair covariance to positive definite")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def fit_logistic_feature_model(
    features,
    hard_labels,
    config: "TrainConfig | None" = None,
) -> LogisticFeatureModel:
    """Fit sigmoid(w.z + b) to binary labels by full-batch gradient descent.

    Minimizes mean binary cross-entropy plus a small L2 decay on the weights
    (bias excluded), which keeps separable data from diverging. The fit runs
    on internally standardized features so the decay acts on a scale-free
    weight vector; the returned model is mapped back to raw coordinates.
    Stops when the gradient max-norm drops below the tolerance. When every
    label is identical the model degenerates to weight 0 and a
    Laplace-smoothed constant bias.
    """
    points = _as_matrix(features)
    labels = np.asarray(hard_labels, dtype=int)
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("logistic feature model supports binary labels only")
    lr = config.learning_rate if config is not None else 1.0
    epochs = config.epochs if config is not None else 5000
    decay = config.weight_decay if config is not None else 1e-3
    tol = config.convergence_tol if config is not None else 1e-8
    n, d = points.shape
    positives = int(labels.sum())
    if positives in (0, n):
        bias = math.log((positives + 1.0) / (n - positives + 1.0))
        return LogisticFeatureModel(np.zeros(d), bias)
    mu = points.mean(axis=0)
    sd = points.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    scaled = (points - mu) / sd
    w = np.zeros(d)
    b = 0.0
    y = labels.astype(float)
    for _ in range(epochs):
        p = _sigmoid(scaled @ w + b)
        residual = p - y
        grad_w = scaled.T @ residual / n + 2.0 * decay * w
        grad_b = float(residual.mean())
        w -= lr * grad_w
        b -= lr * grad_b
        if max(float(np.abs(grad_w).max()), abs(grad_b)) < tol:
            break
    w_raw = w / sd
    return LogisticFeatureModel(w_raw, b - float(w @ (mu / sd)))


def logistic_posterior(model: LogisticFeatureModel, z) -> ClassDistribution:
    """[1 - sigmoid(w.z + b), sigmoid(w.z + b)]."""
    p = float(_sigmoid(np.array([model.score(z)]))[0])
    return ClassDistribution(np.array([1.0 - p, p]))


def smooth_labels(hard: ClassDistribution, epsilon: float) -> ClassDistribution:
    """Move mass epsilon off the one-hot class, spread evenly elsewhere."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must lie in [0, 1)")
    probs = hard.probs
    if np.count_nonzero(probs == 1.0) != 1 or np.count_nonzero(probs) != 1:
        raise ValueError("smoothing requires a one-hot distribution")
    k = hard.k
    out = np.full(k, epsilon / (k - 1))
    out[hard.argmax()] = 1.0 - epsilon
    return ClassDistribution(out)


@dataclass(frozen=True)
class CorruptionSpec:
    """How to turn a correct posterior into a misleading one.

    ``reflect`` reverses the probability vector (swaps the two entries for
    K=2); ``temper`` raises entries to the power ``gamma`` and renormalizes
    (gamma=0 flattens to uniform, gamma=1 is the identity).
    """

    kind: str
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("reflect", "temper"):
            raise ValueError(f"unknown corruption kind {self.kind!r}")


def corrupt_posterior(
    correct: ClassDistribution,
    mode: CorruptionSpec | str,
    seed=None,
) -> ClassDistribution:
    """Deviate from a correct posterior per the corruption spec.

    Output is always a valid distribution. ``seed`` is accepted for
    interface stability; the built-in modes are deterministic.
    """
    spec = CorruptionSpec(mode) if isinstance(mode, str) else mode
    probs = correct.probs
    if spec.kind == "reflect":
        return ClassDistribution(probs[::-1].copy())
    powered = np.power(probs, spec.gamma)
    return ClassDistribution(powered / powered.sum())
