"""Tests for losses, gradients, the training loop, and lambda selection."""

import math
from dataclasses import replace

import numpy as np
import pytest

from gradcheck import max_relative_error
from problabel.core import ClassDistribution, ConfigurationError, Dataset, FeatureVector, Seed
from problabel.experiments import DEFAULT_MIXTURE, sample_mixture
from problabel.network import (
    NetworkSpec,
    Parameters,
    conv2d,
    dense,
    flatten,
    init_parameters,
    maxpool,
    relu,
    sigmoid,
    softmax,
)
from problabel.prob_label import bayes_posterior_batch
from problabel.trainers import (
    TrainConfig,
    backward,
    cross_entropy_loss,
    cross_validate_lambda,
    regularized_loss,
    stratified_folds,
    train,
    train_two_stage,
)
from problabel.core import DegenerateFoldError
from problabel.rng import Prng, derive_seed

FULL = 1 << 30


def dist(*probs):
    return ClassDistribution(np.array(probs))


def toy_dataset(n=20, seed=0, k=2, soft=False):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    labels = rng.integers(0, k, size=n)
    soft_labels = None
    if soft:
        raw = rng.uniform(0.1, 1.0, size=(n, k))
        soft_labels = tuple(ClassDistribution(r / r.sum()) for r in raw)
    return Dataset(tuple(FeatureVector(r) for r in x), labels, k, soft_labels)


class TestCrossEntropy:
    def test_uniform_prediction(self):
        assert cross_entropy_loss(dist(0.5, 0.5), dist(0.0, 1.0)) == pytest.approx(
            math.log(2.0), abs=1e-12
        )

    def test_matching_distributions_give_entropy(self):
        assert cross_entropy_loss(dist(0.5, 0.5), dist(0.5, 0.5)) == pytest.approx(
            math.log(2.0), abs=1e-12
        )

    def test_soft_example(self):
        expected = -(0.1 * math.log(0.1) + 0.9 * math.log(0.9))
        assert cross_entropy_loss(dist(0.1, 0.9), dist(0.1, 0.9)) == pytest.approx(
            expected, abs=1e-12
        )

    def test_clamp_handles_zero_prediction(self):
        value = cross_entropy_loss(dist(1.0, 0.0), dist(0.0, 1.0))
        assert value == pytest.approx(-math.log(1e-12))


class TestRegularizedLoss:
    def setup_method(self):
        self.spec = NetworkSpec((2,), (dense(1), sigmoid()))
        self.theta = Parameters(np.array([1.0, -1.0, 0.5]), self.spec.layout)
        self.anchor = Parameters(np.array([0.0, 0.0, 0.5]), self.spec.layout)

    def test_lambda_zero(self):
        assert regularized_loss(1.7, self.theta, self.anchor, 0.0) == 1.7

    def test_at_anchor(self):
        assert regularized_loss(1.7, self.theta, self.theta, 123.0) == 1.7

    def test_quadratic_arithmetic(self):
        # theta - anchor = [1, -1, 0], lam 2 -> 2 * 2 = 4
        assert regularized_loss(0.0, self.theta, self.anchor, 2.0) == pytest.approx(4.0)


class TestBackward:
    def test_penalty_vanishes_at_anchor(self):
        spec = NetworkSpec((3,), (dense(4), relu(), dense(1), sigmoid()))
        params = init_parameters(spec, 3)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 3))
        t = np.zeros((5, 2))
        t[np.arange(5), rng.integers(0, 2, 5)] = 1.0
        plain = backward(spec, params, x, t)
        anchored = backward(spec, params, x, t, anchor=params, lam=7.5)
        assert np.allclose(plain, anchored)

    def test_sigmoid_unit_gradient_formula(self):
        # d loss / d logit = sigma(logit) - t for a single sigmoid unit
        spec = NetworkSpec((2,), (dense(1), sigmoid()))
        params = Parameters(np.array([0.7, -0.2, 0.1]), spec.layout)
        x = np.array([[1.5, -0.5]])
        t = np.array([[0.0, 1.0]])
        grad = backward(spec, params, x, t)
        logit = 0.7 * 1.5 - 0.2 * -0.5 + 0.1
        p = 1.0 / (1.0 + math.exp(-logit))
        expected_dlogit = p - 1.0
        assert grad[0] == pytest.approx(expected_dlogit * 1.5, rel=1e-12)
        assert grad[1] == pytest.approx(expected_dlogit * -0.5, rel=1e-12)
        assert grad[2] == pytest.approx(expected_dlogit, rel=1e-12)

    def test_finite_difference_conv_network(self):
        rng = np.random.default_rng(42)
        spec = NetworkSpec(
            (6, 6),
            (conv2d(2), relu(), maxpool(), conv2d(3), relu(), flatten(), dense(1), sigmoid()),
        )
        params = init_parameters(spec, 17)
        x = rng.uniform(0.05, 0.95, size=(3, 1, 6, 6))
        t = np.zeros((3, 2))
        t[np.arange(3), rng.integers(0, 2, 3)] = 1.0
        assert max_relative_error(spec, params, x, t) < 1e-4

    def test_finite_difference_softmax_and_penalty(self):
        rng = np.random.default_rng(7)
        spec = NetworkSpec((4,), (dense(6), relu(), dense(3), softmax()))
        params = init_parameters(spec, 23)
        anchor = init_parameters(spec, 24)
        x = rng.normal(size=(5, 4))
        raw = rng.uniform(0.1, 1.0, size=(5, 3))
        t = raw / raw.sum(axis=1, keepdims=True)
        assert max_relative_error(spec, params, x, t, anchor=anchor, lam=0.3) < 1e-4


class TestTrain:
    def setup_method(self):
        self.spec = NetworkSpec((3,), (dense(1), sigmoid()))
        self.config = TrainConfig(
            learning_rate=0.2, epochs=40, batch_size=8, seed=Seed(5), label_strategy="hard"
        )

    def test_deterministic(self):
        data = toy_dataset(24, seed=1)
        a = train(self.spec, data, self.config)
        b = train(self.spec, data, self.config)
        assert np.array_equal(a.params.values, b.params.values)
        assert a.loss_trace == b.loss_trace

    def test_lambda_zero_matches_hard_run(self):
        data = toy_dataset(24, seed=2)
        anchor = init_parameters(self.spec, 77)
        hard = train(self.spec, data, self.config)
        reg = train(
            self.spec,
            data,
            replace(self.config, label_strategy="regularized", lam=0.0),
            anchor=anchor,
        )
        assert np.array_equal(hard.params.values, reg.params.values)

    def test_huge_lambda_stays_near_anchor(self):
        data = toy_dataset(24, seed=3)
        anchor = init_parameters(self.spec, 88)
        pinned = train(
            self.spec,
            data,
            replace(self.config, label_strategy="regularized", lam=1e6, epochs=5),
            anchor=anchor,
            init=anchor,
        )
        hard = train(self.spec, data, replace(self.config, epochs=5), init=anchor)
        drift_pinned = np.linalg.norm(pinned.params.values - anchor.values)
        drift_hard = np.linalg.norm(hard.params.values - anchor.values)
        assert drift_pinned < drift_hard

    def test_missing_soft_labels_rejected(self):
        data = toy_dataset(10, seed=4)
        with pytest.raises(ConfigurationError):
            train(self.spec, data, replace(self.config, label_strategy="probabilistic"))

    def test_missing_anchor_rejected(self):
        data = toy_dataset(10, seed=4)
        with pytest.raises(ConfigurationError):
            train(self.spec, data, replace(self.config, label_strategy="regularized"))

    def test_soft_strategy_uses_smoothing(self):
        # epsilon = 0 soft must match hard exactly
        data = toy_dataset(16, seed=5)
        hard = train(self.spec, data, self.config)
        soft0 = train(
            self.spec, data, replace(self.config, label_strategy="soft", epsilon_smoothing=0.0)
        )
        assert np.array_equal(hard.params.values, soft0.params.values)

    def test_loss_monotone_full_batch_small_lr(self):
        pool = sample_mixture(DEFAULT_MIXTURE, (30, 30), Seed(9))
        x = pool.feature_matrix()
        x = x / np.sqrt(x.var(axis=0).mean())
        data = Dataset(tuple(FeatureVector(r) for r in x), pool.hard_labels, 2)
        spec = NetworkSpec((2,), (dense(1), sigmoid()))
        result = train(
            spec,
            data,
            TrainConfig(learning_rate=1e-3, epochs=200, batch_size=FULL, seed=Seed(1)),
        )
        trace = np.array(result.loss_trace)
        assert np.all(np.diff(trace) <= 1e-12)

    def test_convergence_tol_stops_early(self):
        data = toy_dataset(16, seed=6)
        result = train(
            self.spec,
            data,
            replace(self.config, epochs=500, batch_size=FULL, convergence_tol=1e-4),
        )
        assert len(result.loss_trace) < 500

    def test_accuracy_near_bayes_on_benchmark(self):
        # Bayes accuracy of the benchmark mixture, frozen from a 1e6-sample
        # oracle run (classify with the exact posterior): 0.87170
        pool = sample_mixture(DEFAULT_MIXTURE, (30, 30), Seed(31))
        test = sample_mixture(DEFAULT_MIXTURE, (1000, 1000), Seed(32))
        scale = float(np.sqrt(pool.feature_matrix().var(axis=0).mean()))
        x = pool.feature_matrix() / scale
        data = Dataset(tuple(FeatureVector(r) for r in x), pool.hard_labels, 2)
        spec = NetworkSpec((2,), (dense(1), sigmoid()))
        result = train(
            spec,
            data,
            TrainConfig(learning_rate=0.1, epochs=500, batch_size=FULL, seed=Seed(33)),
        )
        from problabel.network import predict_proba

        scores = predict_proba(spec, result.params, test.feature_matrix() / scale)[:, 1]
        acc = float(np.mean((scores >= 0.5).astype(int) == test.hard_labels))
        assert abs(acc - 0.87170) <= 0.02


class TestTwoStage:
    def setup_method(self):
        self.spec = NetworkSpec((2,), (dense(1), sigmoid()))
        pool = sample_mixture(DEFAULT_MIXTURE, (20, 20), Seed(41))
        x = pool.feature_matrix() / np.sqrt(pool.feature_matrix().var(axis=0).mean())
        soft = bayes_posterior_batch(DEFAULT_MIXTURE.to_class_conditional(), pool.feature_matrix())
        self.data = Dataset(
            tuple(FeatureVector(r) for r in x),
            pool.hard_labels,
            2,
            tuple(ClassDistribution(r) for r in soft),
        )
        self.config = TrainConfig(
            learning_rate=0.1, epochs=120, batch_size=FULL, seed=Seed(42)
        )

    def test_lambda_zero_equals_hard_finetune(self):
        two = train_two_stage(self.spec, self.data, replace(self.config, lam=0.0))
        finetune = train(
            self.spec,
            self.data,
            replace(self.config, label_strategy="hard"),
            init=two.theta_p,
        )
        assert np.array_equal(two.theta_final.values, finetune.params.values)

    def test_infinite_lambda_pins_to_stage_one(self):
        two = train_two_stage(self.spec, self.data, replace(self.config, lam=1e8, epochs=30))
        assert np.max(np.abs(two.theta_final.values - two.theta_p.values)) < 1e-3

    def test_anchor_distance_monotone_in_lambda(self):
        # stage-2 optimum moves toward the anchor as lam grows
        config = replace(self.config, epochs=3000, learning_rate=0.5)
        stage1 = train(self.spec, self.data, replace(config, label_strategy="probabilistic"))
        distances = []
        for lam in (0.0, 0.1, 1.0, 10.0, 100.0):
            result = train(
                self.spec,
                self.data,
                replace(config, label_strategy="regularized", lam=lam),
                anchor=stage1.params,
                init=stage1.params,
            )
            distances.append(float(np.linalg.norm(result.params.values - stage1.params.values)))
        assert all(a >= b - 1e-9 for a, b in zip(distances, distances[1:]))


class TestCrossValidateLambda:
    def _benchmark_data(self, seed, reflect=False):
        pool = sample_mixture(DEFAULT_MIXTURE, (6, 6), Seed(seed))
        x_raw = pool.feature_matrix()
        x = x_raw / np.sqrt(x_raw.var(axis=0).mean())
        soft = bayes_posterior_batch(DEFAULT_MIXTURE.to_class_conditional(), x_raw)
        if reflect:
            soft = soft[:, ::-1]
        return Dataset(
            tuple(FeatureVector(r) for r in x),
            pool.hard_labels,
            2,
            tuple(ClassDistribution(r) for r in soft),
        )

    def test_single_candidate(self):
        data = self._benchmark_data(50)
        spec = NetworkSpec((2,), (dense(1), sigmoid()))
        config = TrainConfig(learning_rate=0.1, epochs=100, batch_size=FULL, seed=Seed(1))
        assert cross_validate_lambda(spec, data, [0.37], 3, config) == 0.37

    def test_true_posterior_labels_prefer_large_lambda(self):
        spec = NetworkSpec((2,), (dense(1), sigmoid()))
        votes = 0
        for trial in range(20):
            data = self._benchmark_data(600 + trial)
            config = TrainConfig(
                learning_rate=0.1, epochs=300, batch_size=FULL, seed=Seed(trial)
            )
            chosen = cross_validate_lambda(spec, data, [0.0, 1e8], 3, config)
            votes += chosen == 1e8
        assert votes > 10

    def test_reflected_labels_prefer_zero_lambda(self):
        spec = NetworkSpec((2,), (dense(1), sigmoid()))
        votes = 0
        for trial in range(20):
            data = self._benchmark_data(900 + trial, reflect=True)
            config = TrainConfig(
                learning_rate=0.1, epochs=300, batch_size=FULL, seed=Seed(trial)
            )
            chosen = cross_validate_lambda(spec, data, [0.0, 1e8], 3, config)
            votes += chosen == 0.0
        assert votes > 10

    def test_degenerate_fold_detected(self):
        labels = np.array([0, 0, 0, 1])
        with pytest.raises(DegenerateFoldError):
            stratified_folds(labels, 2, Prng(1))

    def test_tie_breaks_to_larger_lambda(self):
        # both huge penalties pin stage 2 to the anchor, so their validation
        # accuracies tie exactly; the larger candidate must win
        data = self._benchmark_data(55)
        spec = NetworkSpec((2,), (dense(1), sigmoid()))
        config = TrainConfig(learning_rate=0.1, epochs=50, batch_size=FULL, seed=Seed(2))
        chosen = cross_validate_lambda(spec, data, [1e7, 1e8], 2, config)
        assert chosen == 1e8
