"""Tests for core types, splitting, and the interchange formats."""

import numpy as np
import pytest

from problabel.core import (
    ClassDistribution,
    Dataset,
    DegenerateSplitError,
    FeatureVector,
    ImageGrid,
    Seed,
    load_dataset_csv,
    one_hot,
    read_pgm,
    save_dataset_csv,
    split_dataset,
    write_pgm,
)


def feature_dataset(n, k=2, seed=0, soft=False):
    rng = np.random.default_rng(seed)
    inputs = tuple(FeatureVector(rng.normal(size=3)) for _ in range(n))
    labels = rng.integers(0, k, size=n)
    soft_labels = None
    if soft:
        raw = rng.uniform(0.1, 1.0, size=(n, k))
        soft_labels = tuple(ClassDistribution(row / row.sum()) for row in raw)
    return Dataset(inputs, labels, k, soft_labels)


class TestClassDistribution:
    def test_valid(self):
        dist = ClassDistribution(np.array([0.25, 0.75]))
        assert dist.k == 2
        assert dist.argmax() == 1

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            ClassDistribution(np.array([0.5, 0.5 + 1e-6]))

    def test_accepts_tiny_float_fuzz(self):
        ClassDistribution(np.array([0.3, 0.7 + 1e-10]))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ClassDistribution(np.array([-0.1, 1.1]))

    def test_rejects_single_class(self):
        with pytest.raises(ValueError):
            ClassDistribution(np.array([1.0]))

    def test_immutable(self):
        dist = ClassDistribution(np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            dist.probs[0] = 0.9


class TestOneHot:
    def test_matches_definition(self):
        assert list(one_hot(1, 3).probs) == [0.0, 1.0, 0.0]
        assert list(one_hot(0, 2).probs) == [1.0, 0.0]
        assert list(one_hot(4, 5).probs) == [0.0, 0.0, 0.0, 0.0, 1.0]

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            one_hot(3, 3)
        with pytest.raises(ValueError):
            one_hot(-1, 3)


class TestImageGrid:
    def test_shape_checked(self):
        with pytest.raises(ValueError):
            ImageGrid(2, 2, np.array([0.1, 0.2, 0.3]))

    def test_range_checked(self):
        with pytest.raises(ValueError):
            ImageGrid(1, 2, np.array([0.5, 1.5]))

    def test_matrix_round_trip(self):
        matrix = np.array([[0.0, 0.5], [0.25, 1.0]])
        img = ImageGrid.from_matrix(matrix)
        assert np.array_equal(img.to_matrix(), matrix)


class TestDataset:
    def test_label_range_checked(self):
        with pytest.raises(ValueError):
            Dataset((FeatureVector(np.zeros(2)),), np.array([2]), 2)

    def test_soft_label_alignment(self):
        with pytest.raises(ValueError):
            Dataset(
                (FeatureVector(np.zeros(2)),),
                np.array([0]),
                2,
                (ClassDistribution(np.array([0.5, 0.5])), ClassDistribution(np.array([0.5, 0.5]))),
            )

    def test_heterogeneous_inputs_rejected(self):
        with pytest.raises(TypeError):
            Dataset(
                (FeatureVector(np.zeros(2)), ImageGrid(1, 1, np.array([0.5]))),
                np.array([0, 1]),
                2,
            )

    def test_subset_keeps_soft_labels(self):
        data = feature_dataset(6, soft=True)
        sub = data.subset([1, 3])
        assert len(sub) == 2
        assert np.array_equal(sub.soft_labels[0].probs, data.soft_labels[1].probs)


class TestSplitDataset:
    def test_floor_rounding(self):
        data = feature_dataset(10)
        train, hold = split_dataset(data, 0.7, Seed(1))
        assert (len(train), len(hold)) == (7, 3)

    def test_floor_on_larger_corpus(self):
        # floor(0.7 * 685) = 479
        data = feature_dataset(685)
        train, hold = split_dataset(data, 0.7, Seed(1))
        assert (len(train), len(hold)) == (479, 206)

    def test_deterministic(self):
        data = feature_dataset(10)
        first = split_dataset(data, 0.5, Seed(3))
        second = split_dataset(data, 0.5, Seed(3))
        assert np.array_equal(first[0].feature_matrix(), second[0].feature_matrix())
        assert np.array_equal(first[1].feature_matrix(), second[1].feature_matrix())

    def test_partition_is_exhaustive(self):
        data = feature_dataset(23)
        train, hold = split_dataset(data, 0.4, Seed(5))
        combined = sorted(
            map(tuple, np.vstack([train.feature_matrix(), hold.feature_matrix()]).tolist())
        )
        original = sorted(map(tuple, data.feature_matrix().tolist()))
        assert combined == original

    def test_stratified_proportions(self):
        labels = np.array([0] * 62 + [1] * 38)
        inputs = tuple(FeatureVector(np.array([float(i)])) for i in range(100))
        data = Dataset(inputs, labels, 2)
        train, hold = split_dataset(data, 0.7, Seed(7), stratified=True)
        train_zero = int(np.sum(train.hard_labels == 0))
        hold_zero = int(np.sum(hold.hard_labels == 0))
        assert abs(train_zero - 0.62 * len(train)) <= 1.0
        assert abs(hold_zero - 0.62 * len(hold)) <= 1.0

    def test_stratified_missing_class(self):
        data = Dataset(
            tuple(FeatureVector(np.array([float(i)])) for i in range(4)),
            np.array([0, 0, 1, 1]),
            3,
        )
        with pytest.raises(DegenerateSplitError):
            split_dataset(data, 0.5, Seed(1), stratified=True)


class TestInterchange:
    def test_pgm_round_trip(self, tmp_path):
        img = ImageGrid.from_matrix(np.linspace(0, 1, 12).reshape(3, 4))
        path = tmp_path / "img.pgm"
        write_pgm(img, path)
        back = read_pgm(path)
        assert (back.height, back.width) == (3, 4)
        # 8-bit quantization bounds the round-trip error
        assert np.max(np.abs(back.intensities - img.intensities)) <= 0.5 / 255

    def test_feature_csv_round_trip(self, tmp_path):
        data = feature_dataset(8, soft=True)
        path = tmp_path / "data.csv"
        save_dataset_csv(data, path)
        back = load_dataset_csv(path)
        assert np.array_equal(back.feature_matrix(), data.feature_matrix())
        assert np.array_equal(back.hard_labels, data.hard_labels)
        assert np.allclose(back.soft_label_matrix(), data.soft_label_matrix())

    def test_image_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        inputs = tuple(
            ImageGrid.from_matrix(np.round(rng.uniform(0, 1, (4, 4)) * 255) / 255)
            for _ in range(5)
        )
        data = Dataset(inputs, rng.integers(0, 2, 5), 2)
        path = tmp_path / "imgs.csv"
        save_dataset_csv(data, path)
        back = load_dataset_csv(path, k=2)
        for a, b in zip(back.inputs, data.inputs):
            assert np.allclose(a.intensities, b.intensities)
