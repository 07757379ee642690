"""Core data types, dataset construction, and splitting.

All types are immutable after construction (backing arrays are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import Prng, derive_seed

NORMALIZATION_TOL = 1e-9


class DegenerateSplitError(ValueError):
    """A stratified split saw a class with zero instances."""


class InsufficientDataError(ValueError):
    """Too few instances to fit the requested model."""


class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration."""


class DegenerateFoldError(ValueError):
    """A cross-validation fold lost all instances of some class."""


class UndefinedMetricError(ValueError):
    """The requested metric is undefined for the given inputs."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ClassDistribution:
    """Probability vector over K >= 2 classes; entries sum to 1."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError("need a 1-D vector over at least 2 classes")
        if np.any(probs < -1e-12) or np.any(probs > 1.0 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        total = float(probs.sum())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "probs", _readonly(np.clip(probs, 0.0, 1.0)))

    @property
    def k(self) -> int:
        return self.probs.size

    def argmax(self) -> int:
        return int(np.argmax(self.probs))

    def __getitem__(self, index: int) -> float:
        return float(self.probs[index])

    def __len__(self) -> int:
        return self.probs.size


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Dense feature vector; semantics supplied by the feature extractor."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("feature vector must be 1-D")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values must be finite")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """Grayscale image; row-major intensities in [0, 1]."""

    height: int
    width: int
    intensities: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.intensities, dtype=float).ravel()
        if vals.size != self.height * self.width:
            raise ValueError("intensity count must equal height * width")
        if np.any(vals < 0.0) or np.any(vals > 1.0) or not np.all(np.isfinite(vals)):
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "intensities", _readonly(vals))

    def to_matrix(self) -> np.ndarray:
        return self.intensities.reshape(self.height, self.width)

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "ImageGrid":
        matrix = np.asarray(matrix, dtype=float)
        return cls(matrix.shape[0], matrix.shape[1], matrix.ravel())


@dataclass(frozen=True, eq=False)
class Seed:
    """64-bit unsigned seed; root of every random stream."""

    value: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", int(self.value) & ((1 << 64) - 1))

    def derive(self, *tags: int | str) -> "Seed":
        return Seed(derive_seed(self.value, *tags))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Homogeneous inputs with hard labels and optional soft-label targets."""

    inputs: tuple
    hard_labels: np.ndarray
    k: int
    soft_labels: tuple | None = None

    def __post_init__(self) -> None:
        inputs = tuple(self.inputs)
        labels = np.asarray(self.hard_labels, dtype=int)
        if labels.ndim != 1 or labels.size != len(inputs):
            raise ValueError("hard_labels must align with inputs")
        if self.k < 2:
            raise ValueError("need at least 2 classes")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise ValueError("class indices must lie in [0, K)")
        if inputs:
            head = type(inputs[0])
            if head not in (FeatureVector, ImageGrid):
                raise TypeError("inputs must be FeatureVector or ImageGrid")
            if any(type(x) is not head for x in inputs):
                raise TypeError("inputs must be homogeneous")
        soft = self.soft_labels
        if soft is not None:
            soft = tuple(soft)
            if len(soft) != len(inputs):
                raise ValueError("soft_labels must align with inputs")
            if any(dist.k != self.k for dist in soft):
                raise ValueError("soft label arity must equal K")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "hard_labels", _readonly(labels))
        object.__setattr__(self, "soft_labels", soft)

    def __len__(self) -> int:
        return len(self.inputs)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.hard_labels, minlength=self.k)

    def subset(self, indices) -> "Dataset":
        indices = list(indices)
        soft = None
        if self.soft_labels is not None:
            soft = tuple(self.soft_labels[i] for i in indices)
        return Dataset(
            tuple(self.inputs[i] for i in indices),
            self.hard_labels[indices],
            self.k,
            soft,
        )

    def with_soft_labels(self, soft_labels) -> "Dataset":
        return Dataset(self.inputs, self.hard_labels, self.k, tuple(soft_labels))

    def feature_matrix(self) -> np.ndarray:
        """(n, d) matrix of feature values; inputs must be FeatureVector."""
        if self.inputs and not isinstance(self.inputs[0], FeatureVector):
            raise TypeError("dataset does not hold feature vectors")
        return np.array([fv.values for fv in self.inputs], dtype=float)

    def soft_label_matrix(self) -> np.ndarray:
        if self.soft_labels is None:
            raise ValueError("dataset has no soft labels")
        return np.array([d.probs for d in self.soft_labels], dtype=float)


def one_hot(class_index: int, k: int) -> ClassDistribution:
    """Distribution with all mass on ``class_index``."""
    if not 0 <= class_index < k:
        raise ValueError(f"class index {class_index} out of range for K={k}")
    probs = np.zeros(k)
    probs[class_index] = 1.0
    return ClassDistribution(probs)


def split_indices(
    labels: np.ndarray,
    k: int,
    train_fraction: float,
    seed: Seed,
    stratified: bool = False,
) -> tuple[list[int], list[int]]:
    """Index partition backing :func:`split_dataset`; sorted ascending."""
    labels = np.asarray(labels, dtype=int)
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    if labels.size == 0:
        raise ValueError("cannot split an empty dataset")
    prng = Prng(derive_seed(seed.value, "split"))
    if stratified:
        counts = np.bincount(labels, minlength=k)
        if np.any(counts == 0):
            missing = int(np.argmin(counts))
            raise DegenerateSplitError(f"class {missing} has no instances")
        train_idx: list[int] = []
        hold_idx: list[int] = []
        for cls in range(k):
            members = [int(i) for i in np.flatnonzero(labels == cls)]
            prng.shuffle(members)
            take = math.floor(train_fraction * len(members))
            train_idx.extend(members[:take])
            hold_idx.extend(members[take:])
    else:
        order = prng.permutation(labels.size)
        take = math.floor(train_fraction * labels.size)
        train_idx, hold_idx = order[:take], order[take:]
    return sorted(train_idx), sorted(hold_idx)


def split_dataset(
    data: Dataset,
    train_fraction: float,
    seed: Seed,
    stratified: bool = False,
) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive train/holdout partition.

    The train part receives floor(train_fraction * n) instances (per class
    when stratified, so per-class proportions in both parts match the source
    within one instance). Deterministic given the seed.
    """
    train_idx, hold_idx = split_indices(
        data.hard_labels, data.k, train_fraction, seed, stratified
    )
    return data.subset(train_idx), data.subset(hold_idx)


# ---------------------------------------------------------------------------
# Interchange formats: CSV datasets and binary PGM images
# ---------------------------------------------------------------------------


def write_pgm(image: ImageGrid, path: str | Path) -> None:
    """Write an 8-bit binary (P5) grayscale image."""
    payload = np.round(image.intensities * 255.0).astype(np.uint8).tobytes()
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + payload)


def read_pgm(path: str | Path) -> ImageGrid:
    """Read an 8-bit binary (P5) grayscale image."""
    raw = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        # skip whitespace and '#' comment lines in the header
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    pos += 1  # single whitespace byte after maxval
    pixels = np.frombuffer(raw[pos : pos + width * height], dtype=np.uint8)
    if pixels.size != width * height:
        raise ValueError(f"{path}: truncated pixel payload")
    return ImageGrid(height, width, pixels.astype(float) / 255.0)


def save_dataset_csv(
    data: Dataset, path: str | Path, image_dir: str | Path | None = None
) -> None:
    """Write a dataset as CSV (one row per instance).

    Feature datasets get columns ``z0..z{d-1}``; image datasets get an
    ``img_path`` column referencing PGM files written under ``image_dir``
    (default: sibling directory ``<stem>_images``). Soft labels, when
    present, add ``p0..p{K-1}`` columns.
    """
    path = Path(path)
    image_based = bool(data.inputs) and isinstance(data.inputs[0], ImageGrid)
    if image_based:
        image_dir = Path(image_dir) if image_dir else path.parent / f"{path.stem}_images"
        image_dir.mkdir(parents=True, exist_ok=True)
        header = ["img_path"]
    else:
        d = data.inputs[0].dim if data.inputs else 0
        header = [f"z{j}" for j in range(d)]
    header.append("hard_label")
    if data.soft_labels is not None:
        header.extend(f"p{j}" for j in range(data.k))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, item in enumerate(data.inputs):
            if image_based:
                name = f"img_{i:06d}.pgm"
                write_pgm(item, image_dir / name)
                row = [str((image_dir / name).relative_to(path.parent))]
            else:
                row = [repr(float(v)) for v in item.values]
            row.append(str(int(data.hard_labels[i])))
            if data.soft_labels is not None:
                row.extend(repr(float(p)) for p in data.soft_labels[i].probs)
            writer.writerow(row)


def load_dataset_csv(path: str | Path, k: int | None = None) -> Dataset:
    """Read a dataset written by :func:`save_dataset_csv`.

    ``k`` defaults to the soft-label column count when present, else to
    ``max(hard_label) + 1``.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    feature_cols = [h for h in header if h.startswith("z")]
    soft_cols = [h for h in header if h.startswith("p")]
    col = {name: idx for idx, name in enumerate(header)}
    if "hard_label" not in col:
        raise ValueError(f"{path}: missing hard_label column")
    inputs: list = []
    labels: list[int] = []
    soft: list[ClassDistribution] = []
    for row in rows:
        if "img_path" in col:
            inputs.append(read_pgm(path.parent / row[col["img_path"]]))
        else:
            inputs.append(
                FeatureVector(np.array([float(row[col[c]]) for c in feature_cols]))
            )
        labels.append(int(row[col["hard_label"]]))
        if soft_cols:
            soft.append(
                ClassDistribution(np.array([float(row[col[c]]) for c in soft_cols]))
            )
    if k is None:
        k = len(soft_cols) if soft_cols else max(labels) + 1
    return Dataset(tuple(inputs), np.array(labels), k, tuple(soft) if soft else None)
