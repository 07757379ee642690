"""Performance and calibration metrics for binary scores.

Scores are class-1 probabilities; labels are 0/1. Ties at the decision
threshold classify positive. AUC uses the rank (Mann-Whitney) formulation
with half credit for ties, so it is exact and invariant under strictly
increasing score transforms.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import UndefinedMetricError

HL_CLAMP = 1e-6


@dataclass(frozen=True)
class ReliabilityRow:
    bin_lo: float
    bin_hi: float
    mean_confidence: float
    empirical_accuracy: float
    count: int


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """Performance plus calibration summary for one scored model."""

    accuracy: float
    auc: float
    ece: float
    hl_statistic: float
    n: int
    reliability_rows: tuple

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "auc": None if np.isnan(self.auc) else self.auc,
            "ece": self.ece,
            "hl": self.hl_statistic,
            "n": self.n,
            "reliability": [
                [r.bin_lo, r.bin_hi, r.mean_confidence, r.empirical_accuracy, r.count]
                for r in self.reliability_rows
            ],
        }


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.size == 0:
        raise ValueError("empty input")
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must align")
    return scores, labels


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Fraction of instances where (score >= threshold) matches the label."""
    scores, labels = _check(scores, labels)
    return float(np.mean((scores >= threshold).astype(int) == labels))


def roc_auc(scores, labels) -> float:
    """P(random positive outscores random negative), ties count half."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def expected_calibration_error(scores, labels, bins: int = 10) -> float:
    """Bin-weighted |accuracy - confidence| over equal-width confidence bins.

    Confidence is max(score, 1 - score); the predicted class is the 0.5
    threshold decision; bins partition the confidence range [0.5, 1].
    """
    scores, labels = _check(scores, labels)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    predicted = (scores >= 0.5).astype(int)
    confidence = np.where(predicted == 1, scores, 1.0 - scores)
    correct = (predicted == labels).astype(float)
    width = 0.5 / bins
    index = np.minimum(((confidence - 0.5) / width).astype(int), bins - 1)
    total = 0.0
    n = scores.size
    for b in range(bins):
        mask = index == b
        count = int(mask.sum())
        if count == 0:
            continue
        gap = abs(float(correct[mask].mean()) - float(confidence[mask].mean()))
        total += count / n * gap
    return total


def hosmer_lemeshow(scores, labels, groups: int = 10) -> float:
    """Goodness-of-fit statistic over score-sorted, near-equal groups.

    sum_g (O_g - E_g)^2 / (n_g * p_g * (1 - p_g)) with O_g the observed
    positives, p_g the mean score in the group, E_g = n_g * p_g. Group means
    are clamped away from {0, 1} in the denominator. Sorting breaks score
    ties by label so the statistic is invariant to input permutation.
    """
    scores, labels = _check(scores, labels)
    if scores.size < groups:
        raise ValueError("need at least as many instances as groups")
    order = np.lexsort((labels, scores))
    scores, labels = scores[order], labels[order]
    n = scores.size
    base, extra = divmod(n, groups)
    statistic = 0.0
    start = 0
    for g in range(groups):
        size = base + (1 if g < extra else 0)
        sl = slice(start, start + size)
        start += size
        p_bar = float(scores[sl].mean())
        observed = float(labels[sl].sum())
        expected = size * p_bar
        p_safe = min(max(p_bar, HL_CLAMP), 1.0 - HL_CLAMP)
        statistic += (observed - expected) ** 2 / (size * p_safe * (1.0 - p_safe))
    return statistic


def reliability_table(scores, labels, bins: int = 10) -> tuple:
    """Per-bin mean score vs empirical positive rate over raw scores in [0, 1].

    Every bin appears; empty bins carry NaN means and zero counts.
    """
    scores, labels = _check(scores, labels)
    edges = np.linspace(0.0, 1.0, bins + 1)
    index = np.minimum((scores * bins).astype(int), bins - 1)
    rows = []
    for b in range(bins):
        mask = index == b
        count = int(mask.sum())
        rows.append(
            ReliabilityRow(
                float(edges[b]),
                float(edges[b + 1]),
                float(scores[mask].mean()) if count else float("nan"),
                float(labels[mask].mean()) if count else float("nan"),
                count,
            )
        )
    return tuple(rows)


@dataclass(frozen=True, eq=False)
class BoundaryGrid:
    xs: np.ndarray
    ys: np.ndarray
    scores: np.ndarray  # (len(ys), len(xs))


def decision_boundary_grid(model_eval, x_range, y_range, resolution: int) -> BoundaryGrid:
    """Scores of a 2-D scorer on a regular lattice (rows indexed by y)."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    xs = np.linspace(float(x_range[0]), float(x_range[1]), resolution)
    ys = np.linspace(float(y_range[0]), float(y_range[1]), resolution)
    grid = np.empty((resolution, resolution))
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            grid[i, j] = float(model_eval(x, y))
    return BoundaryGrid(xs, ys, grid)


def compute_report(scores, labels, bins: int = 10, groups: int = 10) -> MetricsReport:
    """Full metrics report; AUC is NaN when only one class is present."""
    scores, labels = _check(scores, labels)
    try:
        auc = roc_auc(scores, labels)
    except UndefinedMetricError:
        auc = float("nan")
    return MetricsReport(
        accuracy=accuracy(scores, labels),
        auc=auc,
        ece=expected_calibration_error(scores, labels, bins),
        hl_statistic=hosmer_lemeshow(scores, labels, groups) if scores.size >= groups else float("nan"),
        n=scores.size,
        reliability_rows=reliability_table(scores, labels, bins),
    )


def save_metrics_csv(report: MetricsReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["accuracy", "auc", "ece", "hl", "n"])
        writer.writerow(
            [
                repr(report.accuracy),
                repr(report.auc),
                repr(report.ece),
                repr(report.hl_statistic),
                str(report.n),
            ]
        )


def save_metrics_json(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=1) + "\n")


def save_reliability_csv(rows, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_lo", "bin_hi", "mean_score", "positive_rate", "count"])
        for r in rows:
            writer.writerow(
                [
                    repr(r.bin_lo),
                    repr(r.bin_hi),
                    repr(r.mean_confidence),
                    repr(r.empirical_accuracy),
                    str(r.count),
                ]
            )


def save_boundary_csv(grid: BoundaryGrid, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "score"])
        for i, y in enumerate(grid.ys):
            for j, x in enumerate(grid.xs):
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(grid.scores[i, j]))])
