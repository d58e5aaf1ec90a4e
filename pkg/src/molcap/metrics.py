"""Rank-based AUC-ROC, ROC curves, and cross-validation aggregation.

AUC is computed with the Mann-Whitney rank formulation, averaging the
ranks of tied scores, so it equals the probability that a uniformly
random positive outscores a uniformly random negative (ties counting
half).  The ROC curve sweeps unique score thresholds in descending
order; its trapezoidal area reproduces the rank AUC to within 1e-12.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import EmptyError, LengthMismatchError, SingleClassError

__all__ = [
    "RocCurve",
    "FoldMetrics",
    "auc_roc",
    "roc_points",
    "aggregate_folds",
    "write_roc_csv",
]


@dataclass(frozen=True)
class RocCurve:
    """ROC curve points plus the area under them.

    Attributes:
        points: (false-positive rate, true-positive rate, threshold)
            triples, starting at (0, 0) under an infinite threshold and
            ending at (1, 1); a prediction is positive when its score is
            greater than or equal to the threshold.
        auc: Trapezoidal area under the curve.
    """

    points: tuple[tuple[float, float, float], ...]
    auc: float


@dataclass(frozen=True)
class FoldMetrics:
    """Per-fold AUC values with their mean and range."""

    per_fold_auc: tuple[float, ...]
    mean: float
    min: float
    max: float


def _validate(scores: Sequence[float], labels: Sequence[int]) -> tuple[int, int]:
    if len(scores) != len(labels):
        raise LengthMismatchError(
            f"{len(scores)} scores but {len(labels)} labels"
        )
    n_pos = sum(1 for label in labels if label)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError(
            f"need both classes, got {n_pos} positives and {n_neg} negatives"
        )
    return n_pos, n_neg


def auc_roc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve by the Mann-Whitney rank formula.

    Args:
        scores: Real-valued classifier outputs, higher meaning more
            positive.
        labels: Binary ground truth, nonzero meaning positive.

    Returns:
        AUC in [0, 1]; 0.5 when every score is identical.

    Raises:
        LengthMismatchError: The sequences differ in length.
        SingleClassError: Only one class is present.
    """
    n_pos, n_neg = _validate(scores, labels)
    n = len(scores)
    order = sorted(range(n), key=lambda i: scores[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i + 1  # singleton group even for non-comparable values (NaN)
        while j < n and scores[order[j]] == scores[order[i]]:
            j += 1
        average = (i + 1 + j) / 2.0  # mean of 1-based ranks i+1 .. j
        for k in range(i, j):
            ranks[order[k]] = average
        i = j
    rank_sum = math.fsum(ranks[i] for i in range(n) if labels[i])
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """ROC curve over unique thresholds in descending order.

    Args:
        scores: Real-valued classifier outputs.
        labels: Binary ground truth.

    Returns:
        RocCurve whose trapezoidal area equals :func:`auc_roc` to 1e-12.

    Raises:
        LengthMismatchError: The sequences differ in length.
        SingleClassError: Only one class is present.
    """
    n_pos, n_neg = _validate(scores, labels)
    pos_at: dict[float, int] = {}
    neg_at: dict[float, int] = {}
    for score, label in zip(scores, labels):
        if label:
            pos_at[score] = pos_at.get(score, 0) + 1
        else:
            neg_at[score] = neg_at.get(score, 0) + 1

    points: list[tuple[float, float, float]] = [(0.0, 0.0, math.inf)]
    tp = fp = 0
    for threshold in sorted(set(pos_at) | set(neg_at), reverse=True):
        tp += pos_at.get(threshold, 0)
        fp += neg_at.get(threshold, 0)
        points.append((fp / n_neg, tp / n_pos, threshold))

    area = math.fsum(
        (x1 - x0) * (y0 + y1) / 2.0
        for (x0, y0, _), (x1, y1, _) in zip(points, points[1:])
    )
    return RocCurve(points=tuple(points), auc=area)


def aggregate_folds(per_fold: Sequence[float]) -> FoldMetrics:
    """Summarize per-fold AUC values.

    Args:
        per_fold: One AUC per cross-validation fold, any order.

    Returns:
        FoldMetrics echoing the values with their mean, min, and max.

    Raises:
        EmptyError: No folds given.
    """
    if len(per_fold) == 0:
        raise EmptyError("no fold values to aggregate")
    values = tuple(float(v) for v in per_fold)
    return FoldMetrics(
        per_fold_auc=values,
        mean=math.fsum(values) / len(values),
        min=min(values),
        max=max(values),
    )


def write_roc_csv(curve: RocCurve, path: str | Path) -> None:
    """Write a curve as CSV with columns fpr, tpr, threshold."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, threshold in curve.points:
            writer.writerow([fpr, tpr, threshold])
