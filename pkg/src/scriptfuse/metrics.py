"""Confusion matrix and macro-averaged classification metrics.

``counts[i][j]`` is the number of instances with true label ``i`` predicted
as ``j``.  Per-class recall divides the diagonal by the row sum (true-label
total) and per-class precision by the column sum (predicted total); a class
with zero row or column sum gets 0 for the affected metric and is flagged.
Macro averages divide by the class count.  The f-score is the per-class
harmonic mean of precision and recall, averaged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (K, K) non-negative ints

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = self.counts.shape[0]
        if self.counts.ndim != 2 or self.counts.shape != (k, k):
            raise ValueError(f"confusion matrix must be square, got shape "
                             f"{tuple(self.counts.shape)}")
        if (self.counts < 0).any():
            raise ValueError("confusion matrix counts must be non-negative")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f_score: float
    per_class_precision: list[float]
    per_class_recall: list[float]
    per_class_f_score: list[float]
    zero_row_classes: list[int] = field(default_factory=list)
    zero_col_classes: list[int] = field(default_factory=list)


def evaluate(predictions, true_labels, num_classes: int = 11):
    """Tally predictions against labels and derive the metrics report."""
    predictions = np.asarray(predictions, dtype=np.int64)
    true_labels = np.asarray(true_labels, dtype=np.int64)
    if predictions.ndim != 1 or predictions.shape != true_labels.shape:
        raise ValueError(
            f"predictions ({predictions.shape}) and labels ({true_labels.shape}) "
            f"must be equal-length vectors")
    if predictions.size == 0:
        raise ValueError("cannot evaluate an empty prediction list")
    for name, arr in (("predictions", predictions), ("labels", true_labels)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ValueError(f"{name} out of range for {num_classes} classes")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (true_labels, predictions), 1)
    matrix = ConfusionMatrix(counts)
    return matrix, metrics_from_matrix(matrix)


def metrics_from_matrix(matrix: ConfusionMatrix) -> MetricsReport:
    counts = matrix.counts
    k = matrix.num_classes
    diag = counts.diagonal()
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    total = int(counts.sum())
    if total == 0:
        raise ValueError("cannot compute metrics of an empty confusion matrix")
    accuracy = int(diag.sum()) / total

    precision = []
    recall = []
    f_score = []
    zero_rows = []
    zero_cols = []
    for i in range(k):
        if row[i] == 0:
            zero_rows.append(i)
        if col[i] == 0:
            zero_cols.append(i)
        r = int(diag[i]) / int(row[i]) if row[i] else 0.0
        p = int(diag[i]) / int(col[i]) if col[i] else 0.0
        f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        precision.append(p)
        recall.append(r)
        f_score.append(f)
    return MetricsReport(
        accuracy=accuracy,
        macro_precision=sum(precision) / k,
        macro_recall=sum(recall) / k,
        macro_f_score=sum(f_score) / k,
        per_class_precision=precision,
        per_class_recall=recall,
        per_class_f_score=f_score,
        zero_row_classes=zero_rows,
        zero_col_classes=zero_cols,
    )
