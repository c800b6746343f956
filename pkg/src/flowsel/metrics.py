"""Confusion matrix and accuracy / precision / recall / F1 reports.

Rows of the matrix are actual classes, columns are predicted classes.
Per-class precision or recall with a zero denominator is defined as 0 and
the class is noted in the report instead of raising, since a class that is
never predicted does occur in degenerate runs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (K, K) int64, rows = actual, cols = predicted
    class_names: list[str]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.class_names)
        if self.counts.shape != (k, k):
            raise ValueError("counts must be K x K matching class_names")
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass
class Report:
    accuracy: float
    per_class: list[ClassScores]
    macro: ClassScores
    weighted: ClassScores
    zero_division_classes: list[int]

    def to_dict(self) -> dict:
        return asdict(self)


def confusion(y_true, y_pred, class_names: list[str]) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred lengths differ")
    k = len(class_names)
    if y_true.size and (
        y_true.min() < 0 or y_true.max() >= k or y_pred.min() < 0 or y_pred.max() >= k
    ):
        raise ValueError("label out of range")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts=counts, class_names=list(class_names))


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


def prf1(cm: ConfusionMatrix) -> Report:
    """Per-class precision/recall/F1 plus macro and support-weighted means."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)

    zero_div = sorted(set(np.flatnonzero(col == 0)) | set(np.flatnonzero(row == 0)))
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / np.where(col > 0, col, 1), 0.0)
        recall = np.where(row > 0, diag / np.where(row > 0, row, 1), 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1), 0.0)

    per_class = [
        ClassScores(float(p), float(r), float(f)) for p, r, f in zip(precision, recall, f1)
    ]
    macro = ClassScores(float(precision.mean()), float(recall.mean()), float(f1.mean()))
    support = row / row.sum()
    weighted = ClassScores(
        float((precision * support).sum()),
        float((recall * support).sum()),
        float((f1 * support).sum()),
    )
    return Report(
        accuracy=accuracy(cm),
        per_class=per_class,
        macro=macro,
        weighted=weighted,
        zero_division_classes=[int(i) for i in zero_div],
    )


def submatrix(cm: ConfusionMatrix, classes: list[int]) -> ConfusionMatrix:
    """Restrict rows and columns to the given classes, in the given order."""
    k = len(cm.class_names)
    if len(set(classes)) != len(classes):
        raise ValueError("duplicate class in subset")
    if any(c < 0 or c >= k for c in classes):
        raise ValueError("class index out of range")
    idx = np.asarray(classes, dtype=np.int64)
    return ConfusionMatrix(
        counts=cm.counts[np.ix_(idx, idx)],
        class_names=[cm.class_names[c] for c in classes],
    )


def class_recall(cm: ConfusionMatrix, class_index: int) -> float:
    row = cm.counts[class_index].sum()
    if row == 0:
        raise ValueError(f"class {class_index} has no actual samples")
    return float(cm.counts[class_index, class_index]) / float(row)


def confusion_to_csv(cm: ConfusionMatrix, path: str | Path):
    """Matrix grid with a header row and a leading column of class names."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["actual\\predicted"] + list(cm.class_names))
        for name, row in zip(cm.class_names, cm.counts):
            writer.writerow([name] + [int(v) for v in row])


def confusion_to_json(cm: ConfusionMatrix) -> dict:
    return {"class_names": list(cm.class_names), "counts": cm.counts.tolist()}


def report_to_json(report: Report, path: str | Path):
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
