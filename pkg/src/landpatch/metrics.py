"""Binary-classification metrics: confusion matrix, accuracy, precision,
recall, F1, and Matthews correlation.

Zero-denominator metrics report value 0.0 with an explicit flag in
``undefined`` instead of NaN, so exports stay machine-readable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DataError

# counts stay exact in float64 up to here
MAX_COUNT = 2**53


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name, v in (("tp", self.tp), ("fp", self.fp), ("fn", self.fn), ("tn", self.tn)):
            if v < 0:
                raise DataError(f"{name} must be non-negative, got {v}")
            if v > MAX_COUNT:
                raise DataError(f"{name}={v} exceeds the exact-count cap 2**53")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    mcc: float
    undefined: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "mcc": self.mcc,
            "undefined": list(self.undefined),
        }


def confusion(pairs, positive_label: str, labels: tuple[str, str]) -> ConfusionMatrix:
    """Count (predicted, actual) pairs against the binary label set."""
    if not pairs:
        raise DataError("cannot build a confusion matrix from zero pairs")
    tp = fp = fn = tn = 0
    for predicted, actual in pairs:
        if predicted not in labels or actual not in labels:
            raise DataError(f"unknown label in pair ({predicted!r}, {actual!r}); expected {labels}")
        if predicted == positive_label:
            if actual == positive_label:
                tp += 1
            else:
                fp += 1
        else:
            if actual == positive_label:
                fn += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


def report(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise DataError("confusion matrix is empty")
    undefined = []
    tp, fp, fn, tn = float(cm.tp), float(cm.fp), float(cm.fn), float(cm.tn)

    accuracy = (tp + tn) / cm.total

    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        undefined.append("precision")

    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        undefined.append("recall")

    if precision + recall > 0 and "precision" not in undefined and "recall" not in undefined:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        undefined.append("f1")

    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom > 0:
        mcc = (tp * tn - fp * fn) / math.sqrt(denom)
    else:
        mcc = 0.0
        undefined.append("mcc")

    return MetricsReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        mcc=mcc,
        undefined=tuple(undefined),
    )
