"""Binary classification metrics from confusion counts."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import MetricError


@dataclass(frozen=True)
class ClassificationMetrics:
    """Accuracy/precision/recall/F1 plus flags for zero-denominator fields."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: tuple[str, ...] = ()


def classification_metrics(tp: int, fp: int, tn: int, fn: int) -> ClassificationMetrics:
    """Standard definitions; degenerate denominators yield 0 and are flagged."""
    counts = {"tp": tp, "fp": fp, "tn": tn, "fn": fn}
    for name, value in counts.items():
        if value < 0:
            raise MetricError(f"count {name} must be non-negative, got {value}")
    total = tp + fp + tn + fn
    if total == 0:
        raise MetricError("all confusion counts are zero")

    degenerate: list[str] = []
    accuracy = (tp + tn) / total
    if tp + fp == 0:
        precision = 0.0
        degenerate.append("precision")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        degenerate.append("recall")
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0.0:
        f1 = 0.0
        degenerate.append("f1")
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return ClassificationMetrics(accuracy, precision, recall, f1, tuple(degenerate))
