"""Classification metrics: accuracy and Matthews correlation."""

from __future__ import annotations

import math
from typing import Sequence

METRICS = ("accuracy", "matthews-correlation")


def accuracy(predictions: Sequence[str], truths: Sequence[str]) -> float:
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths must align")
    if not truths:
        raise ValueError("empty evaluation set")
    correct = sum(p == t for p, t in zip(predictions, truths))
    return correct / len(truths)


def matthews_correlation(predictions: Sequence[str], truths: Sequence[str]) -> float:
    """Multiclass Matthews correlation from the confusion counts.

    Reduces to the familiar binary formula for two classes; a zero
    denominator (e.g. constant predictions) yields 0.0 by convention.
    """
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths must align")
    if not truths:
        raise ValueError("empty evaluation set")
    classes = sorted(set(predictions) | set(truths))
    total = len(truths)
    correct = sum(p == t for p, t in zip(predictions, truths))
    true_counts = {c: 0 for c in classes}
    pred_counts = {c: 0 for c in classes}
    for p, t in zip(predictions, truths):
        pred_counts[p] += 1
        true_counts[t] += 1
    numerator = correct * total - sum(
        pred_counts[c] * true_counts[c] for c in classes
    )
    denominator = math.sqrt(total**2 - sum(v**2 for v in pred_counts.values())) * math.sqrt(
        total**2 - sum(v**2 for v in true_counts.values())
    )
    if denominator == 0.0:
        return 0.0
    return numerator / denominator


def compute_metric(name: str, predictions: Sequence[str], truths: Sequence[str]) -> float:
    if name == "accuracy":
        return accuracy(predictions, truths)
    if name == "matthews-correlation":
        return matthews_correlation(predictions, truths)
    raise ValueError(f"unknown metric {name!r}; use one of {METRICS}")
