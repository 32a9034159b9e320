"""Evaluation: scores, ROC curves, AUC, confusion matrices.

ROC curves come from a descending-score threshold sweep with tied scores
grouped into one step, starting at (0, 0) and ending at (1, 1). AUC is the
trapezoid area under that curve, which equals the probability that a random
positive outscores a random negative (ties counting one half). Multi-class
evaluation is one-vs-rest per class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .capsnet import CapsNetModel, forward

__all__ = [
    "EvalReport",
    "bce_value",
    "score_samples",
    "roc_curve",
    "auc",
    "confusion",
    "evaluate",
]


@dataclass
class EvalReport:
    accuracy: float
    loss: float
    auc: list[float]                       # per class, one-vs-rest
    roc: list[list[tuple[float, float]]]   # per class: [(fpr, tpr), ...]
    confusion: np.ndarray                  # [K, K] ints, rows true, cols predicted
    class_names: list[str]                 # index -> display name


def bce_value(probs: np.ndarray, label: int) -> float:
    """Mean binary cross-entropy of one probability vector vs a one-hot label."""
    k = probs.shape[0]
    target = np.zeros(k)
    target[label] = 1.0
    return float(-(target * np.log(probs) + (1.0 - target) * np.log(1.0 - probs)).sum() / k)


def score_samples(model: CapsNetModel, samples) -> tuple[np.ndarray, np.ndarray]:
    """Forward every sample (no tape) -> (probs [n, K], labels [n])."""
    if not samples:
        raise ValueError("score_samples: empty sample list")
    probs = np.stack([forward(model, s.pixels).data for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.intp)
    return probs, labels


def roc_curve(scores, labels) -> list[tuple[float, float]]:
    """Binary ROC points from scores and 0/1 labels.

    Thresholds sweep the distinct scores in descending order; all samples
    sharing a score enter together (one point per distinct score). Requires
    both classes to be present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"roc_curve: scores {scores.shape} and labels {labels.shape} must be "
                         "equal-length vectors")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("roc_curve: labels must be 0 or 1")
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise ValueError(f"roc_curve: need both classes, got {pos} positive / {neg} negative")

    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = scores.size
    while i < n:
        j = i
        score = scores[order[i]]
        while j < n and scores[order[j]] == score:
            if labels[order[j]] == 1:
                tp += 1
            else:
                fp += 1
            j += 1
        points.append((fp / neg, tp / pos))
        i = j
    return points


def auc(points: list[tuple[float, float]]) -> float:
    """Trapezoid area under an ROC point list (needs at least two points)."""
    if len(points) < 2:
        raise ValueError(f"auc: need at least 2 points, got {len(points)}")
    total = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        total += (x1 - x0) * (y0 + y1) / 2.0
    return total


def confusion(predictions, labels, num_classes: int) -> np.ndarray:
    """Count matrix: rows index the true class, columns the predicted class."""
    predictions = np.asarray(predictions, dtype=np.intp)
    labels = np.asarray(labels, dtype=np.intp)
    if predictions.shape != labels.shape:
        raise ValueError("confusion: prediction and label vectors differ in length")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes
                        or predictions.min() < 0 or predictions.max() >= num_classes):
        raise ValueError(f"confusion: labels out of range for {num_classes} classes")
    out = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(out, (labels, predictions), 1)
    return out


def evaluate(model: CapsNetModel, samples) -> EvalReport:
    """Full evaluation of a sample list: accuracy, mean BCE, per-class ROC/AUC,
    and the confusion matrix. Ties in argmax go to the lowest class index."""
    probs, labels = score_samples(model, samples)
    k = model.config.num_classes
    predicted = probs.argmax(axis=1)
    acc = float((predicted == labels).mean())
    loss = float(np.mean([bce_value(p, int(lab)) for p, lab in zip(probs, labels)]))
    names_by_label = {s.label: s.class_name for s in samples}
    rocs: list[list[tuple[float, float]]] = []
    aucs: list[float] = []
    for cls in range(k):
        pts = roc_curve(probs[:, cls], (labels == cls).astype(np.intp))
        rocs.append(pts)
        aucs.append(auc(pts))
    return EvalReport(
        accuracy=acc,
        loss=loss,
        auc=aucs,
        roc=rocs,
        confusion=confusion(predicted, labels, k),
        class_names=[names_by_label.get(cls, str(cls)) for cls in range(k)],
    )
