"""Evaluation metrics for the binary tumor classification task.

The tumor class is index 1 throughout.
"""

from __future__ import annotations

import numpy as np

from .errors import InputShapeError, InputValueError, MetricUndefinedError


def weighted_ce(logits: np.ndarray, labels: np.ndarray, class_weights: np.ndarray) -> float:
    """Class-weighted cross-entropy, averaged over the batch.

    Weights are normalized to mean 1 before use, so scaling all weights by a
    common factor does not change the loss. Each sample contributes
    ``-w[y] * log softmax(logits)[y]`` and the result is the plain mean over
    samples.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    w = np.asarray(class_weights, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise InputValueError("logits contain non-finite values")
    if np.any(w <= 0):
        raise InputValueError("class weights must be positive")
    w = w / w.mean()

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    picked = log_probs[np.arange(labels.size), labels]
    return float(np.mean(-w[labels] * picked))


def pr_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the precision-recall curve (average precision).

    Computed as the step-wise integral of precision over recall at each
    distinct score threshold, descending; tied scores form a single step.
    Requires at least one positive and one negative label.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise InputShapeError(
            f"scores shape {scores.shape} != labels shape {labels.shape}")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("PR-AUC needs both a positive and a negative label")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # Last index of each tie group of equal scores.
    boundary = np.nonzero(np.diff(s))[0]
    last = np.append(boundary, s.size - 1)

    tp = np.cumsum(y)[last].astype(np.float64)
    fp = np.cumsum(1 - y)[last].astype(np.float64)
    precision = tp / (tp + fp)
    recall = tp / n_pos

    area = 0.0
    prev_recall = 0.0
    for p, r in zip(precision, recall):
        area += (r - prev_recall) * p
        prev_recall = r
    return float(area)


def f1_tumor(predictions: np.ndarray, labels: np.ndarray) -> float:
    """F1 score of the tumor class; 0 by convention when P + R = 0."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0:
        return 0.0
    return float(2.0 * precision * recall / (precision + recall))
