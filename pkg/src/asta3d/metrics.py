"""Accuracy and intersection-over-union."""

from __future__ import annotations

import numpy as np


def iou_from_counts(tp, fp, fn):
    """Per-class TP / (TP + FP + FN); NaN where the union is empty."""
    tp, fp, fn = (np.asarray(v, dtype=np.float64) for v in (tp, fp, fn))
    union = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, tp / union, np.nan)


def mean_iou(iou):
    iou = np.asarray(iou, dtype=np.float64)
    present = ~np.isnan(iou)
    return float(iou[present].mean()) if present.any() else float("nan")


def iou_per_class(predictions, labels, class_count):
    """IoU = TP / (TP + FP + FN) per class; NaN where a class is absent from both."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    conf = np.bincount(labels * class_count + predictions,
                       minlength=class_count * class_count).reshape(class_count, class_count)
    tp = np.diag(conf)
    return iou_from_counts(tp, conf.sum(axis=0) - tp, conf.sum(axis=1) - tp)


def evaluate_metrics(predictions, labels, task, class_count=None):
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError(f"predictions {predictions.shape} and labels {labels.shape} differ")
    if task == "classification":
        return {"accuracy": float(np.mean(predictions == labels)), "count": int(labels.size)}
    if class_count is None:
        class_count = int(max(predictions.max(initial=0), labels.max(initial=0))) + 1
    iou = iou_per_class(predictions, labels, class_count)
    return {
        "iou": [None if np.isnan(v) else float(v) for v in iou],
        "miou": mean_iou(iou),
        "accuracy": float(np.mean(predictions == labels)),
        "count": int(labels.size),
    }
