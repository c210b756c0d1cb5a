"""Evaluation metrics for the three-way cohort classification.

Conventions: C1 is the negative (healthy) class, so the false positive rate
counts C1 rows predicted as C2 or C3.  FNR(k) is the fraction of cohort-k
rows predicted as anything else.  The F1 score is the unweighted mean of
the three one-vs-rest F1 scores; a class with no actual and no predicted
positives scores 1, and a class with actual positives but none predicted
scores 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datapipe import FeatureDataset
from .features import COHORTS
from .network import MaskedNetwork, predict


@dataclass
class EvalReport:
    accuracy: float
    fpr: float
    fnr2: float
    fnr3: float
    macro_f1: float
    confusion: np.ndarray
    params: int = 0
    flops: int = 0

    def as_row(self) -> dict:
        return {
            "accuracy": self.accuracy, "fpr": self.fpr, "fnr2": self.fnr2,
            "fnr3": self.fnr3, "macro_f1": self.macro_f1,
            "params": self.params, "flops": self.flops,
        }


def confusion(y_true, y_pred, n_classes: int = len(COHORTS)) -> np.ndarray:
    """Count matrix with rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("predictions and labels must be 1-D and equal length")
    if y_true.size and (y_true.min() < 0 or y_true.max() >= n_classes
                        or y_pred.min() < 0 or y_pred.max() >= n_classes):
        raise ValueError(f"labels must be in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _f1_one_vs_rest(cm: np.ndarray, k: int) -> float:
    tp = cm[k, k]
    fp = cm[:, k].sum() - tp
    fn = cm[k, :].sum() - tp
    if tp == 0:
        return 1.0 if fp == 0 and fn == 0 else 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def metrics(cm: np.ndarray) -> EvalReport:
    """Rates derived from a 3x3 confusion matrix (params/flops left at 0)."""
    cm = np.asarray(cm, dtype=np.int64)
    if cm.shape != (3, 3) or (cm < 0).any():
        raise ValueError("expected a non-negative 3x3 confusion matrix")
    row_sums = cm.sum(axis=1)
    for k, total in enumerate(row_sums):
        if total == 0:
            raise ValueError(f"cohort {COHORTS[k]} has no instances")
    total = int(cm.sum())
    acc = float(np.trace(cm)) / total
    fpr = float(cm[0, 1] + cm[0, 2]) / row_sums[0]
    fnr2 = float(row_sums[1] - cm[1, 1]) / row_sums[1]
    fnr3 = float(row_sums[2] - cm[2, 2]) / row_sums[2]
    macro_f1 = float(np.mean([_f1_one_vs_rest(cm, k) for k in range(3)]))
    return EvalReport(acc, fpr, fnr2, fnr3, macro_f1, confusion=cm)


def evaluate(net: MaskedNetwork, dataset: FeatureDataset) -> EvalReport:
    """Argmax predictions over a partition, with the model's size counters attached."""
    if dataset.n_rows == 0:
        raise ValueError("cannot evaluate on an empty partition")
    preds = predict(net, dataset.matrix)
    report = metrics(confusion(dataset.labels, preds))
    report.params = net.count_params()
    report.flops = net.count_flops()
    return report
