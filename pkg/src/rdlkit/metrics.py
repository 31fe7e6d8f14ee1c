"""Evaluation metrics."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import BadClassIndex, SingleClass


def auc_roc(scores, labels) -> float:
    """P(score of a random positive > score of a random negative), ties count 1/2."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if len(s) != len(y):
        raise ValueError("scores and labels differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    p = np.asarray(predictions, dtype=np.int64).reshape(-1)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    for name, a in (("prediction", p), ("label", y)):
        if len(a) and (a.min() < 0 or a.max() >= n_classes):
            raise BadClassIndex(f"{name} outside [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y, p), 1)
    return cm


def macro_f1(predictions, labels, n_classes: int) -> float:
    """Unweighted mean of per-class F1; a class absent from both contributes 0."""
    if n_classes < 1:
        raise BadClassIndex("n_classes must be >= 1")
    cm = confusion_matrix(predictions, labels, n_classes)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros(n_classes), where=denom > 0)
    return float(f1.mean())


def r2_clipped(pred, target) -> float:
    """Coefficient of determination clipped to [0, 1]."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot == 0:
        return 0.0
    return float(min(1.0, max(0.0, 1.0 - ((t - p) ** 2).sum() / ss_tot)))
