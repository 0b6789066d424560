from dataclasses import dataclass

import numpy as np
import pandas as pd

from Classes.Base.CustomExceptionClass import DegenerateLabels, ShapeMismatch

RECALL_TARGET = 0.95


@dataclass
class RocCurve:
    """Sweep points ordered from the strictest threshold (+inf) to the most permissive."""

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float

    def points(self):
        return list(zip(self.thresholds.tolist(), self.tpr.tolist(), self.fpr.tolist()))


def roc_curve(scores, labels):
    """ROC over every distinct score; a pair is called a match when score >= threshold."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if scores.shape != labels.shape:
        raise ShapeMismatch(f"{scores.size} scores for {labels.size} labels")
    positives = int(np.sum(labels == 1))
    negatives = int(np.sum(labels == 0))
    if positives == 0 or negatives == 0 or positives + negatives != labels.size:
        raise DegenerateLabels(
            f"ROC needs both classes with 0/1 labels, got {positives} positive(s) and {negatives} negative(s)",
        )

    order = np.argsort(-scores, kind='stable')
    ranked, hits = scores[order], labels[order]
    # last position of every run of tied scores
    ends = np.r_[np.flatnonzero(np.diff(ranked) != 0), len(ranked) - 1]
    tp = np.cumsum(hits)[ends]
    fp = np.cumsum(1 - hits)[ends]

    thresholds = np.r_[np.inf, ranked[ends]]
    tpr = np.r_[0.0, tp / positives]
    fpr = np.r_[0.0, fp / negatives]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, tpr, fpr, auc)


def fpr95(curve, recall=RECALL_TARGET):
    """False-positive rate where the sweep first reaches ``recall`` true-positive rate.

    Linear interpolation between the two sweep points that bracket ``recall``.
    """
    k = int(np.argmax(curve.tpr >= recall))
    if k == 0 or curve.tpr[k] == recall:
        return float(curve.fpr[k])
    t0, t1 = curve.tpr[k - 1], curve.tpr[k]
    f0, f1 = curve.fpr[k - 1], curve.fpr[k]
    return float(f0 + (recall - t0) * (f1 - f0) / (t1 - t0))


def roc_frame(curve):
    return pd.DataFrame({'threshold': curve.thresholds, 'tpr': curve.tpr, 'fpr': curve.fpr})


def summary_line(curve):
    return f"fpr95={fpr95(curve):.6f},auc={curve.auc:.6f}"
