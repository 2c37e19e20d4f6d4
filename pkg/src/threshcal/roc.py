"""ROC and precision-recall curves with threshold selection.

Values may be raw scores or calibrated probabilities; in both cases a
value ``>= threshold`` is predicted PASS. Curves are built from integer
true/false positive counts, so AUC and Youden's J are exact rational
quantities up to a final division.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import as_arrays
from .errors import NoPositives, OutOfRange, SingleClass


def _sweep(values, labels):
    """Counts at every distinct value, thresholds in descending order."""
    v, y = as_arrays(values, labels)
    order = np.argsort(-v, kind="mergesort")
    v_sorted, y_sorted = v[order], y[order]
    tp_cum = np.cumsum(y_sorted == 1)
    fp_cum = np.cumsum(y_sorted == 0)
    # last occurrence of each distinct value in descending order
    last = np.flatnonzero(np.diff(v_sorted) != 0)
    last = np.concatenate([last, [v_sorted.size - 1]]) if v_sorted.size else last
    return v_sorted[last], tp_cum[last], fp_cum[last], int(tp_cum[-1]), int(fp_cum[-1])


@dataclass(frozen=True, eq=False)
class RocCurve:
    thresholds: np.ndarray  # descending; first entry is a sentinel above every value
    tp: np.ndarray
    fp: np.ndarray
    n_pos: int
    n_neg: int

    @property
    def tpr(self) -> np.ndarray:
        return self.tp / self.n_pos

    @property
    def fpr(self) -> np.ndarray:
        return self.fp / self.n_neg

    @property
    def auc(self) -> float:
        # trapezoid rule on integer counts: sum dFP * (TP_i + TP_{i-1}) / 2
        twice_area = int(np.sum(np.diff(self.fp) * (self.tp[1:] + self.tp[:-1])))
        return twice_area / (2 * self.n_pos * self.n_neg)

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.tpr.tolist(), self.fpr.tolist()))


@dataclass(frozen=True, eq=False)
class PrCurve:
    thresholds: np.ndarray  # descending
    precision: np.ndarray
    recall: np.ndarray
    average_precision: float

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.precision.tolist(), self.recall.tolist()))


def roc_curve(values, labels) -> RocCurve:
    thr, tp, fp, n_pos, n_neg = _sweep(values, labels)
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC curve needs both PASS and FAIL examples")
    sentinel = np.nextafter(thr[0], np.inf)
    return RocCurve(
        thresholds=np.concatenate([[sentinel], thr]),
        tp=np.concatenate([[0], tp]).astype(np.int64),
        fp=np.concatenate([[0], fp]).astype(np.int64),
        n_pos=n_pos,
        n_neg=n_neg,
    )


def pr_curve(values, labels) -> PrCurve:
    thr, tp, fp, n_pos, _ = _sweep(values, labels)
    if n_pos == 0:
        raise NoPositives("precision-recall curve needs PASS examples")
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev = np.concatenate([[0.0], recall[:-1]])
    ap = float(np.sum((recall - prev) * precision))
    return PrCurve(thr, precision, recall, ap)


def threshold_at_fpr(curve: RocCurve, max_fpr: float) -> float:
    """Most permissive (smallest) threshold whose FPR stays within ``max_fpr``."""
    if not 0.0 <= max_fpr <= 1.0:
        raise OutOfRange(f"max_fpr must be in [0, 1], got {max_fpr}")
    ok = np.flatnonzero(curve.fpr <= max_fpr)
    return float(curve.thresholds[ok[-1]])


def threshold_at_recall(values, labels, target_recall: float) -> tuple[float, float, float]:
    """Largest threshold with recall >= target, with its precision and recall."""
    if not 0.0 < target_recall <= 1.0:
        raise OutOfRange(f"recall target must be in (0, 1], got {target_recall}")
    curve = pr_curve(values, labels)
    ok = np.flatnonzero(curve.recall >= target_recall)
    i = int(ok[0])  # thresholds descend, recall ascends
    return float(curve.thresholds[i]), float(curve.precision[i]), float(curve.recall[i])


def threshold_at_precision(values, labels, min_precision: float) -> float:
    """Smallest threshold whose precision reaches ``min_precision``.

    Falls back to the largest value when no threshold reaches it.
    """
    curve = pr_curve(values, labels)
    ok = np.flatnonzero(curve.precision >= min_precision)
    if ok.size == 0:
        return float(curve.thresholds[0])
    return float(curve.thresholds[ok[-1]])


def youden_threshold(curve: RocCurve) -> float:
    """Threshold maximizing ``tpr - fpr``; ties go to the larger threshold."""
    # tpr - fpr compared exactly as tp * n_neg - fp * n_pos
    j = curve.tp * curve.n_neg - curve.fp * curve.n_pos
    return float(curve.thresholds[int(np.argmax(j))])
