"""Empirical recall as a function of the score threshold.

A record passes when ``score >= threshold``. Recall is the fraction of
PASS-labeled records that pass. Candidate thresholds are 0 plus every
distinct score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ScoreDataset
from .errors import NoPositives, OutOfRange


@dataclass(frozen=True, eq=False)
class RecallCurve:
    thresholds: np.ndarray  # strictly increasing
    recall: np.ndarray
    positives_total: int

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.recall.tolist()))


def pass_counts(positive_scores_sorted, thresholds) -> np.ndarray:
    """Number of positives with score >= t, for each t."""
    return positive_scores_sorted.size - np.searchsorted(
        positive_scores_sorted, thresholds, side="left"
    )


def recall_at(dataset: ScoreDataset, threshold) -> np.ndarray | float:
    pos = np.sort(dataset.scores[dataset.y == 1])
    if pos.size == 0:
        raise NoPositives("dataset has no PASS records")
    r = pass_counts(pos, np.atleast_1d(threshold)) / pos.size
    return float(r[0]) if np.ndim(threshold) == 0 else r


def empirical_recall_curve(dataset: ScoreDataset) -> RecallCurve:
    s, y = dataset.scores, dataset.y
    pos = np.sort(s[y == 1])
    if pos.size == 0:
        raise NoPositives("dataset has no PASS records")
    thresholds = np.unique(np.concatenate([[0.0], s]))
    recall = pass_counts(pos, thresholds) / pos.size
    return RecallCurve(thresholds, recall, int(pos.size))


def recall_threshold(dataset: ScoreDataset, target: float) -> float:
    """Largest candidate threshold whose recall is at least ``target``."""
    if not 0.0 < target <= 1.0:
        raise OutOfRange(f"recall target must be in (0, 1], got {target}")
    curve = empirical_recall_curve(dataset)
    ok = np.flatnonzero(curve.recall >= target)
    # recall is non-increasing, so the feasible set is a prefix; 0 is always in it
    return float(curve.thresholds[ok[-1]])
