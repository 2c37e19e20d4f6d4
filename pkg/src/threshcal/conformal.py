"""Split conformal prediction on top of a score -> P(PASS) classifier.

The classifier is fit on one part of the data, and its probabilities on
a disjoint calibration part give conformity scores
``s = 1 - p_hat(true label)``. For a miscoverage level ``alpha`` the
cutoff ``Q`` is the ``ceil((n + 1)(1 - alpha))``-th smallest score, or
``+inf`` when that rank exceeds ``n``. A label enters a prediction set
when ``p_hat(label) >= 1 - Q``.

Membership is tested as ``1 - p_hat(label) <= Q``. This is the same rule,
but it is evaluated in the space ``Q`` came from, so a calibration point
with the cutoff score is never dropped through rounding in ``1 - Q``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .classifiers import CalibratedClassifier, predict_prob
from .dataset import ScoreDataset
from .density import suffix_start, unit_grid
from .errors import EmptyCalibration, EmptyTest, OutOfRange, PassNeverIncluded

# (n + 1)(1 - alpha) is often meant to be an integer, e.g. 10 * 0.9
_RANK_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class ConformalCalibrator:
    classifier: CalibratedClassifier
    conformity: np.ndarray  # ascending
    n_calib: int


@dataclass(frozen=True)
class PredictionSet:
    contains_pass: bool
    contains_fail: bool

    @property
    def width(self) -> int:
        return int(self.contains_pass) + int(self.contains_fail)


@dataclass(frozen=True)
class ConformalEvaluation:
    alpha: float
    coverage: float
    avg_width: float
    empty_fraction: float
    threshold_score: float  # NaN when PASS is never in a set

    def to_dict(self):
        return asdict(self)


def conformity_scores(classifier: CalibratedClassifier, scores, y) -> np.ndarray:
    p_pass = predict_prob(classifier, np.asarray(scores, dtype=float))
    y = np.asarray(y)
    return np.where(y == 1, 1.0 - p_pass, p_pass)


def calibrate(classifier: CalibratedClassifier, holdout: ScoreDataset) -> ConformalCalibrator:
    if len(holdout) == 0:
        raise EmptyCalibration("calibration set is empty")
    s = np.sort(conformity_scores(classifier, holdout.scores, holdout.y))
    s.setflags(write=False)
    return ConformalCalibrator(classifier, s, len(holdout))


def quantile_rank(n: int, alpha: float) -> int:
    return int(math.ceil((n + 1) * (1.0 - alpha) - _RANK_SLACK))


def conformal_quantile(calibrator: ConformalCalibrator, alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise OutOfRange(f"alpha must be in (0, 1), got {alpha}")
    k = quantile_rank(calibrator.n_calib, alpha)
    if k > calibrator.n_calib:
        return math.inf
    return float(calibrator.conformity[max(k, 1) - 1])


def prediction_sets(calibrator: ConformalCalibrator, Q: float, scores):
    """Vectorized prediction sets: ``(contains_pass, contains_fail)`` arrays."""
    p_pass = predict_prob(calibrator.classifier, np.atleast_1d(np.asarray(scores, dtype=float)))
    return (1.0 - p_pass) <= Q, p_pass <= Q


def prediction_set(calibrator: ConformalCalibrator, Q: float, score: float) -> PredictionSet:
    has_pass, has_fail = prediction_sets(calibrator, Q, [score])
    return PredictionSet(bool(has_pass[0]), bool(has_fail[0]))


def conformal_score_threshold(
    calibrator: ConformalCalibrator, Q: float, grid_step: float = 1e-3
) -> float:
    """Smallest grid score from which PASS stays in every prediction set."""
    grid = unit_grid(grid_step)
    has_pass, _ = prediction_sets(calibrator, Q, grid)
    start = suffix_start(has_pass)
    if start is None:
        if not has_pass.any():
            raise PassNeverIncluded("PASS is in no prediction set on [0, 1]")
        raise PassNeverIncluded("PASS drops out of the prediction sets before score 1")
    return float(grid[start])


def evaluate(
    calibrator: ConformalCalibrator,
    Q: float,
    test: ScoreDataset,
    alpha: float,
    grid_step: float = 1e-3,
) -> ConformalEvaluation:
    if len(test) == 0:
        raise EmptyTest("test set is empty")
    has_pass, has_fail = prediction_sets(calibrator, Q, test.scores)
    y = test.y
    covered = np.where(y == 1, has_pass, has_fail)
    width = has_pass.astype(int) + has_fail.astype(int)
    try:
        threshold = conformal_score_threshold(calibrator, Q, grid_step)
    except PassNeverIncluded:
        threshold = math.nan
    return ConformalEvaluation(
        alpha=float(alpha),
        coverage=float(covered.mean()),
        avg_width=float(width.mean()),
        empty_fraction=float(np.mean(width == 0)),
        threshold_score=threshold,
    )
