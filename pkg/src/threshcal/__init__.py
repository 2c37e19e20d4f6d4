"""Decision thresholds for continuous, reference-free evaluation scores.

Given scores in [0, 1] with binary PASS/FAIL labels, ``threshcal`` picks
a score cutoff by several routes (z-score intervals, histogram valleys,
kernel density posteriors, empirical recall, ROC/PR operating points on
calibrated classifiers, split conformal prediction) and compares them
under stratified cross-validation.
"""

from .classifiers import (
    CalibratedClassifier,
    ClassifierKind,
    ClassifierSettings,
    FeatureMap,
    fit_classifier,
    fit_gam,
    fit_logistic,
    invert_probability_threshold,
    predict_prob,
)
from .conformal import calibrate, conformal_quantile, conformal_score_threshold, prediction_set
from .dataset import (
    FoldAssignment,
    Label,
    LabeledScoreRecord,
    ScoreDataset,
    clean,
    load_dataset,
    save_dataset,
    split_holdout,
    stratified_kfold,
)
from .density import bayes_posterior, fit_kde, fit_posterior, histogram_valley, kde_threshold
from .errors import DataError, NumericError, ThreshcalError, UsageError
from .harness import MethodSpec, RunConfig, ThresholdReport, export_report, run
from .recall_curve import empirical_recall_curve, recall_threshold
from .roc import pr_curve, roc_curve, youden_threshold
from .stats_tests import independent_t_test, mann_whitney_u
from .zscore import IntervalMode, z_interval

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
