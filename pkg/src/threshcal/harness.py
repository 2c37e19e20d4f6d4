"""Cross-validated threshold evaluation.

For every fold of a stratified K-fold split, each configured method picks
a threshold from the training part only, and the threshold is scored on
the held-out fold. What "confidence level" means depends on the method:

============  ===============================================
zscore        interval confidence; the threshold is the lower bound
hist-min      ignored (one valley per fold)
kde           floor on P(PASS | score)
emp-recall    recall target on raw scores
pr-curve      recall target on calibrated probabilities
roc-fpr       false-positive budget of ``1 - level``
youden        ignored (maximizes tpr - fpr on raw scores)
conformal     coverage ``1 - alpha``
============  ===============================================

Threshold methods are scored by test recall (roc-fpr also by test FPR);
conformal methods by coverage and mean prediction-set width. Conformal
folds split their training part again into a classifier-fitting half and
a calibration half.

A method that cannot produce a threshold on some fold (for instance no
score reaches a 99% posterior) records threshold 0, which accepts
everything, and marks the row as failed with the reason.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import classifiers, conformal, density, recall_curve, roc, zscore
from .classifiers import ClassifierKind, ClassifierSettings
from .dataset import ScoreDataset, split_holdout, stratified_kfold
from .errors import ConfigInvalid, DataError, NumericError

DEFAULT_LEVELS = (0.80, 0.90, 0.95, 0.975, 0.99)
REPORT_COLUMNS = (
    "method",
    "classifier",
    "confidence",
    "threshold_mean",
    "threshold_std",
    "metric_name",
    "metric_mean",
    "metric_std",
)
NO_CLASSIFIER = "-"


class Method(str, enum.Enum):
    ZSCORE = "zscore"
    HIST_MIN = "hist-min"
    KDE = "kde"
    EMP_RECALL = "emp-recall"
    PR_CURVE = "pr-curve"
    ROC_FPR = "roc-fpr"
    YOUDEN = "youden"
    CONFORMAL = "conformal"

    @property
    def needs_classifier(self) -> bool:
        return self in (Method.PR_CURVE, Method.ROC_FPR, Method.CONFORMAL)


@dataclass(frozen=True)
class MethodSpec:
    method: Method
    classifier: ClassifierKind | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.classifier is not None:
            object.__setattr__(self, "classifier", ClassifierKind(self.classifier))
        if self.method.needs_classifier and self.classifier is None:
            raise ConfigInvalid(f"method {self.method.value} needs a classifier kind")
        if not self.method.needs_classifier and self.classifier is not None:
            raise ConfigInvalid(f"method {self.method.value} takes no classifier")

    @property
    def classifier_name(self) -> str:
        return NO_CLASSIFIER if self.classifier is None else self.classifier.value

    def __str__(self):
        if self.classifier is None:
            return self.method.value
        return f"{self.method.value}:{self.classifier.value}"

    @classmethod
    def parse_many(cls, text: str) -> list["MethodSpec"]:
        """``"pr-curve:gam"`` -> one spec; bare ``"pr-curve"`` -> all classifier kinds."""
        name, _, kind = str(text).strip().partition(":")
        try:
            method = Method(name.strip().lower())
        except ValueError:
            raise ConfigInvalid(f"unknown method {name!r}") from None
        if kind:
            try:
                return [cls(method, ClassifierKind(kind.strip().lower()))]
            except ValueError:
                raise ConfigInvalid(f"unknown classifier {kind!r}") from None
        if method.needs_classifier:
            return [cls(method, k) for k in ClassifierKind]
        return [cls(method)]


CONFORMAL_METHODS = tuple(MethodSpec(Method.CONFORMAL, k) for k in ClassifierKind)
RECALL_METHODS = (
    *(MethodSpec(Method.PR_CURVE, k) for k in ClassifierKind),
    MethodSpec(Method.EMP_RECALL),
    MethodSpec(Method.KDE),
)
ALL_METHODS = (
    MethodSpec(Method.ZSCORE),
    MethodSpec(Method.HIST_MIN),
    MethodSpec(Method.KDE),
    MethodSpec(Method.EMP_RECALL),
    *(MethodSpec(Method.PR_CURVE, k) for k in ClassifierKind),
    *(MethodSpec(Method.ROC_FPR, k) for k in ClassifierKind),
    MethodSpec(Method.YOUDEN),
    *CONFORMAL_METHODS,
)


@dataclass(frozen=True)
class RunConfig:
    methods: tuple[MethodSpec, ...] = ALL_METHODS
    confidence_levels: tuple[float, ...] = DEFAULT_LEVELS
    k_folds: int = 5
    seed: int = 0
    classifier: ClassifierSettings = field(default_factory=ClassifierSettings)
    grid_step: float = 1e-3
    hist_bins: int = 50
    kde_bandwidth: float | None = None
    calib_fraction: float = 0.5
    workers: int = 1

    def __post_init__(self):
        methods = tuple(
            m if isinstance(m, MethodSpec) else s
            for m in self.methods
            for s in ([m] if isinstance(m, MethodSpec) else MethodSpec.parse_many(m))
        )
        # dedupe, keep first occurrence order
        methods = tuple(dict.fromkeys(methods))
        if not methods:
            raise ConfigInvalid("no methods configured")
        levels = tuple(sorted({float(c) for c in self.confidence_levels}))
        if not levels:
            raise ConfigInvalid("no confidence levels configured")
        if any(not 0.0 < c < 1.0 for c in levels):
            raise ConfigInvalid("confidence levels must lie in (0, 1)")
        if int(self.k_folds) < 2:
            raise ConfigInvalid("k_folds must be >= 2")
        if not 0.0 < self.grid_step <= 0.5:
            raise ConfigInvalid("grid_step must be in (0, 0.5]")
        if not 0.0 < self.calib_fraction < 1.0:
            raise ConfigInvalid("calib_fraction must be in (0, 1)")
        if self.kde_bandwidth is not None and not self.kde_bandwidth > 0:
            raise ConfigInvalid("kde_bandwidth must be positive")
        if int(self.workers) < 1:
            raise ConfigInvalid("workers must be >= 1")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "confidence_levels", levels)
        object.__setattr__(self, "k_folds", int(self.k_folds))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self):
        return {
            "methods": [str(m) for m in self.methods],
            "confidence_levels": list(self.confidence_levels),
            "k_folds": self.k_folds,
            "seed": self.seed,
            "classifier": asdict(self.classifier),
            "grid_step": self.grid_step,
            "hist_bins": self.hist_bins,
            "kde_bandwidth": self.kde_bandwidth,
            "calib_fraction": self.calib_fraction,
            "workers": self.workers,
        }


@dataclass(frozen=True)
class ReportRow:
    method: str
    classifier: str
    confidence: float
    fold: int
    threshold: float
    metric_name: str
    metric_value: float
    failed: bool = False
    reason: str = ""


@dataclass(frozen=True)
class Aggregate:
    method: str
    classifier: str
    confidence: float
    threshold_mean: float
    threshold_std: float
    metric_name: str
    metric_mean: float
    metric_std: float
    n_folds: int
    n_failed: int


@dataclass(frozen=True)
class ThresholdReport:
    rows: tuple[ReportRow, ...]
    aggregates: tuple[Aggregate, ...]
    metric_name: str = "score"

    def to_dict(self):
        return {
            "metric_name": self.metric_name,
            "rows": [asdict(r) for r in self.rows],
            "aggregates": [asdict(a) for a in self.aggregates],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            rows=tuple(ReportRow(**r) for r in d["rows"]),
            aggregates=tuple(Aggregate(**a) for a in d["aggregates"]),
            metric_name=d.get("metric_name", "score"),
        )

    def aggregate(self, method, classifier=NO_CLASSIFIER, confidence=None, metric_name=None):
        """Look up one aggregate row (first match)."""
        for a in self.aggregates:
            if (
                a.method == str(method)
                and a.classifier == str(classifier)
                and (confidence is None or math.isclose(a.confidence, confidence))
                and (metric_name is None or a.metric_name == metric_name)
            ):
                return a
        raise KeyError((method, classifier, confidence, metric_name))


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(fold)]).generate_state(1)[0])


def heldout_recall(test: ScoreDataset, threshold: float) -> float:
    return float(recall_curve.recall_at(test, threshold))


def heldout_fpr(test: ScoreDataset, threshold: float) -> float:
    neg = test.scores[test.y == 0]
    return float(np.mean(neg >= threshold)) if neg.size else 0.0


class _FoldContext:
    """Per-fold cache of fitted models; only ever sees the training part."""

    def __init__(self, train: ScoreDataset, config: RunConfig, fold: int):
        self.train = train
        self.config = config
        self.seed = fold_seed(config.seed, fold)
        self._fits = {}
        self._calibrators = {}
        self._posterior = None
        self._split = None

    def settings(self):
        c = self.config.classifier
        return ClassifierSettings(c.degree, c.knots, c.gam_lambda, c.penalty_lambda, self.seed)

    def classifier(self, kind):
        if kind not in self._fits:
            try:
                self._fits[kind] = classifiers.fit_classifier(self.train, kind, self.settings())
            except (NumericError, DataError) as exc:
                self._fits[kind] = exc
        return self._fits[kind]

    def calibrator(self, kind):
        if kind not in self._calibrators:
            if self._split is None:
                self._split = split_holdout(self.train, self.config.calib_fraction, self.seed)
            fit_part, calib_part = self._split
            try:
                model = classifiers.fit_classifier(fit_part, kind, self.settings())
                self._calibrators[kind] = conformal.calibrate(model, calib_part)
            except (NumericError, DataError) as exc:
                self._calibrators[kind] = exc
        return self._calibrators[kind]

    def posterior(self):
        if self._posterior is None:
            try:
                self._posterior = density.fit_posterior(self.train, self.config.kde_bandwidth)
            except (NumericError, DataError) as exc:
                self._posterior = exc
        return self._posterior


def _unwrap(obj):
    if isinstance(obj, Exception):
        raise obj
    return obj


def _threshold_for(spec: MethodSpec, level: float, ctx: _FoldContext) -> float:
    cfg = ctx.config
    train = ctx.train
    m = spec.method
    if m is Method.ZSCORE:
        return zscore.z_interval(train.scores, level).lower
    if m is Method.HIST_MIN:
        return density.histogram_local_min_threshold(train.scores, cfg.hist_bins)
    if m is Method.KDE:
        return density.posterior_threshold(_unwrap(ctx.posterior()), level, cfg.grid_step)
    if m is Method.EMP_RECALL:
        return recall_curve.recall_threshold(train, level)
    if m is Method.YOUDEN:
        return roc.youden_threshold(roc.roc_curve(train.scores, train.y))

    model = _unwrap(ctx.classifier(spec.classifier))
    probs = classifiers.predict_prob(model, train.scores)
    if m is Method.PR_CURVE:
        p_cut, _, _ = roc.threshold_at_recall(probs, train.y, level)
    else:
        p_cut = roc.threshold_at_fpr(roc.roc_curve(probs, train.y), 1.0 - level)
    return classifiers.invert_probability_threshold(model, p_cut, cfg.grid_step).canonical_threshold


def _fold_rows(spec: MethodSpec, level: float, fold: int, ctx: _FoldContext, test: ScoreDataset):
    base = dict(method=spec.method.value, classifier=spec.classifier_name, confidence=level, fold=fold)
    if spec.method is Method.CONFORMAL:
        return _conformal_rows(spec, level, ctx, test, base)
    failed, reason = False, ""
    try:
        threshold = _threshold_for(spec, level, ctx)
    except (NumericError, DataError) as exc:
        failed, reason, threshold = True, f"{type(exc).__name__}: {exc}", 0.0
    rows = [ReportRow(**base, threshold=threshold, metric_name="recall",
                      metric_value=heldout_recall(test, threshold), failed=failed, reason=reason)]
    if spec.method is Method.ROC_FPR:
        rows.append(ReportRow(**base, threshold=threshold, metric_name="fpr",
                              metric_value=heldout_fpr(test, threshold), failed=failed, reason=reason))
    return rows


def _conformal_rows(spec, level, ctx, test, base):
    alpha = 1.0 - level
    try:
        cal = _unwrap(ctx.calibrator(spec.classifier))
    except (NumericError, DataError) as exc:
        # no calibrated model: fall back to the vacuous {PASS, FAIL} sets
        reason = f"{type(exc).__name__}: {exc}"
        return [
            ReportRow(**base, threshold=0.0, metric_name="coverage", metric_value=1.0, failed=True, reason=reason),
            ReportRow(**base, threshold=0.0, metric_name="width", metric_value=2.0, failed=True, reason=reason),
        ]
    Q = conformal.conformal_quantile(cal, alpha)
    ev = conformal.evaluate(cal, Q, test, alpha, ctx.config.grid_step)
    failed = math.isnan(ev.threshold_score)
    threshold = 0.0 if failed else ev.threshold_score
    reason = "PassNeverIncluded: PASS never stays in the prediction sets up to score 1" if failed else ""
    return [
        ReportRow(**base, threshold=threshold, metric_name="coverage", metric_value=ev.coverage,
                  failed=failed, reason=reason),
        ReportRow(**base, threshold=threshold, metric_name="width", metric_value=ev.avg_width,
                  failed=failed, reason=reason),
    ]


def _run_fold(fold, train, test, config):
    ctx = _FoldContext(train, config, fold)
    rows = []
    for spec in config.methods:
        for level in config.confidence_levels:
            rows.extend(_fold_rows(spec, level, fold, ctx, test))
    return rows


def aggregate_rows(rows, method_order=None) -> tuple[Aggregate, ...]:
    groups: dict[tuple, list[ReportRow]] = {}
    for r in rows:
        groups.setdefault((r.method, r.classifier, r.confidence, r.metric_name), []).append(r)
    out = []
    for (method, clf, conf, metric), rs in groups.items():
        thr = np.array([r.threshold for r in rs])
        met = np.array([r.metric_value for r in rs])
        ddof = 1 if len(rs) > 1 else 0
        out.append(Aggregate(
            method=method, classifier=clf, confidence=conf,
            threshold_mean=float(thr.mean()), threshold_std=float(thr.std(ddof=ddof)),
            metric_name=metric,
            metric_mean=float(met.mean()), metric_std=float(met.std(ddof=ddof)),
            n_folds=len(rs), n_failed=sum(r.failed for r in rs),
        ))
    return tuple(out)


def run(config: RunConfig, dataset: ScoreDataset) -> ThresholdReport:
    """Run every (fold, method, level) cell and aggregate across folds.

    Output is identical whatever ``config.workers`` is: rows are sorted
    into method/level/fold order before aggregation.
    """
    folds = stratified_kfold(dataset, config.k_folds, config.seed)
    jobs = [
        (fold, dataset.subset(train_idx), dataset.subset(test_idx))
        for fold, (train_idx, test_idx) in enumerate(folds.splits())
    ]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda j: _run_fold(*j, config), jobs))
    else:
        results = [_run_fold(*j, config) for j in jobs]

    method_rank = {(s.method.value, s.classifier_name): i for i, s in enumerate(config.methods)}
    metric_rank = {"recall": 0, "fpr": 1, "coverage": 0, "width": 1}
    rows = sorted(
        (r for fold_rows in results for r in fold_rows),
        key=lambda r: (method_rank[(r.method, r.classifier)], r.confidence,
                       metric_rank.get(r.metric_name, 9), r.fold),
    )
    return ThresholdReport(tuple(rows), aggregate_rows(rows), dataset.metric_name)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_report(report: ThresholdReport, format: str, fh) -> None:
    """Write the aggregate table as CSV, or rows + aggregates as JSON, to a text stream."""
    if not report.rows:
        raise ValueError("report is empty")
    fmt = str(format).lower()
    if fmt == "csv":
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for a in report.aggregates:
            writer.writerow([_fmt(getattr(a, c)) for c in REPORT_COLUMNS])
    elif fmt == "json":
        json.dump(report.to_dict(), fh, indent=2, sort_keys=False)
        fh.write("\n")
    else:
        raise ConfigInvalid(f"unknown report format {format!r}")


def export_report(report: ThresholdReport, format: str, path) -> None:
    if str(format).lower() not in ("csv", "json"):
        raise ConfigInvalid(f"unknown report format {format!r}")
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        write_report(report, format, fh)


def load_report(path) -> ThresholdReport:
    with open(path, encoding="utf-8") as fh:
        return ThresholdReport.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Plot series
# ---------------------------------------------------------------------------

def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _classifier_kinds(config: RunConfig):
    kinds = [s.classifier for s in config.methods if s.classifier is not None]
    return list(dict.fromkeys(kinds)) or list(ClassifierKind)


def export_plot_data(dataset: ScoreDataset, config: RunConfig, out_dir, library: str | None = None) -> Path:
    """Write one CSV per figure series under ``out_dir/<library>/``."""
    out = Path(out_dir) / (library or dataset.metric_name)
    out.mkdir(parents=True, exist_ok=True)
    s, y = dataset.scores, dataset.y
    settings = ClassifierSettings(**{**asdict(config.classifier), "seed": config.seed})
    kinds = _classifier_kinds(config)

    # fig1: conditional histograms
    counts_f, edges = np.histogram(s[y == 0], bins=config.hist_bins, range=(0.0, 1.0))
    counts_p, _ = np.histogram(s[y == 1], bins=config.hist_bins, range=(0.0, 1.0))
    _write_csv(out / "fig1_histogram.csv", ["bin_left", "bin_right", "count_fail", "count_pass"],
               zip(edges[:-1], edges[1:], counts_f, counts_p))

    # fig2: ROC / PR curves of each calibrated classifier
    models = {}
    roc_rows, pr_rows, summary = [], [], []
    for kind in kinds:
        try:
            models[kind] = classifiers.fit_classifier(dataset, kind, settings)
        except (NumericError, DataError):
            continue
        p = classifiers.predict_prob(models[kind], s)
        rc, pc = roc.roc_curve(p, y), roc.pr_curve(p, y)
        roc_rows += [(kind.value, t, tp, fp) for t, tp, fp in rc.points]
        pr_rows += [(kind.value, t, pr, re) for t, pr, re in pc.points]
        summary.append((kind.value, rc.auc, pc.average_precision))
    _write_csv(out / "fig2_roc.csv", ["classifier", "threshold", "tpr", "fpr"], roc_rows)
    _write_csv(out / "fig2_pr.csv", ["classifier", "threshold", "precision", "recall"], pr_rows)
    _write_csv(out / "fig2_summary.csv", ["classifier", "auc", "average_precision"], summary)

    # fig3: histogram with the local-minimum threshold
    try:
        valley = density.histogram_valley(s, config.hist_bins)
        counts, sm, vbin = valley.counts, valley.smoothed, valley.valley
        edges = valley.edges
    except NumericError:
        counts, edges = np.histogram(s, bins=config.hist_bins, range=(0.0, 1.0))
        sm, vbin = density.smooth3(counts), -1
    centers = 0.5 * (edges[:-1] + edges[1:])
    _write_csv(out / "fig3_local_min.csv", ["bin_center", "count", "smoothed", "is_threshold"],
               ((c, n, m, int(i == vbin)) for i, (c, n, m) in enumerate(zip(centers, counts, sm))))

    # fig4: per-label KDEs and PASS posterior
    grid = density.unit_grid(config.grid_step)
    curve = density.density_curve(density.fit_posterior(dataset, config.kde_bandwidth), grid)
    _write_csv(out / "fig4_kde.csv", ["x", "pdf_fail", "pdf_pass", "posterior_pass"],
               zip(curve["x"], curve["pdf_fail"], curve["pdf_pass"], curve["posterior_pass"]))

    # fig5: empirical recall curve
    rcurve = recall_curve.empirical_recall_curve(dataset)
    _write_csv(out / "fig5_recall.csv", ["threshold", "recall"], rcurve.points)

    # fig6: score thresholds against FPR budget and precision floor, across folds
    folds = stratified_kfold(dataset, config.k_folds, config.seed)
    risk_rows = []
    for kind in kinds:
        per = {}
        for fold, (tr, _) in enumerate(folds.splits()):
            train = dataset.subset(tr)
            fs = ClassifierSettings(**{**asdict(settings), "seed": fold_seed(config.seed, fold)})
            try:
                model = classifiers.fit_classifier(train, kind, fs)
            except (NumericError, DataError):
                continue
            p = classifiers.predict_prob(model, train.scores)
            rc = roc.roc_curve(p, train.y)
            for level in config.confidence_levels:
                for measure, cut in (
                    ("fpr", roc.threshold_at_fpr(rc, 1.0 - level)),
                    ("precision", roc.threshold_at_precision(p, train.y, level)),
                ):
                    key = (measure, 1.0 - level if measure == "fpr" else level)
                    try:
                        t = classifiers.invert_probability_threshold(model, cut, config.grid_step)
                        per.setdefault(key, []).append(t.canonical_threshold)
                    except (NumericError, ValueError):
                        per.setdefault(key, [])
        for (measure, risk), ts in sorted(per.items()):
            arr = np.asarray(ts)
            risk_rows.append((kind.value, measure, risk,
                              arr.mean() if arr.size else math.nan,
                              arr.std(ddof=1) if arr.size > 1 else 0.0, arr.size))
    _write_csv(out / "fig6_thresholds_vs_risk.csv",
               ["classifier", "risk_measure", "risk_level", "threshold_mean", "threshold_std", "n_folds"],
               risk_rows)

    # fig7 / fig8: conformal coverage, width and conformity distribution on one split
    test = dataset.subset(folds.test_indices(0))
    train = dataset.subset(folds.train_indices(0))
    fit_part, calib_part = split_holdout(train, config.calib_fraction, fold_seed(config.seed, 0))
    cov_rows, hist_rows, q_rows = [], [], []
    levels = np.round(np.arange(1, 51) * 0.02, 10)
    for kind in kinds:
        try:
            model = classifiers.fit_classifier(fit_part, kind, settings)
        except (NumericError, DataError):
            continue
        cal = conformal.calibrate(model, calib_part)
        for level in levels:
            Q = math.inf if level >= 1.0 else conformal.conformal_quantile(cal, 1.0 - level)
            ev = conformal.evaluate(cal, Q, test, 1.0 - level, config.grid_step)
            cov_rows.append((kind.value, level, ev.coverage, ev.avg_width, ev.empty_fraction))
        hc, he = np.histogram(cal.conformity, bins=config.hist_bins, range=(0.0, 1.0))
        hist_rows += [(kind.value, a, b, c) for a, b, c in zip(he[:-1], he[1:], hc)]
        q_rows += [(kind.value, lv, conformal.conformal_quantile(cal, 1.0 - lv))
                   for lv in config.confidence_levels]
    _write_csv(out / "fig7_coverage.csv",
               ["classifier", "confidence", "coverage", "avg_width", "empty_fraction"], cov_rows)
    _write_csv(out / "fig8_conformity.csv", ["classifier", "bin_left", "bin_right", "count"], hist_rows)
    _write_csv(out / "fig8_quantiles.csv", ["classifier", "confidence", "quantile"], q_rows)
    return out
