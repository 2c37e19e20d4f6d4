import json

import numpy as np
import pytest

from threshcal.classifiers import ClassifierKind
from threshcal.dataset import ScoreDataset
from threshcal.errors import ConfigInvalid
from threshcal.harness import (
    ALL_METHODS,
    DEFAULT_LEVELS,
    REPORT_COLUMNS,
    RECALL_METHODS,
    Method,
    MethodSpec,
    RunConfig,
    ThresholdReport,
    export_plot_data,
    export_report,
    load_report,
    run,
)
from threshcal.synthetic import ClassSpec, beta_mixture


@pytest.fixture(scope="module")
def data():
    return beta_mixture(1500, seed=21)


def test_method_spec_parsing():
    assert MethodSpec.parse_many("pr-curve:gam") == [MethodSpec(Method.PR_CURVE, ClassifierKind.GAM)]
    assert len(MethodSpec.parse_many("conformal")) == 3
    assert MethodSpec.parse_many("KDE") == [MethodSpec(Method.KDE)]
    with pytest.raises(ConfigInvalid):
        MethodSpec.parse_many("nope")
    with pytest.raises(ConfigInvalid):
        MethodSpec(Method.KDE, ClassifierKind.GAM)
    assert str(MethodSpec(Method.ROC_FPR, "gam")) == "roc-fpr:gam"


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        RunConfig(methods=())
    with pytest.raises(ConfigInvalid):
        RunConfig(confidence_levels=(1.2,))
    with pytest.raises(ConfigInvalid):
        RunConfig(k_folds=1)
    cfg = RunConfig(methods=["kde", "pr-curve:gam"])
    assert cfg.methods == (MethodSpec(Method.KDE), MethodSpec(Method.PR_CURVE, "gam"))
    assert RunConfig().confidence_levels == DEFAULT_LEVELS


def test_emp_recall_rows():
    # discrete, separated scores as produced by many LLM judges
    rng = np.random.default_rng(3)
    scores = np.r_[rng.choice([0.0, 0.1, 0.2], 250), rng.choice([0.7, 0.8, 0.9, 1.0], 250)]
    ds = ScoreDataset.from_arrays(scores, [0] * 250 + [1] * 250)
    rep = run(RunConfig(methods=["emp-recall"], confidence_levels=[0.8]), ds)
    assert len(rep.rows) == 5
    assert sum(r.metric_value >= 0.8 for r in rep.rows) >= 4
    assert [r.fold for r in rep.rows] == list(range(5))


def test_table2_aggregate_count(data):
    rep = run(RunConfig(methods=RECALL_METHODS, confidence_levels=DEFAULT_LEVELS), data)
    assert len(rep.aggregates) == 5 * 5
    assert {a.metric_name for a in rep.aggregates} == {"recall"}


def test_conformal_rows_carry_width(data):
    rep = run(RunConfig(methods=["conformal:standard"], confidence_levels=[0.9], k_folds=3), data)
    names = sorted(a.metric_name for a in rep.aggregates)
    assert names == ["coverage", "width"]
    cov = rep.aggregate("conformal", "standard", 0.9, "coverage")
    assert 0.85 < cov.metric_mean < 0.95


def test_roc_fpr_budget(data):
    rep = run(RunConfig(methods=["roc-fpr:standard"], confidence_levels=[0.95]), data)
    fpr = rep.aggregate("roc-fpr", "standard", 0.95, "fpr")
    assert fpr.metric_mean < 0.1


def test_failed_rows_fall_back_to_zero():
    ds = beta_mixture(400, pass_spec=ClassSpec(2, 2), fail_spec=ClassSpec(2, 2), seed=1)
    rep = run(RunConfig(methods=["kde"], confidence_levels=[0.999], k_folds=2), ds)
    assert all(r.failed and r.threshold == 0.0 and r.reason for r in rep.rows)
    assert all(r.metric_value == 1.0 for r in rep.rows)
    assert rep.aggregates[0].n_failed == 2


def test_workers_do_not_change_results(data):
    methods = ["kde", "pr-curve:polynomial", "conformal:gam"]
    one = run(RunConfig(methods=methods, confidence_levels=[0.9], k_folds=3), data)
    many = run(RunConfig(methods=methods, confidence_levels=[0.9], k_folds=3, workers=3), data)
    assert one.to_dict() == many.to_dict()


def test_export_csv(tmp_path, data):
    rep = run(RunConfig(methods=["youden"], confidence_levels=[0.9], k_folds=2), data)
    export_report(rep, "csv", tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].split(",") == list(REPORT_COLUMNS)
    assert len(lines) == 2


def test_json_roundtrip(tmp_path, data):
    rep = run(RunConfig(methods=["zscore", "hist-min"], confidence_levels=[0.95], k_folds=2), data)
    export_report(rep, "json", tmp_path / "r.json")
    back = load_report(tmp_path / "r.json")
    assert back.to_dict() == rep.to_dict()
    assert isinstance(back, ThresholdReport)
    json.loads((tmp_path / "r.json").read_text())


def test_export_bad_format(tmp_path, data):
    rep = run(RunConfig(methods=["youden"], confidence_levels=[0.9], k_folds=2), data)
    with pytest.raises(ConfigInvalid):
        export_report(rep, "xml", tmp_path / "r.xml")


def test_plot_series(tmp_path, data):
    cfg = RunConfig(methods=["emp-recall", "conformal:standard"], confidence_levels=[0.8, 0.9], k_folds=2)
    out = export_plot_data(data, cfg, tmp_path, library="demo")
    names = sorted(p.name for p in out.iterdir())
    assert "fig1_histogram.csv" in names and "fig7_coverage.csv" in names
    cov = (out / "fig7_coverage.csv").read_text().splitlines()
    assert len(cov) > 50


def test_all_methods_run(data):
    rep = run(RunConfig(methods=ALL_METHODS, confidence_levels=[0.9], k_folds=2), data)
    assert not any(r.failed for r in rep.rows)
    recalls = [r.metric_value for r in rep.rows if r.metric_name == "recall"]
    assert np.all((np.array(recalls) >= 0) & (np.array(recalls) <= 1))
