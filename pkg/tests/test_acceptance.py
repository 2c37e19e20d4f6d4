"""Acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (also repeated
in the pytest terminal summary) before asserting.
"""

import time

import numpy as np
import pytest
from scipy.special import expit

from threshcal.classifiers import (
    ClassifierKind,
    deviance,
    fit_classifier,
    fit_gam,
    fit_logistic,
    heldout_deviance,
    penalized_gradient,
    penalty_matrix,
)
from threshcal.cli import main
from threshcal.conformal import calibrate, conformal_quantile, evaluate
from threshcal.dataset import ScoreDataset, save_dataset
from threshcal.density import bayes_posterior, fit_kde, fit_posterior, kde_pdf, kde_threshold
from threshcal.harness import ALL_METHODS, MethodSpec, RunConfig, run
from threshcal.recall_curve import recall_at, recall_threshold
from threshcal.roc import roc_curve
from threshcal.stats_tests import u_statistic
from threshcal.synthetic import ClassSpec, beta_mixture
from threshcal.zscore import interval_from_summary

from test_classifiers import gd_oracle


def pairs(a, b):
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)


def test_criterion_01_zscore_table(acceptance_line):
    rows = {
        "RAGAS": (0.44, 0.40, -0.35, 1.22),
        "DeepEval": (0.63, 0.42, -0.19, 1.45),
        "Uptrain": (0.54, 0.41, -0.27, 1.34),
    }
    misses = []
    for name, (mean, sd, lb, ub) in rows.items():
        iv = interval_from_summary(mean, sd, 7703, 0.95, "POPULATION")
        for label, got, want in (("LB", iv.lower, lb), ("UB", iv.upper, ub)):
            if abs(got - want) > 0.005:
                misses.append(f"{name} {label} {got:.4f} vs {want}")
    ok = not misses
    acceptance_line(1, ok, "6/6 bounds within 0.005" if ok else f"{6 - len(misses)}/6 within 0.005; " + "; ".join(misses))
    assert ok, misses


def test_criterion_02_conformal_coverage(acceptance_line):
    alphas = (0.2, 0.1, 0.05)
    cov = {(k, a): [] for k in ClassifierKind for a in alphas}
    for seed in range(30):
        fit, calib, test = (beta_mixture(2000, seed=[seed, part]) for part in range(3))
        for kind in ClassifierKind:
            cal = calibrate(fit_classifier(fit, kind), calib)
            for a in alphas:
                cov[kind, a].append(evaluate(cal, conformal_quantile(cal, a), test, a).coverage)
    bad = []
    worst = 0.0
    for (kind, a), values in cov.items():
        m = float(np.mean(values))
        worst = max(worst, abs(m - (1 - a)))
        if not (1 - a - 0.01 <= m <= 1 - a + 0.02):
            bad.append(f"{kind.value}@{a}: {m:.4f}")
    ok = not bad
    acceptance_line(2, ok, f"9 cells, max |mean coverage - (1-alpha)| = {worst:.4f}" + ("" if ok else "; " + ", ".join(bad)))
    assert ok, bad


def test_criterion_03_auc_oracle(acceptance_line):
    rng = np.random.default_rng(3)
    worst, exact = 0.0, True
    for _ in range(100):
        n = int(rng.integers(2, 201))
        v = rng.integers(0, 12, n) / 11  # coarse values force ties
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        curve = roc_curve(v, y)
        pos, neg = v[y == 1].tolist(), v[y == 0].tolist()
        brute = pairs(pos, neg) / (len(pos) * len(neg))
        worst = max(worst, abs(curve.auc - brute))
        exact &= curve.auc == u_statistic(pos, neg) / (len(pos) * len(neg))
    ok = worst <= 1e-9 and exact
    acceptance_line(3, ok, f"100 datasets, max |AUC - pairwise| = {worst:.1e}, AUC == U/(P*N) exactly: {exact}")
    assert ok


def test_criterion_04_u_exact(acceptance_line):
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(100):
        a = rng.integers(0, 8, int(rng.integers(1, 101))) / 7
        b = rng.integers(0, 8, int(rng.integers(1, 101))) / 7
        mismatches += u_statistic(a, b) != pairs(a.tolist(), b.tolist())
    ok = mismatches == 0
    acceptance_line(4, ok, f"100 datasets, {mismatches} mismatches against pair counting")
    assert ok


def test_criterion_05_logistic(acceptance_line):
    rng = np.random.default_rng(5)
    worst_rel, worst_grad = 0.0, 0.0
    for i in range(20):
        n = int(rng.integers(100, 400))
        x = rng.uniform(0, 1, n)
        b0, b1 = rng.uniform(-2, 2), rng.uniform(-4, 4)
        y = (rng.uniform(size=n) < expit(b0 + b1 * x)).astype(int)
        ds = ScoreDataset.from_arrays(x, y)
        m = fit_logistic(ds, penalty_lambda=0.0)
        A = m.feature_map.design(x)
        ref = deviance(gd_oracle(A, y.astype(float)), A, y)
        worst_rel = max(worst_rel, abs(m.fit_diagnostics.deviance - ref) / ref)
        m2 = fit_logistic(ds)
        g = penalized_gradient(m2.coefficients, A, y.astype(float), penalty_matrix(m2.feature_map, m2.penalty_lambda))
        worst_grad = max(worst_grad, float(np.max(np.abs(g))))
    x = rng.uniform(0, 1, 10_000)
    y = (rng.uniform(size=x.size) < expit(-2 + 4 * x)).astype(int)
    b0, b1 = fit_logistic(ScoreDataset.from_arrays(x, y)).raw_coefficients()
    ok = worst_rel <= 1e-6 and worst_grad < 1e-6 and abs(b0 + 2) <= 0.2 and abs(b1 - 4) <= 0.2
    acceptance_line(
        5, ok,
        f"deviance rel err {worst_rel:.1e}, max gradient {worst_grad:.1e}, planted ({b0:.3f}, {b1:.3f})",
    )
    assert ok


def test_criterion_06_gam(acceptance_line):
    wins = 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0, 1, 4000)
        y = (rng.uniform(size=x.size) < expit(4 * np.sin(2 * np.pi * x))).astype(int)
        fit = ScoreDataset.from_arrays(x[:2000], y[:2000])
        test = ScoreDataset.from_arrays(x[2000:], y[2000:])
        wins += heldout_deviance(fit_gam(fit, seed=seed), test) < heldout_deviance(fit_logistic(fit), test)
    rng = np.random.default_rng(99)
    x = rng.uniform(0, 1, 4000)
    y = (rng.uniform(size=x.size) < expit(4 * np.sin(2 * np.pi * x))).astype(int)
    stiff = fit_gam(ScoreDataset.from_arrays(x, y), lam=1e9)
    grid = np.linspace(0, 1, 2001)
    eta = stiff.linear_predictor(grid)
    slope, icpt = np.polyfit(grid, eta, 1)
    sup = float(np.max(np.abs(eta - icpt - slope * grid)))
    ok = wins >= 28 and sup < 1e-3
    acceptance_line(6, ok, f"GAM wins {wins}/30, lambda=1e9 affine residual {sup:.1e}")
    assert ok


def test_criterion_07_kde(acceptance_line):
    rng = np.random.default_rng(7)
    worst_norm = 0.0
    for _ in range(20):
        ds = beta_mixture(int(rng.integers(50, 500)), pass_fraction=rng.uniform(0.2, 0.8), seed=int(rng.integers(1 << 30)))
        model = fit_posterior(ds)
        grid = rng.uniform(-0.2, 1.2, 500)
        p1 = bayes_posterior(model, grid)
        lp, lf = kde_pdf(model.kde_pass, grid), kde_pdf(model.kde_fail, grid)
        p0 = lf * model.prior_fail / (lf * model.prior_fail + lp * model.prior_pass)
        worst_norm = max(worst_norm, float(np.max(np.abs(p1 + p0 - 1))))
    kde = fit_kde(rng.beta(2, 8, 3000))
    h = kde.bandwidth
    x = np.linspace(kde.sample.min() - 8 * h, kde.sample.max() + 8 * h, 40001)
    f = kde_pdf(kde, x)
    area = float(np.sum((f[1:] + f[:-1]) * np.diff(x)) / 2)
    # Beta(8,2)/Beta(2,8) share a normalizer, so the posterior odds are (x/(1-x))**6
    analytic = 1.0 / (1.0 + 4.0 ** (-1.0 / 6.0))
    t = kde_threshold(beta_mixture(10_000, seed=7), 0.8)
    ok = worst_norm <= 1e-12 and abs(area - 1) <= 1e-3 and abs(t - analytic) <= 0.05
    acceptance_line(
        7, ok,
        f"normalization err {worst_norm:.1e}, integral {area:.6f}, threshold {t:.4f} vs analytic {analytic:.4f}",
    )
    assert ok


def test_criterion_08_recall_maximality(acceptance_line):
    rng = np.random.default_rng(8)
    failures = 0
    for _ in range(100):
        n = int(rng.integers(2, 200))
        s = rng.integers(0, 25, n) / 24
        y = rng.integers(0, 2, n)
        y[0] = 1
        ds = ScoreDataset.from_arrays(s, y)
        target = float(rng.uniform(0.05, 1.0))
        t = recall_threshold(ds, target)
        above = np.unique(s[s > t])
        failures += not (recall_at(ds, t) >= target and (above.size == 0 or recall_at(ds, above[0]) < target))
    ok = failures == 0
    acceptance_line(8, ok, f"100 datasets, {failures} violations")
    assert ok


def test_criterion_09_collapse(acceptance_line):
    # Higher overlap (FAIL ~ Beta(2,4)) plus point masses at score 0: half
    # of FAIL and 1.5% of PASS records score exactly 0.
    ds = beta_mixture(
        7703, 0.5, ClassSpec(8, 2, zero_mass=0.015), ClassSpec(2, 4, zero_mass=0.5), seed=9
    )
    methods = [s for name in ("emp-recall", "pr-curve", "conformal") for s in MethodSpec.parse_many(name)]
    rep = run(RunConfig(methods=methods, confidence_levels=(0.8, 0.99), seed=9), ds)

    collapse, parts = [], []
    for spec in methods[:4]:
        agg = rep.aggregate(spec.method.value, spec.classifier_name, 0.99, "recall")
        low = rep.aggregate(spec.method.value, spec.classifier_name, 0.8, "recall")
        ok = agg.threshold_mean <= 0.05 and agg.metric_mean == 1.0
        collapse.append(ok)
        parts.append(f"{spec} t={agg.threshold_mean:.3f} (0.8: {low.threshold_mean:.3f}) recall={agg.metric_mean:.4f}")
    nonzero = []
    for spec in methods[4:]:
        fold_t = [r.threshold for r in rep.rows if r.method == "conformal" and r.classifier == spec.classifier_name
                  and r.confidence == 0.99 and r.metric_name == "coverage"]
        nonzero.append(min(fold_t) > 0.0)
        parts.append(f"{spec} min fold t={min(fold_t):.3f}")
    ok = all(collapse) and all(nonzero)
    acceptance_line(9, ok, f"(a) {sum(collapse)}/4 collapse, (b) {sum(nonzero)}/3 nonzero; " + "; ".join(parts))
    assert ok


def test_criterion_10_determinism(acceptance_line, tmp_path):
    data = tmp_path / "scores.csv"
    save_dataset(beta_mixture(7703, seed=10), data)
    config = tmp_path / "config.json"
    config.write_text(
        '{"input": "%s", "confidence_levels": [0.8, 0.9, 0.95, 0.975, 0.99], "k_folds": 5, "seed": 10}' % data
    )
    durations, blobs = [], []
    for name in ("first.csv", "second.csv"):
        start = time.perf_counter()
        code = main(["crossval", "--config", str(config), "--out", str(tmp_path / name)])
        durations.append(time.perf_counter() - start)
        assert code == 0
        blobs.append((tmp_path / name).read_bytes())
    n_rows = blobs[0].count(b"\n") - 1
    ok = blobs[0] == blobs[1] and max(durations) < 300
    acceptance_line(
        10, ok,
        f"byte-identical: {blobs[0] == blobs[1]}, {n_rows} aggregate rows, default-config run {max(durations):.1f}s (limit 300s)",
    )
    assert ok
