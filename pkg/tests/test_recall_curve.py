import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threshcal.dataset import ScoreDataset
from threshcal.errors import NoPositives, OutOfRange
from threshcal.recall_curve import empirical_recall_curve, recall_at, recall_threshold


def brute_recall(scores, y, t):
    pos = [s for s, lab in zip(scores, y) if lab == 1]
    return sum(s >= t for s in pos) / len(pos)


datasets = st.lists(st.tuples(st.integers(0, 20), st.booleans()), min_size=1, max_size=200).filter(
    lambda rows: any(b for _, b in rows)
)


def build(rows):
    return ScoreDataset.from_arrays([v / 20 for v, _ in rows], [int(b) for _, b in rows])


def test_above_max(tiny):
    assert recall_at(tiny, 0.95) == 0.0
    assert recall_at(tiny, 0.0) == 1.0


def test_vectorized(tiny):
    np.testing.assert_array_equal(recall_at(tiny, np.array([0.0, 0.35, 0.66])), [1.0, 1.0, 0.5])


@settings(max_examples=60, deadline=None)
@given(datasets)
def test_curve_brute_force(rows):
    ds = build(rows)
    curve = empirical_recall_curve(ds)
    for t, r in curve.points:
        assert r == brute_recall(ds.scores, ds.y, t)
    assert curve.thresholds[0] == 0.0
    assert np.all(np.diff(curve.recall) <= 0)


def test_target_one_is_min_pass(tiny):
    assert recall_threshold(tiny, 1.0) == 0.35


def test_zero_mass_collapses():
    # 6% of PASS records score 0: a 95% recall target can only be met at 0
    scores = np.r_[np.zeros(6), np.linspace(0.5, 1, 94), np.linspace(0, 0.5, 50)]
    y = np.r_[np.ones(100), np.zeros(50)]
    ds = ScoreDataset.from_arrays(scores, y)
    assert recall_threshold(ds, 0.95) == 0.0
    assert recall_at(ds, 0.0) == 1.0


@settings(max_examples=60, deadline=None)
@given(datasets, st.floats(0.01, 1.0))
def test_maximal(rows, target):
    ds = build(rows)
    t = recall_threshold(ds, target)
    assert brute_recall(ds.scores, ds.y, t) >= target
    larger = np.unique(ds.scores[ds.scores > t])
    if larger.size:
        assert brute_recall(ds.scores, ds.y, larger[0]) < target


def test_errors(tiny):
    with pytest.raises(OutOfRange):
        recall_threshold(tiny, 0.0)
    with pytest.raises(NoPositives):
        recall_threshold(ScoreDataset.from_arrays([0.1], [0]), 0.5)
