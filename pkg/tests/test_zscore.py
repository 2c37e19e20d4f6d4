import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threshcal.errors import OutOfRange, TooFewSamples
from threshcal.zscore import IntervalMode, interval_from_summary, z_interval, z_quantile


def erf_series(x, terms=120):
    # Maclaurin series of erf; fine for |x| < 3
    total, term = 0.0, x
    for n in range(terms):
        total += term / (2 * n + 1)
        term *= -x * x / (n + 1)
    return 2.0 / math.sqrt(math.pi) * total


def phi_series(z):
    return 0.5 * (1.0 + erf_series(z / math.sqrt(2.0)))


def z_oracle(confidence):
    target = 1.0 - (1.0 - confidence) / 2.0
    lo, hi = 0.0, 5.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi_series(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_z_95():
    assert z_quantile(0.95) == pytest.approx(1.959964, abs=1e-6)


def test_z_one_sigma():
    assert z_quantile(0.6827) == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("conf", [0.5, 0.8, 0.9, 0.95, 0.975, 0.99, 0.995])
def test_z_against_erf_oracle(conf):
    assert abs(z_quantile(conf) - z_oracle(conf)) < 1e-8


@pytest.mark.parametrize("conf", [0.0, 1.0, -0.1, 1.5])
def test_z_bad_confidence(conf):
    with pytest.raises(OutOfRange):
        z_quantile(conf)


def test_summary_rows():
    lo, hi = interval_from_summary(0.63, 0.42, 7703).lower, interval_from_summary(0.63, 0.42, 7703).upper
    assert abs(lo - (-0.19)) <= 0.005 and abs(hi - 1.45) <= 0.005
    iv = interval_from_summary(0.44, 0.40, 7703)
    assert abs(iv.upper - 1.22) <= 0.005


def test_constant_scores():
    iv = z_interval([0.7, 0.7, 0.7])
    assert iv.lower == iv.upper == 0.7
    assert iv.std_dev == 0.0


def test_sample_sd_uses_n_minus_1():
    iv = z_interval([0.0, 1.0], confidence=0.95)
    assert iv.std_dev == pytest.approx(math.sqrt(0.5))


def test_mean_ci_mode():
    s = np.linspace(0, 1, 101)
    pop = z_interval(s, 0.9)
    ci = z_interval(s, 0.9, mode="MEAN_CI")
    assert ci.mode is IntervalMode.MEAN_CI
    assert ci.width == pytest.approx(pop.width / math.sqrt(101))


def test_clip():
    iv = z_interval([0.0, 1.0, 0.0, 1.0], clip=True)
    assert iv.lower == 0.0 and iv.upper == 1.0
    raw = z_interval([0.0, 1.0, 0.0, 1.0])
    assert raw.lower < 0.0 < 1.0 < raw.upper


def test_too_few():
    with pytest.raises(TooFewSamples):
        z_interval([0.4])


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=2, max_size=50),
    st.floats(0.05, 0.95),
    st.floats(0.0, 0.04),
)
def test_interval_properties(scores, conf, bump):
    a = z_interval(scores, conf)
    b = z_interval(scores, conf + bump)
    assert a.lower <= a.mean <= a.upper
    assert (a.mean - a.lower) == pytest.approx(a.upper - a.mean, abs=1e-12)
    assert b.width >= a.width - 1e-12
    assert a.width == pytest.approx(2 * z_quantile(conf) * a.std_dev, abs=1e-12)
