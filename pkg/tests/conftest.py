import math

import numpy as np
import pytest

from threshcal.classifiers import CalibratedClassifier, FeatureMap
from threshcal.dataset import ScoreDataset
from threshcal.synthetic import beta_mixture


@pytest.fixture
def separated():
    """Balanced Beta(8,2) PASS / Beta(2,8) FAIL sample, n=2000."""
    return beta_mixture(2000, seed=11)


@pytest.fixture
def tiny():
    return ScoreDataset.from_arrays([0.1, 0.2, 0.35, 0.4, 0.6, 0.65, 0.8, 0.9], [0, 0, 1, 0, 1, 0, 1, 1])


def logit(p):
    return math.log(p / (1.0 - p))


def two_bump_classifier(target=0.7):
    """Cubic logit ``logit(target) + 50 (x-.3)(x-.5)(x-.7)``.

    P(PASS) >= target exactly on [0.3, 0.5] and [0.7, 1].
    """
    # (x-.3)(x-.5)(x-.7) = x^3 - 1.5 x^2 + 0.71 x - 0.105
    coef = [logit(target) - 50 * 0.105, 50 * 0.71, -50 * 1.5, 50.0]
    return CalibratedClassifier(FeatureMap.polynomial(3), np.array(coef))


def linear_classifier(b0, b1):
    return CalibratedClassifier(FeatureMap.identity(normalize=False), np.array([b0, b1]))


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record a one-line pass/fail verdict, echoed in the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
