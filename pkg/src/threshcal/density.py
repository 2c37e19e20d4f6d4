"""Density-based thresholds.

Two routes are provided:

* :func:`histogram_local_min_threshold` finds the valley between the two
  main peaks of a bimodal score histogram. It has no notion of
  confidence.
* :func:`kde_threshold` fits one Gaussian KDE per label and applies
  Bayes' rule with the empirical class priors. It returns the lowest
  score above which the PASS posterior stays at or above the requested
  confidence.

KDE tails are not boundary-corrected, so scores piled up at 0 and 1
leak density outside the unit interval. The bandwidth defaults to
Silverman's rule and can be overridden.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.special import expit

from . import _accel
from .dataset import ScoreDataset
from .errors import (
    NoBimodalStructure,
    OutOfRange,
    SingleClass,
    TooFewSamples,
    UnreachableConfidence,
    ZeroEvidence,
)

FALLBACK_BANDWIDTH = 0.01


class Kernel(str, enum.Enum):
    GAUSSIAN = "GAUSSIAN"


@dataclass(frozen=True, eq=False)
class KdeModel:
    sample: np.ndarray
    bandwidth: float
    kernel: Kernel = Kernel.GAUSSIAN

    def __post_init__(self):
        sample = np.array(self.sample, dtype=float)
        if sample.size == 0:
            raise TooFewSamples("KDE sample is empty")
        if not self.bandwidth > 0:
            raise OutOfRange(f"bandwidth must be positive, got {self.bandwidth}")
        sample.setflags(write=False)
        object.__setattr__(self, "sample", sample)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))


@dataclass(frozen=True)
class PosteriorModel:
    kde_pass: KdeModel
    kde_fail: KdeModel
    prior_pass: float

    def __post_init__(self):
        if not 0.0 < self.prior_pass < 1.0:
            raise OutOfRange(f"prior_pass must be in (0, 1), got {self.prior_pass}")

    @property
    def prior_fail(self) -> float:
        return 1.0 - self.prior_pass


def silverman_bandwidth(scores) -> float:
    """``0.9 * min(sd, IQR / 1.34) * n**(-1/5)``; 0.01 when that is zero."""
    s = np.asarray(scores, dtype=float)
    if s.size < 2:
        raise TooFewSamples("Silverman's rule needs at least 2 scores")
    sd = s.std(ddof=1)
    q75, q25 = np.percentile(s, [75, 25])
    h = 0.9 * min(sd, (q75 - q25) / 1.34) * s.size ** (-0.2)
    return float(h) if h > 0 else FALLBACK_BANDWIDTH


def fit_kde(scores, bandwidth: float | None = None) -> KdeModel:
    s = np.asarray(scores, dtype=float)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(s)
    return KdeModel(s, bandwidth)


def kde_logpdf(model: KdeModel, x):
    return _accel.kde_logpdf(model.sample, model.bandwidth, x)


def kde_pdf(model: KdeModel, x):
    """Density at ``x``; scalar in, scalar out."""
    out = np.exp(kde_logpdf(model, x))
    return float(out[0]) if np.ndim(x) == 0 else out


# ---------------------------------------------------------------------------
# Histogram valley
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HistogramValley:
    edges: np.ndarray
    counts: np.ndarray
    smoothed: np.ndarray
    peaks: tuple[int, int]
    valley: int
    threshold: float


def smooth3(counts) -> np.ndarray:
    """3-bin moving average; end bins average over their two available bins."""
    c = np.asarray(counts, dtype=float)
    total = np.convolve(c, np.ones(3), mode="same")
    width = np.convolve(np.ones_like(c), np.ones(3), mode="same")
    return total / width


def histogram_valley(scores, bins: int = 50, min_prominence: float = 0.05) -> HistogramValley:
    """Locate the valley between the two highest peaks of the score histogram.

    Peaks are local maxima of the smoothed counts with prominence at least
    ``min_prominence`` times the tallest bin; edge bins can be peaks. The
    valley is the lowest smoothed bin strictly between the two highest
    peaks (the middle one when several tie).
    """
    if bins < 3:
        raise OutOfRange(f"bins must be >= 3, got {bins}")
    s = np.asarray(scores, dtype=float)
    counts, edges = np.histogram(s, bins=bins, range=(0.0, 1.0))
    sm = smooth3(counts)
    if sm.max() <= 0:
        raise NoBimodalStructure("empty histogram")
    padded = np.concatenate([[0.0], sm, [0.0]])
    found, _ = signal.find_peaks(padded, prominence=min_prominence * sm.max())
    peaks = found - 1
    if peaks.size < 2:
        raise NoBimodalStructure(f"found {peaks.size} peak(s), need two")
    order = np.argsort(-sm[peaks], kind="stable")
    p1, p2 = sorted(int(p) for p in peaks[order[:2]])
    if p2 - p1 < 2:
        raise NoBimodalStructure("the two highest peaks are adjacent")
    between = sm[p1 + 1:p2]
    lows = np.flatnonzero(between == between.min()) + p1 + 1
    valley = int(lows[(lows.size - 1) // 2])
    threshold = 0.5 * (edges[valley] + edges[valley + 1])
    return HistogramValley(edges, counts, sm, (p1, p2), valley, float(threshold))


def histogram_local_min_threshold(scores, bins: int = 50, min_prominence: float = 0.05) -> float:
    return histogram_valley(scores, bins, min_prominence).threshold


# ---------------------------------------------------------------------------
# Bayes posterior
# ---------------------------------------------------------------------------

def posterior_from_loglik(loglik_pass, loglik_fail, prior_pass: float):
    """P(PASS | x) from log-likelihoods, computed as a logistic of the log-odds."""
    lp = np.asarray(loglik_pass, dtype=float)
    lf = np.asarray(loglik_fail, dtype=float)
    if np.any(np.isneginf(lp) & np.isneginf(lf)):
        raise ZeroEvidence("both class likelihoods are zero")
    log_odds = (lp + np.log(prior_pass)) - (lf + np.log1p(-prior_pass))
    return expit(log_odds)


def posterior_from_likelihoods(lik_pass, lik_fail, prior_pass: float):
    with np.errstate(divide="ignore"):
        return posterior_from_loglik(np.log(lik_pass), np.log(lik_fail), prior_pass)


def bayes_posterior(model: PosteriorModel, x):
    """P(PASS | x) for scalar or array ``x``; P(FAIL | x) is one minus this."""
    post = posterior_from_loglik(
        kde_logpdf(model.kde_pass, x), kde_logpdf(model.kde_fail, x), model.prior_pass
    )
    return float(post[0]) if np.ndim(x) == 0 else post


def fit_posterior(dataset: ScoreDataset, bandwidth: float | None = None) -> PosteriorModel:
    """Per-label KDEs with class priors taken from label frequencies."""
    s, y = dataset.scores, dataset.y
    n_pass, n_fail = int(np.sum(y == 1)), int(np.sum(y == 0))
    if n_pass == 0 or n_fail == 0:
        raise SingleClass("KDE posterior needs both PASS and FAIL records")
    return PosteriorModel(
        kde_pass=fit_kde(s[y == 1], bandwidth),
        kde_fail=fit_kde(s[y == 0], bandwidth),
        prior_pass=n_pass / (n_pass + n_fail),
    )


def unit_grid(step: float) -> np.ndarray:
    if not 0.0 < step <= 1.0:
        raise OutOfRange(f"grid step must be in (0, 1], got {step}")
    return np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)


def suffix_start(mask) -> int | None:
    """Index of the first element of the trailing all-True run, or None."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0 or not mask[-1]:
        return None
    falses = np.flatnonzero(~mask)
    return 0 if falses.size == 0 else int(falses[-1]) + 1


def posterior_threshold(model: PosteriorModel, confidence: float, grid_step: float = 1e-3) -> float:
    """Smallest grid score from which the PASS posterior stays >= ``confidence``."""
    if not 0.0 < confidence < 1.0:
        raise OutOfRange(f"confidence must be in (0, 1), got {confidence}")
    grid = unit_grid(grid_step)
    post = bayes_posterior(model, grid)
    start = suffix_start(post >= confidence)
    if start is None:
        raise UnreachableConfidence(
            f"PASS posterior does not stay >= {confidence} up to score 1 "
            f"(max on grid {post.max():.4f})"
        )
    return float(grid[start])


def kde_threshold(
    dataset: ScoreDataset,
    confidence: float,
    grid_step: float = 1e-3,
    bandwidth: float | None = None,
) -> float:
    return posterior_threshold(fit_posterior(dataset, bandwidth), confidence, grid_step)


def density_curve(model: PosteriorModel, grid) -> dict[str, np.ndarray]:
    """Columns ``x, pdf_fail, pdf_pass, posterior_pass`` for plotting."""
    grid = np.asarray(grid, dtype=float)
    lp = kde_logpdf(model.kde_pass, grid)
    lf = kde_logpdf(model.kde_fail, grid)
    return {
        "x": grid,
        "pdf_fail": np.exp(lf),
        "pdf_pass": np.exp(lp),
        "posterior_pass": posterior_from_loglik(lp, lf, model.prior_pass),
    }
