"""Normal-theory intervals around the mean score.

Two widths are offered. ``MEAN_CI`` is the textbook confidence interval
for the mean, ``mean +/- z * sd / sqrt(n)``. ``POPULATION`` drops the
``sqrt(n)`` and gives ``mean +/- z * sd``, the band expected to hold a
fraction ``confidence`` of individual scores. The two are often written
interchangeably for threshold bands, but only the second gives a band
of usable size: with mean 0.44 and sd 0.40 it spans about
(-0.34, 1.22), while the mean interval at n in the thousands is a few
hundredths wide. ``POPULATION`` is therefore the default.

Intervals are not clipped to [0, 1] unless asked. For bimodal metrics
they usually spill outside the score range, which is itself the useful
diagnostic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .errors import OutOfRange, TooFewSamples


class IntervalMode(str, enum.Enum):
    POPULATION = "POPULATION"
    MEAN_CI = "MEAN_CI"


@dataclass(frozen=True)
class ZInterval:
    mean: float
    std_dev: float
    n: int
    confidence: float
    lower: float
    upper: float
    mode: IntervalMode

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self):
        d = asdict(self)
        d["mode"] = self.mode.value
        return d


def z_quantile(confidence: float) -> float:
    """Two-sided critical value: ``Phi(z) = 1 - (1 - confidence) / 2``."""
    if not 0.0 < confidence < 1.0:
        raise OutOfRange(f"confidence must be in (0, 1), got {confidence}")
    return float(special.ndtri(0.5 + 0.5 * confidence))


def interval_from_summary(
    mean: float,
    std_dev: float,
    n: int,
    confidence: float = 0.95,
    mode: IntervalMode | str = IntervalMode.POPULATION,
    clip: bool = False,
) -> ZInterval:
    mode = IntervalMode(mode)
    z = z_quantile(confidence)
    half = z * std_dev
    if mode is IntervalMode.MEAN_CI:
        half /= math.sqrt(n)
    lower, upper = mean - half, mean + half
    if clip:
        lower, upper = max(lower, 0.0), min(upper, 1.0)
    return ZInterval(float(mean), float(std_dev), int(n), float(confidence), lower, upper, mode)


def z_interval(
    scores,
    confidence: float = 0.95,
    mode: IntervalMode | str = IntervalMode.POPULATION,
    clip: bool = False,
) -> ZInterval:
    """Interval around the sample mean using the n-1 standard deviation."""
    s = np.asarray(scores, dtype=float)
    if s.size < 2:
        raise TooFewSamples(f"need at least 2 scores, got {s.size}")
    mean = float(s.mean())
    sd = float(s.std(ddof=1))
    # constant input: guard against rounding residue in the variance
    if np.all(s == s[0]):
        mean, sd = float(s[0]), 0.0
    return interval_from_summary(mean, sd, s.size, confidence, mode, clip)
