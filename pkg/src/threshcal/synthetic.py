"""Synthetic labeled score data for tests, benchmarks and demos.

Each class draws its scores from a Beta distribution, optionally mixed
with a point mass at 0 (a metric that returns 0 for a whole group of
records, as faithfulness scorers often do on unparseable answers).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ScoreDataset


@dataclass(frozen=True)
class ClassSpec:
    """Score distribution of one class: ``Beta(a, b)`` plus an atom at 0.

    ``extra`` adds further Beta components as ``(weight, a, b)`` triples;
    the main ``Beta(a, b)`` takes the remaining weight. The atom applies
    on top of the continuous mixture.
    """

    a: float
    b: float
    zero_mass: float = 0.0
    extra: tuple = ()

    def __post_init__(self):
        comps = [(self.a, self.b)] + [(a, b) for _, a, b in self.extra]
        if any(a <= 0 or b <= 0 for a, b in comps):
            raise ValueError("Beta parameters must be positive")
        if not 0.0 <= self.zero_mass <= 1.0:
            raise ValueError("zero_mass must be in [0, 1]")
        if any(w < 0 for w, _, _ in self.extra) or sum(w for w, _, _ in self.extra) > 1.0:
            raise ValueError("extra component weights must be non-negative and sum to at most 1")

    @property
    def components(self) -> list[tuple[float, float, float]]:
        rest = 1.0 - sum(w for w, _, _ in self.extra)
        return [(rest, self.a, self.b), *((float(w), float(a), float(b)) for w, a, b in self.extra)]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comps = self.components
        which = rng.choice(len(comps), size=n, p=[w for w, _, _ in comps])
        x = np.empty(n)
        for j, (_, a, b) in enumerate(comps):
            sel = which == j
            x[sel] = rng.beta(a, b, size=int(sel.sum()))
        if self.zero_mass > 0:
            x[rng.random(n) < self.zero_mass] = 0.0
        return x

    def pdf(self, x) -> np.ndarray:
        """Density of the continuous part, scaled by ``1 - zero_mass``."""
        from scipy import stats

        x = np.asarray(x, dtype=float)
        total = sum(w * stats.beta.pdf(x, a, b) for w, a, b in self.components)
        return (1.0 - self.zero_mass) * total


PASS_DEFAULT = ClassSpec(8.0, 2.0)
FAIL_DEFAULT = ClassSpec(2.0, 8.0)


def beta_mixture(
    n: int,
    pass_fraction: float = 0.5,
    pass_spec: ClassSpec = PASS_DEFAULT,
    fail_spec: ClassSpec = FAIL_DEFAULT,
    seed=0,
    metric_name: str = "synthetic",
    exact_counts: bool = True,
) -> ScoreDataset:
    """Draw a labeled dataset.

    With ``exact_counts`` the PASS count is ``round(n * pass_fraction)``;
    otherwise labels are Bernoulli draws. Records are shuffled.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = np.random.default_rng(seed)
    if exact_counts:
        n_pass = int(round(n * pass_fraction))
        y = np.zeros(n, dtype=np.int8)
        y[:n_pass] = 1
        rng.shuffle(y)
    else:
        y = (rng.random(n) < pass_fraction).astype(np.int8)
    scores = np.empty(n)
    pos = y == 1
    scores[pos] = pass_spec.sample(int(pos.sum()), rng)
    scores[~pos] = fail_spec.sample(int((~pos).sum()), rng)
    return ScoreDataset.from_arrays(scores, y, metric_name=metric_name)
