"""Score -> P(PASS) calibration models.

Three model families share one penalized logistic fitter:

* standard logistic regression on the score (``IDENTITY`` features),
* polynomial logistic regression on ``x, x**2, ..., x**d``,
* a GAM: logit-linked cubic B-spline smooth of the score with a
  second-difference roughness penalty.

Identity and polynomial features are standardized column by column
before fitting and the coefficients are stored in that standardized
space; :meth:`CalibratedClassifier.raw_coefficients` maps them back.

The spline penalty uses second differences divided by the spacing of
the Greville abscissae, so it vanishes exactly on affine functions of
the score even when the interior knots (placed at score quantiles) are
unevenly spaced. With evenly spaced knots it reduces to the usual
P-spline difference penalty.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.special import expit

from . import _accel
from .dataset import ScoreDataset, stratified_kfold
from .density import suffix_start, unit_grid
from .errors import (
    NotConverged,
    OutOfRange,
    Separation,
    SingleClass,
    TooFewSamples,
    UnreachableProbability,
)

DEFAULT_RIDGE = 1e-6
SPLINE_RIDGE = 1e-9
MAX_ITER = 100
COEF_TOL = 1e-8
SEPARATION_NORM = 1e6
PROB_EPS = 1e-15
GAM_LAMBDA_GRID = tuple(10.0 ** np.arange(-3, 4))


class FeatureKind(str, enum.Enum):
    IDENTITY = "IDENTITY"
    POLYNOMIAL = "POLYNOMIAL"
    SPLINE = "SPLINE"


class ClassifierKind(str, enum.Enum):
    STANDARD = "standard"
    POLYNOMIAL = "polynomial"
    GAM = "gam"


@dataclass(frozen=True)
class FeatureMap:
    kind: FeatureKind = FeatureKind.IDENTITY
    degree: int = 1
    knots: tuple[float, ...] = ()
    spline_degree: int = 3
    # per-column (mean, scale); None means "not fitted yet"
    normalization: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        object.__setattr__(self, "knots", tuple(float(k) for k in self.knots))
        if self.normalization is not None:
            object.__setattr__(
                self, "normalization",
                tuple((float(m), float(s)) for m, s in self.normalization),
            )
        if self.kind is FeatureKind.POLYNOMIAL and self.degree < 1:
            raise OutOfRange(f"polynomial degree must be >= 1, got {self.degree}")
        if self.kind is FeatureKind.SPLINE:
            k = np.asarray(self.knots)
            if k.size and (np.any(np.diff(k) <= 0) or k[0] <= 0.0 or k[-1] >= 1.0):
                raise OutOfRange("spline knots must be strictly ascending inside (0, 1)")
            if self.spline_degree < 1:
                raise OutOfRange("spline degree must be >= 1")

    @classmethod
    def identity(cls, normalize: bool = True):
        return cls(FeatureKind.IDENTITY, normalization=None if normalize else ((0.0, 1.0),))

    @classmethod
    def polynomial(cls, degree: int = 3):
        return cls(FeatureKind.POLYNOMIAL, degree=degree)

    @classmethod
    def spline(cls, knots, spline_degree: int = 3):
        return cls(FeatureKind.SPLINE, knots=tuple(knots), spline_degree=spline_degree)

    @property
    def full_knots(self) -> np.ndarray:
        d = self.spline_degree
        return np.concatenate([np.zeros(d + 1), self.knots, np.ones(d + 1)])

    @property
    def dim(self) -> int:
        if self.kind is FeatureKind.IDENTITY:
            return 1
        if self.kind is FeatureKind.POLYNOMIAL:
            return self.degree
        # the first B-spline is dropped: the intercept already spans constants
        return len(self.knots) + self.spline_degree

    def raw_features(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind is FeatureKind.SPLINE:
            return _accel.bspline_design(x, self.full_knots, self.spline_degree)[:, 1:]
        powers = np.arange(1, self.dim + 1)
        return x[:, None] ** powers[None, :]

    def fitted_to(self, x) -> "FeatureMap":
        """Copy with normalization estimated from ``x`` (no-op if already set)."""
        if self.normalization is not None:
            return self
        if self.kind is FeatureKind.SPLINE:
            # B-spline columns keep their scale so the roughness penalty means
            # the same thing at every knot
            norm = tuple((0.0, 1.0) for _ in range(self.dim))
        else:
            raw = self.raw_features(x)
            mean = raw.mean(axis=0)
            scale = raw.std(axis=0)
            scale[scale == 0] = 1.0
            norm = tuple(zip(mean.tolist(), scale.tolist()))
        return replace(self, normalization=norm)

    def transform(self, x) -> np.ndarray:
        if self.normalization is None:
            raise ValueError("feature map has no normalization; call fitted_to first")
        raw = self.raw_features(x)
        mean = np.array([m for m, _ in self.normalization])
        scale = np.array([s for _, s in self.normalization])
        return (raw - mean) / scale

    def design(self, x) -> np.ndarray:
        f = self.transform(x)
        return np.hstack([np.ones((f.shape[0], 1)), f])

    def greville(self) -> np.ndarray:
        t, d = self.full_knots, self.spline_degree
        return np.array([t[j + 1:j + d + 1].mean() for j in range(self.dim + 1)])

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "degree": self.degree,
            "knots": list(self.knots),
            "spline_degree": self.spline_degree,
            "normalization": None if self.normalization is None else [list(p) for p in self.normalization],
        }

    @classmethod
    def from_dict(cls, d):
        norm = d.get("normalization")
        return cls(
            kind=FeatureKind(d["kind"]),
            degree=int(d.get("degree", 1)),
            knots=tuple(d.get("knots", ())),
            spline_degree=int(d.get("spline_degree", 3)),
            normalization=None if norm is None else tuple(tuple(p) for p in norm),
        )


def difference_matrix(feature_map: FeatureMap) -> np.ndarray:
    """Second differences of spline coefficients over their Greville spacing.

    Scaled by the mean spacing so evenly spaced knots give ``c[i+2] - 2 c[i+1] + c[i]``.
    The column of the dropped first basis function (coefficient fixed at 0)
    is removed.
    """
    xi = feature_map.greville()
    m = xi.size
    if m < 3:
        return np.zeros((0, m - 1))
    h = np.diff(xi)
    hbar = h.mean()
    D = np.zeros((m - 2, m))
    for i in range(m - 2):
        D[i, i] = hbar / h[i]
        D[i, i + 1] = -hbar / h[i] - hbar / h[i + 1]
        D[i, i + 2] = hbar / h[i + 1]
    return D[:, 1:]


def penalty_matrix(feature_map: FeatureMap, penalty_lambda: float) -> np.ndarray:
    """Penalty ``S`` in ``0.5 * beta' S beta``; the intercept is never penalized."""
    p = feature_map.dim
    S = np.zeros((p + 1, p + 1))
    if feature_map.kind is FeatureKind.SPLINE:
        D = difference_matrix(feature_map)
        S[1:, 1:] = penalty_lambda * (D.T @ D) + SPLINE_RIDGE * np.eye(p)
    else:
        S[1:, 1:] = penalty_lambda * np.eye(p)
    return S


@dataclass(frozen=True)
class FitDiagnostics:
    iterations: int
    deviance: float
    converged: bool


@dataclass(frozen=True, eq=False)
class CalibratedClassifier:
    feature_map: FeatureMap
    coefficients: np.ndarray
    penalty_lambda: float = 0.0
    fit_diagnostics: FitDiagnostics = field(default_factory=lambda: FitDiagnostics(0, math.nan, True))

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=float)
        if coef.size != 1 + self.feature_map.dim:
            raise ValueError(
                f"expected {1 + self.feature_map.dim} coefficients, got {coef.size}"
            )
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        if self.feature_map.normalization is None:
            object.__setattr__(
                self, "feature_map",
                replace(self.feature_map, normalization=tuple((0.0, 1.0) for _ in range(self.feature_map.dim))),
            )

    def __eq__(self, other):
        if not isinstance(other, CalibratedClassifier):
            return NotImplemented
        return (
            self.feature_map == other.feature_map
            and np.array_equal(self.coefficients, other.coefficients)
            and self.penalty_lambda == other.penalty_lambda
            and self.fit_diagnostics == other.fit_diagnostics
        )

    def linear_predictor(self, x) -> np.ndarray:
        return self.feature_map.design(x) @ self.coefficients

    def raw_coefficients(self) -> np.ndarray:
        """Coefficients on the unstandardized powers ``1, x, x**2, ...``."""
        if self.feature_map.kind is FeatureKind.SPLINE:
            raise ValueError("spline coefficients have no power-basis form")
        mean = np.array([m for m, _ in self.feature_map.normalization])
        scale = np.array([s for _, s in self.feature_map.normalization])
        slopes = self.coefficients[1:] / scale
        return np.concatenate([[self.coefficients[0] - np.sum(slopes * mean)], slopes])

    def to_dict(self):
        fm = self.feature_map.to_dict()
        return {
            "kind": fm["kind"],
            "degree": fm["degree"],
            "knots": fm["knots"],
            "spline_degree": fm["spline_degree"],
            "normalization": fm["normalization"],
            "coefficients": self.coefficients.tolist(),
            "lambda": self.penalty_lambda,
            "diagnostics": {
                "iterations": self.fit_diagnostics.iterations,
                "deviance": self.fit_diagnostics.deviance,
                "converged": self.fit_diagnostics.converged,
            },
        }

    @classmethod
    def from_dict(cls, d):
        diag = d.get("diagnostics") or {}
        return cls(
            feature_map=FeatureMap.from_dict(d),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            penalty_lambda=float(d.get("lambda", 0.0)),
            fit_diagnostics=FitDiagnostics(
                int(diag.get("iterations", 0)),
                float(diag.get("deviance", math.nan)),
                bool(diag.get("converged", True)),
            ),
        )


# ---------------------------------------------------------------------------
# Penalized IRLS
# ---------------------------------------------------------------------------

def penalized_loss(beta, A, y, S) -> float:
    """Negative log-likelihood plus ``0.5 * beta' S beta``."""
    eta = A @ beta
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta) + 0.5 * beta @ S @ beta)


def penalized_gradient(beta, A, y, S) -> np.ndarray:
    return A.T @ (expit(A @ beta) - y) + S @ beta


def deviance(beta, A, y) -> float:
    eta = A @ beta
    return float(2.0 * np.sum(np.logaddexp(0.0, eta) - y * eta))


def irls(A, y, S, max_iter: int = MAX_ITER, tol: float = COEF_TOL, beta0=None):
    """Newton/IRLS with step halving. Returns ``(beta, iterations, converged)``."""
    y = np.asarray(y, dtype=float)
    beta = np.zeros(A.shape[1]) if beta0 is None else np.array(beta0, dtype=float)
    loss = penalized_loss(beta, A, y, S)
    for it in range(1, max_iter + 1):
        mu = expit(A @ beta)
        w = mu * (1.0 - mu)
        grad = A.T @ (mu - y) + S @ beta
        hess = A.T @ (A * w[:, None]) + S
        try:
            with warnings.catch_warnings():
                # near-separable data makes the Hessian ill-conditioned; the
                # norm check below reports that case
                warnings.simplefilter("ignore", linalg.LinAlgWarning)
                step = linalg.solve(hess, grad, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            step = linalg.lstsq(hess, grad)[0]
        t = 1.0
        for _ in range(50):
            cand = beta - t * step
            cand_loss = penalized_loss(cand, A, y, S)
            if cand_loss <= loss + 1e-12 * max(1.0, abs(loss)):
                break
            t *= 0.5
        delta = cand - beta
        beta, loss = cand, cand_loss
        if np.linalg.norm(beta) > SEPARATION_NORM:
            raise Separation("coefficients diverge; classes look perfectly separable")
        if np.max(np.abs(delta)) < tol:
            return beta, it, True
    return beta, max_iter, False


def _check_labels(dataset: ScoreDataset):
    y = dataset.y
    if not (np.any(y == 1) and np.any(y == 0)):
        raise SingleClass("classifier fit needs both PASS and FAIL records")


def fit_logistic(
    dataset: ScoreDataset,
    feature_map: FeatureMap | None = None,
    penalty_lambda: float = DEFAULT_RIDGE,
    max_iter: int = MAX_ITER,
) -> CalibratedClassifier:
    """Penalized logistic regression of PASS (y=1) on mapped score features."""
    if penalty_lambda < 0:
        raise OutOfRange("penalty_lambda must be non-negative")
    _check_labels(dataset)
    fm = (feature_map or FeatureMap.identity()).fitted_to(dataset.scores)
    A = fm.design(dataset.scores)
    y = dataset.y.astype(float)
    if A.shape[0] <= fm.dim:
        raise TooFewSamples(f"{A.shape[0]} records for {fm.dim} features")
    S = penalty_matrix(fm, penalty_lambda)
    beta, iters, converged = irls(A, y, S, max_iter=max_iter)
    dev = deviance(beta, A, y)
    if not converged:
        if dev < 1e-6 * len(y):
            raise Separation("deviance driven to zero; classes look perfectly separable")
        raise NotConverged(f"IRLS did not converge in {max_iter} iterations")
    return CalibratedClassifier(fm, beta, float(penalty_lambda), FitDiagnostics(iters, dev, True))


def quantile_knots(scores, knot_count: int) -> tuple[float, ...]:
    """Distinct interior knots at evenly spaced score quantiles, inside (0, 1)."""
    if knot_count <= 0:
        return ()
    probs = np.arange(1, knot_count + 1) / (knot_count + 1)
    q = np.unique(np.quantile(np.asarray(scores, dtype=float), probs))
    return tuple(float(v) for v in q if 0.0 < v < 1.0)


def heldout_deviance(model: CalibratedClassifier, dataset: ScoreDataset) -> float:
    return deviance(model.coefficients, model.feature_map.design(dataset.scores), dataset.y)


def fit_gam(
    dataset: ScoreDataset,
    knot_count: int = 10,
    lam: float | str = "auto",
    spline_degree: int = 3,
    lambda_grid=GAM_LAMBDA_GRID,
    cv_folds: int = 3,
    seed: int = 0,
) -> CalibratedClassifier:
    """Cubic P-spline logistic GAM.

    With ``lam="auto"`` the smoothing parameter is chosen from
    ``lambda_grid`` by stratified ``cv_folds``-fold held-out deviance.
    """
    _check_labels(dataset)
    fm = FeatureMap.spline(quantile_knots(dataset.scores, knot_count), spline_degree)
    if len(dataset) <= fm.dim:
        raise TooFewSamples(f"{len(dataset)} records for a {fm.dim}-column spline basis")

    if isinstance(lam, str):
        if lam.lower() != "auto":
            raise OutOfRange(f"lambda must be a number or 'auto', got {lam!r}")
        lam = select_gam_lambda(dataset, fm, lambda_grid, cv_folds, seed)
    if lam < 0:
        raise OutOfRange("lambda must be non-negative")
    return fit_logistic(dataset, fm, penalty_lambda=float(lam))


def select_gam_lambda(dataset, feature_map, lambda_grid, cv_folds=3, seed=0) -> float:
    folds = stratified_kfold(dataset, cv_folds, seed)
    best_lam, best_dev = None, math.inf
    for lam in sorted(lambda_grid):
        total = 0.0
        for train_idx, test_idx in folds.splits():
            try:
                model = fit_logistic(dataset.subset(train_idx), feature_map, float(lam))
            except (NotConverged, Separation):
                total = math.inf
                break
            total += heldout_deviance(model, dataset.subset(test_idx))
        # ties go to the smoother (larger) lambda
        if total <= best_dev:
            best_lam, best_dev = float(lam), total
    if best_lam is None or not math.isfinite(best_dev):
        raise NotConverged("no lambda on the grid gave a convergent GAM fit")
    return best_lam


@dataclass(frozen=True)
class ClassifierSettings:
    degree: int = 3
    knots: int = 10
    gam_lambda: float | str = "auto"
    penalty_lambda: float = DEFAULT_RIDGE
    seed: int = 0


def fit_classifier(dataset: ScoreDataset, kind, settings: ClassifierSettings | None = None):
    settings = settings or ClassifierSettings()
    kind = ClassifierKind(kind)
    if kind is ClassifierKind.STANDARD:
        return fit_logistic(dataset, FeatureMap.identity(), settings.penalty_lambda)
    if kind is ClassifierKind.POLYNOMIAL:
        return fit_logistic(dataset, FeatureMap.polynomial(settings.degree), settings.penalty_lambda)
    return fit_gam(dataset, settings.knots, settings.gam_lambda, seed=settings.seed)


# ---------------------------------------------------------------------------
# Prediction and inversion
# ---------------------------------------------------------------------------

def predict_prob(model: CalibratedClassifier, score):
    """P(PASS | score), kept strictly inside (0, 1)."""
    p = np.clip(expit(model.linear_predictor(score)), PROB_EPS, 1.0 - PROB_EPS)
    return float(p[0]) if np.ndim(score) == 0 else p


@dataclass(frozen=True)
class CrossingSet:
    target_prob: float
    crossings: tuple[float, ...]
    canonical_threshold: float


def _refine(model, target, lo, hi, xtol):
    """Bisect ``[lo, hi]`` where ``p >= target`` holds at exactly one end.

    Returns the bracketing end that satisfies ``p >= target``.
    """
    lo_ok = predict_prob(model, lo) >= target
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= xtol or not lo < mid < hi:
            break
        if (predict_prob(model, mid) >= target) == lo_ok:
            lo = mid
        else:
            hi = mid
    return lo if lo_ok else hi


def invert_probability_threshold(
    model: CalibratedClassifier,
    target_prob: float,
    grid_step: float = 1e-3,
    xtol: float = 0.0,
) -> CrossingSet:
    """Map a probability cutoff back to a score cutoff.

    Every grid interval where ``P(PASS) >= target_prob`` flips is refined
    by bisection (to float resolution when ``xtol`` is 0). The canonical
    threshold is the start of the final run of accepted scores reaching
    score 1; 0 when every score is accepted.
    """
    if not 0.0 < target_prob < 1.0:
        raise OutOfRange(f"target probability must be in (0, 1), got {target_prob}")
    grid = unit_grid(grid_step)
    above = predict_prob(model, grid) >= target_prob
    flips = np.flatnonzero(above[1:] != above[:-1])
    crossings = tuple(
        float(_refine(model, target_prob, grid[i], grid[i + 1], xtol)) for i in flips
    )
    start = suffix_start(above)
    if start is None:
        if not above.any():
            raise UnreachableProbability(
                f"P(PASS) never reaches {target_prob} on [0, 1]"
            )
        raise UnreachableProbability(
            f"P(PASS) falls below {target_prob} before score 1; no upper acceptance region"
        )
    if start == 0:
        canonical = 0.0
    else:
        canonical = crossings[int(np.flatnonzero(flips == start - 1)[0])]
    return CrossingSet(float(target_prob), crossings, float(canonical))
