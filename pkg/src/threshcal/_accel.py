"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``THRESHCAL_DISABLE_NUMBA=1`` to force the numpy path (also used
automatically when numba cannot be imported). Both paths are always
importable as ``*_numba`` / ``*_numpy`` so tests and benchmarks can
compare them directly.
"""

import os
import warnings

import numpy as np

_DISABLED = os.environ.get("THRESHCAL_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on",
)

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    warnings.warn("numba unavailable; using the numpy kernels")

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

USE_NUMBA = HAVE_NUMBA and not _DISABLED

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

# Cap on the number of (point, sample) pairs materialized at once by the
# numpy fallback.
_CHUNK_PAIRS = 1 << 22


# ---------------------------------------------------------------------------
# Gaussian KDE log-density
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def kde_logpdf_numba(sample, bandwidth, points):
    n = sample.shape[0]
    m = points.shape[0]
    out = np.empty(m)
    log_norm = np.log(n * bandwidth) + 0.9189385332046727
    for j in range(m):
        x = points[j]
        if not np.isfinite(x):
            out[j] = -np.inf
            continue
        # two-pass log-sum-exp over kernel exponents
        best = -np.inf
        for i in range(n):
            z = (x - sample[i]) / bandwidth
            e = -0.5 * z * z
            if e > best:
                best = e
        acc = 0.0
        for i in range(n):
            z = (x - sample[i]) / bandwidth
            acc += np.exp(-0.5 * z * z - best)
        out[j] = best + np.log(acc) - log_norm
    return out


def kde_logpdf_numpy(sample, bandwidth, points):
    sample = np.asarray(sample, dtype=float)
    points = np.asarray(points, dtype=float)
    n = sample.shape[0]
    out = np.full(points.shape[0], -np.inf)
    finite = np.flatnonzero(np.isfinite(points))
    log_norm = np.log(n * bandwidth) + _LOG_SQRT_2PI
    step = max(1, _CHUNK_PAIRS // max(n, 1))
    for start in range(0, finite.size, step):
        idx = finite[start:start + step]
        z = (points[idx, None] - sample[None, :]) / bandwidth
        e = -0.5 * z * z
        best = e.max(axis=1)
        out[idx] = best + np.log(np.exp(e - best[:, None]).sum(axis=1)) - log_norm
    return out


def kde_logpdf(sample, bandwidth, points):
    """Log of the Gaussian KDE ``(1/(n h)) sum phi((x - x_i)/h)`` at ``points``."""
    sample = np.ascontiguousarray(sample, dtype=float)
    points = np.ascontiguousarray(np.atleast_1d(points), dtype=float)
    if USE_NUMBA:
        return kde_logpdf_numba(sample, float(bandwidth), points)
    return kde_logpdf_numpy(sample, float(bandwidth), points)


# ---------------------------------------------------------------------------
# B-spline design matrix (Cox-de Boor)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def bspline_design_numba(x, knots, degree):
    n_basis = knots.shape[0] - degree - 1
    m = x.shape[0]
    out = np.zeros((m, n_basis))
    lo = knots[degree]
    hi = knots[n_basis]
    work = np.zeros(degree + 1)
    for r in range(m):
        xv = min(max(x[r], lo), hi)
        # knot span: largest mu with knots[mu] <= xv, capped to last span
        mu = degree
        while mu < n_basis - 1 and knots[mu + 1] <= xv:
            mu += 1
        work[:] = 0.0
        work[0] = 1.0
        for d in range(1, degree + 1):
            saved = 0.0
            for j in range(d):
                left = knots[mu + j + 1 - d]
                right = knots[mu + j + 1]
                denom = right - left
                term = 0.0
                if denom > 0.0:
                    term = work[j] / denom
                work[j] = saved + (right - xv) * term
                saved = (xv - left) * term
            work[d] = saved
        for j in range(degree + 1):
            out[r, mu - degree + j] = work[j]
    return out


def bspline_design_numpy(x, knots, degree):
    x = np.asarray(x, dtype=float)
    knots = np.asarray(knots, dtype=float)
    n_basis = knots.size - degree - 1
    lo, hi = knots[degree], knots[n_basis]
    xv = np.clip(x, lo, hi)
    # degree-0 indicators on half-open spans; the right end joins the last span
    span = np.searchsorted(knots, xv, side="right") - 1
    span = np.clip(span, degree, n_basis - 1)
    basis = np.zeros((x.size, knots.size - 1))
    basis[np.arange(x.size), span] = 1.0
    for d in range(1, degree + 1):
        nxt = np.zeros((x.size, knots.size - 1 - d))
        for i in range(knots.size - 1 - d):
            den_l = knots[i + d] - knots[i]
            den_r = knots[i + d + 1] - knots[i + 1]
            if den_l > 0:
                nxt[:, i] += (xv - knots[i]) / den_l * basis[:, i]
            if den_r > 0:
                nxt[:, i] += (knots[i + d + 1] - xv) / den_r * basis[:, i + 1]
        basis = nxt
    return basis[:, :n_basis]


def bspline_design(x, knots, degree):
    """Dense B-spline basis matrix, ``x`` clamped to the base interval."""
    x = np.ascontiguousarray(np.atleast_1d(x), dtype=float)
    knots = np.ascontiguousarray(knots, dtype=float)
    if USE_NUMBA:
        return bspline_design_numba(x, knots, int(degree))
    return bspline_design_numpy(x, knots, int(degree))
