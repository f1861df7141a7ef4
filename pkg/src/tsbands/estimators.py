"""Kernel estimators for the regression model ``Y = mu(X) + sigma(X) eps``.

Nadaraya-Watson (local constant) estimates of the covariate density, the
mean and the conditional variance, their jackknife bias-corrected versions,
local linear fits, and the fourth-moment estimator of the errors.

Points where the estimated covariate density does not exceed the density
floor are *flagged*: their values are NaN and their indices are kept in
the estimate's ``floored`` mask, so grids keep their shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateDesignError,
    EmptyEstimateError,
    InvalidInputError,
)

__all__ = [
    "SampleSet",
    "CurveEstimate",
    "LocalLinearFit",
    "default_density_floor",
    "fit_grid",
    "density_nw",
    "mean_nw",
    "mean_jackknife",
    "jackknife_combine",
    "local_linear_fit",
    "local_linear_curve",
    "local_linear_jackknife",
    "variance_residual",
    "variance_jackknife",
    "nu_epsilon_hat",
    "nearest_grid_predict",
    "GridPredictor",
]

SQRT2 = math.sqrt(2.0)
VARIANCE_CLAMP = 1e-12
MAX_CONDITION = 1e12
# Upper bound on kernel-matrix entries held in memory at once.
_CHUNK_CELLS = 2_000_000


@dataclass(frozen=True)
class SampleSet:
    """Regression pairs ``(x_i, y_i)`` and the interval of interest."""

    x: np.ndarray
    y: np.ndarray
    interval: tuple = None

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float).ravel()
        y = np.ascontiguousarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise InvalidInputError("x and y must have the same length")
        if x.size < 2:
            raise InvalidInputError("a sample needs at least 2 pairs")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInputError("sample contains non-finite values")
        interval = self.interval
        if interval is None:
            interval = (float(x.min()), float(x.max()))
        t1, t2 = (float(v) for v in interval)
        if not t1 < t2:
            raise InvalidInputError(f"interval must satisfy T1 < T2, got {interval}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "interval", (t1, t2))

    @classmethod
    def from_pairs(cls, pairs, interval=None):
        arr = np.asarray(pairs, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InvalidInputError("pairs must have shape (n, 2)")
        return cls(arr[:, 0], arr[:, 1], interval)

    @property
    def n(self):
        return self.x.size

    def in_interval(self):
        t1, t2 = self.interval
        return (self.x >= t1) & (self.x <= t2)

    def with_response(self, y):
        return SampleSet(self.x, y, self.interval)


@dataclass
class CurveEstimate:
    """Values of an estimated curve on a grid.

    ``floored`` marks points whose covariate density was at or below the
    floor (values are NaN there). ``clamped`` marks variance values raised
    to the positivity clamp; those stay finite.
    """

    grid: np.ndarray
    values: np.ndarray
    bandwidth: float
    density: np.ndarray
    floored: np.ndarray
    clamped: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.clamped is None:
            self.clamped = np.zeros(self.grid.shape, dtype=bool)

    @property
    def floor_hits(self):
        return np.flatnonzero(self.floored | self.clamped)

    @property
    def valid(self):
        return ~self.floored

    def __len__(self):
        return self.grid.size


class LocalLinearFit(NamedTuple):
    intercept: float
    slope: float
    lam: float
    trace_term: float


def default_density_floor(x):
    """5% of a uniform density spread over the sample range."""
    x = np.asarray(x, dtype=float)
    width = float(x.max() - x.min())
    return 0.05 / width if width > 0 else 0.0


def fit_grid(x, count=300):
    """``count`` evenly spaced points over the range of ``x``.

    ``count=None`` returns the sorted distinct values of ``x`` instead, so
    a nearest-grid prediction at a sample point is the fit at that point.
    """
    x = np.asarray(x, dtype=float)
    if count is None:
        return np.unique(x)
    return np.linspace(x.min(), x.max(), int(count))


def _as_grid(grid):
    g = np.atleast_1d(np.asarray(grid, dtype=float))
    if g.size == 0:
        raise InvalidInputError("evaluation grid is empty")
    return g


def _check_bandwidth(b):
    if not (np.isfinite(b) and b > 0):
        raise InvalidInputError(f"bandwidth must be positive, got {b}")


def _resolve_floor(data, density_floor):
    return default_density_floor(data.x) if density_floor is None else float(density_floor)


def _weight_blocks(x, kernel, b, grid):
    """Yield ``(rows, weights, index)`` blocks of the kernel matrix.

    ``x`` must be sorted. Only the window of samples within the kernel's
    reach of each grid point is evaluated; ``index`` maps block columns to
    sample positions and padded cells carry weight 0.
    """
    n = x.size
    reach = kernel.k0 * b * (1.0 + 1e-9)
    lo = np.searchsorted(x, grid - reach, side="left")
    hi = np.searchsorted(x, grid + reach, side="right")
    width = int((hi - lo).max())
    if width == 0:
        yield slice(0, grid.size), np.zeros((grid.size, 1)), np.zeros((grid.size, 1), int)
        return
    rows = max(1, _CHUNK_CELLS // width)
    offsets = np.arange(width)
    for start in range(0, grid.size, rows):
        sl = slice(start, min(grid.size, start + rows))
        idx = lo[sl, None] + offsets
        pad = idx >= hi[sl, None]
        idx = np.minimum(idx, n - 1)
        w = kernel((grid[sl, None] - x[idx]) / b)
        w[pad] = 0.0
        yield sl, w, idx


def _sorted(x, *arrays):
    order = np.argsort(x, kind="stable")
    return (x[order], *(a[order] for a in arrays))


def _kernel_sums(x, responses, kernel, b, grid):
    """Return ``sum_i K((g - x_i)/b)`` and ``sum_i K((g - x_i)/b) r_i``.

    ``responses`` is a list of arrays; one weighted sum is returned for each.
    Sums run over the samples in sorted-x order, so results do not depend
    on the order of the input pairs.
    """
    xs, *rs = _sorted(x, *responses)
    m = grid.size
    weight_sum = np.empty(m)
    sums = [np.empty(m) for _ in rs]
    for sl, w, idx in _weight_blocks(xs, kernel, b, grid):
        weight_sum[sl] = w.sum(axis=1)
        for out, r in zip(sums, rs):
            out[sl] = (w * r[idx]).sum(axis=1)
    return weight_sum, sums


def density_nw(data, kernel, bandwidth, grid):
    """Kernel density estimate ``(n b)^-1 sum_i K((x - X_i)/b)`` on a grid."""
    _check_bandwidth(bandwidth)
    g = _as_grid(grid)
    wsum, _ = _kernel_sums(data.x, [], kernel, bandwidth, g)
    dens = wsum / (data.n * bandwidth)
    return CurveEstimate(g, dens, float(bandwidth), dens.copy(), np.zeros(g.size, bool))


def _nw_parts(data, kernel, b, g):
    wsum, (ysum,) = _kernel_sums(data.x, [data.y], kernel, b, g)
    scale = data.n * b
    return ysum / scale, wsum / scale


def _ratio_curve(g, num, dens, floored, b):
    # no weight at all is floored whatever the floor
    floored = floored | (dens == 0)
    if floored.all():
        raise EmptyEstimateError("every grid point is at or below the density floor")
    values = np.full(g.size, np.nan)
    ok = ~floored
    values[ok] = num[ok] / dens[ok]
    return CurveEstimate(g, values, float(b), dens, floored)


def mean_nw(data, kernel, bandwidth, grid, density_floor=None):
    """Nadaraya-Watson estimate of ``E(Y | X = x)`` on a grid.

    Parameters
    ----------
    data : SampleSet
    kernel : Kernel
    bandwidth : float
    grid : array_like
    density_floor : float, optional
        Points with estimated density ``<=`` this value are flagged.
        Defaults to ``default_density_floor(data.x)``.
    """
    _check_bandwidth(bandwidth)
    g = _as_grid(grid)
    floor = _resolve_floor(data, density_floor)
    num, dens = _nw_parts(data, kernel, bandwidth, g)
    return _ratio_curve(g, num, dens, dens <= floor, bandwidth)


def jackknife_combine(narrow, wide, dens_narrow=None, dens_wide=None):
    """Combine estimates at bandwidths ``b`` and ``sqrt(2) b``.

    Without densities this is ``2 * narrow - wide``. With densities the two
    curves are weighted by them, which makes the result identical to a
    local constant fit with the fourth-order kernel; the two forms agree
    wherever the two density estimates coincide.
    """
    narrow = np.asarray(narrow, dtype=float)
    wide = np.asarray(wide, dtype=float)
    if dens_narrow is None:
        return 2.0 * narrow - wide
    fn = np.asarray(dens_narrow, dtype=float)
    fw = np.asarray(dens_wide, dtype=float)
    return (2.0 * fn * narrow - fw * wide) / (2.0 * fn - fw)


def mean_jackknife(data, kernel, bandwidth, grid, density_floor=None):
    """Bias-corrected mean estimate from bandwidths ``b`` and ``sqrt(2) b``.

    The returned ``density`` is the density estimate assembled from the
    same two bandwidths, ``2 f_b - f_{sqrt(2) b}``. A point is flagged when
    either constituent density or the combined one is at or below the floor.
    """
    if kernel.order != 2:
        raise InvalidInputError("jackknife correction needs a second-order kernel")
    _check_bandwidth(bandwidth)
    g = _as_grid(grid)
    floor = _resolve_floor(data, density_floor)
    s1, f1 = _nw_parts(data, kernel, bandwidth, g)
    s2, f2 = _nw_parts(data, kernel, SQRT2 * bandwidth, g)
    fstar = 2.0 * f1 - f2
    floored = (f1 <= floor) | (f2 <= floor) | (fstar <= floor)
    return _ratio_curve(g, 2.0 * s1 - s2, fstar, floored, bandwidth)


def _per_sample(predictor, x):
    if callable(predictor):
        out = np.asarray(predictor(x), dtype=float)
    else:
        out = np.asarray(predictor, dtype=float)
    if out.shape != x.shape:
        raise InvalidInputError("predictor must supply one value per sample")
    return out


def variance_residual(data, mean_predictor, kernel, h, grid, density_floor=None):
    """Local constant smooth of squared residuals ``(Y_i - mu(X_i))^2``.

    ``mean_predictor`` is either a callable evaluated at the sample X's or
    an array holding the fitted mean at each sample.
    """
    resid = data.y - _per_sample(mean_predictor, data.x)
    return mean_nw(data.with_response(resid * resid), kernel, h, grid, density_floor)


def _clamp(curve):
    low = curve.valid & (curve.values < VARIANCE_CLAMP)
    curve.values[low] = VARIANCE_CLAMP
    curve.clamped = low
    return curve


def variance_jackknife(data, mean_predictor, kernel, h, grid, density_floor=None):
    """Bias-corrected variance estimate, clamped below at 1e-12.

    Clamped points keep the value 1e-12 and are reported in ``clamped``.
    """
    resid = data.y - _per_sample(mean_predictor, data.x)
    curve = mean_jackknife(data.with_response(resid * resid), kernel, h, grid, density_floor)
    return _clamp(curve)


def nu_epsilon_hat(data, mean_predictor, sd_predictor):
    """Estimate ``E(eps^4) - 1`` from standardized residuals with X in T."""
    inside = data.in_interval()
    if not inside.any():
        raise EmptyEstimateError("no sample covariate falls inside the interval")
    x = data.x[inside]
    mu = _per_sample(mean_predictor, x)
    sd = _per_sample(sd_predictor, x)
    if not np.all(sd > 0):
        raise InvalidInputError("standard deviation predictor must be positive inside T")
    eps = (data.y[inside] - mu) / sd
    return float(np.mean(eps**4) - 1.0)


def nearest_grid_predict(curve, x):
    """Value of ``curve`` at the grid point nearest to ``x``.

    Flagged (NaN) grid points are skipped; exact ties go to the lower index.
    Accepts a scalar or an array of query points.
    """
    ok = np.isfinite(curve.values)
    if not ok.any():
        raise EmptyEstimateError("curve has no usable grid point")
    gv = curve.grid[ok]
    vv = curve.values[ok]
    q = np.asarray(x, dtype=float)
    hi = np.clip(np.searchsorted(gv, q, side="left"), 0, gv.size - 1)
    lo = np.clip(hi - 1, 0, gv.size - 1)
    take_lo = np.abs(q - gv[lo]) <= np.abs(gv[hi] - q)
    out = np.where(take_lo, vv[lo], vv[hi])
    return float(out) if out.ndim == 0 else out


class GridPredictor:
    """Callable wrapper around :func:`nearest_grid_predict`."""

    def __init__(self, curve, transform=None):
        self.curve = curve
        self.transform = transform

    def __call__(self, x):
        out = nearest_grid_predict(self.curve, x)
        return out if self.transform is None else self.transform(out)


# -- local linear regression ------------------------------------------------


def local_linear_fit(data, kernel, bandwidth, x):
    """Weighted least-squares line at ``x`` and the two RSC ingredients.

    Returns
    -------
    LocalLinearFit
        ``intercept`` and ``slope`` of the local line in ``X - x``,
        ``lam``, the (0, 0) entry of ``S^-1 S* S^-1`` with ``S = X'KX`` and
        ``S* = X'K^2X``, and ``trace_term = trace(K - K X S^-1 X' K)``.
    """
    _check_bandwidth(bandwidth)
    w = kernel((data.x - x) / bandwidth)
    if np.count_nonzero(w) < 2:
        raise DegenerateDesignError(f"fewer than 2 weighted points at x={x}")
    design = np.column_stack([np.ones(data.n), data.x - x])
    s = design.T @ (w[:, None] * design)
    s_star = design.T @ ((w * w)[:, None] * design)
    if np.linalg.cond(s) > MAX_CONDITION:
        raise DegenerateDesignError(f"singular local design at x={x}")
    s_inv = np.linalg.inv(s)
    beta = s_inv @ (design.T @ (w * data.y))
    lam = (s_inv @ s_star @ s_inv)[0, 0]
    trace_term = w.sum() - np.trace(s_inv @ s_star)
    return LocalLinearFit(float(beta[0]), float(beta[1]), float(lam), float(trace_term))


def _local_linear_stats(data, kernel, b, points):
    """Vectorised local linear fits at many points.

    Returns intercepts, slopes, lambda, trace terms, weighted residual sums
    of squares, weighted-point counts and a mask of degenerate designs.
    """
    m = points.size
    out = {k: np.full(m, np.nan) for k in ("a", "c", "lam", "tr", "rss")}
    count = np.zeros(m, dtype=int)
    bad = np.zeros(m, dtype=bool)
    xs, ys = _sorted(data.x, data.y)
    for sl, w, idx in _weight_blocks(xs, kernel, b, points):
        d = xs[idx] - points[sl, None]
        y = ys[idx]
        w2 = w * w
        s0, s1, s2 = w.sum(1), (w * d).sum(1), (w * d * d).sum(1)
        q0, q1, q2 = w2.sum(1), (w2 * d).sum(1), (w2 * d * d).sum(1)
        t0, t1 = (w * y).sum(1), (w * d * y).sum(1)
        det = s0 * s2 - s1 * s1
        half_tr = 0.5 * (s0 + s2)
        disc = np.sqrt(0.25 * (s0 - s2) ** 2 + s1 * s1)
        lmin, lmax = half_tr - disc, half_tr + disc
        cnt = np.count_nonzero(w, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(lmin > 0, lmax / lmin, np.inf)
            ok = (cnt >= 2) & (cond <= MAX_CONDITION)
            a = (s2 * t0 - s1 * t1) / det
            c = (s0 * t1 - s1 * t0) / det
            lam = (s2 * s2 * q0 - 2 * s1 * s2 * q1 + s1 * s1 * q2) / det**2
            tr = s0 - (s2 * q0 - 2 * s1 * q1 + s0 * q2) / det
            r = y - a[:, None] - c[:, None] * d
            rss = (w * r * r).sum(1)
        for key, val in zip(("a", "c", "lam", "tr", "rss"), (a, c, lam, tr, rss)):
            out[key][sl] = np.where(ok, val, np.nan)
        count[sl] = cnt
        bad[sl] = ~ok
    return out, count, bad


def local_linear_curve(data, kernel, bandwidth, grid, density_floor=None):
    """Local linear estimate of the regression function on a grid."""
    _check_bandwidth(bandwidth)
    g = _as_grid(grid)
    floor = _resolve_floor(data, density_floor)
    stats, _, bad = _local_linear_stats(data, kernel, bandwidth, g)
    dens = density_nw(data, kernel, bandwidth, g).values
    floored = bad | (dens <= floor)
    if floored.all():
        raise EmptyEstimateError("every grid point is degenerate or below the density floor")
    values = np.where(floored, np.nan, stats["a"])
    return CurveEstimate(g, values, float(bandwidth), dens, floored)


def local_linear_jackknife(data, kernel, bandwidth, grid, density_floor=None, clamp=False):
    """``2 m_b - m_{sqrt(2) b}`` with local linear fits at both bandwidths."""
    narrow = local_linear_curve(data, kernel, bandwidth, grid, density_floor)
    wide = local_linear_curve(data, kernel, SQRT2 * bandwidth, grid, density_floor)
    floored = narrow.floored | wide.floored
    if floored.all():
        raise EmptyEstimateError("every grid point is degenerate or below the density floor")
    values = np.where(floored, np.nan, jackknife_combine(narrow.values, wide.values))
    curve = CurveEstimate(narrow.grid, values, float(bandwidth), narrow.density, floored)
    return _clamp(curve) if clamp else curve
