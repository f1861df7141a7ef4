"""Simultaneous confidence bands for the mean and variance functions.

A band is ``center +/- cutoff * unit_width`` on a finite grid. ``cutoff``
is either the extreme-value quantile ``B_m(z_alpha)`` or the finite-sample
quantile of the maximum of ``m`` independent ``|N(0, 1)|`` variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import NamedTuple

import numpy as np

from . import estimators as est
from .errors import DegenerateGridError, EmptyEstimateError, InvalidInputError
from .kernels import make_fourth_order

__all__ = [
    "EvaluationGrid",
    "ConfidenceBand",
    "Violation",
    "Validation",
    "build_grid",
    "even_grid",
    "resolve_grid",
    "asymptotic_cutoff",
    "finite_sample_cutoff",
    "cutoff_value",
    "inverse_normal_cdf",
    "scb_mean",
    "scb_variance",
    "mean_band_parts",
    "variance_band_parts",
    "validate_parametric",
    "polynomial",
]

CUTOFF_KINDS = ("asymptotic", "finite_sample")
_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class EvaluationGrid:
    points: np.ndarray
    spacing_rule: str

    @property
    def m(self):
        return self.points.size


def build_grid(t1, t2, k0, bandwidth):
    """Grid ``T1 + 2 k0 b j`` for ``j = 0 .. m-1``, ``m = ceil((T2-T1)/(2 k0 b))``.

    Pass the support half-width of the kernel actually used: for the
    jackknife estimator that is ``sqrt(2) * k0`` of the base kernel.
    """
    if not t1 < t2:
        raise InvalidInputError("need T1 < T2")
    if not (k0 > 0 and bandwidth > 0):
        raise InvalidInputError("k0 and bandwidth must be positive")
    step = 2.0 * k0 * bandwidth
    # round before ceil so 2.2/0.2 = 11.000000000000002 counts as 11
    m = math.ceil(round((t2 - t1) / step, 9))
    if m < 1:
        raise DegenerateGridError("bandwidth too large for the interval")
    return EvaluationGrid(t1 + step * np.arange(m), "spacing_2k0b")


def even_grid(t1, t2, k):
    """``k`` evenly spaced points over ``[T1, T2]``, endpoints included."""
    if not t1 < t2:
        raise InvalidInputError("need T1 < T2")
    if k < 1:
        raise DegenerateGridError("grid needs at least one point")
    return EvaluationGrid(np.linspace(t1, t2, int(k)), "even_k")


def resolve_grid(spec, interval, k0=None, bandwidth=None):
    """Turn a grid specification into an :class:`EvaluationGrid`.

    ``spec`` may be an ``EvaluationGrid``, an integer ``k`` (even grid),
    a string ``"k=20"``, or ``"2k0b"`` for the ``2 k0 b`` spacing.
    """
    if isinstance(spec, EvaluationGrid):
        return spec
    t1, t2 = interval
    if isinstance(spec, str):
        s = spec.strip().lower()
        if s == "2k0b":
            return build_grid(t1, t2, k0, bandwidth)
        if s.startswith("k="):
            s = s[2:]
        try:
            spec = int(s)
        except ValueError:
            raise InvalidInputError(f"bad grid specification {spec!r}") from None
    return even_grid(t1, t2, int(spec))


def inverse_normal_cdf(p):
    """Standard normal quantile.

    Backed by the rational approximation in :class:`statistics.NormalDist`
    (Wichura's AS241, accurate to about 1e-16).
    """
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"probability must lie in (0, 1), got {p}")
    return _STD_NORMAL.inv_cdf(p)


def asymptotic_cutoff(m, alpha):
    """``B_m(z_alpha)`` with ``z_alpha = -log log (1 - alpha)^(-1/2)``."""
    if m < 2:
        raise InvalidInputError("asymptotic cutoff needs m >= 2")
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    z = -math.log(math.log((1.0 - alpha) ** -0.5))
    return extreme_value_norming(m, z)


def extreme_value_norming(m, z):
    r = math.sqrt(2.0 * math.log(m))
    return r - (0.5 * math.log(math.log(m)) + math.log(2.0 * math.sqrt(math.pi))) / r + z / r


def finite_sample_cutoff(m, alpha):
    """Quantile ``q`` with ``P(max_i |Z_i| <= q) = 1 - alpha`` for ``m`` iid normals."""
    if m < 1:
        raise InvalidInputError("finite-sample cutoff needs m >= 1")
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must lie in (0, 1)")
    return inverse_normal_cdf(0.5 * (1.0 + (1.0 - alpha) ** (1.0 / m)))


def cutoff_value(kind, m, alpha):
    if kind == "asymptotic":
        return asymptotic_cutoff(m, alpha)
    if kind == "finite_sample":
        return finite_sample_cutoff(m, alpha)
    raise InvalidInputError(f"cutoff kind must be one of {CUTOFF_KINDS}, got {kind!r}")


@dataclass
class ConfidenceBand:
    """A symmetric band on a grid.

    ``floored`` points (density floor hit, or unusable variance) are kept
    in the arrays but excluded from validation. ``meta`` records how the
    band was built (bandwidths, nu_eps, n, density floor, ...).
    """

    grid: EvaluationGrid
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    cutoff: float
    cutoff_kind: str
    target: str
    floored: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def x(self):
        return self.grid.points

    @property
    def floor_hits(self):
        return np.flatnonzero(self.floored)

    def half_width(self):
        return self.upper - self.center


class BandParts(NamedTuple):
    """Center and unit half-width (the half-width at cutoff 1)."""

    grid: EvaluationGrid
    center: np.ndarray
    unit: np.ndarray
    floored: np.ndarray
    meta: dict


def _assemble(parts, alpha, cutoff_kind, target):
    cutoff = cutoff_value(cutoff_kind, parts.grid.m, alpha)
    half = cutoff * parts.unit
    center = parts.center
    return ConfidenceBand(
        parts.grid, center, center - half, center + half, 1.0 - alpha,
        cutoff, cutoff_kind, target, parts.floored, dict(parts.meta),
    )


def _mean_predictor(data, kernel, b, floor, fit_points):
    curve = est.mean_jackknife(data, kernel, b, est.fit_grid(data.x, fit_points), floor)
    return est.GridPredictor(curve)


def _sd_predictor(data, kernel, h, mean_predictor, floor, fit_points):
    curve = est.variance_jackknife(
        data, mean_predictor, kernel, h, est.fit_grid(data.x, fit_points), floor
    )
    return est.GridPredictor(curve, np.sqrt)


def mean_band_parts(data, kernel, b, grid=20, sd=None, h=None,
                    density_floor=None, fit_points=300):
    """Center and unit half-width of the mean band.

    ``sd`` supplies sigma on the grid: a callable, an array of grid values,
    or None to estimate it from the residuals of a jackknife mean fit with
    bandwidth ``h`` (default ``b``).
    """
    floor = est._resolve_floor(data, density_floor)
    kstar = make_fourth_order(kernel)
    grid = resolve_grid(grid, data.interval, kstar.k0, b)
    g = grid.points
    center = est.mean_jackknife(data, kernel, b, g, floor)
    h = b if h is None else h
    if sd is None:
        mu_hat = _mean_predictor(data, kernel, b, floor, fit_points)
        var = est.variance_jackknife(data, mu_hat, kernel, h, g, floor)
        sd_vals = np.sqrt(var.values)
        sd_bad = var.floored
    else:
        sd_vals = np.asarray(sd(g) if callable(sd) else sd, dtype=float)
        if sd_vals.shape != g.shape:
            raise InvalidInputError("sd must supply one value per grid point")
        sd_bad = ~np.isfinite(sd_vals)
    floored = center.floored | sd_bad
    if floored.all():
        raise EmptyEstimateError("every band point is floored")
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = math.sqrt(kstar.phi) * sd_vals / np.sqrt(data.n * b * center.density)
    unit = np.where(floored, np.nan, unit)
    meta = {"n": data.n, "b": float(b), "h": float(h), "density_floor": floor,
            "kernel": kernel.name, "interval": list(data.interval)}
    return BandParts(grid, center.values, unit, floored, meta)


def variance_band_parts(data, kernel, h, grid=20, mean_predictor=None, nu_eps=None,
                        b=None, density_floor=None, fit_points=300, scale=None):
    """Center and unit half-width of the variance band.

    Without ``mean_predictor`` the mean is a jackknife fit with bandwidth
    ``b`` (default ``h``), read off a ``fit_points`` grid by nearest point.
    Without ``nu_eps`` it is estimated from standardized residuals with X
    in the interval. ``scale`` replaces the center in the half-width, e.g.
    the true variance for oracle runs; a callable or grid values.
    """
    floor = est._resolve_floor(data, density_floor)
    kstar = make_fourth_order(kernel)
    grid = resolve_grid(grid, data.interval, kstar.k0, h)
    g = grid.points
    b = h if b is None else b
    if mean_predictor is None:
        mean_predictor = _mean_predictor(data, kernel, b, floor, fit_points)
    center = est.variance_jackknife(data, mean_predictor, kernel, h, g, floor)
    if nu_eps is None:
        sd_hat = _sd_predictor(data, kernel, h, mean_predictor, floor, fit_points)
        nu_eps = est.nu_epsilon_hat(data, mean_predictor, sd_hat)
    if not nu_eps > 0:
        raise InvalidInputError(f"nu_eps must be positive, got {nu_eps}")
    floored = center.floored
    if scale is None:
        scale_vals = center.values
    else:
        scale_vals = np.asarray(scale(g) if callable(scale) else scale, dtype=float)
        if scale_vals.shape != g.shape:
            raise InvalidInputError("scale must supply one value per grid point")
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = (math.sqrt(kstar.phi * nu_eps) * scale_vals
                / np.sqrt(data.n * h * center.density))
    unit = np.where(floored, np.nan, unit)
    meta = {"n": data.n, "h": float(h), "b": float(b), "nu_eps": float(nu_eps),
            "density_floor": floor, "kernel": kernel.name,
            "interval": list(data.interval), "clamped": center.clamped.nonzero()[0].tolist()}
    return BandParts(grid, center.values, unit, floored, meta)


def scb_mean(data, kernel, b, alpha=0.05, cutoff_kind="finite_sample", grid=20, sd=None,
             h=None, density_floor=None, fit_points=300):
    """Simultaneous band for the regression function.

    The center is the jackknife estimate at bandwidth ``b``; the half-width
    at ``x`` is ``cutoff * sqrt(phi*) * sigma(x) / sqrt(n b f*(x))`` with
    ``phi*`` and ``f*`` taken from the fourth-order kernel.
    """
    parts = mean_band_parts(data, kernel, b, grid, sd, h, density_floor, fit_points)
    return _assemble(parts, alpha, cutoff_kind, "mean")


def scb_variance(data, kernel, h, alpha=0.05, cutoff_kind="finite_sample", grid=20,
                 mean_predictor=None, nu_eps=None, b=None, density_floor=None,
                 fit_points=300, scale=None):
    """Simultaneous band for the conditional variance.

    Half-width ``cutoff * sqrt(phi* nu_eps) * s2(x) / sqrt(n h f*(x))`` where
    ``s2`` is the jackknife variance estimate (the band center) unless
    ``scale`` supplies it.
    """
    parts = variance_band_parts(data, kernel, h, grid, mean_predictor, nu_eps, b,
                                density_floor, fit_points, scale)
    return _assemble(parts, alpha, cutoff_kind, "variance")


class Violation(NamedTuple):
    x: float
    value: float
    lower: float
    upper: float


class Validation(NamedTuple):
    verdict: str
    violations: list

    @property
    def accepted(self):
        return self.verdict == "accept"


def validate_parametric(band, candidate):
    """Accept ``candidate`` iff it lies inside the band at every usable grid point."""
    ok = ~band.floored
    if not ok.any():
        raise EmptyEstimateError("band has no usable grid point")
    x = band.grid.points
    vals = np.asarray(candidate(x), dtype=float) * np.ones_like(x)
    out = ok & ~((band.lower <= vals) & (vals <= band.upper))
    violations = [Violation(float(x[i]), float(vals[i]), float(band.lower[i]),
                            float(band.upper[i])) for i in np.flatnonzero(out)]
    return Validation("reject" if violations else "accept", violations)


def polynomial(coefs):
    """Callable for ``c0 + c1 x + c2 x^2 + ...``."""
    c = np.asarray(coefs, dtype=float)
    return lambda x: np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), c)
