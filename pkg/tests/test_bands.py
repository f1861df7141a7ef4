import math

import numpy as np
import pytest

from tsbands import bands
from tsbands.bands import (
    asymptotic_cutoff,
    build_grid,
    even_grid,
    extreme_value_norming,
    finite_sample_cutoff,
    inverse_normal_cdf,
    polynomial,
    resolve_grid,
    scb_mean,
    scb_variance,
    validate_parametric,
)
from tsbands.errors import DegenerateGridError, EmptyEstimateError, InvalidInputError
from tsbands.estimators import SampleSet, density_nw
from tsbands.kernels import make_epanechnikov, make_fourth_order
from tsbands.processes import arch, generate, model1, model2

K = make_epanechnikov()
KS = make_fourth_order(K)


@pytest.fixture(scope="module")
def model1_data():
    _, pairs = generate(model1(seed=3), 2501)
    return SampleSet(pairs[:, 0], pairs[:, 1], (-1.1, 1.1))


@pytest.fixture(scope="module")
def model2_data():
    _, pairs = generate(model2(seed=3), 2501)
    return SampleSet(pairs[:, 0], pairs[:, 1], (-1.0, 1.0))


# -- grids ---------------------------------------------------------------------


def test_build_grid_examples():
    g = build_grid(-1.1, 1.1, 1.0, 0.1)
    assert g.m == 11
    assert np.allclose(g.points, -1.1 + 0.2 * np.arange(11))
    assert g.points[-1] <= 1.1
    one = build_grid(0.0, 1.0, 1.0, 0.5)
    assert one.m == 1 and one.points[0] == 0.0


def test_jackknife_grid_spacing():
    g = build_grid(-1.0, 1.0, KS.k0, 0.1)
    assert np.allclose(np.diff(g.points), 2 * math.sqrt(2) * 0.1)


def test_build_grid_errors():
    with pytest.raises(InvalidInputError):
        build_grid(1.0, 0.0, 1.0, 0.1)
    with pytest.raises(InvalidInputError):
        build_grid(0.0, 1.0, 1.0, -0.1)


def test_even_grid_and_resolve():
    g = even_grid(-1.0, 1.0, 20)
    assert g.m == 20 and g.points[0] == -1.0 and g.points[-1] == 1.0
    assert resolve_grid("k=20", (-1, 1)).m == 20
    assert resolve_grid(30, (-1, 1)).m == 30
    assert resolve_grid("2k0b", (-1.1, 1.1), 1.0, 0.1).m == 11
    with pytest.raises(InvalidInputError):
        resolve_grid("nonsense", (-1, 1))


def test_degenerate_grid():
    with pytest.raises((DegenerateGridError, InvalidInputError)):
        even_grid(0.0, 1.0, 0)


# -- cutoffs ---------------------------------------------------------------------


def test_cutoff_published_values():
    assert abs(finite_sample_cutoff(20, 0.05) - 3.016) <= 0.001
    assert abs(asymptotic_cutoff(20, 0.05) - 3.203) <= 0.001


def test_cutoff_other_examples():
    assert abs(finite_sample_cutoff(1, 0.05) - 1.960) <= 0.001
    assert abs(finite_sample_cutoff(100, 0.05) - 3.48) <= 0.01
    z_alpha = -math.log(math.log(0.95 ** -0.5))
    assert abs(z_alpha - 3.663) < 1e-3
    r = math.sqrt(2 * math.log(20))
    closed = r - (0.5 * math.log(math.log(20)) + math.log(2 * math.sqrt(math.pi))) / r
    assert abs(extreme_value_norming(20, 0.0) - closed) < 1e-12
    assert abs(closed - 1.707) < 1e-3


def test_cutoff_domain():
    with pytest.raises(InvalidInputError):
        asymptotic_cutoff(1, 0.05)
    with pytest.raises(InvalidInputError):
        finite_sample_cutoff(0, 0.05)
    with pytest.raises(InvalidInputError):
        finite_sample_cutoff(5, 1.5)


def test_finite_cutoff_monotone():
    ms = [1, 2, 5, 10, 20, 50, 100, 500]
    alphas = [0.01, 0.05, 0.1, 0.2]
    for a in alphas:
        vals = [finite_sample_cutoff(m, a) for m in ms]
        assert all(u < v for u, v in zip(vals, vals[1:]))
    for m in ms:
        vals = [finite_sample_cutoff(m, a) for a in alphas]
        assert all(u > v for u, v in zip(vals, vals[1:]))


def test_asymptotic_exceeds_finite():
    for m in range(10, 101):
        for a in (0.01, 0.05, 0.10):
            assert asymptotic_cutoff(m, a) > finite_sample_cutoff(m, a)


def test_finite_cutoff_monte_carlo_law():
    rng = np.random.default_rng(2024)
    m, a, draws = 20, 0.05, 1_000_000
    q = finite_sample_cutoff(m, a)
    hits = 0
    for _ in range(10):
        z = np.abs(rng.standard_normal((draws // 10, m))).max(axis=1)
        hits += int(np.count_nonzero(z <= q))
    freq = hits / draws
    se = math.sqrt(0.95 * 0.05 / draws)
    assert abs(freq - 0.95) <= 3 * se


def test_inverse_normal_cdf():
    from statistics import NormalDist

    assert inverse_normal_cdf(0.5) == 0.0
    assert abs(inverse_normal_cdf(0.975) - 1.959964) < 1e-5
    assert abs(inverse_normal_cdf(0.998719) - 3.016) < 1e-3
    for p in (1e-10, 1e-4, 0.01, 0.3, 0.7, 0.99, 1 - 1e-10):
        assert abs(NormalDist().cdf(inverse_normal_cdf(p)) - p) <= 1e-9
    for p in (0.0, 1.0, -0.1):
        with pytest.raises(InvalidInputError):
            inverse_normal_cdf(p)


# -- bands -------------------------------------------------------------------------


def test_mean_band_half_width_identity(model1_data):
    d = model1_data
    b = 0.15
    band = scb_mean(d, K, b)
    ok = ~band.floored
    assert np.allclose(band.upper - band.center, band.center - band.lower, rtol=0, atol=1e-15)
    assert np.all(band.lower[ok] <= band.center[ok]) and np.all(band.center[ok] <= band.upper[ok])
    # rebuild sigma-hat the way the band does: jackknife mean, then jackknife variance
    from tsbands.estimators import GridPredictor, fit_grid, mean_jackknife, variance_jackknife

    mu = GridPredictor(mean_jackknife(d, K, b, fit_grid(d.x, 300)))
    sd = np.sqrt(variance_jackknife(d, mu, K, b, band.x).values)
    fstar = density_nw(d, KS, b, band.x).values
    lhs = (band.upper - band.lower)[ok] * np.sqrt(d.n * b * fstar[ok]) / (
        2 * math.sqrt(KS.phi) * sd[ok])
    assert np.allclose(lhs, band.cutoff, rtol=0, atol=1e-10)


def test_mean_band_with_true_sd(model1_data):
    d = model1_data
    b = 0.15
    sd = model1().sd_fn()
    band = scb_mean(d, K, b, sd=sd)
    ok = ~band.floored
    fstar = density_nw(d, KS, b, band.x).values
    lhs = (band.upper - band.lower)[ok] * np.sqrt(d.n * b * fstar[ok]) / (
        2 * math.sqrt(KS.phi) * sd(band.x[ok]))
    assert np.allclose(lhs, band.cutoff, rtol=0, atol=1e-10)


def test_mean_band_zero_sd(model1_data):
    band = scb_mean(model1_data, K, 0.15, sd=lambda x: np.zeros_like(x))
    ok = ~band.floored
    assert np.array_equal(band.lower[ok], band.center[ok])
    assert np.array_equal(band.upper[ok], band.center[ok])


def test_variance_band_identity_and_nu_scaling(model2_data):
    d = model2_data
    h = 0.2
    one = scb_variance(d, K, h, nu_eps=2.0)
    two = scb_variance(d, K, h, nu_eps=4.0)
    ok = ~one.floored
    fstar = density_nw(d, KS, h, one.x).values
    lhs = (one.upper - one.lower)[ok] * np.sqrt(d.n * h * fstar[ok]) / (
        2 * math.sqrt(KS.phi * 2.0) * one.center[ok])
    assert np.allclose(lhs, one.cutoff, rtol=0, atol=1e-10)
    assert np.allclose(two.half_width()[ok], math.sqrt(2) * one.half_width()[ok],
                       rtol=1e-14, atol=0)
    with pytest.raises(InvalidInputError):
        scb_variance(d, K, h, nu_eps=0.0)


def test_cutoff_kind_selects_value(model1_data):
    a = scb_mean(model1_data, K, 0.15, cutoff_kind="asymptotic")
    f = scb_mean(model1_data, K, 0.15, cutoff_kind="finite_sample")
    assert a.cutoff == asymptotic_cutoff(20, 0.05)
    assert f.cutoff == finite_sample_cutoff(20, 0.05)
    with pytest.raises(InvalidInputError):
        scb_mean(model1_data, K, 0.15, cutoff_kind="bonferroni")


def test_support_spaced_grid_band(model1_data):
    band = scb_mean(model1_data, K, 0.1, grid="2k0b")
    assert band.grid.m == math.ceil(2.2 / (2 * KS.k0 * 0.1))


def test_center_always_accepted(model1_data, model2_data):
    for band in (scb_mean(model1_data, K, 0.12), scb_mean(model1_data, K, 0.2),
                 scb_variance(model2_data, K, 0.2), scb_variance(model2_data, K, 0.3)):
        centre = dict(zip(band.x, band.center))
        res = validate_parametric(band, lambda x: np.array([centre[v] for v in x]))
        assert res.accepted and res.violations == []


def test_single_violation_reported(model1_data):
    band = scb_mean(model1_data, K, 0.15)
    ok = np.flatnonzero(~band.floored)
    j = ok[len(ok) // 2]
    bumped = band.center.copy()
    bumped[j] = band.upper[j] + 1e-3
    lookup = dict(zip(band.x, bumped))
    res = validate_parametric(band, lambda x: np.array([lookup[v] for v in x]))
    assert res.verdict == "reject" and len(res.violations) == 1
    assert res.violations[0].x == band.x[j]


def test_floored_points_excluded():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 0.2, 3000)
    d = SampleSet(x, np.sin(x) + 0.3 * rng.standard_normal(3000), (-1, 1))
    band = scb_mean(d, K, 0.1, sd=lambda v: 0.3 + 0 * v)
    assert band.floored[-1] and np.isnan(band.center[-1])
    res = validate_parametric(band, lambda v: np.where(v > 0.6, 1e9, np.sin(v)))
    assert all(v.x <= 0.6 for v in res.violations)


def test_empty_band_raises():
    d = SampleSet([0.0, 0.01, 0.02], [1.0, 1.0, 1.0], (5.0, 6.0))
    with pytest.raises(EmptyEstimateError):
        scb_mean(d, K, 0.1, sd=lambda v: 1 + 0 * v)


def test_constant_variance_rejected_on_arch_data():
    spec = arch(math.sqrt(0.4), math.sqrt(0.2), seed=11)
    _, pairs = generate(spec, 14001)
    d = SampleSet(pairs[:, 0], pairs[:, 1], (-1.0, 1.0))
    band = scb_variance(d, K, 0.2)
    inside = d.in_interval()
    constant = np.mean(d.y[inside] ** 2)
    assert not validate_parametric(band, lambda x: constant + 0 * x).accepted
    assert validate_parametric(band, polynomial([0.4, 0.0, 0.2])).accepted


def test_polynomial():
    p = polynomial([1.0, 2.0, 3.0])
    assert np.array_equal(p(np.array([0.0, 1.0, 2.0])), [1.0, 6.0, 17.0])


def test_variance_band_scale_override(model2_data):
    d = model2_data
    truth = model2().variance_fn()
    est = scb_variance(d, K, 0.2, nu_eps=2.0)
    oracle = scb_variance(d, K, 0.2, nu_eps=2.0, scale=truth)
    ok = ~est.floored
    assert np.array_equal(est.center, oracle.center, equal_nan=True)
    ratio = oracle.half_width()[ok] / est.half_width()[ok]
    assert np.allclose(ratio, truth(est.x[ok]) / est.center[ok], rtol=1e-12)
    with pytest.raises(InvalidInputError):
        scb_variance(d, K, 0.2, nu_eps=2.0, scale=np.ones(3))
