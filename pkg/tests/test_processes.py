import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from tsbands.errors import InvalidInputError, StabilityError
from tsbands.processes import (
    PowerTail,
    ProcessSpec,
    ar_arch,
    arch,
    check_stability,
    dependence_profile,
    derive_seed,
    farima,
    farima_coefficients,
    generate,
    innovations,
    linear,
    make_rng,
    model1,
    model2,
    simulate_linear,
    spec_from_text,
    spec_to_text,
    xi_n,
)


def test_noiseless_sine_stays_at_zero():
    values, pairs = generate(model1(s=0.0), 500)
    assert np.all(values == 0.0) and pairs.shape == (499, 2)


def test_pairs_are_lagged_values():
    values, pairs = generate(model1(seed=4), 50)
    assert np.array_equal(pairs[:, 0], values[:-1])
    assert np.array_equal(pairs[:, 1], values[1:])


def test_generate_deterministic():
    a, _ = generate(model2(seed=9), 1000)
    b, _ = generate(model2(seed=9), 1000)
    c, _ = generate(model2(seed=10), 1000)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert a.tobytes() == b.tobytes()


def test_generate_needs_two_values():
    with pytest.raises(InvalidInputError):
        generate(model1(), 1)


def test_model1_share_inside_interval():
    values, _ = generate(model1(seed=1), 100_000)
    share = np.mean(np.abs(values) <= 1.1)
    assert 0.92 <= share <= 0.95


def test_arch_stationary_variance():
    # E Y^2 = a^2 / (1 - b^2) = 0.4 / 0.8
    values, _ = generate(model2(seed=2), 1_000_000)
    assert abs(values.var() / 0.5 - 1.0) < 0.1


def test_unstable_spec_refused():
    spec = arch(1.0, 1.2)
    with pytest.raises(StabilityError):
        generate(spec, 100)
    values, _ = generate(spec, 20, force=True)
    assert values.size == 20


def test_stability_examples():
    s = check_stability(model1())
    assert s.stable and abs(s.margin - 0.1) < 1e-12
    s = check_stability(arch(1.0, 0.9))
    assert s.stable and abs(s.margin - 0.1) < 1e-9
    s = check_stability(arch(1.0, 1.2))
    assert not s.stable and abs(s.margin + 0.2) < 1e-9
    assert check_stability(ar_arch()).stable
    # || b eta ||_4 = b 3^(1/4), so q = 4 is stricter than q = 2
    assert not check_stability(arch(1.0, 0.9), q=4).stable
    assert check_stability(model2(), q=4).stable


def test_stability_long_memory():
    assert check_stability(farima(0.2)).stable


def test_innovations():
    rng = make_rng(0)
    z = innovations(rng, 200_000, "student", df=5)
    assert abs(z.var() - 1.0) < 0.05
    with pytest.raises(InvalidInputError):
        innovations(rng, 10, "cauchy")


def test_derive_seed():
    assert derive_seed(1, 0) == derive_seed(1, 0)
    assert len({derive_seed(1, i) for i in range(100)}) == 100
    assert derive_seed(1, 0) != derive_seed(2, 0)


# -- linear processes -------------------------------------------------------------


def test_identity_filter_returns_innovations():
    x = simulate_linear([1.0], 100, 5)
    assert np.array_equal(x, make_rng(5).standard_normal(100))


def test_filter_arithmetic():
    ones = lambda rng, size: np.ones(size)  # noqa: E731
    assert np.array_equal(simulate_linear([1.0, 1.0], 10, 0, ones), np.full(10, 2.0))


def test_long_filter_matches_direct():
    a = farima_coefficients(0.3, 200)
    fast = simulate_linear(a, 300, 7)
    eta = make_rng(7).standard_normal(300 + a.size - 1)
    direct = np.array([np.dot(a, eta[i:i + a.size][::-1]) for i in range(300)])
    assert np.max(np.abs(fast - direct)) < 1e-10


def test_farima_coefficients():
    a = farima_coefficients(0.2, 10)
    assert a[0] == 1.0 and a[1] == pytest.approx(0.2, abs=1e-15)
    direct = gamma(np.arange(11) + 0.2) / (gamma(np.arange(11) + 1.0) * gamma(0.2))
    assert np.allclose(a, direct, rtol=1e-12)
    assert np.array_equal(farima_coefficients(0.0, 5), [1, 0, 0, 0, 0, 0])
    assert np.all(farima_coefficients(0.45, 1000) > 0)
    with pytest.raises(InvalidInputError):
        farima_coefficients(0.5, 3)


def test_farima_stirling_limit():
    n = 100_000
    a = farima_coefficients(0.2, n)
    assert abs(a[n] * gamma(0.2) * n ** 0.8 - 1.0) <= 0.01


def _acov(x, lags):
    x = x - x.mean()
    return np.array([np.mean(x[:-k] * x[k:]) for k in lags])


def test_long_memory_autocovariance_decays_slowly():
    lags = np.arange(1, 101)
    lrd, _ = generate(farima(0.2, truncation=10_000, seed=3), 10_000)
    srd, _ = generate(farima(0.0, truncation=10_000, seed=3), 10_000)
    g_lrd = _acov(lrd, lags) / lrd.var()
    g_srd = _acov(srd, lags) / srd.var()
    assert g_lrd[9:].mean() > 0.015
    assert abs(g_srd[9:].mean()) < 0.008
    slope = np.polyfit(np.log(lags[:30]), np.log(g_lrd[:30]), 1)[0]
    assert -1.0 < slope < 0.0


# -- dependence measures ------------------------------------------------------------


def test_xi_zero():
    assert xi_n(np.zeros(50), 10).value == 0.0


def test_xi_brute_force():
    rng = np.random.default_rng(0)
    th = rng.uniform(0, 1, 30)
    n = 7
    Theta = lambda m: th[:m].sum()  # noqa: E731
    expect = n * Theta(2 * n) ** 2 + sum((Theta(n + k) - Theta(k)) ** 2 for k in range(n, 200))
    assert abs(xi_n(th, n).value - expect) < 1e-10


def test_xi_short_range_linear_growth():
    th = 0.5 ** np.arange(1, 200)
    ratios = [xi_n(th, n).value / n for n in (10, 30, 100, 300, 1000)]
    assert max(ratios) / min(ratios) < 1.5


def test_xi_local_slopes_approach_power_law():
    tail = PowerTail(0.8)
    ns = [10**2, 10**3, 10**4, 10**5]
    logs = [math.log(xi_n(tail, n).value) for n in ns]
    slopes = [(logs[i + 1] - logs[i]) / math.log(10) for i in range(3)]
    # slopes fall toward 3 - 2 beta = 1.4 as n grows
    assert slopes[0] > slopes[1] > slopes[2] > 1.4
    assert slopes[2] - 1.4 < 0.05


def test_xi_power_tail_remainder():
    v = xi_n(PowerTail(0.8), 100)
    assert 0 < v.remainder <= v.remainder_bound


def test_xi_rejects_divergent_tail():
    with pytest.raises(InvalidInputError):
        xi_n(PowerTail(0.5), 10)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=5, max_size=40), st.integers(1, 20),
       st.floats(0, 1))
def test_xi_monotone_in_theta(theta, n, extra):
    th = np.array(theta)
    bigger = th + extra
    assert xi_n(th, n).value <= xi_n(bigger, n).value * (1 + 1e-12) + 1e-12


def test_dependence_profile():
    prof = dependence_profile(0.5 ** np.arange(1, 50), [5, 10])
    assert np.all(np.diff(prof.Theta) >= 0)
    assert all(v >= 0 for v in prof.Xi.values())


# -- serialization ---------------------------------------------------------------------


@pytest.mark.parametrize("spec", [model1(seed=3), model2(), ar_arch(seed=5), linear([1, 0.5]),
                                  farima(0.25, truncation=500, seed=2)])
def test_spec_text_round_trip(spec):
    back = spec_from_text("# comment\n" + spec_to_text(spec))
    assert back == spec or spec_to_text(back) == spec_to_text(spec)
    a, _ = generate(spec, 200)
    b, _ = generate(back, 200)
    assert np.array_equal(a, b)


def test_spec_parse_errors():
    with pytest.raises(InvalidInputError):
        spec_from_text("kind = garch\n")
    with pytest.raises(InvalidInputError):
        ProcessSpec("farima", {"d": 0.7, "truncation": 10})


def test_process_functions():
    spec = ar_arch()
    assert spec.mean_fn()(0.0) == pytest.approx(0.00022)
    assert spec.variance_fn()(1.0) == pytest.approx(0.000058 - 0.0011 + 0.257)
    assert model2().variance_fn()(1.0) == pytest.approx(0.6)
