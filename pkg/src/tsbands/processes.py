"""Seeded data-generating processes and dependence diagnostics.

Randomness comes from numpy's ``PCG64`` bit generator; normal innovations
use numpy's ziggurat transform (``Generator.standard_normal``). A
``(seed, n)`` pair therefore always yields the same series. Per-replication
seeds are derived with :func:`derive_seed`, which hashes the master seed
and the replication index through ``numpy.random.SeedSequence``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.signal import fftconvolve

from .errors import InvalidInputError, StabilityError

__all__ = [
    "ProcessSpec",
    "Stability",
    "XiValue",
    "PowerTail",
    "DependenceProfile",
    "make_rng",
    "derive_seed",
    "innovations",
    "model1",
    "model2",
    "ar_arch",
    "arch",
    "linear",
    "farima",
    "generate",
    "simulate_linear",
    "farima_coefficients",
    "xi_n",
    "dependence_profile",
    "check_stability",
    "spec_to_text",
    "spec_from_text",
]

KINDS = ("nonlinear_ar", "arch", "linear", "farima")
DEFAULT_BURN_IN = 1000
DEFAULT_TRUNCATION = 10_000


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(master, index):
    """64-bit seed for replication ``index`` under ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def innovations(rng, size, dist="normal", df=5.0):
    """Draw mean-0, variance-1 innovations.

    ``dist`` is ``"normal"``, ``"student"`` (t with ``df > 2`` degrees of
    freedom rescaled to unit variance) or a callable ``(rng, size) -> array``.
    """
    if callable(dist):
        return np.asarray(dist(rng, size), dtype=float)
    if dist == "normal":
        return rng.standard_normal(size)
    if dist == "student":
        if not df > 2:
            raise InvalidInputError("student innovations need df > 2")
        return rng.standard_t(df, size) * math.sqrt((df - 2.0) / df)
    raise InvalidInputError(f"unknown innovation distribution {dist!r}")


# -- functional forms --------------------------------------------------------


def _mean_forms(form, coefs):
    """Vectorised value, derivative and scalar value of a mean map."""
    c = [float(v) for v in coefs]
    if form == "sine":
        (a,) = c
        return (lambda x: a * np.sin(x), lambda x: a * np.cos(x),
                lambda x: a * math.sin(x))
    if form == "poly":
        pc = np.asarray(c)
        dc = np.polynomial.polynomial.polyder(pc) if pc.size > 1 else np.zeros(1)

        def scalar(x):
            acc = 0.0
            for coef in reversed(c):
                acc = acc * x + coef
            return acc

        return (lambda x: np.polynomial.polynomial.polyval(x, pc),
                lambda x: np.polynomial.polynomial.polyval(x, dc), scalar)
    raise InvalidInputError(f"unknown mean form {form!r}")


@dataclass(frozen=True)
class ProcessSpec:
    """Description of a data-generating process.

    kind ``nonlinear_ar``
        ``Y_i = mu(Y_{i-1}) + sigma(Y_{i-1}) eps_i`` with
        ``params = {"mean": (form, coefs), "variance": coefs}``; ``form`` is
        ``"sine"`` (``a sin x``) or ``"poly"``, and ``variance`` holds the
        polynomial coefficients of ``sigma^2`` in ascending powers.
    kind ``arch``
        ``Y_i = eps_i sqrt(a^2 + b^2 Y_{i-1}^2)``; ``params = {"a", "b"}``.
    kind ``linear``
        ``X_i = sum_j a_j eta_{i-j}``; ``params = {"coeffs": [...]}``.
    kind ``farima``
        FARIMA(0, d, 0) truncated at ``params["truncation"]`` lags.
    """

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    burn_in: int = DEFAULT_BURN_IN
    innovation: str = "normal"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.burn_in < 0:
            raise InvalidInputError("burn_in must be >= 0")
        if self.kind == "farima" and not abs(self.params["d"]) < 0.5:
            raise InvalidInputError("FARIMA needs |d| < 1/2")

    def with_seed(self, seed):
        return ProcessSpec(self.kind, self.params, int(seed), self.burn_in, self.innovation)

    # vectorised mean / variance / derivatives for the recursive kinds
    def mean_fn(self):
        if self.kind == "arch":
            return lambda x: np.zeros_like(np.asarray(x, dtype=float))
        self._need_recursive()
        return _mean_forms(*self.params["mean"])[0]

    def variance_fn(self):
        if self.kind == "arch":
            a2, b2 = self.params["a"] ** 2, self.params["b"] ** 2
            return lambda x: a2 + b2 * np.asarray(x, dtype=float) ** 2
        self._need_recursive()
        vc = np.asarray(self.params["variance"], dtype=float)
        return lambda x: np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), vc)

    def sd_fn(self):
        var = self.variance_fn()
        return lambda x: np.sqrt(var(x))

    def derivatives(self):
        """Return vectorised ``mu'`` and ``sigma'``."""
        if self.kind == "arch":
            a2, b2 = self.params["a"] ** 2, self.params["b"] ** 2
            return (lambda x: np.zeros_like(x),
                    lambda x: b2 * x / np.sqrt(a2 + b2 * x * x))
        self._need_recursive()
        dmu = _mean_forms(*self.params["mean"])[1]
        vc = np.asarray(self.params["variance"], dtype=float)
        dvc = np.polynomial.polynomial.polyder(vc) if vc.size > 1 else np.zeros(1)
        P = np.polynomial.polynomial

        def dsigma(x):
            if vc.size == 1:
                return np.zeros_like(x)
            return P.polyval(x, dvc) / (2.0 * np.sqrt(P.polyval(x, vc)))

        return dmu, dsigma

    def _need_recursive(self):
        if self.kind not in ("nonlinear_ar", "arch"):
            raise InvalidInputError(f"{self.kind} process has no regression functions")


def model1(s=0.4, amplitude=0.9, seed=0, burn_in=DEFAULT_BURN_IN):
    """Nonlinear AR(1): ``Y_i = amplitude * sin(Y_{i-1}) + s eps_i``."""
    return ProcessSpec("nonlinear_ar", {"mean": ("sine", [amplitude]), "variance": [s * s]},
                       seed, burn_in)


def model2(seed=0, burn_in=DEFAULT_BURN_IN):
    """ARCH(1): ``Y_i = eps_i sqrt(0.4 + 0.2 Y_{i-1}^2)``."""
    return arch(math.sqrt(0.4), math.sqrt(0.2), seed, burn_in)


def arch(a, b, seed=0, burn_in=DEFAULT_BURN_IN):
    return ProcessSpec("arch", {"a": float(a), "b": float(b)}, seed, burn_in)


def ar_arch(mean_coefs=(0.00022, 0.138), variance_coefs=(0.000058, -0.0011, 0.257),
            seed=0, burn_in=DEFAULT_BURN_IN):
    """AR(1)-ARCH(1) with linear mean and quadratic conditional variance.

    The defaults are the coefficients fitted to daily S&P 500 log returns.
    """
    return ProcessSpec("nonlinear_ar",
                       {"mean": ("poly", list(mean_coefs)), "variance": list(variance_coefs)},
                       seed, burn_in)


def linear(coeffs, seed=0):
    return ProcessSpec("linear", {"coeffs": [float(c) for c in coeffs]}, seed, 0)


def farima(d, truncation=DEFAULT_TRUNCATION, seed=0):
    return ProcessSpec("farima", {"d": float(d), "truncation": int(truncation)}, seed, 0)


# -- generation ---------------------------------------------------------------


def _recurse(spec, total, eps):
    if spec.kind == "arch":
        a2, b2 = spec.params["a"] ** 2, spec.params["b"] ** 2

        def step(prev, e):
            return e * math.sqrt(a2 + b2 * prev * prev)
    else:
        mu = _mean_forms(*spec.params["mean"])[2]
        vc = [float(v) for v in spec.params["variance"]]
        if len(vc) == 1:
            s = math.sqrt(vc[0])

            def step(prev, e):
                return mu(prev) + s * e
        else:
            def step(prev, e):
                acc = 0.0
                for coef in reversed(vc):
                    acc = acc * prev + coef
                return mu(prev) + math.sqrt(acc) * e

    out = np.empty(total)
    prev = 0.0
    for i, e in enumerate(eps.tolist()):
        prev = step(prev, e)
        out[i] = prev
    return out


def generate(spec, n, force=False):
    """Simulate ``n`` values of the process and their lag-1 pairs.

    Recursive kinds start from ``Y_0 = 0`` and drop ``spec.burn_in`` values.

    Returns
    -------
    values : ndarray, shape (n,)
    pairs : ndarray, shape (n - 1, 2)
        Rows ``(Y_{i-1}, Y_i)``.
    """
    if n < 2:
        raise InvalidInputError("need n >= 2")
    if not force:
        stab = check_stability(spec)
        if not stab.stable:
            raise StabilityError(
                f"process fails the contraction condition (margin {stab.margin:.4g}); "
                "pass force=True to simulate anyway"
            )
    if spec.kind == "linear":
        values = simulate_linear(spec.params["coeffs"], n, spec.seed, spec.innovation)
    elif spec.kind == "farima":
        coeffs = farima_coefficients(spec.params["d"], spec.params["truncation"])
        values = simulate_linear(coeffs, n, spec.seed, spec.innovation)
    else:
        rng = make_rng(spec.seed)
        total = spec.burn_in + n
        eps = innovations(rng, total, spec.innovation)
        values = _recurse(spec, total, eps)[spec.burn_in:]
    pairs = np.column_stack([values[:-1], values[1:]])
    return values, pairs


def simulate_linear(coeffs, n, seed, innovation="normal"):
    """Moving-average filter ``X_i = sum_j a_j eta_{i-j}`` of iid innovations."""
    a = np.asarray(coeffs, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise InvalidInputError("coefficients must be a non-empty 1-d sequence")
    if not (np.all(np.isfinite(a)) and np.isfinite(np.sum(a * a))):
        raise InvalidInputError("coefficients must be finite and square-summable")
    rng = make_rng(seed)
    eta = innovations(rng, n + a.size - 1, innovation)
    if a.size > 64:
        return fftconvolve(eta, a, mode="valid")
    return np.convolve(eta, a, mode="valid")


def farima_coefficients(d, N):
    """MA coefficients ``Gamma(j+d) / (Gamma(j+1) Gamma(d))``, ``j = 0..N``.

    Uses ``a_j = a_{j-1} (j - 1 + d) / j`` to avoid Gamma overflow.
    """
    if not abs(d) < 0.5:
        raise InvalidInputError("need |d| < 1/2")
    if N < 0:
        raise InvalidInputError("need N >= 0")
    j = np.arange(1, N + 1, dtype=float)
    return np.concatenate([[1.0], np.cumprod((j - 1.0 + d) / j)])


# -- dependence measures ---------------------------------------------------------


class PowerTail(NamedTuple):
    """Dependence coefficients ``theta_i = scale * i^(-beta)``."""

    beta: float
    scale: float = 1.0


class XiValue(NamedTuple):
    value: float
    remainder: float
    remainder_bound: float


def _theta_array(theta, length):
    if isinstance(theta, PowerTail):
        i = np.arange(1, length + 1, dtype=float)
        return theta.scale * i ** (-theta.beta)
    t = np.asarray(theta, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise InvalidInputError("theta must be finite and nonnegative")
    out = np.zeros(length)
    k = min(length, t.size)
    out[:k] = t[:k]
    return out


def xi_n(theta, n, horizon=None):
    """``Xi_n = n Theta_{2n}^2 + sum_{k>=n} (Theta_{n+k} - Theta_k)^2``.

    ``theta`` is either a finite nonnegative sequence ``theta_1, theta_2,
    ...`` (zero beyond its end) or a :class:`PowerTail`. For a power tail
    the sum is computed exactly up to ``horizon`` and the remainder is
    replaced by an integral estimate; ``remainder_bound`` is an upper bound
    on the neglected part.
    """
    n = int(n)
    if n < 1:
        raise InvalidInputError("need n >= 1")
    if isinstance(theta, PowerTail):
        if not theta.beta > 0.5:
            raise InvalidInputError("power tail needs beta > 1/2 for Xi_n to be finite")
        horizon = max(10**6, 100 * n) if horizon is None else int(horizon)
    else:
        horizon = max(n, len(theta))
    th = _theta_array(theta, horizon + n)
    cum = np.concatenate([[0.0], np.cumsum(th)])
    k = np.arange(n, horizon + 1)
    diff = cum[n + k] - cum[k]
    finite = n * cum[2 * n] ** 2 + float(np.sum(diff * diff))
    if not isinstance(theta, PowerTail):
        return XiValue(finite, 0.0, 0.0)
    c2n2 = theta.scale**2 * n * n
    p = 2.0 * theta.beta - 1.0
    estimate = c2n2 * (horizon + 0.5 * n) ** (-p) / p
    bound = c2n2 * horizon ** (-p) / p
    return XiValue(finite + estimate, estimate, bound)


@dataclass
class DependenceProfile:
    theta: np.ndarray
    Theta: np.ndarray
    Xi: dict
    remainder_bounds: dict


def dependence_profile(theta, ns, length=None):
    ns = [int(v) for v in ns]
    length = length or (2 * max(ns) if isinstance(theta, PowerTail) else len(theta))
    th = _theta_array(theta, length)
    xi = {m: xi_n(theta, m) for m in ns}
    return DependenceProfile(th, np.cumsum(th), {m: v.value for m, v in xi.items()},
                             {m: v.remainder_bound for m, v in xi.items()})


# -- stability ------------------------------------------------------------------


class Stability(NamedTuple):
    stable: bool
    margin: float


def _stability_grid():
    far = np.logspace(2, 8, 25)
    return np.concatenate([-far[::-1], np.linspace(-50.0, 50.0, 2001), far])


def check_stability(spec, q=2.0, draws=100_000, seed=0):
    """Contraction check ``sup_x || mu'(x) + sigma'(x) eta ||_q < 1``.

    The L_q norm is a Monte Carlo average over ``draws`` innovations, which
    are centred and scaled to unit variance first; the supremum runs over a
    grid reaching ``|x| = 1e8``. ``margin = 1 - sup``.
    """
    if q < 1:
        raise InvalidInputError("q must be >= 1")
    if spec.kind == "farima":
        d = spec.params["d"]
        return Stability(abs(d) < 0.5, 0.5 - abs(d))
    if spec.kind == "linear":
        a = np.asarray(spec.params["coeffs"], dtype=float)
        return Stability(bool(np.isfinite(np.sum(a * a))), math.inf)
    x = _stability_grid()
    var = spec.variance_fn()(x)
    if np.any(var < 0) or (np.any(var == 0) and np.ptp(var) > 0):
        return Stability(False, -math.inf)
    dmu, dsig = spec.derivatives()
    a, c = dmu(x), dsig(x)
    eta = innovations(make_rng(seed), draws, spec.innovation)
    eta = (eta - eta.mean()) / eta.std()
    if q == 2:
        # E(a + c eta)^2 from the sample moments of the standardized draws
        norms = np.sqrt(np.maximum(a * a + 2 * a * c * eta.mean() + c * c * np.mean(eta**2), 0))
    else:
        norms = np.empty(x.size)
        for i in range(0, x.size, 50):
            blk = np.abs(a[i:i + 50, None] + c[i:i + 50, None] * eta[None, :]) ** q
            norms[i:i + 50] = blk.mean(axis=1) ** (1.0 / q)
    sup = float(norms.max())
    return Stability(sup < 1.0, 1.0 - sup)


# -- key = value serialization --------------------------------------------------


def _fmt(vals):
    return " ".join(repr(float(v)) for v in vals)


def spec_to_text(spec):
    lines = [f"kind = {spec.kind}"]
    p = spec.params
    if spec.kind == "nonlinear_ar":
        form, coefs = p["mean"]
        lines += [f"mean = {form} {_fmt(coefs)}", f"variance = {_fmt(p['variance'])}"]
    elif spec.kind == "arch":
        lines += [f"a = {p['a']!r}", f"b = {p['b']!r}"]
    elif spec.kind == "linear":
        lines += [f"coeffs = {_fmt(p['coeffs'])}"]
    else:
        lines += [f"d = {p['d']!r}", f"truncation = {p['truncation']}"]
    lines += [f"seed = {spec.seed}", f"burn_in = {spec.burn_in}",
              f"innovation = {spec.innovation}"]
    return "\n".join(lines) + "\n"


def spec_from_text(text):
    """Parse the ``key = value`` form written by :func:`spec_to_text`.

    Lines starting with ``#`` are ignored.
    """
    cp = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",))
    try:
        cp.read_string("[process]\n" + text)
    except configparser.Error as exc:
        raise InvalidInputError(f"cannot parse process config: {exc}") from None
    sec = cp["process"]
    kind = sec.get("kind", "").strip()
    nums = lambda key: [float(v) for v in sec[key].split()]  # noqa: E731
    if kind == "nonlinear_ar":
        form, *coefs = sec["mean"].split()
        params = {"mean": (form, [float(v) for v in coefs]), "variance": nums("variance")}
    elif kind == "arch":
        params = {"a": sec.getfloat("a"), "b": sec.getfloat("b")}
    elif kind == "linear":
        params = {"coeffs": nums("coeffs")}
    elif kind == "farima":
        params = {"d": sec.getfloat("d"),
                  "truncation": sec.getint("truncation", DEFAULT_TRUNCATION)}
    else:
        raise InvalidInputError(f"unknown or missing process kind {kind!r}")
    default_burn = 0 if kind in ("linear", "farima") else DEFAULT_BURN_IN
    return ProcessSpec(kind, params, sec.getint("seed", 0), sec.getint("burn_in", default_burn),
                       sec.get("innovation", "normal"))
