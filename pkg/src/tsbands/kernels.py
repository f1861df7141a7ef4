"""Compactly supported smoothing kernels and their moment constants.

A kernel carries the two constants that enter every band width,

    psi = 1/2 * int u^2 K(u) du        (bias constant)
    phi = int K(u)^2 du                (variance constant)

so they are computed once at construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError, NumericError

__all__ = [
    "Kernel",
    "compute_moments",
    "integrate",
    "make_kernel",
    "make_epanechnikov",
    "make_biweight",
    "make_triweight",
    "make_fourth_order",
    "get_kernel",
]

SQRT2 = math.sqrt(2.0)


def _simpson(f, a, b, n):
    x = np.linspace(a, b, n + 1)
    y = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(y)):
        raise NumericError("non-finite integrand value during quadrature")
    h = (b - a) / n
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def integrate(f, a, b, breakpoints=(), tol=1e-12, max_level=24):
    """Composite Simpson rule with interval doubling.

    The range is split at `breakpoints` so each piece is smooth; on each
    piece the number of panels doubles until two successive estimates
    agree to within `tol`.
    """
    cuts = sorted({float(a), float(b), *(float(p) for p in breakpoints if a < p < b)})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        n = 8
        prev = _simpson(f, lo, hi, n)
        for _ in range(max_level):
            n *= 2
            cur = _simpson(f, lo, hi, n)
            if abs(cur - prev) < tol:
                break
            prev = cur
        else:
            raise NumericError(f"quadrature did not settle on [{lo}, {hi}]")
        total += cur
    return total


def compute_moments(kernel_fn, k0, breakpoints=()):
    """Return ``(psi, phi)`` for a kernel supported on ``[-k0, k0]``.

    Parameters
    ----------
    kernel_fn : callable
        Vectorised kernel, ``kernel_fn(u) -> ndarray``.
    k0 : float
        Support half-width.
    breakpoints : sequence of float, optional
        Points inside the support where the kernel is not smooth.
    """
    if not k0 > 0:
        raise InvalidInputError("k0 must be positive")
    psi = 0.5 * integrate(lambda u: u * u * kernel_fn(u), -k0, k0, breakpoints)
    phi = integrate(lambda u: kernel_fn(u) ** 2, -k0, k0, breakpoints)
    return float(psi), float(phi)


@dataclass(frozen=True)
class Kernel:
    """A symmetric kernel with support ``[-k0, k0]``.

    Calling the kernel evaluates it elementwise and returns 0 outside the
    support regardless of what the underlying formula would give there.
    """

    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    k0: float
    psi: float
    phi: float
    order: int = 2
    name: str = "custom"
    breakpoints: tuple = field(default=(), repr=False)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) <= self.k0
        return np.where(inside, self.func(np.where(inside, u, 0.0)), 0.0)

    evaluate = __call__

    def integral(self):
        return integrate(self, -self.k0, self.k0, self.breakpoints)


def make_kernel(func, k0, name="custom", order=2, breakpoints=()):
    """Wrap a kernel formula, computing and storing its moment constants."""
    k0 = float(k0)
    probe = Kernel(func, k0, 0.0, 0.0, order, name, tuple(breakpoints))
    psi, phi = compute_moments(probe, k0, breakpoints)
    return Kernel(func, k0, psi, phi, order, name, tuple(breakpoints))


def make_epanechnikov():
    return make_kernel(lambda u: 0.75 * (1.0 - u * u), 1.0, "epanechnikov")


def make_biweight():
    return make_kernel(lambda u: 15.0 / 16.0 * (1.0 - u * u) ** 2, 1.0, "biweight")


def make_triweight():
    return make_kernel(lambda u: 35.0 / 32.0 * (1.0 - u * u) ** 3, 1.0, "triweight")


def make_fourth_order(base):
    """Fourth-order kernel ``2 K(u) - K(u / sqrt 2) / sqrt 2``.

    Smoothing with this kernel is the same as combining two bandwidths
    ``b`` and ``sqrt(2) b`` of the base kernel so that the ``b^2`` bias
    terms cancel. Its support widens to ``sqrt(2) * base.k0``.
    """
    if base.order != 2:
        raise InvalidInputError("jackknife kernel requires a second-order base kernel")

    def func(u):
        return 2.0 * base(u) - base(u / SQRT2) / SQRT2

    inner = [p for bp in base.breakpoints for p in (bp, SQRT2 * bp)]
    breaks = (-base.k0, base.k0, *inner)
    return make_kernel(func, SQRT2 * base.k0, f"{base.name}*", order=4, breakpoints=breaks)


_FACTORIES = {
    "epanechnikov": make_epanechnikov,
    "biweight": make_biweight,
    "triweight": make_triweight,
}


def get_kernel(name):
    try:
        return _FACTORIES[name]()
    except KeyError:
        raise InvalidInputError(
            f"unknown kernel {name!r}; choose from {sorted(_FACTORIES)}"
        ) from None
