"""First-moment oracles: many-to-one formulas evaluated by erfc and quadrature.

These never touch the particle engine; they are the independent side of the
engine-vs-oracle comparisons.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erfc

from .phase import ModelParams

BETA_ONE_SWITCH = 1e-9


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    rule: str = "adaptive"  # "adaptive" (QUADPACK Gauss-Kronrod) or "simpson"
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if self.rule not in ("adaptive", "simpson"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


def gaussian_sf(x):
    """P(N(0,1) >= x) via erfc; keeps full relative accuracy in the upper tail."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def _sf_scaled(x, var):
    return float(gaussian_sf(x / math.sqrt(var))) if var > 0 else float(x <= 0)


def expected_type1_above(params: ModelParams, t: float, x: float) -> float:
    """E #{type-1 particles at time t at or above x}."""
    if not t > 0:
        raise ValueError("t must be positive")
    return math.exp(params.beta * t) * _sf_scaled(x, params.sigma2 * t)


def expected_type2_count(params: ModelParams, t: float) -> float:
    if not t > 0:
        raise ValueError("t must be positive")
    b = params.beta
    if abs(b - 1.0) < BETA_ONE_SWITCH:
        return params.alpha * t * math.exp(t)
    return params.alpha * (math.exp(b * t) - math.exp(t)) / (b - 1.0)


def _integrate(f, lo, hi, quad: QuadratureSpec):
    if quad.rule == "adaptive":
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(f, lo, hi, epsabs=quad.abs_tol,
                                          epsrel=quad.rel_tol, limit=quad.max_subdivisions)
            except integrate.IntegrationWarning as exc:
                raise QuadratureError(
                    f"adaptive quadrature did not converge within "
                    f"max_subdivisions={quad.max_subdivisions}: {exc}") from None
        return val, err
    n = 16
    prev = None
    while n <= 2 * quad.max_subdivisions:
        xs = np.linspace(lo, hi, n + 1)
        cur = integrate.simpson([f(x) for x in xs], x=xs)
        if prev is not None:
            err = abs(cur - prev) / 15.0
            if err <= max(quad.abs_tol, quad.rel_tol * abs(cur)):
                return cur, err
        prev = cur
        n *= 2
    raise QuadratureError(
        f"Simpson rule did not reach tolerance within max_subdivisions={quad.max_subdivisions}")


def expected_type2_above(params: ModelParams, t: float, x: float,
                         quad: QuadratureSpec = QuadratureSpec(),
                         return_error: bool = False):
    """E #{type-2 particles at time t at or above x} (multitype many-to-one).

    A type-2 particle founded at time s has travelled ``sigma B_s`` as type 1
    and then ``B_t - B_s``: its position is centred Gaussian with variance
    ``sigma2 s + (t - s)``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    b, s2, a = params.beta, params.sigma2, params.alpha
    if a == 0.0:
        return (0.0, 0.0) if return_error else 0.0

    def integrand(s):
        return math.exp(b * s + (t - s)) * _sf_scaled(x, s2 * s + (t - s))

    val, err = _integrate(integrand, 0.0, t, quad)
    val, err = a * val, a * err
    return (val, err) if return_error else val


def gaussian_tail_bound(x: float):
    """``(P(B_1 >= x), exp(-x^2/2) / (sqrt(2 pi) x))`` for ``x > 0``."""
    if not x > 0:
        raise ValueError("the Mills-ratio bound needs x > 0")
    return float(gaussian_sf(x)), math.exp(-0.5 * x * x) / (math.sqrt(2.0 * math.pi) * x)


def ld_first_moment(rho: float, t: float, y: float = 0.0) -> float:
    """Markov bound ``e^t P(B_t >= rho t + y)`` on ``P(M_t >= rho t + y)``."""
    if not rho > math.sqrt(2.0):
        raise ValueError("rho must exceed sqrt(2)")
    if not rho * t + y > 0:
        raise ValueError("need rho t + y > 0")
    return math.exp(t) * float(gaussian_sf((rho * t + y) / math.sqrt(t)))
