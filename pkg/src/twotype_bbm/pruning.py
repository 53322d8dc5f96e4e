"""Threshold curves for the front-window pruning of the engine.

A curve pair ``(curve1, curve2)`` sampled on a uniform time grid tells the
kernel to discard a type-i particle at time ``s`` when it sits below
``curve_i(s)``.  Two constructions are offered:

* ``linear``: ``v s - gap`` for both types, ``v`` the front speed.
* ``target``: fix a level ``L`` at the horizon and drop a particle once the
  expected number of its descendants above ``L`` at the horizon is below
  ``eps``.  The induced error on any event ``{some particle above x}`` with
  ``x >= L`` is at most ``eps`` times the number of pruned particles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erfc
from scipy.stats import norm

from .phase import ModelParams, front_params, SQRT2

N_GRID = 513
_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


@dataclass(frozen=True)
class PruneCurves:
    grid_dt: float
    curve1: np.ndarray
    curve2: np.ndarray
    level: float = float("nan")  # target level, nan in linear mode

    @staticmethod
    def none() -> "PruneCurves":
        e = np.empty(0)
        return PruneCurves(1.0, e, e)

    @property
    def active(self) -> bool:
        return self.curve1.size > 0


def front_proxy(params: ModelParams, start_type: int):
    """(speed, log coefficient) of the front the window follows."""
    if start_type == 2:
        return SQRT2, 3.0 / (2.0 * SQRT2)
    fp = front_params(params)
    return fp.v, fp.log_coeff


def linear_curves(params: ModelParams, t_max: float, gap: float,
                  start_type: int = 1, n_grid: int = N_GRID) -> PruneCurves:
    if not gap > 0:
        raise ValueError("prune gap must be positive")
    if t_max <= 0:
        return PruneCurves.none()
    v, _ = front_proxy(params, start_type)
    s = np.linspace(0.0, t_max, n_grid)
    c = v * s - gap
    return PruneCurves(t_max / (n_grid - 1), c, c.copy())


def ystar_type2(tau, eps: float):
    """Distance ``y`` with ``e^tau P(B_tau >= y) = eps``."""
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    pos = tau > 0
    out[pos] = np.sqrt(tau[pos]) * norm.isf(eps * np.exp(-tau[pos]))
    return out


def _type1_descendants_above(tau, y, beta, s2, alpha):
    # expected number of descendants (both types) above y after time tau
    tau = np.asarray(tau, dtype=float)[:, None]
    y = np.asarray(y, dtype=float)[:, None]
    own = np.exp(beta * tau) * 0.5 * erfc(y / np.sqrt(2.0 * s2 * tau))
    r = 0.5 * tau * (_GL_X[None, :] + 1.0)
    var = s2 * r + (tau - r)
    integrand = np.exp(beta * r + (tau - r)) * 0.5 * erfc(y / np.sqrt(2.0 * var))
    spawned = alpha * 0.5 * tau[:, 0] * (integrand @ _GL_W)
    return own[:, 0] + spawned


@lru_cache(maxsize=256)
def _ystar_type1_cached(beta, s2, alpha, eps, taus):
    tau = np.array(taus)
    out = np.zeros_like(tau)
    pos = tau > 0
    t = tau[pos]
    lo = np.zeros_like(t)
    hi = np.maximum(ystar_type2(t, eps), np.sqrt(s2 * t) * norm.isf(eps * np.exp(-beta * t)))
    hi = hi + 1.0
    for _ in range(60):
        bad = _type1_descendants_above(t, hi, beta, s2, alpha) > eps
        if not bad.any():
            break
        hi = np.where(bad, 2.0 * hi, hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        above = _type1_descendants_above(t, mid, beta, s2, alpha) > eps
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    out[pos] = hi
    out.flags.writeable = False
    return out


def ystar_type1(params: ModelParams, tau, eps: float):
    tau = np.asarray(tau, dtype=float)
    res = _ystar_type1_cached(params.beta, params.sigma2, params.alpha, float(eps),
                              tuple(tau.ravel().tolist()))
    return res.reshape(tau.shape).copy()


def target_curves(params: ModelParams, t_max: float, level: float, eps: float,
                  start_type: int = 1, n_grid: int = N_GRID) -> PruneCurves:
    """Curves keeping every particle whose descendants may reach ``level``.

    Node values use the remaining time of the next node back, so the linear
    interpolation the kernel applies never prunes more than the exact rule.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    if t_max <= 0:
        return PruneCurves.none()
    s = np.linspace(0.0, t_max, n_grid)
    dt = t_max / (n_grid - 1)
    tau = t_max - s + dt
    y2 = ystar_type2(tau, eps)
    if start_type == 2:
        y1 = y2
    else:
        y1 = ystar_type1(params, tau, eps)
    return PruneCurves(dt, level - y1, level - y2, float(level))


def default_level(params: ModelParams, t_max: float, gap: float, start_type: int = 1) -> float:
    """``v t - c log t - gap``: the gap is measured below the centering term."""
    v, lc = front_proxy(params, start_type)
    return v * t_max - lc * math.log(max(t_max, 1.0)) - gap
