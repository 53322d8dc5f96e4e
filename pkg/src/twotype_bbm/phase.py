"""Phase diagram, speeds and centering terms of the two-type reducible BBM.

Type-2 particles have branching rate 1 and diffusion 1; type-1 particles have
branching rate ``beta``, diffusion ``sigma2`` and spawn type-2 children at rate
``alpha``.  Everything here is a pure function of :class:`ModelParams`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Optional

import numpy as np
from numba import njit

SQRT2 = math.sqrt(2.0)
EPS_REGION = 1e-12


class BoundaryError(ValueError):
    """Raised when a quantity is requested on a phase boundary."""


class Region(str, Enum):
    C_I = "C_I"
    C_II = "C_II"
    C_III = "C_III"
    BOUNDARY_I_III = "Boundary_I_III"
    BOUNDARY_II_III = "Boundary_II_III"
    BOUNDARY_I_II = "Boundary_I_II"

    @property
    def is_boundary(self) -> bool:
        return self.value.startswith("Boundary")


@dataclass(frozen=True)
class ModelParams:
    beta: float
    sigma2: float
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be positive, got {self.beta!r}")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2!r}")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be non-negative, got {self.alpha!r}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class FrontParams:
    region: Region
    v: float
    theta: float
    p_star: float
    a_star: Optional[float]
    b_star: Optional[float]
    log_coeff: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["region"] = self.region.value
        return d


def _near(x: float, target: float, eps: float) -> bool:
    return abs(x - target) <= eps * max(1.0, abs(target))


def classify(params: ModelParams, eps: float = EPS_REGION) -> Region:
    """Return the region of ``(beta, sigma2)``, or a boundary tag on equality.

    The anomalous region requires ``beta > 1``; for ``beta <= 1`` its two
    defining inequalities are not the intended description (they would
    overlap C_I), so the state space there splits along ``sigma2 = 1/beta``.
    """
    beta, s2 = params.beta, params.sigma2
    if beta <= 1.0:
        edge = 1.0 / beta
        if _near(s2, edge, eps):
            return Region.BOUNDARY_I_II
        return Region.C_I if s2 > edge else Region.C_II
    upper = beta / (2.0 * beta - 1.0)
    if _near(s2, upper, eps):
        return Region.BOUNDARY_I_III
    if s2 > upper:
        return Region.C_I
    if beta < 2.0:
        lower = 2.0 - beta
        if _near(s2, lower, eps):
            return Region.BOUNDARY_II_III
        if s2 < lower:
            return Region.C_II
    return Region.C_III


# Closed forms per region; they are evaluated off-region by the continuity checks.

def speed_type1(beta: float, sigma2: float) -> float:
    return math.sqrt(2.0 * beta * sigma2)


def speed_anomalous(beta: float, sigma2: float) -> float:
    return (beta - sigma2) / math.sqrt(2.0 * (beta - 1.0) * (1.0 - sigma2))


def theta_anomalous(beta: float, sigma2: float) -> float:
    return math.sqrt(2.0 * (beta - 1.0) / (1.0 - sigma2))


def switch_fraction(beta: float, sigma2: float) -> float:
    return (sigma2 + beta - 2.0) / (2.0 * (beta - 1.0) * (1.0 - sigma2))


def front_params(params: ModelParams, eps: float = EPS_REGION) -> FrontParams:
    region = classify(params, eps)
    beta, s2 = params.beta, params.sigma2
    if region is Region.C_I:
        theta = math.sqrt(2.0 * beta / s2)
        return FrontParams(region, speed_type1(beta, s2), theta, 1.0,
                           speed_type1(beta, s2), None, 3.0 / (2.0 * theta))
    if region is Region.C_II:
        return FrontParams(region, SQRT2, SQRT2, 0.0, None, SQRT2,
                           3.0 / (2.0 * SQRT2))
    if region is Region.C_III:
        theta = theta_anomalous(beta, s2)
        return FrontParams(region, speed_anomalous(beta, s2), theta,
                           switch_fraction(beta, s2), s2 * theta, theta, 0.0)
    raise BoundaryError(
        f"unsupported boundary {region.value} at beta={beta}, sigma2={s2}: "
        "speeds and centering are only defined inside the open regions")


def centering(params: ModelParams, t: float) -> float:
    """Median proxy ``v t - log_coeff * log t`` for ``M_t``."""
    if not t > 1.0:
        raise ValueError(f"centering needs t > 1, got {t!r}")
    fp = front_params(params)
    return fp.v * t - fp.log_coeff * math.log(t)


# ---------------------------------------------------------------------------
# Independent numerical routes to the speed

def _best_b(p, a, beta, sigma2):
    # largest b satisfying the joint constraint for fixed (p, a), p < 1
    slack = p * (beta - a * a / (2.0 * sigma2))
    return np.sqrt(2.0 + 2.0 * slack / (1.0 - p))


def _objective(p, a, beta, sigma2):
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    val = np.empty(np.broadcast(p, a).shape)
    p, a = np.broadcast_arrays(p, a)
    top = p >= 1.0
    val[top] = a[top]
    lo = ~top
    val[lo] = p[lo] * a[lo] + (1.0 - p[lo]) * _best_b(p[lo], a[lo], beta, sigma2)
    return val


def brute_force_speed(params: ModelParams, grid_step: float = 1e-3,
                      coarse_step: float = 0.02, rounds: int = 2):
    """Grid maximisation of ``p a + (1-p) b`` under the rate constraints.

    ``p`` and ``a`` are gridded; for each pair the objective is increasing in
    ``b``, so the largest feasible ``b`` is used.  A coarse grid is refined
    ``rounds`` times around the running argmax, the last round at spacing
    ``grid_step``.  Returns ``(p, a, b, value)``; ``b`` is ``nan`` at p = 1.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    beta, s2 = params.beta, params.sigma2
    a_max = speed_type1(beta, s2)
    coarse_step = max(coarse_step, grid_step)
    shrink = (coarse_step / grid_step) ** (1.0 / rounds) if rounds else 1.0

    ps = np.linspace(0.0, 1.0, int(round(1.0 / coarse_step)) + 1)
    as_ = np.linspace(-a_max, a_max, int(np.ceil(2 * a_max / coarse_step)) + 1)
    step = coarse_step
    best = (0.0, 0.0, -np.inf)
    for k in range(rounds + 1):
        if k > 0:
            new = step / shrink if k < rounds else grid_step
            p0, a0 = best[0], best[1]
            ps = np.arange(p0 - 3 * step, p0 + 3 * step + new / 2, new)
            ps = np.union1d(np.clip(ps, 0.0, 1.0), [p0])
            as_ = np.arange(a0 - 3 * step, a0 + 3 * step + new / 2, new)
            as_ = np.union1d(np.clip(as_, -a_max, a_max), [a0])
            step = new
        P, A = np.meshgrid(ps, as_, indexing="ij")
        vals = _objective(P, A, beta, s2)
        i = np.unravel_index(np.argmax(vals), vals.shape)
        if vals[i] >= best[2]:
            best = (float(P[i]), float(A[i]), float(vals[i]))
    p, a, value = best
    # p = 0, b = sqrt(2) is always feasible
    assert value >= SQRT2 - 1e-12, "feasible set lost the p=0 point"
    b = float(_best_b(p, a, beta, s2)) if p < 1.0 else float("nan")
    return p, a, b, value


@njit(cache=True)
def _hull_chain(x, y):
    keep = np.empty(len(x), dtype=np.int64)
    m = 0
    for i in range(len(x)):
        if m > 0 and x[keep[m - 1]] == x[i]:
            continue  # sorted by (x, y): the first point per x is the lowest
        while m >= 2:
            j, k = keep[m - 2], keep[m - 1]
            cross = (x[k] - x[j]) * (y[i] - y[j]) - (y[k] - y[j]) * (x[i] - x[j])
            if cross <= 0.0:
                m -= 1
            else:
                break
        keep[m] = i
        m += 1
    return keep[:m]


def lower_convex_hull(x: np.ndarray, y: np.ndarray):
    """Monotone-chain lower hull; returns the hull vertices sorted by ``x``."""
    order = np.lexsort((y, x))
    x = np.ascontiguousarray(x[order], dtype=float)
    y = np.ascontiguousarray(y[order], dtype=float)
    idx = _hull_chain(x, y)
    return x[idx], y[idx]


def speed_via_envelope(params: ModelParams, grid_step: float = 1e-3) -> float:
    """Largest zero of the convex minorant of both rate functions."""
    beta, s2 = params.beta, params.sigma2
    a_max = speed_type1(beta, s2)
    half = 2.0 * a_max + 2.0 * SQRT2
    xs = np.arange(-half, half + grid_step / 2, grid_step)
    x1 = np.union1d(xs[np.abs(xs) <= a_max], [-a_max, a_max])
    y1 = x1 * x1 / (2.0 * s2) - beta
    y2 = xs * xs / 2.0 - 1.0
    hx, hy = lower_convex_hull(np.concatenate([x1, xs]), np.concatenate([y1, y2]))
    # hull is convex: the last sign change from <= 0 to > 0 is the speed
    idx = np.nonzero((hy[:-1] <= 0.0) & (hy[1:] > 0.0))[0]
    if len(idx) == 0:
        raise RuntimeError("envelope never crosses zero on the sampled range")
    k = idx[-1]
    x0, x1_, y0, y1_ = hx[k], hx[k + 1], hy[k], hy[k + 1]
    return float(x0 - y0 * (x1_ - x0) / (y1_ - y0))
