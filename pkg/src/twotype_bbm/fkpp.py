"""Explicit finite differences for the coupled F-KPP system

    u_t = (sigma2/2) u_xx - beta u (1 - u) - alpha u (1 - v)
    v_t = (1/2) v_xx - v (1 - v)

with step data u = v = 1 on x < -A and 0 on x > A (linear in between).
The zero state invades, so fronts run towards -infinity.  The grid is kept
in the reflected coordinate y = -x, where fronts advance to the right, and
the complements q = 1 - u, r = 1 - v are integrated instead of u, v: the
leading edge is then stored as small numbers rather than as 1 - tiny.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from numba import njit

from .phase import ModelParams

SAFETY = 0.9


class PdeError(RuntimeError):
    pass


@dataclass
class PdeGrid:
    dx: float
    dt: float
    y_lo: float  # left end of the window in the reflected coordinate
    q: np.ndarray  # 1 - u
    r: np.ndarray  # 1 - v
    t: float = 0.0

    @property
    def u(self) -> np.ndarray:
        return 1.0 - self.q

    @property
    def v(self) -> np.ndarray:
        return 1.0 - self.r

    @property
    def y(self) -> np.ndarray:
        return self.y_lo + self.dx * np.arange(self.q.size)

    @property
    def x(self) -> np.ndarray:
        """Nodes in the original coordinate (decreasing)."""
        return -self.y


def stable_dt(params: ModelParams, dx: float, safety: float = SAFETY) -> float:
    return safety * dx * dx / (2.0 * max(params.sigma2 / 2.0, 0.5))


def initial_grid(params: ModelParams, dx: float = 0.05, width: float = 400.0,
                 A: float = 10.0, dt: Optional[float] = None,
                 y_lo: Optional[float] = None) -> PdeGrid:
    if not dx > 0:
        raise ValueError("dx must be positive")
    dt = stable_dt(params, dx) if dt is None else dt
    if dt > stable_dt(params, dx, 1.0) * SAFETY * (1 + 1e-12):
        raise ValueError("dt violates the stability bound")
    n = int(round(width / dx)) + 1
    y_lo = -width / 2.0 if y_lo is None else y_lo
    y = y_lo + dx * np.arange(n)
    # u = 0 for x > A (y < -A) and u = 1 for x < -A, linear in between
    q = np.clip((A - y) / (2.0 * A), 0.0, 1.0)
    q = np.ascontiguousarray(q)
    return PdeGrid(dx, dt, y_lo, q, q.copy())


@njit(cache=True)
def _advance(q, r, n_steps, dt, dx, d1, beta, alpha, check_every):
    n = q.size
    lq = np.empty(n)
    lr = np.empty(n)
    c = dt / (dx * dx)
    status = 0
    for k in range(n_steps):
        for i in range(n):
            im = i - 1 if i > 0 else 1
            ip = i + 1 if i < n - 1 else n - 2
            lq[i] = q[im] - 2.0 * q[i] + q[ip]
            lr[i] = r[im] - 2.0 * r[i] + r[ip]
        for i in range(n):
            qi = q[i]
            ri = r[i]
            q[i] = qi + d1 * c * lq[i] + dt * (beta * qi * (1.0 - qi) + alpha * (1.0 - qi) * ri)
            r[i] = ri + 0.5 * c * lr[i] + dt * ri * (1.0 - ri)
            if not (q[i] >= 0.0 and q[i] <= 1.0 and r[i] >= 0.0 and r[i] <= 1.0):
                if math.isnan(q[i]) or math.isnan(r[i]):
                    return 2, k
                return 1, k
        if check_every > 0 and (k + 1) % check_every == 0:
            for i in range(n - 1):
                if q[i + 1] > q[i] + 1e-15 or r[i + 1] > r[i] + 1e-15:
                    return 3, k
    return status, n_steps


_MESSAGES = {1: "range violation (values left [0, 1])",
             2: "NaN encountered",
             3: "front lost monotonicity"}


def _raise(code, grid, k):
    raise PdeError(f"{_MESSAGES[code]} at step {k} (t={grid.t:.6g}, dx={grid.dx}, "
                   f"dt={grid.dt:.3g}, q range [{grid.q.min():.3g}, {grid.q.max():.3g}], "
                   f"r range [{grid.r.min():.3g}, {grid.r.max():.3g}])")


def advance(grid: PdeGrid, params: ModelParams, n_steps: int,
            monotone_check: int = 100) -> PdeGrid:
    """``n_steps`` explicit Euler steps in place; returns the grid."""
    code, k = _advance(grid.q, grid.r, int(n_steps), grid.dt, grid.dx,
                       params.sigma2 / 2.0, params.beta, params.alpha, monotone_check)
    grid.t += grid.dt * k
    if code:
        _raise(code, grid, k)
    return grid


def step(grid: PdeGrid, params: ModelParams, dt: Optional[float] = None) -> PdeGrid:
    """One explicit Euler step, returning a new grid.

    Centred second differences with reflecting (Neumann) ends and pointwise
    reactions.  ``dt`` defaults to the grid's step.
    """
    dt = grid.dt if dt is None else dt
    if dt > stable_dt(params, grid.dx, 1.0) * (1 + 1e-12):
        raise PdeError(f"dt={dt} exceeds the explicit stability bound")
    q, r = grid.q, grid.r
    qp = np.concatenate([[q[1]], q, [q[-2]]])
    rp = np.concatenate([[r[1]], r, [r[-2]]])
    lq = (qp[:-2] - 2.0 * q + qp[2:]) / grid.dx ** 2
    lr = (rp[:-2] - 2.0 * r + rp[2:]) / grid.dx ** 2
    with np.errstate(all="ignore"):
        qn = q + dt * (0.5 * params.sigma2 * lq + params.beta * q * (1.0 - q)
                       + params.alpha * (1.0 - q) * r)
        rn = r + dt * (0.5 * lr + r * (1.0 - r))
    out = replace(grid, q=qn, r=rn, t=grid.t + dt)
    if not (np.all(np.isfinite(qn)) and np.all(np.isfinite(rn))):
        _raise(2, out, 0)
    if qn.min() < 0 or qn.max() > 1 or rn.min() < 0 or rn.max() > 1:
        _raise(1, out, 0)
    return out


def level_crossing(grid: PdeGrid, field: str = "u", level: float = 0.5) -> float:
    """Reflected position where ``u`` (or ``v``) crosses ``level``.

    Linear interpolation between the last node with complement above
    ``1 - level`` and the next one.
    """
    c = grid.q if field == "u" else grid.r
    target = 1.0 - level
    above = np.nonzero(c >= target)[0]
    if above.size == 0:
        return -math.inf
    i = above[-1]
    if i == c.size - 1:
        raise PdeError("front reached the right edge of the window")
    c0, c1 = c[i], c[i + 1]
    w = (c0 - target) / (c0 - c1) if c0 != c1 else 0.0
    return grid.y_lo + grid.dx * (i + w)


def recentre(grid: PdeGrid, y_front: float, frac: float = 0.5) -> int:
    """Shift the window by whole cells so the front sits at ``frac`` of it."""
    n = grid.q.size
    shift = int(math.floor((y_front - grid.y_lo) / grid.dx - frac * (n - 1)))
    if shift <= 0:
        return 0
    for a in (grid.q, grid.r):
        a[:-shift] = a[shift:].copy()
        a[-shift:] = 0.0
    grid.y_lo += shift * grid.dx
    return shift


@dataclass
class FrontSpeeds:
    speed_u: float
    speed_v: float
    times: np.ndarray
    front_u: np.ndarray  # reflected positions, i.e. -x_{level}(t)
    front_v: np.ndarray


def front_speed(params: ModelParams, level: float = 0.5, t_end: float = 60.0,
                dx: float = 0.05, width: float = 400.0, A: float = 10.0,
                record_every: float = 0.5, recentre_every: float = 50.0,
                fit_from: float = 0.5) -> FrontSpeeds:
    """Evolve the step data and fit the level crossings linearly.

    Positions are recorded every ``record_every`` time units; the speeds are
    the least-squares slopes over the last ``1 - fit_from`` of the run.  The
    window is recentred on the u-front every ``recentre_every`` time units.
    """
    grid = initial_grid(params, dx, width, A)
    n_rec = int(round(t_end / record_every))
    steps_per_rec = max(1, int(math.ceil(record_every / grid.dt - 1e-9)))
    grid.dt = record_every / steps_per_rec  # keeps record times exact, dt only shrinks
    times = np.empty(n_rec + 1)
    fu = np.empty(n_rec + 1)
    fv = np.empty(n_rec + 1)
    times[0] = 0.0
    fu[0] = level_crossing(grid, "u", level)
    fv[0] = level_crossing(grid, "v", level)
    next_recentre = recentre_every
    for k in range(1, n_rec + 1):
        advance(grid, params, steps_per_rec)
        times[k] = k * record_every
        fu[k] = level_crossing(grid, "u", level)
        fv[k] = level_crossing(grid, "v", level)
        if times[k] >= next_recentre - 1e-9:
            recentre(grid, fu[k])
            next_recentre += recentre_every
    sel = times >= fit_from * t_end
    su = np.polyfit(times[sel], fu[sel], 1)[0]
    sv = np.polyfit(times[sel], fv[sel], 1)[0]
    return FrontSpeeds(float(su), float(sv), times, fu, fv)
