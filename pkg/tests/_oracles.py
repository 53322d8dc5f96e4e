"""Reference computations shared by the tests, independent of the engine."""
import math

import numpy as np

from twotype_bbm.fkpp import PdeGrid, _advance, level_crossing


def bbm_max_median_pde(t: float, dx: float = 0.02) -> float:
    """Median of the standard BBM maximum from the tail PDE.

    ``w(t, x) = P(M_t > x)`` solves ``w_t = w_xx / 2 + w (1 - w)`` with
    ``w(0, x) = 1{x < 0}``; the median is where ``w`` crosses 1/2.
    """
    y = np.arange(-25.0, 4.0 * t + 25.0, dx)
    q = np.where(y < 0, 1.0, 0.0)
    q[np.abs(y) < dx / 2] = 0.5
    dt = 0.4 * dx * dx
    n = int(math.ceil(t / dt))
    dt = t / n
    grid = PdeGrid(dx, dt, float(y[0]), q, np.zeros_like(q))
    code, _ = _advance(grid.q, grid.r, n, dt, dx, 0.5, 1.0, 0.0, 0)
    assert code == 0
    return level_crossing(grid, "u", 0.5)
