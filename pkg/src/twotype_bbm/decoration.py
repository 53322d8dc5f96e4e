"""Backward-spine sampler for the decoration seen from a fast particle.

A spine moving as a standard Brownian motion ``B`` gives birth at rate 2;
the child born at backward time ``tau`` starts an independent standard BBM
run for duration ``tau``, whose particles land at
``B_tau - rho tau + X_u(tau)`` in the frame of the spine tip.  The point set
is truncated at a finite spine horizon.  ``C(rho)`` is the probability that
no atom lies strictly above 0.

Embedded BBMs use target pruning: only atoms above ``-window`` are kept, and
the level sits at ``-window`` in the relative frame, so the acceptance event
is perturbed by at most ``eps`` per pruned particle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .engine import TYPE2, PopulationCapError, SimConfig, simulate
from .oracle import ld_first_moment
from .phase import ModelParams, SQRT2
from .pruning import PruneCurves, target_curves

_STD = ModelParams(1.0, 1.0, 0.0)
DEFAULT_HORIZON = 10.0
DEFAULT_WINDOW = 4.0
DEFAULT_EPS = 1e-4
DEFAULT_BUDGET = 1_000_000


class RejectionLimitError(RuntimeError):
    def __init__(self, msg, acceptance_estimate):
        super().__init__(msg)
        self.acceptance_estimate = acceptance_estimate


@dataclass
class DecorationSample:
    atoms: np.ndarray  # sorted descending, atoms >= -window plus the 0 atom
    horizon: float
    accepted: bool
    spine_births: np.ndarray
    pruned: int = 0
    overflows: int = 0  # embedded runs resampled after hitting the budget

    @property
    def max_atom(self) -> float:
        return float(self.atoms[0])


def _check_rho(rho):
    if not rho > SQRT2:
        raise ValueError(f"rho must exceed sqrt(2), got {rho!r}")


def _blocked_curves(tau, level, eps):
    # curves depend on the level only through a shift; cache the shape
    c = target_curves(_STD, tau, 0.0, eps, start_type=2)
    return PruneCurves(c.grid_dt, c.curve1 + level, c.curve2 + level, level)


def sample_decoration_tilde(rho: float, horizon: float = DEFAULT_HORIZON,
                            seed: int = 0, window: float = DEFAULT_WINDOW,
                            eps: float = DEFAULT_EPS,
                            particle_budget: int = DEFAULT_BUDGET) -> DecorationSample:
    _check_rho(rho)
    if not horizon >= 0:
        raise ValueError("horizon must be >= 0")
    if not window > 0:
        raise ValueError("window must be positive")
    rng = np.random.default_rng(seed)
    n = rng.poisson(2.0 * horizon)
    taus = np.sort(rng.uniform(0.0, horizon, n))
    steps = np.diff(np.concatenate([[0.0], taus]))
    spine = np.cumsum(rng.standard_normal(n) * np.sqrt(steps))
    seeds = rng.integers(0, 2 ** 63, size=n)
    atoms = [np.zeros(1)]
    pruned = 0
    overflows = 0
    for tau, b, s in zip(taus, spine, seeds):
        shift = b - rho * tau
        level = -window - shift  # absolute level inside the embedded BBM
        curves = _blocked_curves(float(tau), float(level), eps)
        cfg = SimConfig(float(tau), start_type=TYPE2, prune_mode="target",
                        prune_level=float(level), prune_eps=eps,
                        max_particles=particle_budget, rng_seed=int(s))
        while True:
            try:
                res = simulate(_STD, cfg, curves=curves)
                break
            except PopulationCapError:
                overflows += 1
                cfg = SimConfig(float(tau), start_type=TYPE2, prune_mode="target",
                                prune_level=float(level), prune_eps=eps,
                                max_particles=particle_budget,
                                rng_seed=int(rng.integers(0, 2 ** 63)))
        x = res.final.positions + shift
        atoms.append(x[x >= -window])
        pruned += res.final.pruned_count
    atoms = np.sort(np.concatenate(atoms))[::-1]
    return DecorationSample(atoms, float(horizon), bool(atoms[0] <= 0.0), taus,
                            pruned, overflows)


def _sample_seed(seed: int, k: int) -> Tuple[int, int]:
    # per-sample seed: (base, index) feeds SeedSequence entropy
    return (int(seed), int(k))


def estimate_C(rho: float, n_samples: int, horizon: float = DEFAULT_HORIZON,
               seed: int = 0, **kwargs) -> Tuple[float, float]:
    """Fraction of accepted samples and its binomial standard error."""
    _check_rho(rho)
    if n_samples < 100:
        raise ValueError("estimate_C needs n_samples >= 100")
    acc = sum(sample_decoration_tilde(rho, horizon, _sample_seed(seed, k), **kwargs).accepted
              for k in range(n_samples))
    p = acc / n_samples
    return p, math.sqrt(max(p * (1.0 - p), 0.25 / n_samples) / n_samples)


def sample_decoration_conditioned(rho: float, horizon: float = DEFAULT_HORIZON,
                                  seed: int = 0, max_rejections: int = 10_000,
                                  **kwargs) -> Tuple[DecorationSample, int]:
    """Rejection-sample the conditioned decoration.

    Returns the accepted sample and the number of attempts used, the accepted
    one included, so that the attempt count is geometric with mean ``1/C``.
    """
    _check_rho(rho)
    for k in range(max_rejections + 1):
        smp = sample_decoration_tilde(rho, horizon, _sample_seed(seed, k), **kwargs)
        if smp.accepted:
            return smp, k + 1
    raise RejectionLimitError(
        f"no accepted decoration after {max_rejections + 1} attempts at rho={rho}, "
        f"horizon={horizon}; running acceptance estimate 0/{max_rejections + 1}",
        0.0)


def laplace_functional(samples: Sequence[DecorationSample],
                       phi: Callable[[np.ndarray], np.ndarray],
                       z: float = 0.0) -> Tuple[float, float]:
    """``-log`` of the empirical mean of ``exp(-sum phi(atom + z))``.

    Returns the estimate and a delta-method standard error.
    """
    if len(samples) == 0:
        raise ValueError("laplace_functional needs at least one sample")
    vals = np.array([math.exp(-float(np.sum(phi(s.atoms + z)))) for s in samples])
    m = vals.mean()
    if m <= 0.0:
        return math.inf, math.inf
    se = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
    return -math.log(m), se / m


def ld_asymptotic(rho: float, t: float, c: float = 1.0) -> float:
    """``c exp(-(rho^2/2 - 1) t) / (sqrt(2 pi t) rho)``."""
    return c * math.exp(-(0.5 * rho * rho - 1.0) * t) / (math.sqrt(2.0 * math.pi * t) * rho)


@dataclass
class LargeDevCheck:
    mc_estimate: float
    mc_se: float
    prediction: float
    c_hat: float
    c_se: float
    first_moment_bound: float
    n_runs: int

    @property
    def ratio(self) -> float:
        return self.mc_estimate / self.prediction


def mc_max_exceeds(rho: float, t: float, n_runs: int, seed: int = 0,
                   eps: float = DEFAULT_EPS) -> Tuple[float, float]:
    """Direct estimate of ``P(M_t >= rho t)`` for a standard BBM.

    Runs use target pruning at level ``rho t``; the bias is at most
    ``eps`` per pruned particle, tiny next to the Monte Carlo error.
    """
    level = rho * t
    curves = _blocked_curves(float(t), level, eps)
    hits = 0
    for k in range(n_runs):
        cfg = SimConfig(float(t), start_type=TYPE2, prune_mode="target",
                        prune_level=level, prune_eps=eps, rng_seed=int(seed) + k)
        x = simulate(_STD, cfg, curves=curves).final.positions
        hits += bool(x.size and x.max() >= level)
    p = hits / n_runs
    return p, math.sqrt(p * (1.0 - p) / n_runs)


def large_dev_crosscheck(rho: float, t: float, n_runs: int, seed: int = 0,
                         n_decorations: int = 10_000,
                         horizon: float = DEFAULT_HORIZON,
                         c_estimate: Optional[Tuple[float, float]] = None) -> LargeDevCheck:
    _check_rho(rho)
    mc, mc_se = mc_max_exceeds(rho, t, n_runs, seed)
    if c_estimate is None:
        c_estimate = estimate_C(rho, n_decorations, horizon, seed)
    c_hat, c_se = c_estimate
    return LargeDevCheck(mc, mc_se, ld_asymptotic(rho, t, c_hat), c_hat, c_se,
                         ld_first_moment(rho, t, 0.0), n_runs)
