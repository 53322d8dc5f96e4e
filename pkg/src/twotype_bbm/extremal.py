"""Ensembles of engine runs and the statistics read off them.

Replicate ``i`` of an ensemble with base seed ``s`` runs with engine seed
``s + i``, so results do not depend on how replicates are spread over
workers.  In pruned ensembles a replicate whose population falls entirely
below the pruning level records ``-inf`` as its maximum: every order
statistic above the level is then exact.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from . import oracle
from .engine import (TYPE1, TYPE2, DEFAULT_MAX_PARTICLES, PrunedSnapshotError,
                     SimConfig, additive_martingale, argmax_particle,
                     derivative_martingale, prune_curves, simulate)
from .phase import ModelParams, Region, SQRT2, centering, classify, front_params
from .pruning import PruneCurves

DEFAULT_GAP = 3.0


class InfeasibleHorizonError(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleOptions:
    prune_gap: Optional[float] = DEFAULT_GAP
    prune_mode: str = "target"
    prune_eps: float = 1e-3
    start_type: int = TYPE1
    window: float = 3.0  # atoms kept within this distance below the max
    top_k: int = 10
    theta: Optional[float] = None  # additive-martingale exponent; region theta by default
    martingale_times: Tuple[float, ...] = ()  # candidates for unpruned W, Z
    max_particles: int = DEFAULT_MAX_PARTICLES
    jobs: int = 1


@dataclass
class EnsembleResult:
    params: ModelParams
    t: float
    n: int
    seed: int
    options: EnsembleOptions
    level: float  # pruning level at the horizon, -inf when unpruned
    max_all: np.ndarray
    max1: np.ndarray
    max2: np.ndarray
    atoms: np.ndarray  # (n, top_k) descending, nan padded
    W: np.ndarray
    Z: np.ndarray
    martingale_time: np.ndarray  # time at which W, Z were read (nan if none)
    mut_time: np.ndarray  # T(u*) of the rightmost type-2 particle
    mut_pos: np.ndarray  # X_{u*}(T(u*))
    pruned: np.ndarray
    peak_live: np.ndarray

    def metadata(self) -> dict:
        return {"beta": self.params.beta, "sigma2": self.params.sigma2,
                "alpha": self.params.alpha, "t": self.t, "n": self.n,
                "seed": self.seed, "prune_gap": self.options.prune_gap,
                "prune_mode": self.options.prune_mode,
                "prune_eps": self.options.prune_eps, "level": self.level,
                "start_type": self.options.start_type}

    def records(self) -> List[dict]:
        out = []
        for i in range(self.n):
            atoms = self.atoms[i]
            out.append({
                "replicate": i, "M": _num(self.max_all[i]), "M1": _num(self.max1[i]),
                "M2": _num(self.max2[i]),
                "atoms": [float(a) for a in atoms[~np.isnan(atoms)]],
                "W": _num(self.W[i]), "Z": _num(self.Z[i]),
                "martingale_time": _num(self.martingale_time[i]),
                "T_star": _num(self.mut_time[i]), "X_T_star": _num(self.mut_pos[i]),
                "pruned": int(self.pruned[i]), "peak_live": int(self.peak_live[i])})
        return out


def _num(x):
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return x


def _theta_for(params: ModelParams, start_type: int) -> float:
    if start_type == TYPE2:
        return 1.0
    region = classify(params)
    if region is Region.C_III:
        return front_params(params).theta
    return 1.0


def expected_live_bound(params: ModelParams, config: SimConfig,
                        curves: PruneCurves, n_points: int = 24) -> float:
    """First-moment bound on the peak live population.

    Unpruned runs peak at the horizon.  With pruning, only particles above
    the curves survive, and the many-to-one formulas bound their mean.
    """
    t = config.t_max
    if t <= 0:
        return 1.0
    if config.start_type == TYPE2:
        std = ModelParams(1.0, 1.0, 0.0)
        if not curves.active:
            return math.exp(t)
        return max(oracle.expected_type1_above(std, s, _curve_at(curves.curve2, curves.grid_dt, s))
                   for s in np.linspace(t / n_points, t, n_points))
    if not curves.active:
        return math.exp(params.beta * t) + (oracle.expected_type2_count(params, t)
                                           if params.alpha > 0 else 0.0)
    best = 0.0
    q = oracle.QuadratureSpec(abs_tol=1e-6, rel_tol=1e-6)
    for s in np.linspace(t / n_points, t, n_points):
        n1 = oracle.expected_type1_above(params, s, _curve_at(curves.curve1, curves.grid_dt, s))
        n2 = 0.0
        if params.alpha > 0:
            n2 = oracle.expected_type2_above(params, s, _curve_at(curves.curve2, curves.grid_dt, s), q)
        best = max(best, n1 + n2)
    return best


def _curve_at(curve, dt, s):
    return float(np.interp(s, np.arange(len(curve)) * dt, curve))


def _replicate(params, t, cfg_base: dict, seed, curves, opts: EnsembleOptions,
               theta, mart_times):
    cfg = SimConfig(t, checkpoint_times=mart_times, rng_seed=seed, **cfg_base)
    res = simulate(params, cfg, curves=curves)
    fin = res.final
    pruned_mode = curves.active
    empty = -math.inf if pruned_mode else math.nan
    x = fin.positions
    m_all = float(x.max()) if x.size else empty
    x1, x2 = fin.of_type(TYPE1), fin.of_type(TYPE2)
    m1 = float(x1.max()) if x1.size else empty
    m2 = float(x2.max()) if x2.size else empty
    atoms = np.full(opts.top_k, np.nan)
    if x.size:
        top = np.sort(x)[::-1]
        top = top[top >= top[0] - opts.window][:opts.top_k]
        atoms[:top.size] = top
    # martingales at the latest candidate time still free of pruning
    W = Z = mt = math.nan
    for snap in reversed(res.snapshots):
        if snap.pruned_count == 0 and snap.time > 0:
            if opts.start_type == TYPE2:
                W = additive_martingale(snap, theta, params, type2=True)
            else:
                W = additive_martingale(snap, theta, params)
            Z = derivative_martingale(snap)
            mt = snap.time
            break
    j = argmax_particle(fin, TYPE2)
    mut_t = float(fin.mutation_times[j]) if j is not None else math.nan
    mut_x = float(fin.mutation_positions[j]) if j is not None else math.nan
    return (m_all, m1, m2, atoms, W, Z, mt, mut_t, mut_x, fin.pruned_count, res.peak_live)


def run_ensemble(params: ModelParams, t: float, n: int, seed: int = 0,
                 options: EnsembleOptions = EnsembleOptions()) -> EnsembleResult:
    if n < 1:
        raise ValueError("an ensemble needs n >= 1 replicates")
    if not t > 0:
        raise ValueError("ensemble horizon must be positive")
    opts = options
    cfg_base = dict(prune_gap=opts.prune_gap, prune_mode=opts.prune_mode,
                    prune_eps=opts.prune_eps, start_type=opts.start_type,
                    max_particles=opts.max_particles)
    probe = SimConfig(t, rng_seed=seed, **cfg_base)
    curves = prune_curves(params, probe)
    bound = expected_live_bound(params, probe, curves)
    if bound > opts.max_particles:
        raise InfeasibleHorizonError(
            f"horizon t={t} is infeasible: the first-moment bound on the live "
            f"population is {bound:.3g} > max_particles={opts.max_particles}")
    theta = opts.theta if opts.theta is not None else _theta_for(params, opts.start_type)
    mart_times = tuple(sorted(c for c in opts.martingale_times if 0 < c < t))

    def work(i):
        return _replicate(params, t, cfg_base, seed + i, curves, opts, theta, mart_times)

    if opts.jobs > 1:
        with ThreadPoolExecutor(opts.jobs) as ex:
            rows = list(ex.map(work, range(n)))
    else:
        rows = [work(i) for i in range(n)]
    cols = list(zip(*rows))
    level = curves.level if curves.active and not math.isnan(curves.level) else -math.inf
    if curves.active and math.isnan(curves.level):
        level = float(curves.curve1[-1])  # linear mode: the window position at t
    return EnsembleResult(
        params, float(t), n, int(seed), opts, float(level),
        np.array(cols[0]), np.array(cols[1]), np.array(cols[2]), np.vstack(cols[3]),
        np.array(cols[4]), np.array(cols[5]), np.array(cols[6]), np.array(cols[7]),
        np.array(cols[8]), np.array(cols[9], dtype=np.int64),
        np.array(cols[10], dtype=np.int64))


# ---------------------------------------------------------------------------
# front regression

@dataclass
class FrontFit:
    speed: float
    log_coeff: float  # coefficient of log t (minus the log correction)
    speed_ci: Tuple[float, float]
    log_ci: Tuple[float, float]
    t_values: np.ndarray
    medians: np.ndarray


def _design(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("front_regression needs positive t")
    X = np.column_stack([t, np.log(t)])
    if np.linalg.matrix_rank(X) < 2:
        raise ValueError("degenerate design matrix")
    return X


def front_regression(data, n_boot: int = 1000, seed: int = 0) -> FrontFit:
    """Least squares ``median(M_t) = a t + b log t``.

    ``data`` is a sequence of :class:`EnsembleResult` or of ``(t, samples)``
    pairs.  Confidence intervals come from resampling replicates within each
    horizon.  There is no intercept: with horizons between 5 and 12 the
    columns ``t``, ``log t`` and ``1`` are close to collinear and a
    three-term fit turns median noise into speed errors of several tenths.
    """
    pairs = []
    for d in data:
        if isinstance(d, EnsembleResult):
            pairs.append((d.t, np.asarray(d.max_all, dtype=float)))
        else:
            t, s = d
            pairs.append((float(t), np.atleast_1d(np.asarray(s, dtype=float))))
    ts = np.array([p[0] for p in pairs])
    if len(np.unique(ts)) < 4:
        raise ValueError("front_regression needs at least 4 distinct t values")
    X = _design(ts)
    med = np.array([np.median(s) for _, s in pairs])
    if not np.all(np.isfinite(med)):
        raise ValueError("a median fell below the pruning level; widen the window")
    coef = np.linalg.lstsq(X, med, rcond=None)[0]
    rng = np.random.default_rng(seed)
    boots = np.empty((n_boot, 2))
    for b in range(n_boot):
        mb = np.array([np.median(s[rng.integers(0, len(s), len(s))]) for _, s in pairs])
        boots[b] = np.linalg.lstsq(X, mb, rcond=None)[0]
    lo, hi = np.percentile(boots, [2.5, 97.5], axis=0)
    return FrontFit(float(coef[0]), float(coef[1]),
                    (float(min(lo[0], coef[0])), float(max(hi[0], coef[0]))),
                    (float(min(lo[1], coef[1])), float(max(hi[1], coef[1]))), ts, med)


# ---------------------------------------------------------------------------
# tail exponent

@dataclass
class TailFit:
    rate: float
    ci_low: float
    ci_high: float
    n_tail: int


def _tail_slope(x_sorted_desc, n_total):
    k = len(x_sorted_desc)
    surv = np.arange(1, k + 1) / (n_total + 1.0)
    A = np.column_stack([x_sorted_desc, np.ones(k)])
    slope = np.linalg.lstsq(A, np.log(surv), rcond=None)[0][0]
    return -slope


def tail_exponent(values, fraction: float = 0.1, n_boot: int = 500,
                  seed: int = 0, min_tail: int = 50) -> TailFit:
    """Exponential rate of the upper tail of ``values``.

    The top ``fraction`` of the sample is regressed as log empirical survival
    against position (the slope does not depend on any centring).  The interval is a bootstrap percentile interval.
    Values of ``-inf`` (replicates censored below a pruning level) count in
    the sample size but never reach the tail.
    """
    v = np.asarray(values, dtype=float)
    v = v[~np.isnan(v)]
    n = len(v)
    k = int(math.ceil(fraction * n))
    if k < min_tail:
        raise ValueError(f"insufficient tail mass: {k} tail samples < {min_tail}")
    def fit(sample):
        top = np.sort(sample)[::-1][:k]
        if not np.all(np.isfinite(top)):
            raise ValueError("tail reaches censored replicates")
        return _tail_slope(top, len(sample))

    rate = fit(v)
    rng = np.random.default_rng(seed)
    boots = np.array([fit(v[rng.integers(0, n, n)]) for _ in range(n_boot)])
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return TailFit(float(rate), float(min(lo, rate)), float(max(hi, rate)), k)


# ---------------------------------------------------------------------------
# genealogy of the rightmost type-2 particle

@dataclass
class GenealogyProfile:
    mean_fraction: float  # mean T(u*)/t
    sd_fraction: float
    mean_slope: float  # mean X(T(u*))/t
    sd_slope: float
    mean_late_fraction: float  # mean (t - T(u*))/t
    n: int


def genealogy_profile(result: EnsembleResult) -> GenealogyProfile:
    """Mutation time and position of the rightmost type-2 particle.

    Replicates whose type-2 maximum fell below the pruning level are left out.
    """
    ok = np.isfinite(result.max2) & np.isfinite(result.mut_time)
    if not ok.any():
        raise ValueError("no replicate has a type-2 maximum")
    f = result.mut_time[ok] / result.t
    s = result.mut_pos[ok] / result.t
    return GenealogyProfile(float(f.mean()), float(f.std(ddof=1)) if f.size > 1 else 0.0,
                            float(s.mean()), float(s.std(ddof=1)) if s.size > 1 else 0.0,
                            float((1.0 - f).mean()), int(ok.sum()))


# ---------------------------------------------------------------------------
# Gumbel mixture

@dataclass
class GumbelDiagnostic:
    c_hat: float
    sup_distance: float
    n: int
    n_weights: int


def mixture_cdf(x, weights, c, theta):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = np.asarray(weights, dtype=float)
    return np.exp(-c * np.outer(np.exp(-theta * x), w)).mean(axis=1)


def gumbel_mixture_diagnostic(shifted, weights, theta: float) -> GumbelDiagnostic:
    """Compare the law of ``M_t - centering`` with ``E exp(-c W e^{-theta x})``.

    ``c`` is fitted so that the mixture has the sample median as its median;
    the returned distance is the sup over sample points of the gap between
    the empirical and the fitted distribution functions.
    """
    x = np.sort(np.asarray(shifted, dtype=float))
    w = np.asarray(weights, dtype=float)
    w = w[np.isfinite(w) & (w > 0)]
    if w.size == 0:
        raise ValueError("missing martingale weights")
    if len(x) == 0:
        raise ValueError("empty sample")
    med = float(np.median(x))
    # the mixture at the median is decreasing in c
    g = lambda logc: mixture_cdf(med, w, math.exp(logc), theta)[0] - 0.5
    logc = optimize.brentq(g, -60.0, 60.0, xtol=1e-12)
    c = math.exp(logc)
    fin = np.isfinite(x)
    xf = x[fin]
    n = len(x)
    model = mixture_cdf(xf, w, c, theta)
    # empirical cdf just after / just before each point
    idx = np.nonzero(fin)[0]
    upper = (idx + 1) / n
    lower = idx / n
    d = float(max(np.max(np.abs(upper - model)), np.max(np.abs(lower - model))))
    return GumbelDiagnostic(c, d, n, int(w.size))


def centered_max(result: EnsembleResult) -> np.ndarray:
    if result.options.start_type == TYPE2:
        fp_v, lc = SQRT2, 3.0 / (2.0 * SQRT2)
        return result.max_all - (fp_v * result.t - lc * math.log(result.t))
    return result.max_all - centering(result.params, result.t)
