"""Exact event-driven simulation of the two-type reducible BBM.

The heavy lifting lives in :mod:`._kernel`; this module owns configuration,
pruning-curve selection, result types and the population observables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np

from . import _kernel
from .oracle import expected_type2_count
from .phase import ModelParams
from .pruning import (PruneCurves, default_level, linear_curves,
                      target_curves)

TYPE1, TYPE2 = 1, 2
DEFAULT_MAX_PARTICLES = 50_000_000
PRUNE_MODES = ("linear", "target")


class PopulationCapError(RuntimeError):
    """The live population exceeded ``max_particles``."""


class PrunedSnapshotError(ValueError):
    """A martingale was requested on a snapshot that lost particles to pruning."""


@dataclass(frozen=True)
class SimConfig:
    t_max: float
    checkpoint_times: Sequence[float] = ()
    prune_gap: Optional[float] = None
    prune_mode: str = "linear"
    prune_eps: float = 1e-3
    prune_level: Optional[float] = None  # target mode: overrides the level
    max_particles: int = DEFAULT_MAX_PARTICLES
    rng_seed: int = 0
    start_type: int = TYPE1
    record_events: bool = False
    sup_drift: Optional[float] = None  # track sup over s of X_u(s) - drift*s

    def __post_init__(self):
        if not (self.t_max >= 0 and math.isfinite(self.t_max)):
            raise ValueError(f"t_max must be finite and >= 0, got {self.t_max!r}")
        cps = tuple(float(c) for c in self.checkpoint_times)
        if any(b < a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoint_times must be sorted")
        if cps and (cps[0] < 0 or cps[-1] > self.t_max):
            raise ValueError("checkpoint_times must lie in [0, t_max]")
        object.__setattr__(self, "checkpoint_times", cps)
        if self.prune_gap is not None and not self.prune_gap > 0:
            raise ValueError("prune_gap must be positive when given")
        if self.prune_mode not in PRUNE_MODES:
            raise ValueError(f"prune_mode must be one of {PRUNE_MODES}")
        if self.prune_level is not None and self.prune_mode != "target":
            raise ValueError("prune_level only applies to target pruning")
        if self.start_type not in (TYPE1, TYPE2):
            raise ValueError("start_type must be 1 or 2")
        if self.max_particles < 1:
            raise ValueError("max_particles must be positive")
        if not 0 <= int(self.rng_seed) < 2 ** 64:
            raise ValueError("rng_seed must fit in 64 unsigned bits")

    @property
    def pruning(self) -> bool:
        return self.prune_gap is not None or self.prune_level is not None

    def all_checkpoints(self) -> np.ndarray:
        """Checkpoints with ``t_max`` appended when absent."""
        cps = list(self.checkpoint_times)
        if not cps or cps[-1] < self.t_max:
            cps.append(self.t_max)
        return np.array(cps, dtype=float)


@dataclass(frozen=True)
class Particle:
    id: int
    parent_id: Optional[int]
    ptype: int
    position: float
    mutation_time: Optional[float]
    mutation_position: Optional[float] = None


@dataclass
class Snapshot:
    """Population at one checkpoint, stored column-wise."""
    time: float
    ids: np.ndarray
    parent_ids: np.ndarray  # -1 for the root
    types: np.ndarray  # uint8, 1 or 2
    positions: np.ndarray
    mutation_times: np.ndarray  # nan for type 1
    mutation_positions: np.ndarray  # nan for type 1
    pruned_count: int = 0  # cumulative up to this time
    rng_seed: int = 0

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def particles(self) -> List[Particle]:
        out = []
        for k in range(len(self.ids)):
            par = int(self.parent_ids[k])
            t2 = self.types[k] == TYPE2
            out.append(Particle(int(self.ids[k]), None if par < 0 else par,
                                int(self.types[k]), float(self.positions[k]),
                                float(self.mutation_times[k]) if t2 else None,
                                float(self.mutation_positions[k]) if t2 else None))
        return out

    def of_type(self, ptype: Optional[int]) -> np.ndarray:
        if ptype is None:
            return self.positions
        return self.positions[self.types == ptype]


@dataclass
class BirthRecord:
    """Every type-2 child of a type-1 parent: time, position, parent, child."""
    times: np.ndarray
    positions: np.ndarray
    parent_ids: np.ndarray
    child_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    @property
    def entries(self):
        return list(zip(self.times.tolist(), self.positions.tolist(),
                        self.parent_ids.tolist()))


@dataclass
class EventLog:
    """One row per particle that ever lived: birth, end and how it ended."""
    ids: np.ndarray
    parent_ids: np.ndarray
    types: np.ndarray
    birth_times: np.ndarray
    end_times: np.ndarray
    end_codes: np.ndarray  # 0 alive at horizon, 1 branched, 2 pruned


@dataclass
class SimResult:
    snapshots: List[Snapshot]
    births: BirthRecord
    events: Optional[EventLog] = None
    running_sup: Optional[float] = None
    peak_live: int = 0
    n_events: int = 0
    curves: PruneCurves = field(default_factory=PruneCurves.none)

    def __iter__(self) -> Iterator[Snapshot]:
        return iter(self.snapshots)

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]


def prune_curves(params: ModelParams, config: SimConfig) -> PruneCurves:
    if not config.pruning:
        return PruneCurves.none()
    if config.prune_mode == "linear":
        return linear_curves(params, config.t_max, config.prune_gap, config.start_type)
    level = config.prune_level
    if level is None:
        level = default_level(params, config.t_max, config.prune_gap, config.start_type)
    return target_curves(params, config.t_max, level, config.prune_eps, config.start_type)


def simulate(params: ModelParams, config: SimConfig,
             curves: Optional[PruneCurves] = None) -> SimResult:
    """Run one realisation from a single particle at the origin.

    ``curves`` may be passed to reuse pruning thresholds across replicates;
    otherwise they are derived from ``config``.
    """
    if curves is None:
        curves = prune_curves(params, config)
    cps = config.all_checkpoints()
    key = np.uint64(_kernel.root_key(np.uint64(config.rng_seed)))
    track = config.sup_drift is not None
    (status, snap_i, snap_f, n_snap, births_i, births_f, n_births, ev_i, ev_f,
     n_ev, pruned_cp, live_cp, sup, peak, n_proc, t_reached) = _kernel.run_kernel(
        params.beta, params.sigma2, params.alpha, config.start_type,
        float(config.t_max), cps, key, float(curves.grid_dt),
        np.ascontiguousarray(curves.curve1, dtype=float),
        np.ascontiguousarray(curves.curve2, dtype=float),
        int(config.max_particles), float(config.sup_drift or 0.0), track,
        bool(config.record_events))
    if status == _kernel.CAP_EXCEEDED:
        hint = ""
        if config.start_type == TYPE1 and not config.pruning:
            exp_n = math.exp(params.beta * config.t_max) + expected_type2_count(params, config.t_max)
            hint = f"; expected unpruned population at t_max is {exp_n:.3g}"
        raise PopulationCapError(
            f"live population exceeded max_particles={config.max_particles} at "
            f"t={t_reached:.4g} (seed {config.rng_seed}){hint}")

    snap_i, snap_f = snap_i[:n_snap], snap_f[:n_snap]
    bounds = np.searchsorted(snap_i[:, 0], np.arange(len(cps) + 1))
    snaps = []
    for k, c in enumerate(cps):
        sl = slice(bounds[k], bounds[k + 1])
        snaps.append(Snapshot(
            time=float(c), ids=snap_i[sl, 1].copy(), parent_ids=snap_i[sl, 2].copy(),
            types=snap_i[sl, 3].astype(np.uint8), positions=snap_f[sl, 0].copy(),
            mutation_times=snap_f[sl, 1].copy(), mutation_positions=snap_f[sl, 2].copy(),
            pruned_count=int(pruned_cp[k]), rng_seed=int(config.rng_seed)))
    births = BirthRecord(births_f[:n_births, 0].copy(), births_f[:n_births, 1].copy(),
                         births_i[:n_births, 1].copy(), births_i[:n_births, 0].copy())
    events = None
    if config.record_events:
        events = EventLog(ev_i[:n_ev, 0].copy(), ev_i[:n_ev, 1].copy(),
                          ev_i[:n_ev, 2].astype(np.uint8), ev_f[:n_ev, 0].copy(),
                          ev_f[:n_ev, 1].copy(), ev_i[:n_ev, 3].astype(np.uint8))
    return SimResult(snaps, births, events, float(sup) if track else None,
                     int(peak), int(n_proc), curves)


# ---------------------------------------------------------------------------
# observables

def max_displacement(snapshot: Snapshot, ptype: Optional[int] = None) -> Optional[float]:
    x = snapshot.of_type(ptype)
    return float(x.max()) if x.size else None


def argmax_particle(snapshot: Snapshot, ptype: Optional[int] = None) -> Optional[int]:
    """Row index of the rightmost particle of the given type."""
    if ptype is None:
        return int(np.argmax(snapshot.positions)) if len(snapshot) else None
    rows = np.nonzero(snapshot.types == ptype)[0]
    if rows.size == 0:
        return None
    return int(rows[np.argmax(snapshot.positions[rows])])


def _require_unpruned(snapshot: Snapshot):
    if snapshot.pruned_count:
        raise PrunedSnapshotError(
            f"snapshot at t={snapshot.time} lost {snapshot.pruned_count} particles "
            "to pruning; exponential sums would be biased")


def additive_martingale(snapshot: Snapshot, theta: float, params: ModelParams,
                        type2: bool = False) -> float:
    """Sum of ``exp(theta X - t (beta + theta^2 sigma2 / 2))`` over type 1.

    With ``type2=True`` the sum runs over type-2 particles with the
    standard-BBM normalisation ``exp(theta X - t (1 + theta^2 / 2))``.
    """
    _require_unpruned(snapshot)
    t = snapshot.time
    if type2:
        x = snapshot.of_type(TYPE2)
        return float(np.exp(theta * x - t * (1.0 + 0.5 * theta * theta)).sum())
    x = snapshot.of_type(TYPE1)
    rate = params.beta + 0.5 * theta * theta * params.sigma2
    return float(np.exp(theta * x - t * rate).sum())


def derivative_martingale(snapshot: Snapshot) -> float:
    """``sum (sqrt2 t - X) exp(sqrt2 X - 2t)`` over type-2 particles."""
    _require_unpruned(snapshot)
    t = snapshot.time
    x = snapshot.of_type(TYPE2)
    r2 = math.sqrt(2.0)
    return float(((r2 * t - x) * np.exp(r2 * x - 2.0 * t)).sum())


def count_near_speed(snapshot: Snapshot, theta: float, h: float,
                     ptype: Optional[int] = None) -> int:
    x = snapshot.of_type(ptype)
    if math.isinf(h):
        return int(x.size)
    return int(np.count_nonzero(np.abs(x - theta * snapshot.time) <= h))
