"""Numba core of the event-driven two-type BBM simulation.

Every particle owns a counter-based SplitMix64 stream keyed by a 64-bit key;
children's keys are drawn from the parent's stream.  A particle's randomness
therefore depends only on its ancestry, never on the global event order.
"""
import heapq
import math

import numpy as np
from numba import njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
KEY_SALT = np.uint64(0x6A09E667F3BCC909)
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)
S11 = np.uint64(11)
ONE = np.uint64(1)
TWO_M53 = 1.0 / 9007199254740992.0

# end codes for the event log
END_ALIVE = 0
END_BRANCHED = 1
END_PRUNED = 2

# kernel status codes
OK = 0
CAP_EXCEEDED = 1


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> S30)) * MIX1
    z = (z ^ (z >> S27)) * MIX2
    return z ^ (z >> S31)


@njit(inline="always")
def _draw(keys, ctrs, i):
    ctrs[i] += ONE
    return mix64(keys[i] + ctrs[i] * GAMMA)


@njit(inline="always")
def _uniform(keys, ctrs, i):
    return ((_draw(keys, ctrs, i) >> S11) + 0.5) * TWO_M53


@njit(inline="always")
def _normal(keys, ctrs, i):
    u1 = _uniform(keys, ctrs, i)
    u2 = _uniform(keys, ctrs, i)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(inline="always")
def _expo(keys, ctrs, i, rate):
    if rate <= 0.0:
        return np.inf
    return -math.log(_uniform(keys, ctrs, i)) / rate


@njit(cache=True)
def root_key(seed):
    return mix64(mix64(np.uint64(seed)) ^ KEY_SALT)


@njit(inline="always")
def _curve(grid_dt, curve, s):
    # linear interpolation on a uniform grid starting at 0
    n = curve.shape[0]
    if n == 0:
        return -np.inf
    u = s / grid_dt
    k = int(u)
    if k >= n - 1:
        return curve[n - 1]
    w = u - k
    return curve[k] * (1.0 - w) + curve[k + 1] * w


@njit(cache=True)
def _grow_f(a):
    b = np.empty((a.shape[0] * 2, a.shape[1]), dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _grow_i(a):
    b = np.empty((a.shape[0] * 2, a.shape[1]), dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _grow_1f(a):
    b = np.empty(a.shape[0] * 2, dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _grow_1i(a):
    b = np.empty(a.shape[0] * 2, dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _grow_1u(a):
    b = np.empty(a.shape[0] * 2, dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True, nogil=True)
def run_kernel(beta, sigma2, alpha, start_type, t_max, checkpoints, seed_key,
               prune_dt, curve1, curve2, max_particles, drift, track_sup,
               record_events):
    """Simulate one two-type BBM from a single particle at the origin.

    Returns (status, snap_i, snap_f, n_snap, births_i, births_f, n_births,
    events_i, events_f, n_events, pruned_at_cp, live_at_cp, running_sup,
    peak_live, n_events_processed, t_reached).

    snap_i columns: checkpoint index, id, parent id, type.
    snap_f columns: position, mutation time, mutation position.
    births_i: child id, parent id; births_f: time, position.
    events_i: id, parent id, type, end code; events_f: birth time, end time.
    """
    var = np.empty(3)
    var[1] = sigma2
    var[2] = 1.0
    brate = np.empty(3)
    brate[1] = beta
    brate[2] = 1.0
    n_cp = checkpoints.shape[0]

    cap = 64
    keys = np.empty(cap, dtype=np.uint64)
    ctrs = np.empty(cap, dtype=np.uint64)
    ptype = np.empty(cap, dtype=np.int64)
    pid = np.empty(cap, dtype=np.int64)
    parent = np.empty(cap, dtype=np.int64)
    gen = np.zeros(cap, dtype=np.int64)
    alive = np.zeros(cap, dtype=np.bool_)
    pos = np.empty(cap)
    last_t = np.empty(cap)
    birth_t = np.empty(cap)
    mut_t = np.empty(cap)
    mut_x = np.empty(cap)
    nxt_branch = np.empty(cap)
    nxt_spawn = np.empty(cap)
    free = np.empty(cap, dtype=np.int64)
    n_free = 0
    n_slots = 0

    snap_i = np.empty((256, 4), dtype=np.int64)
    snap_f = np.empty((256, 3))
    n_snap = 0
    births_i = np.empty((64, 2), dtype=np.int64)
    births_f = np.empty((64, 2))
    n_births = 0
    events_i = np.empty((64 if record_events else 1, 4), dtype=np.int64)
    events_f = np.empty((64 if record_events else 1, 2))
    n_events = 0
    pruned_at_cp = np.zeros(n_cp, dtype=np.int64)
    live_at_cp = np.zeros(n_cp, dtype=np.int64)

    heap = [(0.0, np.int64(0), np.int64(0))]
    heap.pop()

    next_id = 0
    live = 0
    peak_live = 0
    pruned = 0
    processed = 0
    sup = -np.inf
    status = OK
    t_now = 0.0

    # --- root particle
    slot = 0
    n_slots = 1
    keys[0] = seed_key
    ctrs[0] = np.uint64(0)
    ptype[0] = start_type
    pid[0] = next_id
    next_id += 1
    parent[0] = -1
    alive[0] = True
    pos[0] = 0.0
    last_t[0] = 0.0
    birth_t[0] = 0.0
    if start_type == 2:
        mut_t[0] = 0.0
        mut_x[0] = 0.0
    else:
        mut_t[0] = np.nan
        mut_x[0] = np.nan
    nxt_branch[0] = _expo(keys, ctrs, 0, brate[start_type])
    nxt_spawn[0] = _expo(keys, ctrs, 0, alpha) if start_type == 1 else np.inf
    live = 1
    peak_live = 1
    if track_sup:
        sup = 0.0
    te = min(nxt_branch[0], nxt_spawn[0])
    if te <= t_max:
        heapq.heappush(heap, (te, np.int64(0), gen[0]))

    cp = 0
    while True:
        # next checkpoint comes before the next event?
        if cp < n_cp and (len(heap) == 0 or heap[0][0] > checkpoints[cp]):
            c = checkpoints[cp]
            t_now = c
            for i in range(n_slots):
                if not alive[i]:
                    continue
                dt = c - last_t[i]
                if dt > 0.0:
                    x0 = pos[i]
                    x1 = x0 + math.sqrt(var[ptype[i]] * dt) * _normal(keys, ctrs, i)
                    if track_sup:
                        a = x0 - drift * last_t[i]
                        b = x1 - drift * c
                        u = _uniform(keys, ctrs, i)
                        m = 0.5 * (a + b + math.sqrt((a - b) ** 2 - 2.0 * var[ptype[i]] * dt * math.log(u)))
                        if m > sup:
                            sup = m
                    pos[i] = x1
                    last_t[i] = c
                cv = _curve(prune_dt, curve1 if ptype[i] == 1 else curve2, c)
                if pos[i] < cv:
                    alive[i] = False
                    gen[i] += 1
                    free[n_free] = i
                    n_free += 1
                    live -= 1
                    pruned += 1
                    if record_events:
                        if n_events >= events_i.shape[0]:
                            events_i = _grow_i(events_i)
                            events_f = _grow_f(events_f)
                        events_i[n_events, 0] = pid[i]
                        events_i[n_events, 1] = parent[i]
                        events_i[n_events, 2] = ptype[i]
                        events_i[n_events, 3] = END_PRUNED
                        events_f[n_events, 0] = birth_t[i]
                        events_f[n_events, 1] = c
                        n_events += 1
                    continue
                if n_snap >= snap_i.shape[0]:
                    snap_i = _grow_i(snap_i)
                    snap_f = _grow_f(snap_f)
                snap_i[n_snap, 0] = cp
                snap_i[n_snap, 1] = pid[i]
                snap_i[n_snap, 2] = parent[i]
                snap_i[n_snap, 3] = ptype[i]
                snap_f[n_snap, 0] = pos[i]
                snap_f[n_snap, 1] = mut_t[i]
                snap_f[n_snap, 2] = mut_x[i]
                n_snap += 1
            pruned_at_cp[cp] = pruned
            live_at_cp[cp] = live
            cp += 1
            continue
        if len(heap) == 0:
            break

        te, i, g = heapq.heappop(heap)
        if g != gen[i] or not alive[i]:
            continue
        processed += 1
        t_now = te
        dt = te - last_t[i]
        ty = ptype[i]
        if dt > 0.0:
            x0 = pos[i]
            x1 = x0 + math.sqrt(var[ty] * dt) * _normal(keys, ctrs, i)
            if track_sup:
                a = x0 - drift * last_t[i]
                b = x1 - drift * te
                u = _uniform(keys, ctrs, i)
                m = 0.5 * (a + b + math.sqrt((a - b) ** 2 - 2.0 * var[ty] * dt * math.log(u)))
                if m > sup:
                    sup = m
            pos[i] = x1
            last_t[i] = te
        if pos[i] < _curve(prune_dt, curve1 if ty == 1 else curve2, te):
            alive[i] = False
            gen[i] += 1
            free[n_free] = i
            n_free += 1
            live -= 1
            pruned += 1
            if record_events:
                if n_events >= events_i.shape[0]:
                    events_i = _grow_i(events_i)
                    events_f = _grow_f(events_f)
                events_i[n_events, 0] = pid[i]
                events_i[n_events, 1] = parent[i]
                events_i[n_events, 2] = ty
                events_i[n_events, 3] = END_PRUNED
                events_f[n_events, 0] = birth_t[i]
                events_f[n_events, 1] = te
                n_events += 1
            continue

        if nxt_branch[i] <= nxt_spawn[i]:
            n_new = 2
        else:
            n_new = 1
        # allocate child slots
        for _ in range(n_new):
            if n_free == 0:
                if n_slots >= keys.shape[0]:
                    keys = _grow_1u(keys)
                    ctrs = _grow_1u(ctrs)
                    ptype = _grow_1i(ptype)
                    pid = _grow_1i(pid)
                    parent = _grow_1i(parent)
                    g2 = np.zeros(keys.shape[0], dtype=np.int64)
                    g2[: gen.shape[0]] = gen
                    gen = g2
                    a2 = np.zeros(keys.shape[0], dtype=np.bool_)
                    a2[: alive.shape[0]] = alive
                    alive = a2
                    pos = _grow_1f(pos)
                    last_t = _grow_1f(last_t)
                    birth_t = _grow_1f(birth_t)
                    mut_t = _grow_1f(mut_t)
                    mut_x = _grow_1f(mut_x)
                    nxt_branch = _grow_1f(nxt_branch)
                    nxt_spawn = _grow_1f(nxt_spawn)
                    free = _grow_1i(free)
                free[n_free] = n_slots
                n_free += 1
                n_slots += 1

        if n_new == 2:
            # binary branching: parent is replaced by two children of its type
            if record_events:
                if n_events >= events_i.shape[0]:
                    events_i = _grow_i(events_i)
                    events_f = _grow_f(events_f)
                events_i[n_events, 0] = pid[i]
                events_i[n_events, 1] = parent[i]
                events_i[n_events, 2] = ty
                events_i[n_events, 3] = END_BRANCHED
                events_f[n_events, 0] = birth_t[i]
                events_f[n_events, 1] = te
                n_events += 1
            k1 = mix64(_draw(keys, ctrs, i) ^ KEY_SALT)
            k2 = mix64(_draw(keys, ctrs, i) ^ KEY_SALT)
            par = pid[i]
            x = pos[i]
            mt = mut_t[i]
            mx = mut_x[i]
            alive[i] = False
            gen[i] += 1
            free[n_free] = i
            n_free += 1
            live -= 1
            for k in (k1, k2):
                n_free -= 1
                j = free[n_free]
                keys[j] = k
                ctrs[j] = np.uint64(0)
                ptype[j] = ty
                pid[j] = next_id
                next_id += 1
                parent[j] = par
                alive[j] = True
                pos[j] = x
                last_t[j] = te
                birth_t[j] = te
                mut_t[j] = mt
                mut_x[j] = mx
                nxt_branch[j] = te + _expo(keys, ctrs, j, brate[ty])
                nxt_spawn[j] = te + _expo(keys, ctrs, j, alpha) if ty == 1 else np.inf
                live += 1
                tn = min(nxt_branch[j], nxt_spawn[j])
                if tn <= t_max:
                    heapq.heappush(heap, (tn, j, gen[j]))
            # the parent's freed slot went back on the free list unused
        else:
            # type-1 parent persists and spawns one type-2 child in place
            k = mix64(_draw(keys, ctrs, i) ^ KEY_SALT)
            n_free -= 1
            j = free[n_free]
            keys[j] = k
            ctrs[j] = np.uint64(0)
            ptype[j] = 2
            pid[j] = next_id
            next_id += 1
            parent[j] = pid[i]
            alive[j] = True
            pos[j] = pos[i]
            last_t[j] = te
            birth_t[j] = te
            mut_t[j] = te
            mut_x[j] = pos[i]
            nxt_branch[j] = te + _expo(keys, ctrs, j, 1.0)
            nxt_spawn[j] = np.inf
            live += 1
            if n_births >= births_i.shape[0]:
                births_i = _grow_i(births_i)
                births_f = _grow_f(births_f)
            births_i[n_births, 0] = pid[j]
            births_i[n_births, 1] = pid[i]
            births_f[n_births, 0] = te
            births_f[n_births, 1] = pos[i]
            n_births += 1
            if pos[j] < _curve(prune_dt, curve2, te):
                alive[j] = False
                gen[j] += 1
                free[n_free] = j
                n_free += 1
                live -= 1
                pruned += 1
                if record_events:
                    if n_events >= events_i.shape[0]:
                        events_i = _grow_i(events_i)
                        events_f = _grow_f(events_f)
                    events_i[n_events, 0] = pid[j]
                    events_i[n_events, 1] = pid[i]
                    events_i[n_events, 2] = 2
                    events_i[n_events, 3] = END_PRUNED
                    events_f[n_events, 0] = te
                    events_f[n_events, 1] = te
                    n_events += 1
            else:
                if nxt_branch[j] <= t_max:
                    heapq.heappush(heap, (nxt_branch[j], j, gen[j]))
            nxt_spawn[i] = te + _expo(keys, ctrs, i, alpha)
            tn = min(nxt_branch[i], nxt_spawn[i])
            if tn <= t_max:
                heapq.heappush(heap, (tn, i, gen[i]))

        if live > peak_live:
            peak_live = live
        if live > max_particles:
            status = CAP_EXCEEDED
            break

    if record_events and status == OK:
        for i in range(n_slots):
            if alive[i]:
                if n_events >= events_i.shape[0]:
                    events_i = _grow_i(events_i)
                    events_f = _grow_f(events_f)
                events_i[n_events, 0] = pid[i]
                events_i[n_events, 1] = parent[i]
                events_i[n_events, 2] = ptype[i]
                events_i[n_events, 3] = END_ALIVE
                events_f[n_events, 0] = birth_t[i]
                events_f[n_events, 1] = t_max
                n_events += 1

    return (status, snap_i, snap_f, n_snap, births_i, births_f, n_births,
            events_i, events_f, n_events, pruned_at_cp, live_at_cp, sup,
            peak_live, processed, t_now)
