"""JSONL and binary columnar serialization of snapshots and birth records.

Binary layout (all little-endian), see docs/formats.md:

    8 bytes   magic b"TTBMSNP1"
    4 bytes   u32 header length H
    H bytes   UTF-8 JSON header {time, n, pruned_count, rng_seed}
    n * i64   id
    n * i64   parent_id (-1 for the root)
    n * u8    type
    n * f64   position
    n * f64   mutation_time (NaN for type 1)
    n * f64   mutation_position (NaN for type 1)
"""
from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Iterable, List

import numpy as np

from .engine import BirthRecord, Snapshot

MAGIC = b"TTBMSNP1"
_COLUMNS = (("ids", "<i8"), ("parent_ids", "<i8"), ("types", "u1"),
            ("positions", "<f8"), ("mutation_times", "<f8"),
            ("mutation_positions", "<f8"))


def _opt(x: float):
    return None if math.isnan(x) else float(x)


def snapshot_records(snap: Snapshot) -> Iterable[dict]:
    for k in range(len(snap)):
        par = int(snap.parent_ids[k])
        yield {"time": snap.time, "id": int(snap.ids[k]),
               "parent_id": None if par < 0 else par, "type": int(snap.types[k]),
               "position": float(snap.positions[k]),
               "mutation_time": _opt(snap.mutation_times[k]),
               "mutation_position": _opt(snap.mutation_positions[k]),
               "pruned_count": snap.pruned_count, "rng_seed": snap.rng_seed}


def write_jsonl(snapshots: Iterable[Snapshot], path) -> None:
    with open(path, "w") as fh:
        for snap in snapshots:
            for rec in snapshot_records(snap):
                fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> List[Snapshot]:
    rows = {}
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            t = rec["time"]
            rows.setdefault(t, []).append(rec)
            meta[t] = (rec["pruned_count"], rec["rng_seed"])
    out = []
    for t in sorted(rows):
        rs = rows[t]
        nan = float("nan")
        out.append(Snapshot(
            time=t,
            ids=np.array([r["id"] for r in rs], dtype=np.int64),
            parent_ids=np.array([-1 if r["parent_id"] is None else r["parent_id"] for r in rs],
                                dtype=np.int64),
            types=np.array([r["type"] for r in rs], dtype=np.uint8),
            positions=np.array([r["position"] for r in rs], dtype=float),
            mutation_times=np.array([nan if r["mutation_time"] is None else r["mutation_time"]
                                     for r in rs], dtype=float),
            mutation_positions=np.array([nan if r["mutation_position"] is None
                                         else r["mutation_position"] for r in rs], dtype=float),
            pruned_count=meta[t][0], rng_seed=meta[t][1]))
    return out


def write_binary(snap: Snapshot, path) -> None:
    header = json.dumps({"time": snap.time, "n": len(snap),
                         "pruned_count": snap.pruned_count,
                         "rng_seed": snap.rng_seed}).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for name, dt in _COLUMNS:
            fh.write(np.ascontiguousarray(getattr(snap, name), dtype=dt).tobytes())


def read_binary(path) -> Snapshot:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a snapshot dump (bad magic)")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hlen])
    n = header["n"]
    off = 12 + hlen
    cols = {}
    for name, dt in _COLUMNS:
        size = np.dtype(dt).itemsize * n
        if off + size > len(data):
            raise ValueError(f"{path}: truncated column {name}")
        cols[name] = np.frombuffer(data, dtype=dt, count=n, offset=off).astype(
            np.dtype(dt).newbyteorder("="))
        off += size
    return Snapshot(time=header["time"], pruned_count=header["pruned_count"],
                    rng_seed=header["rng_seed"], **cols)


def write_births_jsonl(births: BirthRecord, path) -> None:
    with open(path, "w") as fh:
        for t, x, p, c in zip(births.times, births.positions, births.parent_ids,
                              births.child_ids):
            fh.write(json.dumps({"time": float(t), "position": float(x),
                                 "parent_id": int(p), "child_id": int(c)}) + "\n")
