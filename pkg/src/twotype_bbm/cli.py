"""Command line entry point: ``ttbm <subcommand> [options]``.

Every subcommand accepts ``--config file.toml`` whose ``[<subcommand>]``
table supplies defaults (plus top-level ``base_seed``, ``output_dir`` and
``format``); explicit flags override the file.  Each run writes a manifest
next to its outputs.  ``report`` only reads files written by the others.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUTPUT_ENV = "TTBM_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

def _load_toml(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _coerce(name: str, value, kind):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config field '{name}': expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config field '{name}': expected an integer, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"config field '{name}': expected a string, got {value!r}")
        return value
    if kind == "floats":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return [float(value)]
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"config field '{name}': expected a list of numbers, got {value!r}")
        return [float(v) for v in value]
    return value


def resolve(args: argparse.Namespace, defaults: Dict[str, tuple]) -> dict:
    """Merge ``defaults`` < config file < explicit flags into one dict."""
    cfg = {}
    file_cfg = {}
    if getattr(args, "config", None):
        raw = _load_toml(args.config)
        for key in ("base_seed", "output_dir", "format"):
            if key in raw:
                file_cfg[key] = raw[key]
        section = raw.get(args.command, {})
        if not isinstance(section, dict):
            raise ConfigError(f"config section [{args.command}] must be a table")
        unknown = set(section) - set(defaults)
        if unknown:
            raise ConfigError(f"config section [{args.command}]: unknown field(s) "
                              f"{', '.join(sorted(unknown))}")
        file_cfg.update(section)
    for key, (kind, default) in defaults.items():
        val = default
        if key in file_cfg:
            val = _coerce(f"{args.command}.{key}", file_cfg[key], kind)
        flag = getattr(args, key, None)
        if flag is not None:
            val = flag
        cfg[key] = val
    return cfg


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _out_dir(cfg) -> Path:
    d = Path(cfg.get("output_dir") or os.environ.get(OUTPUT_ENV) or "ttbm_out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_manifest(out: Path, name: str, command: str, cfg: dict, outputs: List[str]):
    man = {"command": command, "artifact_version": __version__,
           "base_seed": cfg.get("base_seed"), "config": cfg, "outputs": outputs,
           "created": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    (out / f"{name}.manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True,
                                                         default=str) + "\n")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def _write_table(path: Path, header: List[str], rows, fmt: str):
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_csv_val(v) for v in row])
    else:
        with open(path, "w") as fh:
            for row in rows:
                fh.write(_dump(dict(zip(header, [_json_val(v) for v in row]))) + "\n")


def _csv_val(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _json_val(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("-inf" if v < 0 else "inf")
    return v


def _model(cfg):
    from .phase import ModelParams
    try:
        return ModelParams(cfg["beta"], cfg["sigma2"], cfg.get("alpha", 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


COMMON = {"base_seed": (int, 0), "output_dir": (str, None), "format": (str, "csv")}


# ---------------------------------------------------------------------------
# subcommands

def cmd_phase(args) -> int:
    from .phase import BoundaryError, ModelParams, brute_force_speed, classify, front_params, \
        speed_via_envelope
    cfg = resolve(args, {"beta": (float, None), "sigma2": (float, None),
                         "points": (list, None), "grid_step": (float, 1e-3),
                         "check": (bool, False), **COMMON})
    points = cfg["points"] or []
    if cfg["beta"] is not None or cfg["sigma2"] is not None:
        if cfg["beta"] is None or cfg["sigma2"] is None:
            raise ConfigError("phase needs both --beta and --sigma2")
        points = [[cfg["beta"], cfg["sigma2"]]] + list(points)
    if not points:
        raise ConfigError("phase needs --beta/--sigma2 or a 'points' list in the config")
    records = []
    for pt in points:
        if not (isinstance(pt, (list, tuple)) and len(pt) == 2):
            raise ConfigError(f"config field 'phase.points': bad entry {pt!r}")
        p = ModelParams(float(pt[0]), float(pt[1]))
        rec = {"beta": p.beta, "sigma2": p.sigma2, "region": classify(p).value}
        try:
            fp = front_params(p).to_dict()
            rec.update({k: fp[k] for k in ("v", "theta", "p_star", "a_star", "b_star",
                                           "log_coeff")})
            rec["p"] = fp["p_star"]
        except BoundaryError as exc:
            rec["error"] = str(exc)
        if cfg["check"]:
            _, _, _, val = brute_force_speed(p, cfg["grid_step"])
            rec["v_brute_force"] = val
            rec["v_envelope"] = speed_via_envelope(p, cfg["grid_step"])
        records.append(rec)
        print(_dump(rec))
    if cfg["output_dir"] or os.environ.get(OUTPUT_ENV):
        out = _out_dir(cfg)
        with open(out / "phase.jsonl", "w") as fh:
            for rec in records:
                fh.write(_dump(rec) + "\n")
        write_manifest(out, "phase", "phase", cfg, ["phase.jsonl"])
    return 0


def cmd_oracle(args) -> int:
    from . import oracle
    cfg = resolve(args, {"query": (str, None), "beta": (float, 1.0), "sigma2": (float, 1.0),
                         "alpha": (float, 1.0), "t": (float, None), "x": (float, 0.0),
                         "rho": (float, None), "y": (float, 0.0),
                         "rule": (str, "adaptive"), "abs_tol": (float, 1e-12),
                         "rel_tol": (float, 1e-10), "max_subdivisions": (int, 200), **COMMON})
    q = cfg["query"]
    p = _model(cfg)
    err = 0.0
    if q != "gaussian-tail" and cfg["t"] is None:
        raise ConfigError("oracle query needs --t")
    if q == "ld-bound" and cfg["rho"] is None:
        raise ConfigError("ld-bound needs --rho")
    if q == "type1-above":
        desc = f"type1-above(beta={p.beta},sigma2={p.sigma2},t={cfg['t']},x={cfg['x']})"
        val = oracle.expected_type1_above(p, cfg["t"], cfg["x"])
    elif q == "type2-count":
        desc = f"type2-count(beta={p.beta},alpha={p.alpha},t={cfg['t']})"
        val = oracle.expected_type2_count(p, cfg["t"])
    elif q == "type2-above":
        spec = oracle.QuadratureSpec(cfg["rule"], cfg["abs_tol"], cfg["rel_tol"],
                                     cfg["max_subdivisions"])
        desc = (f"type2-above(beta={p.beta},sigma2={p.sigma2},alpha={p.alpha},"
                f"t={cfg['t']},x={cfg['x']})")
        val, err = oracle.expected_type2_above(p, cfg["t"], cfg["x"], spec, return_error=True)
    elif q == "gaussian-tail":
        desc = f"gaussian-tail(x={cfg['x']})"
        val, bound = oracle.gaussian_tail_bound(cfg["x"])
        err = bound  # second column carries the bound for this query
    elif q == "ld-bound":
        desc = f"ld-bound(rho={cfg['rho']},t={cfg['t']},y={cfg['y']})"
        val = oracle.ld_first_moment(cfg["rho"], cfg["t"], cfg["y"])
    else:
        raise ConfigError(f"unknown oracle query {q!r}")
    header = ["query", "value", "bound" if q == "gaussian-tail" else "error"]
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    w.writerow([desc, repr(float(val)), repr(float(err))])
    sys.stdout.write(buf.getvalue())
    if cfg["output_dir"] or os.environ.get(OUTPUT_ENV):
        out = _out_dir(cfg)
        (out / "oracle.csv").write_text(buf.getvalue())
        write_manifest(out, "oracle", "oracle", cfg, ["oracle.csv"])
    return 0


def cmd_simulate(args) -> int:
    from .engine import SimConfig, simulate
    from . import snapio
    cfg = resolve(args, {"beta": (float, 2.0), "sigma2": (float, 0.5), "alpha": (float, 1.0),
                         "t_max": (float, 1.0), "checkpoints": ("floats", []),
                         "prune_gap": (float, None), "prune_mode": (str, "linear"),
                         "start_type": (int, 1), "max_particles": (int, 50_000_000),
                         **COMMON})
    p = _model(cfg)
    sc = SimConfig(cfg["t_max"], tuple(cfg["checkpoints"]), cfg["prune_gap"],
                   cfg["prune_mode"], max_particles=cfg["max_particles"],
                   rng_seed=cfg["base_seed"], start_type=cfg["start_type"])
    res = simulate(p, sc)
    out = _out_dir(cfg)
    outputs = []
    fmt = cfg["format"]
    if fmt == "binary":
        for k, snap in enumerate(res.snapshots):
            name = f"snapshot_{k:03d}.bin"
            snapio.write_binary(snap, out / name)
            outputs.append(name)
    elif fmt in ("jsonl", "csv"):
        if fmt == "jsonl":
            snapio.write_jsonl(res.snapshots, out / "snapshots.jsonl")
            outputs.append("snapshots.jsonl")
        else:
            header = ["time", "id", "parent_id", "type", "position", "mutation_time",
                      "mutation_position", "pruned_count"]
            rows = []
            for s in res.snapshots:
                for rec in snapio.snapshot_records(s):
                    rows.append([rec[h] for h in header])
            _write_table(out / "snapshots.csv", header, rows, "csv")
            outputs.append("snapshots.csv")
    else:
        raise ConfigError(f"unknown format {fmt!r} (csv, jsonl or binary)")
    snapio.write_births_jsonl(res.births, out / "births.jsonl")
    outputs.append("births.jsonl")
    write_manifest(out, "simulate", "simulate", cfg, outputs)
    summary = {"snapshots": [{"time": s.time, "n": len(s), "pruned_count": s.pruned_count}
                             for s in res.snapshots],
               "births": len(res.births), "peak_live": res.peak_live}
    print(_dump(summary))
    return 0


ENSEMBLE_HEADER = ["t", "replicate", "M", "M1", "M2", "W", "Z", "martingale_time",
                   "T_star", "X_T_star", "pruned", "peak_live", "atoms"]


def cmd_ensemble(args) -> int:
    from .extremal import EnsembleOptions, run_ensemble
    cfg = resolve(args, {"beta": (float, 2.0), "sigma2": (float, 0.5), "alpha": (float, 1.0),
                         "t": ("floats", [9.0]), "n": (int, 500),
                         "prune_gap": (float, 3.0), "no_prune": (bool, False),
                         "prune_mode": (str, "target"), "prune_eps": (float, 1e-3),
                         "start_type": (int, 1), "martingale_times": ("floats", []),
                         "jobs": (int, 1), "tag": (str, None), **COMMON})
    p = _model(cfg)
    gap = None if cfg["no_prune"] else cfg["prune_gap"]
    opts = EnsembleOptions(prune_gap=gap, prune_mode=cfg["prune_mode"],
                           prune_eps=cfg["prune_eps"], start_type=cfg["start_type"],
                           martingale_times=tuple(cfg["martingale_times"]), jobs=cfg["jobs"])
    out = _out_dir(cfg)
    tag = cfg["tag"] or f"ensemble_b{p.beta:g}_s{p.sigma2:g}_a{p.alpha:g}"
    outputs = []
    summaries = []
    rows = []
    for k, t in enumerate(cfg["t"]):
        res = run_ensemble(p, t, cfg["n"], cfg["base_seed"] + 1_000_003 * k, opts)
        for rec in res.records():
            rows.append([t, rec["replicate"], rec["M"], rec["M1"], rec["M2"], rec["W"],
                         rec["Z"], rec["martingale_time"], rec["T_star"], rec["X_T_star"],
                         rec["pruned"], rec["peak_live"],
                         " ".join(repr(a) for a in rec["atoms"])])
        summaries.append({**res.metadata(), "median_M": float(np.median(res.max_all)),
                          "censored": int(np.isinf(res.max_all).sum()),
                          "max_peak_live": int(res.peak_live.max())})
    ext = "csv" if cfg["format"] == "csv" else "jsonl"
    _write_table(out / f"{tag}.{ext}", ENSEMBLE_HEADER, rows, cfg["format"])
    outputs.append(f"{tag}.{ext}")
    (out / f"{tag}.summary.json").write_text(
        json.dumps({"kind": "ensemble", "tag": tag, "file": f"{tag}.{ext}",
                    "params": {"beta": p.beta, "sigma2": p.sigma2, "alpha": p.alpha},
                    "start_type": cfg["start_type"], "runs": summaries},
                   indent=2, sort_keys=True) + "\n")
    outputs.append(f"{tag}.summary.json")
    write_manifest(out, tag, "ensemble", cfg, outputs)
    print(_dump({"tag": tag, "runs": summaries}))
    return 0


def cmd_decoration(args) -> int:
    from .decoration import estimate_C, sample_decoration_tilde, _sample_seed
    cfg = resolve(args, {"rho": (float, 2.0), "horizon": ("floats", [10.0]),
                         "n": (int, 1000), "window": (float, 4.0), "samples_out": (int, 100),
                         "jobs": (int, 1), **COMMON})
    out = _out_dir(cfg)
    rows = []
    with open(out / "decoration_samples.jsonl", "w") as fh:
        for h in cfg["horizon"]:
            def one(k, h=h):
                return sample_decoration_tilde(cfg["rho"], h, _sample_seed(cfg["base_seed"], k),
                                               window=cfg["window"])
            if cfg["jobs"] > 1:
                with ThreadPoolExecutor(cfg["jobs"]) as ex:
                    samples = list(ex.map(one, range(cfg["n"])))
            else:
                samples = [one(k) for k in range(cfg["n"])]
            acc = 0
            for k, s in enumerate(samples):
                acc += s.accepted
                if k < cfg["samples_out"]:
                    fh.write(_dump({"rho": cfg["rho"], "horizon": h, "sample": k,
                                    "accepted": s.accepted, "max_atom": s.max_atom,
                                    "n_atoms": int(s.atoms.size),
                                    "spine_births": int(s.spine_births.size),
                                    "pruned": s.pruned, "overflows": s.overflows}) + "\n")
            c = acc / cfg["n"]
            se = math.sqrt(max(c * (1 - c), 0.25 / cfg["n"]) / cfg["n"])
            rows.append([cfg["rho"], c, se, h, cfg["n"]])
    _write_table(out / "decoration.csv", ["rho", "C_hat", "se", "horizon", "n"], rows, "csv")
    write_manifest(out, "decoration", "decoration", cfg,
                   ["decoration.csv", "decoration_samples.jsonl"])
    for r in rows:
        print(_dump(dict(zip(["rho", "C_hat", "se", "horizon", "n"], r))))
    return 0


def cmd_fkpp(args) -> int:
    from .fkpp import front_speed
    cfg = resolve(args, {"beta": (float, 2.0), "sigma2": (float, 0.5), "alpha": (float, 1.0),
                         "dx": ("floats", [0.05]), "t_end": (float, 60.0),
                         "level": (float, 0.5), "tag": (str, None), **COMMON})
    p = _model(cfg)
    out = _out_dir(cfg)
    tag = cfg["tag"] or f"fkpp_b{p.beta:g}_s{p.sigma2:g}_a{p.alpha:g}"
    fits = []
    outputs = []
    for dx in cfg["dx"]:
        f = front_speed(p, cfg["level"], cfg["t_end"], dx)
        name = f"{tag}_dx{dx:g}.csv"
        # fronts in the original coordinate sit at -y
        _write_table(out / name, ["t", "x_front_u", "x_front_v"],
                     [[float(t), float(-a), float(-b)] for t, a, b in
                      zip(f.times, f.front_u, f.front_v)], "csv")
        outputs.append(name)
        fits.append({"dx": dx, "speed_u": f.speed_u, "speed_v": f.speed_v})
    summary = {"kind": "fkpp", "tag": tag,
               "params": {"beta": p.beta, "sigma2": p.sigma2, "alpha": p.alpha},
               "t_end": cfg["t_end"], "level": cfg["level"], "fits": fits}
    (out / f"{tag}.summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs.append(f"{tag}.summary.json")
    write_manifest(out, tag, "fkpp", cfg, outputs)
    print(_dump(summary))
    return 0


def cmd_report(args) -> int:
    from .report import build_report
    cfg = resolve(args, {"input_dir": (str, None), "require_all": (bool, False), **COMMON})
    src = Path(cfg["input_dir"] or cfg["output_dir"] or os.environ.get(OUTPUT_ENV) or "ttbm_out")
    if not src.is_dir():
        raise ConfigError(f"report input directory not found: {src}")
    verdicts = build_report(src)
    failed = [v for v in verdicts if v["required"] and v["status"] == "fail"]
    missing = [v for v in verdicts if v["required"] and v["status"] == "missing"]
    doc = {"input_dir": str(src), "criteria": verdicts,
           "passed": not failed and not (cfg["require_all"] and missing)}
    (src / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for v in verdicts:
        print(f"[{v['status'].upper():7s}] {v['id']:>3} {v['name']}: {v.get('detail', '')}")
    return 0 if doc["passed"] else 1


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ttbm", description="Two-type BBM laboratory")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", metavar="{phase,simulate,oracle,decoration,"
                                                    "ensemble,fkpp,report}")

    def common(p):
        p.add_argument("--config", help="TOML file with defaults")
        p.add_argument("--base-seed", "--seed", dest="base_seed", type=int)
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--format", choices=["csv", "jsonl", "binary"])

    def model(p):
        p.add_argument("--beta", type=float)
        p.add_argument("--sigma2", type=float)
        p.add_argument("--alpha", type=float)

    p = sub.add_parser("phase", help="region, speed and front parameters")
    common(p)
    model(p)
    p.add_argument("--grid-step", dest="grid_step", type=float)
    p.add_argument("--check", action="store_true", default=None,
                   help="also run the brute-force and envelope solvers")

    p = sub.add_parser("oracle", help="first-moment oracles")
    common(p)
    p.add_argument("query", choices=["type1-above", "type2-count", "type2-above",
                                     "gaussian-tail", "ld-bound"])
    model(p)
    p.add_argument("--t", type=float)
    p.add_argument("--x", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--y", type=float)
    p.add_argument("--rule", choices=["adaptive", "simpson"])
    p.add_argument("--abs-tol", dest="abs_tol", type=float)
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--max-subdivisions", dest="max_subdivisions", type=int)

    p = sub.add_parser("simulate", help="one engine run with snapshots")
    common(p)
    model(p)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--checkpoints", type=_floats)
    p.add_argument("--prune-gap", dest="prune_gap", type=float)
    p.add_argument("--prune-mode", dest="prune_mode", choices=["linear", "target"])
    p.add_argument("--start-type", dest="start_type", type=int, choices=[1, 2])
    p.add_argument("--max-particles", dest="max_particles", type=int)

    p = sub.add_parser("ensemble", help="replicate ensembles over a t-grid")
    common(p)
    model(p)
    p.add_argument("--t", type=_floats, help="comma-separated horizons")
    p.add_argument("--n", type=int)
    p.add_argument("--prune-gap", dest="prune_gap", type=float)
    p.add_argument("--no-prune", dest="no_prune", action="store_true", default=None)
    p.add_argument("--prune-mode", dest="prune_mode", choices=["linear", "target"])
    p.add_argument("--prune-eps", dest="prune_eps", type=float)
    p.add_argument("--start-type", dest="start_type", type=int, choices=[1, 2])
    p.add_argument("--martingale-times", dest="martingale_times", type=_floats)
    p.add_argument("--jobs", type=int)
    p.add_argument("--tag")

    p = sub.add_parser("decoration", help="spine decorations and C(rho)")
    common(p)
    p.add_argument("--rho", type=float)
    p.add_argument("--horizon", type=_floats, help="comma-separated horizons")
    p.add_argument("--n", type=int)
    p.add_argument("--window", type=float)
    p.add_argument("--samples-out", dest="samples_out", type=int)
    p.add_argument("--jobs", type=int)

    p = sub.add_parser("fkpp", help="coupled F-KPP front speeds")
    common(p)
    model(p)
    p.add_argument("--dx", type=_floats, help="comma-separated grid steps")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--level", type=float)
    p.add_argument("--tag")

    p = sub.add_parser("report", help="acceptance verdicts from earlier outputs")
    common(p)
    p.add_argument("--input-dir", dest="input_dir")
    p.add_argument("--require-all", dest="require_all", action="store_true", default=None)
    return ap


COMMANDS = {"phase": cmd_phase, "oracle": cmd_oracle, "simulate": cmd_simulate,
            "ensemble": cmd_ensemble, "decoration": cmd_decoration, "fkpp": cmd_fkpp,
            "report": cmd_report}


def run(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    if not args.command:
        ap.print_usage(sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"ttbm {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced as a diagnostic, not a traceback
        from .extremal import InfeasibleHorizonError
        from .engine import PopulationCapError
        if isinstance(exc, (InfeasibleHorizonError, PopulationCapError, ValueError)):
            print(f"ttbm {args.command}: {exc}", file=sys.stderr)
            return 3
        raise


def main():
    sys.exit(run())
