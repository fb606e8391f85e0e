"""Command-line front end: ``ippoolsim run | sweep | ingest | synth-trace``.

Exit codes: 0 success, 1 some sweep points failed, 2 bad config or
unreadable input, 3 runtime contract violation, 4 trace rejected for too
many malformed lines.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

from .analysis import provenance_header
from .core import ConfigError, ContractViolation, RunConfig, SimulationError, derive_seed
from .ingest import (DEFAULT_MAX_ERROR_RATE, TraceFormatError, jobs_to_allocations,
                     open_text, parse_allocation_csv, read_job_records, write_trace)
from .scenarios import DEFAULTS, run_config, synthetic_job_trace

log = logging.getLogger("ippoolsim")

EXIT_OK = 0
EXIT_POINT_FAILED = 1
EXIT_CONFIG = 2
EXIT_CONTRACT = 3
EXIT_REJECTED = 4

SWEEP_AXES = {"ar_max": float, "alpha": float, "tenant_budget": int}
SWEEP_COLUMNS = ("value", "seed", "unique_ip_yield", "lc_yield", "ar_max_observed",
                 "lc_prevalence", "error")


def load_config(path: Optional[str], scenario: Optional[str], seed: Optional[int]) -> RunConfig:
    """Scenario template overlaid with the keys of a JSON config file.

    The scenario comes from ``--scenario`` or the file's ``scenario`` key.
    A relative ``trace_path`` is resolved against the config file directory.
    """
    if path is None and scenario is None:
        raise ConfigError("either --config or --scenario is required")
    data = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        tp = data.get("trace_path")
        if isinstance(tp, str) and not os.path.isabs(tp):
            data["trace_path"] = os.path.join(os.path.dirname(os.path.abspath(path)), tp)
    name = scenario or data.get("scenario")
    merged = dict(DEFAULTS.get(name, {}))
    if name is not None and name not in DEFAULTS:
        raise ConfigError(f"unknown scenario {name!r}")
    merged.update(data)
    if scenario is not None:
        merged["scenario"] = scenario
    if seed is not None:
        merged["seed"] = seed
    return RunConfig.from_dict(merged)


def _write(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _output_paths(out: str):
    """``out`` is a file stem: ``stem.json`` and ``stem.csv`` are written."""
    stem = out[:-5] if out.endswith(".json") else out
    return stem + ".json", stem + ".csv"


# run

def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.scenario, args.seed)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        stats = run_config(cfg)
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (ConfigError, OSError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    json_path, csv_path = _output_paths(args.out)
    _write(json_path, stats.to_json(args.samples))
    _write(csv_path, stats.to_csv())
    summary = stats.summary()
    log.info("run done: %s", json.dumps(summary, sort_keys=True))
    return EXIT_OK


# sweep

def _sweep_point(job):
    cfg_dict, axis, value = job
    row = {"value": value, "seed": cfg_dict["seed"]}
    try:
        cfg = RunConfig.from_dict(cfg_dict)
        s = run_config(cfg).summary()
        row.update(unique_ip_yield=s["unique_ip_yield"], lc_yield=s["lc_yield"],
                   ar_max_observed=s["ar_max_observed"], lc_prevalence=s["lc_prevalence"],
                   error="")
    except (SimulationError, ValueError, OSError) as exc:
        row.update(unique_ip_yield=None, lc_yield=None, ar_max_observed=None,
                   lc_prevalence=None, error=f"{type(exc).__name__}: {exc}")
    return row


def sweep_jobs(cfg: RunConfig, axis: str, values: Sequence) -> list:
    """One config per point; the seed is derived from (base seed, point index)."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {sorted(SWEEP_AXES)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    jobs = []
    for i, v in enumerate(values):
        point = cfg.to_dict()
        point[axis] = v
        point["seed"] = derive_seed(cfg.seed, 2, i)
        jobs.append((point, axis, v))
    return jobs


def run_sweep(cfg: RunConfig, axis: str, values: Sequence, parallel: int = 1) -> list:
    jobs = sweep_jobs(cfg, axis, values)
    if parallel <= 1 or len(jobs) == 1:
        return [_sweep_point(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_sweep_point, jobs))


def sweep_csv(cfg: RunConfig, axis: str, rows: list) -> str:
    buf = io.StringIO()
    buf.write(provenance_header(cfg.to_dict()))
    buf.write(f"# axis: {axis}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow((axis,) + SWEEP_COLUMNS[1:])
    for r in rows:
        w.writerow(["" if r[c] is None else r[c] for c in SWEEP_COLUMNS])
    return buf.getvalue()


def _parse_values(text: str, kind):
    out = []
    for part in text.split(","):
        part = part.strip()
        if part:
            out.append(kind(part))
    return out


def cmd_sweep(args) -> int:
    try:
        cfg = load_config(args.config, args.scenario, args.seed)
        kind = SWEEP_AXES.get(args.axis)
        if kind is None:
            raise ConfigError(f"unknown sweep axis {args.axis!r}")
        values = _parse_values(args.values, kind)
        jobs = sweep_jobs(cfg, args.axis, values)
        for point, _, _ in jobs:
            RunConfig.from_dict(point).validate()
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = run_sweep(cfg, args.axis, values, args.parallel)
    _write(args.out, sweep_csv(cfg, args.axis, rows))
    failed = [r for r in rows if r["error"]]
    for r in failed:
        print(f"point {args.axis}={r['value']} failed: {r['error']}", file=sys.stderr)
    return EXIT_POINT_FAILED if failed else EXIT_OK


# ingest

def _load_column_map(text: Optional[str]) -> Optional[dict]:
    if text is None:
        return None
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            return json.load(fh)
    return json.loads(text)


def cmd_ingest(args) -> int:
    try:
        column_map = _load_column_map(args.column_map)
    except (OSError, ValueError) as exc:
        print(f"error: bad column map: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    dropped = 0
    try:
        with open_text(args.input) as fh:
            if column_map is None:
                trace = parse_allocation_csv(fh, args.max_error_rate)
            else:
                trace, dropped = jobs_to_allocations(
                    read_job_records(fh, column_map),
                    int(column_map.get("horizon_days", 31)))
    except TraceFormatError as exc:
        _write(args.out + ".errors.txt", _error_report(exc.errors))
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except (OSError, UnicodeDecodeError, ValueError) as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    buf = io.StringIO()
    write_trace(trace, buf)
    _write(args.out, buf.getvalue())
    summary = trace.summary()
    summary["dropped_jobs"] = dropped
    summary["rebased_by"] = trace.offset
    _write(args.out + ".summary.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    if trace.errors:
        _write(args.out + ".errors.txt", _error_report(trace.errors))
    return EXIT_OK


def _error_report(errors) -> str:
    return "".join(f"line {n}: {msg}\n" for n, msg in errors)


def cmd_synth_trace(args) -> int:
    rng = random.Random(derive_seed(args.seed, 1))
    events = synthetic_job_trace(rng, args.users, args.days)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("tenant", "start_seconds", "end_seconds"))
    for user, t_a, t_r in events:
        w.writerow((f"user{user}", t_a, t_r))
    _write(args.out, buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ippoolsim", description="Cloud IP pool allocation simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def config_flags(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--scenario", choices=sorted(DEFAULTS),
                        help="named scenario template (config file keys override it)")
        sp.add_argument("--seed", type=int, help="override the config seed")

    r = sub.add_parser("run", help="run one simulation")
    config_flags(r)
    r.add_argument("--out", required=True, help="output stem; writes STEM.json and STEM.csv")
    r.add_argument("--samples", action="store_true",
                   help="include raw free-duration samples in the JSON")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run one simulation per axis value")
    config_flags(s)
    s.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--out", required=True, help="summary CSV path")
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("ingest", help="normalize an allocation trace or job table")
    g.add_argument("input")
    g.add_argument("--out", required=True)
    g.add_argument("--column-map", help="JSON (inline or file) mapping job-table columns")
    g.add_argument("--max-error-rate", type=float, default=DEFAULT_MAX_ERROR_RATE)
    g.set_defaults(func=cmd_ingest)

    t = sub.add_parser("synth-trace", help="write a synthetic short-lived-job trace")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--users", type=int, default=1000)
    t.add_argument("--days", type=int, default=20)
    t.set_defaults(func=cmd_synth_trace)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
