"""Allocation-trace ingestion.

The normalized trace format is a CSV of ``tenant,start_seconds,end_seconds``
records (header optional, ``#`` comment lines ignored). Cluster job tables
are mapped onto it through a column map.
"""
from __future__ import annotations

import csv
import gzip
import io
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional

from .agents import max_concurrency

HEADER = ("tenant", "start_seconds", "end_seconds")
MAX_LINE_LENGTH = 4096
DEFAULT_MAX_ERROR_RATE = 0.01


class TraceFormatError(ValueError):
    def __init__(self, message: str, errors: Optional[list] = None):
        super().__init__(message)
        self.errors = errors or []


@dataclass
class ParsedTrace:
    """Events ``(tenant_id, t_a, t_r)`` sorted by t_a, rebased to start at 0."""
    events: list = field(default_factory=list)
    tenants: list = field(default_factory=list)  # tenant_id -> original name
    errors: list = field(default_factory=list)  # (line number, message)
    lines: int = 0
    offset: int = 0

    def summary(self) -> dict:
        return {"events": len(self.events), "tenants": len(self.tenants),
                "max_concurrency": max_concurrency(self.events),
                "malformed_lines": len(self.errors), "lines": self.lines}


@dataclass
class RawJobRecord:
    user: Optional[str]
    start: Optional[float]
    end: Optional[float]
    status: Optional[str] = None


def open_text(path: str, mode: str = "r") -> IO[str]:
    if path.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, mode.replace("t", "") + "b"),
                                encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


def _to_seconds(text: str) -> int:
    value = float(text)
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError("not a finite number")
    return int(value)


def parse_allocation_csv(stream: Iterable[str], max_error_rate: float = DEFAULT_MAX_ERROR_RATE,
                         max_line_length: int = MAX_LINE_LENGTH) -> ParsedTrace:
    """Parse a normalized trace, interning tenant names to dense ids.

    Malformed lines are reported with their line number and skipped; the
    whole file is rejected with :class:`TraceFormatError` when they exceed
    ``max_error_rate`` of the records.
    """
    raw = []
    errors = []
    lines = 0
    for lineno, line in enumerate(stream, 1):
        if len(line) > max_line_length:
            lines += 1
            errors.append((lineno, f"line longer than {max_line_length} characters"))
            continue
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        lines += 1
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            errors.append((lineno, f"expected 3 fields, got {len(parts)}"))
            continue
        name, start, end = parts
        try:
            t_a = _to_seconds(start)
            t_r = _to_seconds(end)
        except ValueError:
            if lines == 1 and not raw:
                lines -= 1  # header row
                continue
            errors.append((lineno, "non-numeric time"))
            continue
        if not name:
            errors.append((lineno, "empty tenant"))
            continue
        if t_r <= t_a:
            errors.append((lineno, "end time must be after start time"))
            continue
        raw.append((name, t_a, t_r))
    if lines and len(errors) > max_error_rate * lines:
        raise TraceFormatError(
            f"{len(errors)} of {lines} lines malformed (limit {max_error_rate:.2%})", errors)
    trace = _normalize(raw)
    trace.errors = errors
    trace.lines = lines
    return trace


def _normalize(raw: list) -> ParsedTrace:
    raw.sort(key=lambda r: (r[1], r[2], r[0]))
    offset = raw[0][1] if raw else 0
    ids = {}
    names = []
    events = []
    for name, t_a, t_r in raw:
        tid = ids.get(name)
        if tid is None:
            tid = ids[name] = len(names)
            names.append(name)
        events.append((tid, t_a - offset, t_r - offset))
    return ParsedTrace(events=events, tenants=names, offset=offset)


def jobs_to_allocations(records: Iterable[RawJobRecord], horizon_days: int = 31):
    """One allocation per well-formed job within the horizon.

    Returns ``(trace, dropped)``; jobs with missing or inverted times, a
    negative start, or an end beyond ``horizon_days`` are dropped.
    """
    horizon = horizon_days * 86400
    raw = []
    dropped = 0
    for r in records:
        if r.user is None or r.start is None or r.end is None:
            dropped += 1
            continue
        t_a, t_r = int(r.start), int(r.end)
        if t_r <= t_a or t_a < 0 or t_r > horizon:
            dropped += 1
            continue
        raw.append((str(r.user), t_a, t_r))
    return _normalize(raw), dropped


def read_job_records(stream: Iterable[str], column_map: dict) -> list:
    """Read a job table using ``column_map``.

    Keys ``user``, ``start``, ``end`` (and optionally ``status``) give
    0-based column indices; ``scale`` multiplies raw times into seconds
    (e.g. 1e-6 for microsecond timestamps); ``header`` skips the first row;
    ``statuses`` keeps only rows whose status is listed.
    """
    scale = float(column_map.get("scale", 1.0))
    keep = column_map.get("statuses")
    keep = set(str(s) for s in keep) if keep else None
    reader = csv.reader(stream)
    if column_map.get("header"):
        next(reader, None)
    out = []

    def cell(row, key):
        idx = column_map.get(key)
        if idx is None or idx >= len(row) or row[idx].strip() == "":
            return None
        return row[idx].strip()

    for row in reader:
        if not row:
            continue
        status = cell(row, "status")
        if keep is not None and status not in keep:
            continue
        times = []
        for key in ("start", "end"):
            v = cell(row, key)
            try:
                times.append(None if v is None else float(v) * scale)
            except ValueError:
                times.append(None)
        out.append(RawJobRecord(cell(row, "user"), times[0], times[1], status))
    return out


def write_trace(trace: ParsedTrace, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEADER)
    names = trace.tenants
    for tid, t_a, t_r in trace.events:
        w.writerow((names[tid], t_a, t_r))


def load_trace(path: str, max_error_rate: float = DEFAULT_MAX_ERROR_RATE):
    """Events and tenant names from a normalized trace file (.gz accepted)."""
    with open_text(path) as fh:
        trace = parse_allocation_csv(fh, max_error_rate)
    return trace.events, trace.tenants
