"""Reservation documents (JSON) and workload trace CSV.

A reservation document::

    {"jobId": "j1", "maxPrice": "100", "submitTime": 0,
     "operator": "AND",
     "requests": [{"configs": {"container": 100},
                   "duration": "5h", "window": ["06:00", "18:00"]}]}

Times are integer slots, ``HH:MM[:SS]`` offsets from the grid origin, ISO-8601
durations (``PT5H``) or shorthand (``5h``, ``30m``, ``90s``, ``2d``).  Arrival
rounds up, deadline rounds down, duration rounds up.
"""

from __future__ import annotations

import csv
import io
import json
import re
from collections.abc import Iterable
from pathlib import Path

from .domain import (
    CloudSpec,
    ReservationRequest,
    ResourceRequest,
    TimeGrid,
    WorkloadTrace,
    format_money,
    to_ticks,
    validate_request,
)

TRACE_COLUMNS = (
    "submitTime", "jobId", "configId", "count", "durationSlots",
    "arrivalSlot", "deadlineSlot", "value", "class", "seq",
)
_REQUIRED_COLUMNS = TRACE_COLUMNS[:-1]


class BdlError(ValueError):
    pass


class BdlSyntaxError(BdlError):
    def __init__(self, message: str, position: int | None = None, line: int | None = None):
        self.position = position
        self.line = line
        where = f" at line {line}" if line is not None else ""
        where += f" (char {position})" if position is not None else ""
        super().__init__(f"{message}{where}")


class BdlSemanticError(BdlError):
    def __init__(self, violations: Iterable[str], line: int | None = None):
        self.violations = list(violations)
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + "; ".join(self.violations))


_UNIT_SECONDS = {"s": 1, "m": 60, "h": 3600, "d": 86400}
_SHORT = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([smhd])\s*$", re.I)
_ISO_DUR = re.compile(r"^P(?:(\d+(?:\.\d+)?)D)?(?:T(?:(\d+(?:\.\d+)?)H)?(?:(\d+(?:\.\d+)?)M)?(?:(\d+(?:\.\d+)?)S)?)?$", re.I)
_CLOCK = re.compile(r"^(\d{1,3}):(\d{2})(?::(\d{2}(?:\.\d+)?))?$")


def _seconds(value: str) -> float | None:
    m = _SHORT.match(value)
    if m:
        return float(m.group(1)) * _UNIT_SECONDS[m.group(2).lower()]
    m = _ISO_DUR.match(value.strip())
    if m and any(m.groups()):
        d, h, mi, s = (float(g) if g else 0.0 for g in m.groups())
        return d * 86400 + h * 3600 + mi * 60 + s
    m = _CLOCK.match(value.strip())
    if m:
        return int(m.group(1)) * 3600 + int(m.group(2)) * 60 + float(m.group(3) or 0)
    return None


def _to_slot(value, grid: TimeGrid | None, rounding: str, what: str) -> int:
    if isinstance(value, bool):
        raise BdlSemanticError([f"{what} must be a slot or a time, got {value!r}"])
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        if re.fullmatch(r"\s*-?\d+\s*", value):
            return int(value)
        secs = _seconds(value)
        if secs is None:
            raise BdlSemanticError([f"cannot read {what} {value!r}"])
        if grid is None:
            raise BdlSemanticError([f"{what} {value!r} is a wall-clock time but no time grid was given"])
        return grid.slots_up(secs) if rounding == "up" else grid.slots_down(secs)
    raise BdlSemanticError([f"{what} must be a slot or a time, got {value!r}"])


def reservation_from_dict(doc: dict, grid: TimeGrid | None = None) -> ReservationRequest:
    if not isinstance(doc, dict):
        raise BdlSemanticError(["reservation must be an object"])
    problems = []
    for key in ("jobId", "maxPrice", "requests"):
        if key not in doc:
            problems.append(f"missing field {key!r}")
    if problems:
        raise BdlSemanticError(problems)
    op = str(doc.get("operator", "AND")).upper()
    if op != "AND":
        raise BdlSemanticError([f"unsupported operator {op!r} (only AND is implemented)"])
    if not isinstance(doc["requests"], list):
        raise BdlSemanticError(["requests must be a list"])
    if not doc["requests"]:
        raise BdlSemanticError(["empty request list"])
    try:
        price = to_ticks(str(doc["maxPrice"]))
    except Exception:
        raise BdlSemanticError([f"bad maxPrice {doc['maxPrice']!r}"]) from None
    entries = []
    for k, r in enumerate(doc["requests"]):
        if not isinstance(r, dict) or not {"configs", "duration", "window"} <= set(r):
            raise BdlSemanticError([f"request {k}: needs configs, duration and window"])
        window = r["window"]
        if not isinstance(window, list) or len(window) != 2:
            raise BdlSemanticError([f"request {k}: window must be [start, end]"])
        configs = r["configs"]
        if not isinstance(configs, dict):
            raise BdlSemanticError([f"request {k}: configs must be an object"])
        entries.append(ResourceRequest(
            configs={str(c): n for c, n in configs.items()},
            duration=_to_slot(r["duration"], grid, "up", "duration"),
            arrival=_to_slot(window[0], grid, "up", "window start"),
            deadline=_to_slot(window[1], grid, "down", "window end"),
        ))
    submit = doc.get("submitTime")
    submit = min(e.arrival for e in entries) if submit is None else _to_slot(submit, grid, "down", "submitTime")
    return ReservationRequest(
        job_id=str(doc["jobId"]),
        requests=tuple(entries),
        max_price=price,
        submit_time=submit,
        job_class=str(doc.get("class", "")),
        ordered=str(doc.get("order", "none")).lower() == "sequential",
    )


def parse_reservation(text: str, spec: CloudSpec | None = None, grid: TimeGrid | None = None) -> ReservationRequest:
    """Parse one reservation document.

    Raises :class:`BdlSyntaxError` for malformed JSON and
    :class:`BdlSemanticError` when the request fails validation.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BdlSyntaxError(exc.msg, position=exc.pos, line=exc.lineno) from None
    if grid is None and spec is not None:
        grid = spec.grid
    req = reservation_from_dict(doc, grid)
    problems = validate_request(req, spec)
    if problems:
        raise BdlSemanticError(problems)
    return req


def reservation_to_dict(req: ReservationRequest) -> dict:
    doc = {
        "jobId": req.job_id,
        "maxPrice": format_money(req.max_price),
        "submitTime": req.submit_time,
        "operator": "AND",
        "requests": [
            {"configs": dict(r.configs), "duration": r.duration, "window": [r.arrival, r.deadline]}
            for r in req.requests
        ],
    }
    if req.job_class:
        doc["class"] = req.job_class
    if req.ordered:
        doc["order"] = "sequential"
    return doc


def serialize_reservation(req: ReservationRequest) -> str:
    return json.dumps(reservation_to_dict(req), sort_keys=False)


def _open_text(source):
    if isinstance(source, (str, Path)):
        return open(source, newline="", encoding="utf-8")
    return source


def parse_trace(source, spec: CloudSpec | None = None, strict: bool = True) -> WorkloadTrace:
    """Read a trace CSV (path or text file object).

    Rows of one job must be contiguous; ``seq`` orders the AND entries and rows
    sharing ``(jobId, seq)`` add configurations to the same entry.  In strict
    mode an invalid job raises :class:`BdlSemanticError` with its first line
    number; in lenient mode it is dropped and listed in ``trace.rejected``.
    """
    fh = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise BdlSyntaxError("missing header row", line=1)
        missing = [c for c in _REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise BdlSyntaxError(f"missing columns {missing}", line=1)
        jobs: list[dict] = []
        finished_ids: set[str] = set()
        current = None
        for row in reader:
            line = reader.line_num
            try:
                job_id = row["jobId"].strip()
                seq = int(row.get("seq") or 0)
                cfg = row["configId"].strip()
                count = int(row["count"])
                rec = (int(row["submitTime"]), int(row["durationSlots"]), int(row["arrivalSlot"]),
                       int(row["deadlineSlot"]))
                value = to_ticks(row["value"].strip())
            except (ValueError, TypeError, ArithmeticError, AttributeError) as exc:
                raise BdlSyntaxError(f"bad field value ({exc})", line=line) from None
            if current is None or current["jobId"] != job_id:
                if job_id in finished_ids:
                    raise BdlSemanticError([f"duplicate job id {job_id!r}"], line=line)
                if current is not None:
                    finished_ids.add(current["jobId"])
                current = {"jobId": job_id, "line": line, "submit": rec[0], "value": value,
                           "class": (row.get("class") or "").strip(), "entries": {}}
                jobs.append(current)
            elif current["submit"] != rec[0] or current["value"] != value:
                raise BdlSemanticError([f"duplicate job id {job_id!r} (conflicting submitTime/value)"], line=line)
            entry = current["entries"].setdefault(seq, {"configs": {}, "shape": rec[1:]})
            if entry["shape"] != rec[1:]:
                raise BdlSemanticError([f"job {job_id!r} seq {seq}: conflicting duration/window"], line=line)
            if cfg in entry["configs"]:
                raise BdlSemanticError([f"duplicate job id {job_id!r} (repeated configuration row)"], line=line)
            entry["configs"][cfg] = count
    finally:
        if fh is not source:
            fh.close()

    requests, rejected = [], []
    for job in jobs:
        entries = [
            ResourceRequest(configs=e["configs"], duration=e["shape"][0], arrival=e["shape"][1],
                            deadline=e["shape"][2])
            for _, e in sorted(job["entries"].items())
        ]
        req = ReservationRequest(job_id=job["jobId"], requests=tuple(entries), max_price=job["value"],
                                 submit_time=job["submit"], job_class=job["class"])
        problems = validate_request(req, spec)
        if problems:
            if strict:
                raise BdlSemanticError(problems, line=job["line"])
            rejected.append((job["line"], tuple(problems)))
            continue
        requests.append(req)
    return WorkloadTrace(tuple(requests), rejected=tuple(rejected))


def trace_rows(trace: Iterable[ReservationRequest]) -> list[list]:
    rows = []
    for req in trace:
        for seq, r in enumerate(req.requests):
            for cid, count in r.configs.items():
                rows.append([req.submit_time, req.job_id, cid, count, r.duration, r.arrival,
                             r.deadline, format_money(req.max_price), req.job_class, seq])
    return rows


def write_trace(trace: Iterable[ReservationRequest], dest) -> None:
    """Write a trace CSV to a path or text file object (LF line endings)."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_trace(trace, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerows(trace_rows(trace))


def trace_to_csv(trace: Iterable[ReservationRequest]) -> str:
    buf = io.StringIO()
    write_trace(trace, buf)
    return buf.getvalue()
