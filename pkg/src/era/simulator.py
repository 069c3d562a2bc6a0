"""Slot-stepped simulation of a cloud driven by a scheduling engine.

Per slot ``now``:

1. requests submitted at ``now`` go to ``make_reservation`` (submit order,
   then job id);
2. the mock cloud polls ``get_current_allocation`` once per tick and applies
   the answer, checking it against true capacity;
3. running jobs advance one slot; jobs whose work is done terminate;
4. capacity changes scheduled for the next slot are applied and reported,
   together with terminations and consumption, through ``update``.

Event log lines are ``slot<TAB>type<TAB>jobId<TAB>payload`` where payload is
space-separated ``key=value`` pairs in a fixed order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .domain import Bundle, CloudSpec, ReservationRequest, WorkloadTrace, demand_of, format_money
from .scheduler import BasicEcon, CloudFeedback, FirstFit, OnDemand, Scheduler


class ConfigError(ValueError):
    pass


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class CapacityChange:
    """Capacity of ``resource`` changes by ``delta`` for ``[slot, slot + duration)``."""

    slot: int
    resource: str
    delta: int
    duration: int = 1


@dataclass
class AlgorithmConfig:
    name: str
    unit_price: int | None = None  # fixed-price algorithms, ticks per unit
    unit_floor: int = 0  # basicEcon clamp
    unit_cap: int | None = None
    oracle: object = None  # basicEcon demand oracle

    def build(self, spec: CloudSpec) -> Scheduler:
        if self.name == "basicEcon":
            if self.oracle is None:
                raise ConfigError("basicEcon needs a demand oracle")
            return BasicEcon(spec, self.oracle, self.unit_floor, self.unit_cap)
        if self.name in ("firstFit", "onDemand"):
            if self.unit_price is None:
                raise ConfigError(f"{self.name} needs a fixed unit price")
            cls = FirstFit if self.name == "firstFit" else OnDemand
            return cls(spec, self.unit_price)
        raise ConfigError(f"unknown algorithm {self.name!r}")


@dataclass
class SimulationConfig:
    spec: CloudSpec
    workload: WorkloadTrace
    algorithm: AlgorithmConfig
    seed: int = 0
    failure_plan: Sequence[CapacityChange] = ()
    early_termination: tuple[float, float] | None = None  # uniform range of actual/reserved duration
    empty_allocations: bool = False
    audit_every_slot: bool = False


@dataclass
class ClassMetrics:
    submitted: int = 0
    accepted: int = 0
    completed: int = 0
    requested_value: int = 0
    welfare: int = 0
    revenue: int = 0


@dataclass
class MetricsReport:
    algorithm: str
    requested_value: int = 0
    welfare: int = 0
    revenue: int = 0
    submitted: int = 0
    accepted: int = 0
    completed: int = 0
    late: int = 0
    broken_guarantees: int = 0
    allocated_slots: int = 0
    capacity_slots: int = 0
    empty_allocation_slots: int = 0
    capacity_violations: int = 0
    per_class: dict[str, ClassMetrics] = field(default_factory=dict)

    @property
    def late_pct(self) -> float:
        return self.late / self.accepted if self.accepted else 0.0

    @property
    def utilization(self) -> float:
        return self.allocated_slots / self.capacity_slots if self.capacity_slots else 0.0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.submitted if self.submitted else 0.0

    @property
    def welfare_share(self) -> float:
        return self.welfare / self.requested_value if self.requested_value else 0.0

    def row(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "requestedValue": format_money(self.requested_value),
            "welfare": format_money(self.welfare),
            "welfareShare": f"{self.welfare_share:.6f}",
            "revenue": format_money(self.revenue),
            "latePct": f"{self.late_pct:.6f}",
            "brokenGuarantees": self.broken_guarantees,
            "utilization": f"{self.utilization:.6f}",
            "acceptanceRate": f"{self.acceptance_rate:.6f}",
            "submitted": self.submitted,
            "accepted": self.accepted,
            "completed": self.completed,
            "late": self.late,
            "emptyAllocationSlots": self.empty_allocation_slots,
        }

    def to_dict(self) -> dict:
        d = self.row()
        d["perClass"] = {
            k: {"submitted": v.submitted, "accepted": v.accepted, "completed": v.completed,
                "requestedValue": format_money(v.requested_value), "welfare": format_money(v.welfare),
                "revenue": format_money(v.revenue)}
            for k, v in sorted(self.per_class.items())
        }
        return d


METRICS_COLUMNS = tuple(MetricsReport("x").row())


@dataclass
class SimulationResult:
    metrics: MetricsReport
    events: list[str]
    engine: Scheduler

    @property
    def event_log(self) -> str:
        return "".join(line + "\n" for line in self.events)


def _payload(**kw) -> str:
    return " ".join(f"{k}={v}" for k, v in kw.items())


class _JobState:
    __slots__ = ("req", "accepted", "price", "need", "progress", "first_run", "done_at", "class_name")

    def __init__(self, req: ReservationRequest, need: int):
        self.req = req
        self.accepted = False
        self.price = 0
        self.need = need
        self.progress = 0
        self.first_run = None
        self.done_at = None
        self.class_name = req.job_class or "default"


def run_simulation(cfg: SimulationConfig) -> SimulationResult:
    spec = cfg.spec
    horizon = spec.grid.horizon
    for req in cfg.workload:
        if req.submit_time < 0 or req.submit_time >= horizon:
            raise ConfigError(f"job {req.job_id!r} submitted outside the horizon")
    engine = cfg.algorithm.build(spec)
    resources = spec.resource_ids
    capacity = {r: np.array(spec.capacity[r], dtype=np.int64) for r in resources}

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    jobs: dict[str, _JobState] = {}
    for req in cfg.workload:
        reserved = sum(r.duration for r in req.requests)
        need = reserved
        if cfg.early_termination is not None:
            lo, hi = cfg.early_termination
            need = max(1, math.ceil(rng.uniform(lo, hi) * reserved - 1e-9))
        jobs[req.job_id] = _JobState(req, min(need, reserved))

    arrivals = defaultdict(list)
    for req in cfg.workload:
        arrivals[req.submit_time].append(req)
    changes = defaultdict(list)
    for ch in cfg.failure_plan:
        if ch.resource not in capacity:
            raise ConfigError(f"failure plan names unknown resource {ch.resource!r}")
        changes[ch.slot].append(ch)

    m = MetricsReport(cfg.algorithm.name)
    events: list[str] = []
    log = events.append

    def apply_changes(slot: int, report_at: int):
        delta: dict[str, dict[int, int]] = defaultdict(dict)
        for ch in changes.get(slot, ()):
            for t in range(ch.slot, min(ch.slot + ch.duration, horizon)):
                capacity[ch.resource][t] = max(0, capacity[ch.resource][t] + ch.delta)
                delta[ch.resource][t] = delta[ch.resource].get(t, 0) + ch.delta
            log(f"{report_at}\tcapacity\t-\t" + _payload(resource=ch.resource, delta=ch.delta,
                                                        start=ch.slot, duration=ch.duration))
        return dict(delta)

    ticks = spec.ticks_per_slot
    if 0 in changes:
        summary = engine.update(0, CloudFeedback(capacity_delta=apply_changes(0, 0)))
        _log_replan(log, 0, summary)

    for now in range(horizon):
        # 1. arrivals
        for req in sorted(arrivals.get(now, ()), key=lambda r: r.job_id):
            js = jobs[req.job_id]
            cls = m.per_class.setdefault(js.class_name, ClassMetrics())
            m.submitted += 1
            m.requested_value += req.max_price
            cls.submitted += 1
            cls.requested_value += req.max_price
            quote = engine.make_reservation(now, req)
            log(f"{now}\tsubmit\t{req.job_id}\t" + _payload(value=format_money(req.max_price)))
            if quote.accepted:
                js.accepted, js.price = True, quote.price
                m.accepted += 1
                cls.accepted += 1
                log(f"{now}\taccept\t{req.job_id}\t" + _payload(price=format_money(quote.price),
                                                                start=quote.start))
            else:
                log(f"{now}\treject\t{req.job_id}\t")

        # 2. allocation polls
        alloc = engine.get_current_allocation(now, cfg.empty_allocations)
        for _ in range(ticks - 1):
            again = engine.get_current_allocation(now, cfg.empty_allocations)
            if again != alloc:
                raise AssertionError(f"getCurrentAllocation not idempotent at slot {now}")
        used = {r: 0 for r in resources}
        running = []
        alloc_map = dict(alloc)
        for job_id, bundle in alloc:
            if not bundle:
                m.empty_allocation_slots += 1
                continue
            for r, q in bundle.items():
                used[r] += q
            running.append(job_id)
        for r in resources:
            if used[r] > capacity[r][now]:
                m.capacity_violations += 1
                raise AssertionError(f"allocation exceeds capacity of {r} at slot {now}")
            m.allocated_slots += used[r]
            m.capacity_slots += int(capacity[r][now])
        if running:
            log(f"{now}\talloc\t-\t" + _payload(**{r: used[r] for r in resources}, jobs=len(running)))

        # 3. progress and terminations
        fb = CloudFeedback()
        for job_id in running:
            js = jobs[job_id]
            if js.done_at is not None:
                continue
            if js.first_run is None:
                js.first_run = now
                log(f"{now}\tstart\t{job_id}\t")
            # one unit of work per AND entry running in this slot
            js.progress += sum(1 for p in engine.ledger.jobs[job_id].placements if p.start <= now < p.end)
            fb.consumption[job_id] = alloc_map[job_id]
            if js.progress >= js.need:
                js.done_at = now + 1
                fb.terminations.add(job_id)
                log(f"{now}\tfinish\t{job_id}\t" + _payload(end=now + 1))

        # 4. capacity changes for the next slot, then feedback
        if now + 1 < horizon:
            fb.capacity_delta = apply_changes(now + 1, now)
        summary = engine.update(now, fb)
        _log_replan(log, now, summary)
        over = engine.ledger.overcommitted()
        if over:
            raise AssertionError(f"promised exceeds capacity at slot {now}: {over[:5]}")
        if cfg.audit_every_slot:
            problems = engine.ledger.audit()
            if problems:
                raise AssertionError(f"ledger audit failed at slot {now}: {problems}")

    problems = engine.ledger.audit()
    if problems:
        raise AssertionError(f"ledger audit failed at end of run: {problems}")
    m.broken_guarantees = engine.broken_guarantees
    for job_id, js in jobs.items():
        if not js.accepted:
            continue
        cls = m.per_class[js.class_name]
        on_time = js.done_at is not None and js.done_at <= js.req.deadline
        if on_time:
            m.completed += 1
            m.welfare += js.req.max_price
            m.revenue += js.price
            cls.completed += 1
            cls.welfare += js.req.max_price
            cls.revenue += js.price
        else:
            m.late += 1
            log(f"{horizon}\tlate\t{job_id}\t" + _payload(end=js.done_at if js.done_at is not None else "never"))
    return SimulationResult(m, events, engine)


def _log_replan(log, now, summary):
    for job_id in summary.cancelled:
        log(f"{now}\tcancel\t{job_id}\t")
    for job_id in summary.moved:
        log(f"{now}\tdelay\t{job_id}\t")


def brute_force_optimal(workload: Iterable[ReservationRequest], spec: CloudSpec,
                        max_jobs: int = 10, max_slots: int = 24) -> int:
    """Best total value (ticks) of any offline accept/reject + start-slot choice."""
    jobs = list(workload)
    if len(jobs) > max_jobs or spec.grid.horizon > max_slots:
        raise InstanceTooLarge(f"brute force limited to {max_jobs} jobs and {max_slots} slots")
    horizon = spec.grid.horizon
    resources = spec.resource_ids
    free = {r: list(spec.capacity[r]) for r in resources}

    options = []
    for job in jobs:
        per_entry = []
        for entry in job.requests:
            actual = demand_of(entry, spec, "actual")
            starts = range(max(entry.arrival, 0), min(entry.latest_start, horizon - entry.duration) + 1)
            per_entry.append([(s, entry.duration, actual) for s in starts])
        options.append((job.max_price, per_entry))
    order = sorted(range(len(options)), key=lambda k: -options[k][0])
    options = [options[k] for k in order]
    suffix = [0] * (len(options) + 1)
    for k in range(len(options) - 1, -1, -1):
        suffix[k] = suffix[k + 1] + options[k][0]

    best = 0

    def fits(s, d, bundle):
        return all(free[r][t] >= q for r, q in bundle.items() for t in range(s, s + d))

    def charge(s, d, bundle, sign):
        for r, q in bundle.items():
            for t in range(s, s + d):
                free[r][t] -= sign * q

    def place_entries(k, e, value, acc):
        per_entry = options[k][1]
        if e == len(per_entry):
            search(k + 1, acc + value)
            return
        for s, d, bundle in per_entry[e]:
            if fits(s, d, bundle):
                charge(s, d, bundle, +1)
                place_entries(k, e + 1, value, acc)
                charge(s, d, bundle, -1)

    def search(k, acc):
        nonlocal best
        if acc > best:
            best = acc
        if k == len(options) or acc + suffix[k] <= best:
            return
        value, _ = options[k]
        place_entries(k, 0, value, acc)
        search(k + 1, acc)

    search(0, 0)
    return best


COMPARE_COLUMNS = ("algorithm", "welfare", "revenue", "latePct", "utilization", "acceptanceRate",
                   "welfareShare", "brokenGuarantees", "welfareOverOpt")


def compare_algorithms(configs: Sequence[SimulationConfig]) -> list[dict]:
    """Run each config (same workload and spec expected) and tabulate the results."""
    if not configs:
        return []
    base = configs[0]
    for c in configs[1:]:
        if c.workload is not base.workload and tuple(c.workload) != tuple(base.workload):
            raise ConfigError("compared configs must share the workload")
    opt = None
    try:
        opt = brute_force_optimal(base.workload, base.spec)
    except InstanceTooLarge:
        pass
    rows = []
    for c in configs:
        rep = run_simulation(c).metrics
        rows.append({
            "algorithm": rep.algorithm,
            "welfare": format_money(rep.welfare),
            "revenue": format_money(rep.revenue),
            "latePct": f"{rep.late_pct:.6f}",
            "utilization": f"{rep.utilization:.6f}",
            "acceptanceRate": f"{rep.acceptance_rate:.6f}",
            "welfareShare": f"{rep.welfare_share:.6f}",
            "brokenGuarantees": rep.broken_guarantees,
            "welfareOverOpt": "" if not opt else f"{rep.welfare / opt:.6f}",
        })
    return rows


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def metrics_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n"


def allocation_total(alloc: Iterable[tuple[str, Bundle]]) -> Bundle:
    total = Bundle()
    for _, b in alloc:
        total = total + b
    return total
