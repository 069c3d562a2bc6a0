"""Online scheduling and pricing on top of a plan ledger.

Three algorithms share the same engine surface (``make_reservation``,
``get_current_allocation``, ``update``):

* :class:`BasicEcon` prices every unit by the predicted demand it displaces
  and starts the job at the cheapest slot of its window.
* :class:`FirstFit` charges a fixed unit price and takes the earliest slot
  that fits.
* :class:`OnDemand` charges a fixed unit price and admits a job if it fits at
  the current slot only.

Prices are computed without looking at the bid; the bid is read exactly once,
in the final ``price <= max_price`` comparison.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    INF,
    Bundle,
    CloudSpec,
    ReservationRequest,
    ResourceRequest,
    demand_of,
    formal_units,
    validate_request,
)
from .predictor import DemandCurve, DemandOracle

PLANNED, RUNNING, FINISHED, CANCELLED = "planned", "running", "finished", "cancelled"


class InvalidRequestError(ValueError):
    def __init__(self, job_id: str, violations: list[str]):
        self.violations = violations
        super().__init__(f"invalid request {job_id!r}: " + "; ".join(violations))


class UnknownJobError(KeyError):
    pass


@dataclass
class Placement:
    job_id: str
    entry: int
    start: int
    duration: int
    bundle: Bundle
    arrival: int
    deadline: int
    need: int = 0

    def __post_init__(self):
        if not self.need:
            self.need = self.duration

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass
class JobPlan:
    job_id: str
    placements: list[Placement]
    price: int
    units: int
    guaranteed: bool = True
    finished_at: int | None = None
    cancelled_at: int | None = None

    def state_at(self, now: int) -> str:
        if self.cancelled_at is not None:
            return CANCELLED
        if self.finished_at is not None:
            return FINISHED
        if self.placements and min(p.start for p in self.placements) <= now:
            return RUNNING
        return PLANNED

    @property
    def start(self) -> int | None:
        return min(p.start for p in self.placements) if self.placements else None

    @property
    def density(self) -> float:
        return self.price / self.units if self.units else 0.0


@dataclass(frozen=True)
class Quote:
    accepted: bool
    price: int | None = None
    start: int | None = None
    starts: tuple[int | None, ...] = ()


@dataclass
class CloudFeedback:
    """What the cloud reports back: capacity changes, usage, terminations."""

    capacity_delta: dict[str, dict[int, int]] = field(default_factory=dict)
    consumption: dict[str, Bundle] = field(default_factory=dict)
    terminations: set[str] = field(default_factory=set)
    waiting_processes: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ReplanSummary:
    released: int = 0
    cancelled: tuple[str, ...] = ()
    moved: tuple[str, ...] = ()
    broken: int = 0


class PlanLedger:
    """Committed quantities per resource and slot, plus every job's placements."""

    def __init__(self, spec: CloudSpec):
        self.spec = spec
        self.horizon = spec.grid.horizon
        self.resources = spec.resource_ids
        self.capacity = {r: np.array(spec.capacity[r], dtype=np.int64) for r in self.resources}
        self.promised = {r: np.zeros(self.horizon, dtype=np.int64) for r in self.resources}
        self.jobs: dict[str, JobPlan] = {}
        self._active: list[set[str]] = [set() for _ in range(self.horizon)]

    def copy(self) -> PlanLedger:
        return copy.deepcopy(self)

    def promised_at(self, r: str, t: int) -> int:
        return int(self.promised[r][t])

    def residual(self, r: str, t: int) -> int:
        return int(self.capacity[r][t] - self.promised[r][t])

    def fits(self, bundle: Bundle, start: int, duration: int) -> bool:
        end = start + duration
        if start < 0 or end > self.horizon:
            return False
        for r, q in bundle.items():
            if (self.capacity[r][start:end] - self.promised[r][start:end] < q).any():
                return False
        return True

    def fit_mask(self, bundle: Bundle, lo: int, hi: int) -> np.ndarray:
        """Boolean per slot in ``[lo, hi)``: does ``bundle`` fit in that slot alone."""
        ok = np.ones(max(hi - lo, 0), dtype=bool)
        for r, q in bundle.items():
            ok &= self.capacity[r][lo:hi] - self.promised[r][lo:hi] >= q
        return ok

    def earliest_fit(self, bundle: Bundle, duration: int, lo: int, latest_start: int) -> int | None:
        if latest_start < lo:
            return None
        ok = self.fit_mask(bundle, lo, latest_start + duration)
        bad = np.concatenate([[0], np.cumsum(~ok)])
        window_bad = bad[duration:] - bad[:-duration]
        hits = np.flatnonzero(window_bad == 0)
        return lo + int(hits[0]) if hits.size else None

    def _charge(self, p: Placement, lo: int, hi: int, sign: int):
        lo, hi = max(lo, p.start), min(hi, p.end)
        if hi <= lo:
            return
        for r, q in p.bundle.items():
            self.promised[r][lo:hi] += sign * q
        for t in range(lo, hi):
            if sign > 0:
                self._active[t].add(p.job_id)
            else:
                self._active[t].discard(p.job_id)

    def add(self, p: Placement):
        self._charge(p, p.start, p.end, +1)

    def remove(self, p: Placement, from_slot: int = 0):
        """Uncharge ``p`` from ``from_slot`` on and trim it to end there."""
        self._charge(p, from_slot, p.end, -1)
        if from_slot > p.start:
            p.duration = min(p.duration, from_slot - p.start)
        else:
            p.duration = 0

    def commit(self, plan: JobPlan, already_charged: bool = False):
        if plan.job_id in self.jobs:
            raise ValueError(f"job {plan.job_id!r} already in the ledger")
        self.jobs[plan.job_id] = plan
        if not already_charged:
            for p in plan.placements:
                self.add(p)

    def release_after(self, job_id: str, now: int) -> int:
        """Free the job's slots after ``now``; returns resource-slots released."""
        plan = self.jobs[job_id]
        freed = 0
        for p in plan.placements:
            if p.end > now + 1:
                freed += p.bundle.total() * (p.end - max(now + 1, p.start))
                self.remove(p, now + 1)
        return freed

    def overcommitted(self) -> list[tuple[str, int]]:
        out = []
        for r in self.resources:
            for t in np.flatnonzero(self.promised[r] > self.capacity[r]):
                out.append((r, int(t)))
        return out

    def audit(self) -> list[str]:
        """Consistency violations: promised vs placements, capacity, windows."""
        problems = []
        expect = {r: np.zeros(self.horizon, dtype=np.int64) for r in self.resources}
        for plan in self.jobs.values():
            for p in plan.placements:
                if p.duration <= 0:
                    continue
                for r, q in p.bundle.items():
                    expect[r][p.start:p.end] += q
                if plan.guaranteed and plan.cancelled_at is None and plan.finished_at is None:
                    if p.start < p.arrival or p.end > p.deadline:
                        problems.append(f"{p.job_id}: placement [{p.start},{p.end}) outside window")
        for r in self.resources:
            if not np.array_equal(expect[r], self.promised[r]):
                problems.append(f"{r}: promised does not match placements")
            over = np.flatnonzero(self.promised[r] > self.capacity[r])
            if over.size:
                problems.append(f"{r}: promised exceeds capacity at slots {over[:5].tolist()}")
        return problems

    def current_allocation(self, now: int) -> list[tuple[str, Bundle]]:
        if not 0 <= now < self.horizon:
            return []
        out = []
        for job_id in sorted(self._active[now]):
            total = Bundle()
            for p in self.jobs[job_id].placements:
                if p.start <= now < p.end:
                    total = total + p.bundle
            out.append((job_id, total))
        return out


def unit_price(ledger: PlanLedger, oracle: DemandOracle, now: int, t: int, r: str, i: int):
    """Price of the ``i``-th additional unit of ``r`` at slot ``t``.

    ``INF`` when ``promised + i`` would exceed capacity; otherwise the highest
    price at which predicted demand exceeds ``capacity - promised - i``, or 0 if
    predicted demand never gets there.
    """
    if i < 1 or t < now:
        raise ValueError("need i >= 1 and t >= now")
    residual = ledger.residual(r, t)
    if i > residual:
        return INF
    return oracle.curve(now, t, r).price_exceeding(residual - i)


def interval_cost(ledger: PlanLedger, oracle: DemandOracle, now: int, req: ResourceRequest, start: int):
    """Sum over ``[start, start+T)`` and formal resources of the unit prices (``INF`` if blocked)."""
    if not req.arrival <= start <= req.latest_start:
        raise ValueError("start outside the feasible range")
    spec = ledger.spec
    formal = demand_of(req, spec, "formal")
    actual = demand_of(req, spec, "actual")
    total = 0
    for t in range(start, start + req.duration):
        for r, q in actual.items():
            if q > ledger.residual(r, t):
                return INF
        for r, w in formal.items():
            for i in range(1, w + 1):
                p = unit_price(ledger, oracle, now, t, r, i)
                if p == INF:
                    return INF
                total += p
    return total


class Scheduler:
    """Common engine surface; subclasses implement ``_quote``."""

    name = "base"
    guaranteed = True

    def __init__(self, spec: CloudSpec):
        self.spec = spec
        self.ledger = PlanLedger(spec)
        self.broken_guarantees = 0
        self.observed_consumption: dict[str, Bundle] = {}
        self.observed_waiting: dict[str, int] = {}

    def make_reservation(self, now: int, req: ReservationRequest) -> Quote:
        problems = validate_request(req, self.spec)
        if problems:
            raise InvalidRequestError(req.job_id, problems)
        if req.job_id in self.ledger.jobs:
            raise InvalidRequestError(req.job_id, ["job id already reserved"])
        placements, price = self._quote(now, req)
        if placements is None or price > req.max_price:
            for p in placements or ():
                self.ledger.remove(p)
            return Quote(False)
        plan = JobPlan(req.job_id, placements, price, formal_units(req, self.spec), self.guaranteed)
        self.ledger.commit(plan, already_charged=True)
        starts = tuple(p.start for p in placements)
        return Quote(True, price, min(starts), starts)

    def _quote(self, now: int, req: ReservationRequest):
        """Return ``(tentative placements already charged to the ledger, price)``.

        ``placements`` is None when the request cannot be placed at all.
        """
        raise NotImplementedError

    def _entry_bundles(self, entry: ResourceRequest):
        return demand_of(entry, self.spec, "formal"), demand_of(entry, self.spec, "actual")

    def get_current_allocation(self, now: int, empty_allocations: bool = False) -> list[tuple[str, Bundle]]:
        alloc = self.ledger.current_allocation(now)
        if not empty_allocations:
            return alloc
        placed = {j for j, _ in alloc}
        extra = []
        for job_id, plan in self.ledger.jobs.items():
            if job_id in placed or plan.cancelled_at is not None or plan.finished_at is not None:
                continue
            if any(p.arrival <= now < p.deadline for p in plan.placements):
                extra.append((job_id, Bundle()))
        return sorted(alloc + extra, key=lambda x: x[0])

    def update(self, now: int, fb: CloudFeedback) -> ReplanSummary:
        jobs = self.ledger.jobs
        for job_id in list(fb.terminations) + list(fb.consumption) + list(fb.waiting_processes):
            if job_id not in jobs:
                raise UnknownJobError(job_id)
        released = 0
        for job_id in sorted(fb.terminations):
            plan = jobs[job_id]
            if plan.finished_at is None and plan.cancelled_at is None:
                released += self.ledger.release_after(job_id, now)
                plan.finished_at = now + 1
        for r, deltas in sorted(fb.capacity_delta.items()):
            if r not in self.ledger.capacity:
                raise KeyError(f"unknown resource {r!r}")
            for t, d in sorted(deltas.items()):
                if 0 <= t < self.ledger.horizon:
                    self.ledger.capacity[r][t] = max(0, self.ledger.capacity[r][t] + d)
        cancelled, moved = self._repair(now)
        self.observed_consumption.update(fb.consumption)
        self.observed_waiting.update(fb.waiting_processes)
        return ReplanSummary(released, tuple(cancelled), tuple(moved), len(cancelled))

    def _victims(self, now: int, running: bool) -> list[JobPlan]:
        bad = self.ledger.overcommitted()
        ids = set()
        for _, t in bad:
            ids |= self.ledger._active[t]
        out = []
        for job_id in ids:
            plan = self.ledger.jobs[job_id]
            is_running = plan.state_at(now) == RUNNING
            if is_running == running:
                out.append(plan)
        return sorted(out, key=lambda p: (p.density, p.job_id))

    def _repair(self, now: int):
        """Cancel planned jobs by ascending price density until nothing is over-committed;
        running jobs go only if planned ones are not enough."""
        cancelled = []
        for running in (False, True):
            while self.ledger.overcommitted():
                victims = self._victims(now, running)
                if not victims:
                    break
                plan = victims[0]
                for p in plan.placements:
                    self.ledger.remove(p, now + 1 if running else 0)
                plan.cancelled_at = now + 1
                cancelled.append(plan.job_id)
        self.broken_guarantees += len(cancelled)
        return cancelled, []


class BasicEcon(Scheduler):
    """Externality pricing against a demand oracle.

    ``unit_floor``/``unit_cap`` bound every unit price (in ticks); the default
    leaves prices unbounded above and at least 0.
    """

    name = "basicEcon"

    def __init__(self, spec: CloudSpec, oracle: DemandOracle, unit_floor: int = 0, unit_cap: int | None = None):
        super().__init__(spec)
        self.oracle = oracle
        self.unit_floor = unit_floor
        self.unit_cap = unit_cap
        self._clamped: dict[int, tuple[DemandCurve, DemandCurve]] = {}

    def _curve(self, now: int, t: int, r: str) -> DemandCurve:
        curve = self.oracle.curve(now, t, r)
        if self.unit_floor == 0 and self.unit_cap is None:
            return curve
        hit = self._clamped.get(id(curve))
        if hit is None or hit[0] is not curve:
            hit = (curve, curve.clamp(self.unit_floor, self.unit_cap))
            self._clamped[id(curve)] = hit
        return hit[1]

    def slot_costs(self, now: int, entry: ResourceRequest, lo: int | None = None) -> list:
        """cost[t] for every slot of the window from ``lo`` on (``INF`` where the entry does not fit)."""
        formal, actual = self._entry_bundles(entry)
        lo = entry.arrival if lo is None else lo
        led = self.ledger
        costs = []
        for t in range(lo, entry.deadline):
            c = 0
            for r, q in actual.items():
                if q > led.capacity[r][t] - led.promised[r][t]:
                    c = INF
                    break
            if c == 0:
                for r, w in formal.items():
                    res = int(led.capacity[r][t] - led.promised[r][t])
                    c += self._curve(now, t, r).sum_exceeding(res - w, res - 1)
            costs.append(c)
        return costs

    def best_start(self, now: int, entry: ResourceRequest):
        """``(t*, totalCost[t*])`` with ties to the earliest slot, or None if every start is blocked."""
        lo = max(entry.arrival, now)
        T = entry.duration
        if entry.latest_start < lo:
            return None
        costs = self.slot_costs(now, entry, lo)
        best, best_cost = None, INF
        blocked = 0
        run = 0
        for k, c in enumerate(costs):
            if c == INF:
                blocked += 1
            else:
                run += c
            if k >= T:
                old = costs[k - T]
                if old == INF:
                    blocked -= 1
                else:
                    run -= old
            if k >= T - 1 and blocked == 0 and run < best_cost:
                best, best_cost = lo + k - T + 1, run
        return None if best is None else (best, best_cost)

    def _quote(self, now, req):
        placements, total = [], 0
        for e, entry in enumerate(req.requests):
            found = self.best_start(now, entry)
            if found is None:
                return placements, INF
            s, cost = found
            p = Placement(req.job_id, e, s, entry.duration, demand_of(entry, self.spec, "actual"),
                          entry.arrival, entry.deadline)
            self.ledger.add(p)
            placements.append(p)
            total += cost
        return placements, total


class FirstFit(Scheduler):
    """Fixed unit price, earliest start that fits in the window."""

    name = "firstFit"

    def __init__(self, spec: CloudSpec, unit_price: int):
        super().__init__(spec)
        self.unit_price = unit_price

    def _quote(self, now, req):
        placements = []
        for e, entry in enumerate(req.requests):
            actual = demand_of(entry, self.spec, "actual")
            s = self.ledger.earliest_fit(actual, entry.duration, max(entry.arrival, now), entry.latest_start)
            if s is None:
                return placements, INF
            p = Placement(req.job_id, e, s, entry.duration, actual, entry.arrival, entry.deadline)
            self.ledger.add(p)
            placements.append(p)
        return placements, self.unit_price * formal_units(req, self.spec)


class OnDemand(Scheduler):
    """Admit if the job fits right now; run as soon as possible afterwards.

    Only the current slot is checked.  The job then takes the earliest start
    from ``now`` where it fits for its whole duration, which may fall after
    its deadline (it becomes late) or past the horizon (it never runs).
    """

    name = "onDemand"
    guaranteed = False

    def __init__(self, spec: CloudSpec, unit_price: int):
        super().__init__(spec)
        self.unit_price = unit_price

    def _quote(self, now, req):
        start = max(now, req.arrival)
        if start >= self.ledger.horizon:
            return None, INF
        needs = Bundle()
        for entry in req.requests:
            needs = needs + demand_of(entry, self.spec, "actual")
        if not self.ledger.fits(needs, start, 1):
            return None, INF
        price = self.unit_price * formal_units(req, self.spec)
        if price > req.max_price:
            return [], price
        placements = []
        for e, entry in enumerate(req.requests):
            actual = demand_of(entry, self.spec, "actual")
            p = Placement(req.job_id, e, start, entry.duration, actual, entry.arrival, entry.deadline)
            self._place(p, start)
            placements.append(p)
        return placements, price

    def _place(self, p: Placement, lo: int):
        h = self.ledger.horizon
        s = self.ledger.earliest_fit(p.bundle, p.need, lo, h - p.need)
        if s is None:
            p.start, p.duration = h, 0
        else:
            p.start, p.duration = s, p.need
            self.ledger.add(p)

    def _repair(self, now):
        # nothing is guaranteed: planned jobs are pushed back to their next fit,
        # latest start first; running jobs are stopped only if that is not enough
        moved, cancelled = [], []
        seen = set()
        while self.ledger.overcommitted():
            victims = [v for v in self._victims(now, running=False) if v.job_id not in seen]
            if victims:
                plan = max(victims, key=lambda v: (v.start, v.job_id))
                seen.add(plan.job_id)
                for p in plan.placements:
                    if p.duration > 0:
                        self.ledger.remove(p)
                    self._place(p, now + 1)
                moved.append(plan.job_id)
                continue
            running = self._victims(now, running=True)
            if not running:
                break
            plan = running[0]
            for p in plan.placements:
                self.ledger.remove(p, now + 1)
            plan.cancelled_at = now + 1
            cancelled.append(plan.job_id)
        return cancelled, moved
