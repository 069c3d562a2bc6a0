"""Demand curves and demand oracles.

A :class:`DemandCurve` is a non-increasing step function from unit price to
predicted quantity.  Oracles return, for a future slot, the curve of demand
expected to arrive between the current slot and that slot; the scheduler
prices units through the curve's inverse.
"""

from __future__ import annotations

import bisect
import csv
import math
from collections import defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .domain import INF, CloudSpec, WorkloadTrace, demand_of, format_money, formal_units, unit_ticks
from .lp import solve_packing_lp

QTY_EPS = 1e-9


@dataclass(frozen=True)
class DemandCurve:
    """Breakpoints ``(prices[k], quantities[k])``: prices strictly decreasing (ticks),
    cumulative quantities strictly increasing.

    ``demand(p)`` is the quantity at the lowest breakpoint price ``>= p`` and 0
    above the first breakpoint.  ``tail_price`` is what a unit costs when
    predicted demand never exceeds the residual (0 unless clamped).
    """

    prices: tuple[int, ...] = ()
    quantities: tuple[float, ...] = ()
    tail_price: int = 0
    _bounds: tuple[int, ...] = field(init=False, repr=False, compare=False)
    _prefix: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        prices = tuple(int(p) for p in self.prices)
        qty = tuple(float(q) for q in self.quantities)
        if len(prices) != len(qty):
            raise ValueError("prices and quantities differ in length")
        for k in range(len(prices)):
            if prices[k] < 0 or qty[k] <= 0:
                raise ValueError("curve values must be nonnegative with positive quantities")
            if k and not (prices[k] < prices[k - 1] and qty[k] > qty[k - 1]):
                raise ValueError("prices must strictly decrease and quantities strictly increase")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "quantities", qty)
        # integer x satisfies x < quantities[k] iff x < bounds[k]
        bounds = tuple(max(0, math.ceil(q - QTY_EPS)) for q in qty)
        prefix, acc, prev = [], 0, 0
        for p, c in zip(prices, bounds):
            acc += p * (c - prev)
            prev = c
            prefix.append(acc)
        object.__setattr__(self, "_bounds", bounds)
        object.__setattr__(self, "_prefix", tuple(prefix))

    @classmethod
    def from_contributions(cls, items: Iterable[tuple[int, float]]) -> DemandCurve:
        """Aggregate ``(unit price, quantity)`` contributions into a cumulative curve."""
        per_price: dict[int, float] = defaultdict(float)
        for p, q in items:
            if q > 0:
                per_price[int(p)] += float(q)
        prices, qty, acc = [], [], 0.0
        for p in sorted(per_price, reverse=True):
            acc = round(acc + per_price[p], 9)
            if acc <= QTY_EPS:
                continue
            prices.append(p)
            qty.append(acc)
        return cls(tuple(prices), tuple(qty))

    def __len__(self):
        return len(self.prices)

    @property
    def max_quantity(self) -> float:
        return self.quantities[-1] if self.quantities else 0.0

    def demand(self, price: float) -> float:
        # prices descending: count breakpoints with p_k >= price
        k = _count_ge(self.prices, price)
        return self.quantities[k - 1] if k else 0.0

    def inverse_price(self, q: float):
        """Highest price with ``demand(p) >= q``; ``INF`` for ``q <= 0``, ``None`` if unreachable."""
        if q <= QTY_EPS:
            return INF
        k = bisect.bisect_left(self.quantities, q - QTY_EPS)
        if k == len(self.quantities):
            return None
        return self.prices[k]

    def price_exceeding(self, x: int) -> int:
        """Highest price with ``demand(p) > x`` for integer ``x >= 0``, else ``tail_price``."""
        k = bisect.bisect_right(self._bounds, x)
        return self.prices[k] if k < len(self.prices) else self.tail_price

    def _cumulative(self, y: int) -> int:
        # sum of price_exceeding(x) for x in [0, y)
        if y <= 0:
            return 0
        k = bisect.bisect_right(self._bounds, y)
        done = self._prefix[k - 1] if k else 0
        start = self._bounds[k - 1] if k else 0
        rate = self.prices[k] if k < len(self.prices) else self.tail_price
        return done + rate * (y - start)

    def sum_exceeding(self, lo: int, hi: int) -> int:
        """Sum of ``price_exceeding(x)`` over integers ``lo <= x <= hi`` (``lo >= 0``)."""
        if hi < lo:
            return 0
        if lo < 0:
            raise ValueError("lo must be nonnegative")
        return self._cumulative(hi + 1) - self._cumulative(lo)

    def clamp(self, floor: int = 0, cap: int | None = None) -> DemandCurve:
        """Curve whose ``price_exceeding`` is the original clamped to ``[floor, cap]``."""
        prices, qty = [], []
        for p, q in zip(self.prices, self.quantities):
            p = max(p, floor)
            if cap is not None:
                p = min(p, cap)
            if p <= floor:
                break
            if prices and prices[-1] == p:
                qty[-1] = q
            else:
                prices.append(p)
                qty.append(q)
        return DemandCurve(tuple(prices), tuple(qty), tail_price=floor)

    def scaled(self, factor: float) -> DemandCurve:
        return DemandCurve(self.prices, tuple(q * factor for q in self.quantities), self.tail_price)


def _count_ge(desc: tuple[int, ...], price: float) -> int:
    lo, hi = 0, len(desc)
    while lo < hi:
        mid = (lo + hi) // 2
        if desc[mid] >= price:
            lo = mid + 1
        else:
            hi = mid
    return lo


def inverse_price(curve: DemandCurve, q: float):
    return curve.inverse_price(q)


class DemandOracle(Protocol):
    def curve(self, now: int, t: int, resource: str | None = None) -> DemandCurve: ...


def oracle_query(oracle: DemandOracle, now: int, t: int, q: float, resource: str | None = None):
    """Highest price at which demand arriving in ``[now, t]`` for slot ``t`` reaches ``q``."""
    return oracle.curve(now, t, resource).inverse_price(q)


class FlatPredictor:
    """The same curve for every slot (cold start, or a known constant market)."""

    def __init__(self, curves: DemandCurve | Mapping[str, DemandCurve] | None = None, horizon: int | None = None):
        if curves is None:
            curves = DemandCurve()
        self._default = curves if isinstance(curves, DemandCurve) else None
        self._curves = {} if isinstance(curves, DemandCurve) else dict(curves)
        self.horizon = horizon

    def curve(self, now: int, t: int, resource: str | None = None) -> DemandCurve:
        _check_slot(now, t, self.horizon)
        if self._default is not None:
            return self._default
        if resource is None and len(self._curves) == 1:
            return next(iter(self._curves.values()))
        return self._curves.get(resource, DemandCurve())

    def full_curve(self, t: int, resource: str | None = None) -> DemandCurve:
        return self.curve(t, t, resource)


def _check_slot(now: int, t: int, horizon: int | None):
    if t < now:
        raise ValueError(f"slot {t} is before the current slot {now}")
    if t < 0 or (horizon is not None and t >= horizon):
        raise ValueError(f"out-of-horizon slot {t}")


class ContributionPredictor:
    """Curves assembled from per-job contributions ``(lead, unit price, quantity)``.

    A contribution at slot ``u`` from a job submitted at ``s`` has lead
    ``u - s``.  Querying slot ``t`` at ``now`` keeps leads ``<= t - now``, i.e.
    demand that arrives in ``[now, t]``.  With a ``period`` the contributions
    are folded onto slot-of-period and averaged over the periods observed.
    """

    def __init__(self, contributions, resources: Iterable[str], period: int | None = None,
                 span: tuple[int, int] = (0, 1), restrict_arrivals: bool = True):
        self.resources = tuple(resources)
        self.period = period
        self.span = span
        self.restrict_arrivals = restrict_arrivals
        self.horizon = None if period else span[1]
        grouped: dict[tuple[str, int], list] = defaultdict(list)
        for r, slot, lead, price, qty in contributions:
            if qty <= 0:
                continue
            key = slot % period if period else slot
            grouped[(r, key)].append((lead, price, qty))
        self._data = {}
        for k, rows in grouped.items():
            arr = np.array(rows, dtype=float)
            leads = arr[:, 0].astype(np.int64)
            self._data[k] = (leads, arr[:, 1].astype(np.int64), arr[:, 2], int(leads.max()))
        self._weights = {}
        if period:
            lo, hi = span
            for key in range(period):
                n = len(range(lo + ((key - lo) % period), hi, period))
                self._weights[key] = max(n, 1)
        self._cache: dict = {}

    def _resource(self, resource):
        if resource is None:
            if len(self.resources) != 1:
                raise ValueError("resource must be named for a multi-resource oracle")
            return self.resources[0]
        return resource

    def curve(self, now: int, t: int, resource: str | None = None) -> DemandCurve:
        _check_slot(now, t, self.horizon)
        r = self._resource(resource)
        key = t % self.period if self.period else t
        return self._build(r, key, t - now if self.restrict_arrivals else None)

    def full_curve(self, t: int, resource: str | None = None) -> DemandCurve:
        """Curve for slot ``t`` counting every contribution regardless of arrival time."""
        r = self._resource(resource)
        key = t % self.period if self.period else t
        return self._build(r, key, None)

    def _build(self, r: str, key: int, cutoff: int | None) -> DemandCurve:
        data = self._data.get((r, key))
        if data is None:
            return _EMPTY
        leads, prices, qty, max_lead = data
        if cutoff is not None and cutoff >= max_lead:
            cutoff = None
        ck = (r, key, cutoff)
        hit = self._cache.get(ck)
        if hit is not None:
            return hit
        if cutoff is None:
            p, q = prices, qty
        else:
            mask = leads <= cutoff
            p, q = prices[mask], qty[mask]
        if self.period:
            q = q / self._weights[key]
        curve = DemandCurve.from_contributions(zip(p.tolist(), q.tolist()))
        self._cache[ck] = curve
        return curve

    def slots(self) -> list[int]:
        if self.period:
            return list(range(self.period))
        return list(range(self.span[0], self.span[1]))


_EMPTY = DemandCurve()


def _truncate(history: WorkloadTrace, spec: CloudSpec, history_slots: int | None) -> tuple[list, tuple[int, int]]:
    end = spec.grid.horizon
    start = 0 if history_slots is None else max(0, end - history_slots)
    jobs = [j for j in history if j.arrival >= start]
    return jobs, (start, end)


def _job_unit_price(job, spec) -> int:
    return unit_ticks(job.max_price, formal_units(job, spec))


def build_spreading_predictor(history: WorkloadTrace, spec: CloudSpec, period: int | None = None,
                              restrict_arrivals: bool = True,
                              history_slots: int | None = None) -> ContributionPredictor:
    """Spread each past job evenly over its window.

    A job of width ``W`` and duration ``T`` with window length ``L`` adds
    ``W*T/L`` units at unit price ``value/(W*T)`` to every slot of the window.
    """
    jobs, span = _truncate(history, spec, history_slots)
    contrib = []
    for job in jobs:
        price = _job_unit_price(job, spec)
        for entry in job.requests:
            formal = demand_of(entry, spec, "formal")
            length = entry.deadline - entry.arrival
            for r, w in formal.items():
                q = w * entry.duration / length
                for u in range(entry.arrival, entry.deadline):
                    contrib.append((r, u, u - job.submit_time, price, q))
    return ContributionPredictor(contrib, spec.formal_resource_ids, period, span, restrict_arrivals)


@dataclass
class FractionalAllocation:
    """LP solution: ``values[(job_id, entry, start)]`` in [0, 1]."""

    values: dict[tuple[str, int, int], float]
    objective: float
    iterations: int = 0
    span: tuple[int, int] = (0, 0)

    def job_total(self, job_id: str, entry: int = 0) -> float:
        return sum(v for (j, e, _), v in self.values.items() if j == job_id and e == entry)


def solve_fractional_allocation(history: WorkloadTrace, spec: CloudSpec, committed=None,
                                history_slots: int | None = None, tol: float = 1e-9) -> FractionalAllocation:
    """Value-maximizing fractional schedule of past requests.

    Each AND entry is an independent pseudo-job carrying the job's value in
    proportion to its formal units.  ``committed`` (a plan ledger) subtracts
    already-promised quantities from capacity.
    """
    jobs, span = _truncate(history, spec, history_slots)
    lo, hi = span
    resources = spec.resource_ids
    cols, values = [], []
    job_rows = 0
    row_of_job = []
    for job in jobs:
        units = formal_units(job, spec)
        for e, entry in enumerate(job.requests):
            share = demand_of(entry, spec, "formal").total() * entry.duration / units
            starts = range(max(entry.arrival, lo), min(entry.latest_start, hi - entry.duration) + 1)
            if not len(starts):
                continue
            actual = demand_of(entry, spec, "actual")
            for s in starts:
                cols.append((job.job_id, e, s, entry.duration, actual, job_rows))
                values.append(job.max_price * share / 1e4)
            row_of_job.append((job.job_id, e))
            job_rows += 1
    if not cols:
        return FractionalAllocation({}, 0.0, 0, span)
    slot_row = {}
    cap_rows = []
    for ri, r in enumerate(resources):
        cap = spec.capacity[r]
        for t in range(lo, hi):
            c = cap[t] - (committed.promised_at(r, t) if committed is not None else 0)
            slot_row[(r, t)] = job_rows + len(cap_rows)
            cap_rows.append(max(c, 0))
    A = np.zeros((job_rows + len(cap_rows), len(cols)))
    for k, (_, _, s, dur, actual, jr) in enumerate(cols):
        A[jr, k] = 1.0
        for r, w in actual.items():
            for t in range(s, s + dur):
                A[slot_row[(r, t)], k] = w
    b = np.concatenate([np.ones(job_rows), np.array(cap_rows, dtype=float)])
    used = np.flatnonzero(np.abs(A).sum(axis=1) > 0)
    res = solve_packing_lp(np.array(values), A[used], b[used], tol=tol)
    sol = {}
    for k, (jid, e, s, *_rest) in enumerate(cols):
        if res.x[k] > tol:
            sol[(jid, e, s)] = float(res.x[k])
    return FractionalAllocation(sol, res.objective, res.iterations, span)


def build_lp_predictor(history: WorkloadTrace, spec: CloudSpec, period: int | None = None,
                       restrict_arrivals: bool = True, history_slots: int | None = None,
                       committed=None) -> ContributionPredictor:
    """Predict slot demand from the optimal fractional allocation of past requests."""
    alloc = solve_fractional_allocation(history, spec, committed=committed, history_slots=history_slots)
    by_id = {j.job_id: j for j in history}
    occupancy: dict[tuple[str, int, str, int], float] = defaultdict(float)
    for (jid, e, s), x in alloc.values.items():
        entry = by_id[jid].requests[e]
        for r, w in demand_of(entry, spec, "formal").items():
            for t in range(s, s + entry.duration):
                occupancy[(jid, e, r, t)] += x * w
    contrib = []
    for (jid, e, r, t), q in sorted(occupancy.items()):
        job = by_id[jid]
        contrib.append((r, t, t - job.submit_time, _job_unit_price(job, spec), q))
    return ContributionPredictor(contrib, spec.formal_resource_ids, period, alloc.span, restrict_arrivals)


def write_curves_csv(oracle, dest, resources: Iterable[str], slots: Iterable[int]) -> int:
    """Dump ``slot,resource,price,cumulativeQuantity`` rows of the unrestricted curves."""
    own = isinstance(dest, str) or hasattr(dest, "__fspath__")
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    n = 0
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "resource", "price", "cumulativeQuantity"])
        for t in slots:
            for r in resources:
                curve = oracle.full_curve(t, r)
                for p, q in zip(curve.prices, curve.quantities):
                    w.writerow([t, r, format_money(p), f"{q:.6f}"])
                    n += 1
    finally:
        if own:
            fh.close()
    return n
