"""Core data model: time grid, resources, configurations, requests, money."""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from enum import Enum

# Money is fixed-point with 4 decimal places, carried as an int count of ticks.
TICKS_PER_UNIT = 10_000
_QUANTUM = Decimal("0.0001")

INF = math.inf


def to_ticks(value) -> int:
    """Convert a money amount (str, Decimal, int, float) to integer ticks."""
    if isinstance(value, bool):
        raise TypeError("money cannot be a bool")
    if isinstance(value, float):
        value = repr(value)
    dec = Decimal(value).quantize(_QUANTUM, rounding=ROUND_HALF_EVEN)
    return int(dec * TICKS_PER_UNIT)


def format_money(ticks: int) -> str:
    """Render ticks as a decimal string with exactly 4 places, e.g. ``"100.0000"``."""
    sign = "-" if ticks < 0 else ""
    whole, frac = divmod(abs(int(ticks)), TICKS_PER_UNIT)
    return f"{sign}{whole}.{frac:04d}"


def ticks_to_decimal(ticks: int) -> Decimal:
    return Decimal(format_money(ticks))


def unit_ticks(total_ticks: int, units: int) -> int:
    """Per-unit price in ticks, rounded half-even to the nearest tick."""
    if units <= 0:
        raise ValueError("units must be positive")
    q, r = divmod(total_ticks, units)
    if 2 * r > units or (2 * r == units and q % 2 == 1):
        q += 1
    return q


@dataclass(frozen=True)
class TimeGrid:
    """Discrete time: ``horizon`` slots of ``slot_duration`` seconds each."""

    slot_duration: float
    horizon: int

    def __post_init__(self):
        if not self.slot_duration > 0:
            raise ValueError("slot_duration must be positive")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be an integer >= 1")

    def slots_up(self, seconds: float) -> int:
        return math.ceil(seconds / self.slot_duration - 1e-9)

    def slots_down(self, seconds: float) -> int:
        return math.floor(seconds / self.slot_duration + 1e-9)

    def slots_per(self, seconds: float) -> int:
        """Whole slots in a period of ``seconds`` (at least 1)."""
        return max(1, round(seconds / self.slot_duration))


class ResourceKind(str, Enum):
    FORMAL = "formal"
    VIRTUAL = "virtual"


@dataclass(frozen=True)
class ResourceType:
    id: str
    kind: ResourceKind = ResourceKind.FORMAL

    def __post_init__(self):
        object.__setattr__(self, "kind", ResourceKind(self.kind))


class Bundle(Mapping):
    """Immutable map resource id -> nonnegative integer quantity.

    Missing resources read as zero through ``get``; zero entries are dropped so
    that equal bundles compare and hash equal.
    """

    __slots__ = ("_q",)

    def __init__(self, quantities: Mapping[str, int] | Iterable[tuple[str, int]] | None = None, **kw):
        items = dict(quantities or {})
        items.update(kw)
        q = {}
        for k, v in items.items():
            if int(v) != v or v < 0:
                raise ValueError(f"bundle quantity for {k!r} must be a nonnegative integer, got {v!r}")
            if v:
                q[str(k)] = int(v)
        self._q = dict(sorted(q.items()))

    def __getitem__(self, key: str) -> int:
        return self._q[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._q)

    def __len__(self) -> int:
        return len(self._q)

    def __hash__(self):
        return hash(tuple(self._q.items()))

    def __eq__(self, other):
        if isinstance(other, Mapping):
            return self._q == {k: v for k, v in other.items() if v}
        return NotImplemented

    def __add__(self, other: Mapping[str, int]) -> Bundle:
        out = dict(self._q)
        for k, v in other.items():
            out[k] = out.get(k, 0) + v
        return Bundle(out)

    def __mul__(self, n: int) -> Bundle:
        if int(n) != n or n < 0:
            raise ValueError("bundles scale only by nonnegative integers")
        return Bundle({k: v * int(n) for k, v in self._q.items()})

    __rmul__ = __mul__

    def total(self) -> int:
        return sum(self._q.values())

    def __repr__(self):
        return f"Bundle({self._q!r})"


@dataclass(frozen=True)
class Configuration:
    """A sellable bundle: ``formal`` is what the user buys, ``actual`` is charged to capacity."""

    id: str
    formal: Bundle
    actual: Bundle = None

    def __post_init__(self):
        formal = Bundle(self.formal)
        actual = formal if self.actual is None else Bundle(self.actual)
        if not formal:
            raise ValueError(f"configuration {self.id!r} has an empty formal bundle")
        for r, q in formal.items():
            if actual.get(r, 0) < q:
                raise ValueError(f"configuration {self.id!r}: actual {r} below formal quantity")
        object.__setattr__(self, "formal", formal)
        object.__setattr__(self, "actual", actual)


@dataclass(frozen=True)
class CloudSpec:
    grid: TimeGrid
    resources: tuple[ResourceType, ...]
    configurations: tuple[Configuration, ...]
    capacity: Mapping[str, tuple[int, ...]]
    tick_interval: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "resources", tuple(self.resources))
        object.__setattr__(self, "configurations", tuple(self.configurations))
        ids = [r.id for r in self.resources]
        if len(set(ids)) != len(ids):
            raise ValueError("resource ids must be unique")
        conf_ids = [c.id for c in self.configurations]
        if len(set(conf_ids)) != len(conf_ids):
            raise ValueError("configuration ids must be unique")
        known = set(ids)
        formal_ids = {r.id for r in self.resources if r.kind is ResourceKind.FORMAL}
        for c in self.configurations:
            if not set(c.formal) <= formal_ids:
                raise ValueError(f"configuration {c.id!r} sells a non-formal or unknown resource")
            if not set(c.actual) <= known:
                raise ValueError(f"configuration {c.id!r} uses an unknown resource")
        cap = {}
        h = self.grid.horizon
        for r in ids:
            if r not in self.capacity:
                raise ValueError(f"capacity missing for resource {r!r}")
            series = self.capacity[r]
            if isinstance(series, int):
                series = (series,) * h
            series = tuple(int(x) for x in series)
            if len(series) != h:
                raise ValueError(f"capacity series for {r!r} has length {len(series)}, expected {h}")
            if min(series) < 0:
                raise ValueError(f"negative capacity for {r!r}")
            cap[r] = series
        object.__setattr__(self, "capacity", cap)
        tick = self.tick_interval if self.tick_interval is not None else self.grid.slot_duration
        if not tick > 0:
            raise ValueError("tick_interval must be positive")
        object.__setattr__(self, "tick_interval", tick)

    @property
    def resource_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.resources)

    @property
    def formal_resource_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.resources if r.kind is ResourceKind.FORMAL)

    def config(self, config_id: str) -> Configuration:
        for c in self.configurations:
            if c.id == config_id:
                return c
        raise KeyError(config_id)

    @property
    def ticks_per_slot(self) -> int:
        return max(1, round(self.grid.slot_duration / self.tick_interval))


@dataclass(frozen=True)
class ResourceRequest:
    """``configs`` counts for ``duration`` contiguous slots somewhere in ``[arrival, deadline)``."""

    configs: Mapping[str, int]
    duration: int
    arrival: int
    deadline: int

    def __post_init__(self):
        object.__setattr__(self, "configs", dict(self.configs))

    @property
    def laxity(self) -> int:
        return self.deadline - self.arrival - self.duration

    @property
    def latest_start(self) -> int:
        return self.deadline - self.duration


@dataclass(frozen=True)
class ReservationRequest:
    """A bid: every entry of ``requests`` must be granted (AND) for at most ``max_price`` ticks."""

    job_id: str
    requests: tuple[ResourceRequest, ...]
    max_price: int
    submit_time: int = 0
    job_class: str = ""
    ordered: bool = False

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))

    @property
    def arrival(self) -> int:
        return min(r.arrival for r in self.requests)

    @property
    def deadline(self) -> int:
        return max(r.deadline for r in self.requests)


def validate_request(req: ReservationRequest, spec: CloudSpec | None = None) -> list[str]:
    """Return the list of violations; an empty list means the request is valid."""
    problems = []
    if not req.job_id:
        problems.append("empty job id")
    if req.max_price < 0:
        problems.append("negative max price")
    if not req.requests:
        problems.append("empty request list")
        return problems
    horizon = spec.grid.horizon if spec is not None else None
    for k, r in enumerate(req.requests):
        tag = f"request {k}: "
        if not r.configs:
            problems.append(tag + "no configurations")
        for cid, count in r.configs.items():
            if int(count) != count or count < 1:
                problems.append(tag + f"count for {cid!r} must be >= 1")
            if spec is not None:
                try:
                    spec.config(cid)
                except KeyError:
                    problems.append(tag + f"unknown configuration {cid!r}")
        if r.duration < 1:
            problems.append(tag + "duration must be >= 1")
        if r.arrival >= r.deadline:
            problems.append(tag + "arrival not before deadline")
        elif r.deadline - r.arrival < r.duration:
            problems.append(tag + "window shorter than duration")
        if r.arrival < 0 or (horizon is not None and r.deadline > horizon):
            problems.append(tag + "window outside horizon")
        if r.arrival < req.submit_time:
            problems.append(tag + "arrival before submit time")
    return problems


def demand_of(req: ResourceRequest, spec: CloudSpec, which: str = "actual") -> Bundle:
    """Per-slot bundle of a request: sum of count x configuration bundle.

    ``which="actual"`` gives the quantity charged against capacity while the
    request runs; ``which="formal"`` gives the units the user is sold.
    """
    if which not in ("actual", "formal"):
        raise ValueError("which must be 'actual' or 'formal'")
    total = Bundle()
    for cid, count in req.configs.items():
        total = total + getattr(spec.config(cid), which) * count
    return total


def formal_units(req: ReservationRequest, spec: CloudSpec) -> int:
    """Formal resource-slots sold by a whole reservation (sum of W_r * T over entries)."""
    return sum(demand_of(r, spec, "formal").total() * r.duration for r in req.requests)


@dataclass(frozen=True)
class WorkloadTrace:
    """Requests ordered by submit time; input order kept for ties."""

    requests: tuple[ReservationRequest, ...] = ()
    rejected: tuple[tuple[int, tuple[str, ...]], ...] = field(default=(), compare=False)

    def __post_init__(self):
        reqs = tuple(sorted(self.requests, key=lambda r: r.submit_time))
        seen = set()
        for r in reqs:
            if r.job_id in seen:
                raise ValueError(f"duplicate job id {r.job_id!r}")
            seen.add(r.job_id)
        object.__setattr__(self, "requests", reqs)

    def __iter__(self):
        return iter(self.requests)

    def __len__(self):
        return len(self.requests)

    def __getitem__(self, i):
        return self.requests[i]

    def requested_value(self) -> int:
        return sum(r.max_price for r in self.requests)
