"""Synthetic class-based workloads and value/deadline augmentation of raw traces.

All randomness comes from numpy's PCG64 generator.  Each job class draws from
its own stream, seeded with ``SeedSequence([seed, class_index])``, so adding or
editing one class does not perturb the others.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    CloudSpec,
    ReservationRequest,
    ResourceRequest,
    TimeGrid,
    WorkloadTrace,
    to_ticks,
    validate_request,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dist:
    """A scalar distribution described by data.

    kinds: ``const`` (value), ``uniform_int`` (low, high inclusive),
    ``uniform`` (low, high), ``choice`` (values, weights),
    ``lognormal`` (mean, sigma of the underlying normal; optional low/high clip).
    """

    kind: str = "const"
    params: Mapping = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d) -> Dist:
        if isinstance(d, Dist):
            return d
        if isinstance(d, (int, float)):
            return cls("const", {"value": d})
        d = dict(d)
        kind = d.pop("dist", "const")
        return cls(kind, d)

    def to_dict(self) -> dict:
        return {"dist": self.kind, **self.params}

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        p = self.params
        if self.kind == "const":
            return np.full(size, float(p["value"]))
        if self.kind == "uniform_int":
            return rng.integers(int(p["low"]), int(p["high"]) + 1, size=size).astype(float)
        if self.kind == "uniform":
            return rng.uniform(float(p["low"]), float(p["high"]), size=size)
        if self.kind == "choice":
            values = np.asarray(p["values"], dtype=float)
            w = p.get("weights")
            w = None if w is None else np.asarray(w, dtype=float) / np.sum(w)
            return rng.choice(values, size=size, p=w)
        if self.kind == "lognormal":
            x = rng.lognormal(float(p["mean"]), float(p["sigma"]), size=size)
            return np.clip(x, p.get("low", -np.inf), p.get("high", np.inf))
        raise ValueError(f"unknown distribution kind {self.kind!r}")


@dataclass(frozen=True)
class Arrival:
    """When jobs are submitted.

    ``poisson``: per-slot Poisson counts with mean ``rate``, optionally modulated
    by ``1 + amplitude*sin(2*pi*(t - phase)/period)``.
    ``periodic``: ``batch`` jobs at every slot ``t`` with ``t % period == phase``.
    ``count``: exactly ``count`` jobs at uniformly random slots.
    """

    kind: str = "poisson"
    rate: float = 0.0
    amplitude: float = 0.0
    period: int = 0
    phase: int = 0
    batch: int = 1
    count: int = 0

    @classmethod
    def from_dict(cls, d) -> Arrival:
        if isinstance(d, Arrival):
            return d
        return cls(**dict(d))

    def submit_slots(self, rng: np.random.Generator, horizon: int) -> np.ndarray:
        if self.kind == "poisson":
            t = np.arange(horizon)
            lam = np.full(horizon, float(self.rate))
            if self.amplitude and self.period:
                lam = lam * (1 + self.amplitude * np.sin(2 * np.pi * (t - self.phase) / self.period))
            counts = rng.poisson(np.maximum(lam, 0.0))
            return np.repeat(t, counts)
        if self.kind == "periodic":
            slots = np.arange(self.phase, horizon, self.period)
            return np.repeat(slots, self.batch)
        if self.kind == "count":
            return np.sort(rng.integers(0, horizon, size=self.count))
        raise ValueError(f"unknown arrival kind {self.kind!r}")


@dataclass(frozen=True)
class JobClassSpec:
    name: str
    config: str
    arrival: Arrival
    width: Dist
    duration: Dist
    unit_value: Dist
    laxity: Dist | None = None
    laxity_factor: Dist | None = None  # laxity = factor * duration
    advance: Dist | None = None  # slots between submit and window start

    @classmethod
    def from_dict(cls, d: Mapping) -> JobClassSpec:
        opt = lambda k: Dist.from_dict(d[k]) if d.get(k) is not None else None  # noqa: E731
        return cls(
            name=d["name"],
            config=d["config"],
            arrival=Arrival.from_dict(d["arrival"]),
            width=Dist.from_dict(d["width"]),
            duration=Dist.from_dict(d["duration"]),
            unit_value=Dist.from_dict(d["unitValue"]),
            laxity=opt("laxity"),
            laxity_factor=opt("laxityFactor"),
            advance=opt("advance"),
        )


def _laxities(cls: JobClassSpec, rng, durations: np.ndarray) -> np.ndarray:
    if cls.laxity is not None:
        return np.rint(cls.laxity.sample(rng, len(durations)))
    if cls.laxity_factor is not None:
        return np.rint(cls.laxity_factor.sample(rng, len(durations)) * durations)
    return np.zeros(len(durations))


def generate_workload(classes: Sequence[JobClassSpec], grid: TimeGrid, seed: int,
                      spec: CloudSpec | None = None) -> WorkloadTrace:
    """Sample every class and merge into one trace ordered by submit time.

    Job ids are ``<class>-<index>``; jobs that cannot fit before the horizon
    are dropped, and a class left with no jobs logs a warning.
    """
    horizon = grid.horizon
    jobs = []
    for k, cls in enumerate(classes):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        submits = cls.arrival.submit_slots(rng, horizon)
        n = len(submits)
        widths = np.maximum(1, np.rint(cls.width.sample(rng, n))).astype(int)
        durations = np.maximum(1, np.ceil(cls.duration.sample(rng, n) - 1e-9)).astype(int)
        laxity = np.maximum(0, _laxities(cls, rng, durations)).astype(int)
        units = cls.unit_value.sample(rng, n)
        advance = (np.maximum(0, np.rint(cls.advance.sample(rng, n))).astype(int)
                   if cls.advance is not None else np.zeros(n, dtype=int))
        kept = 0
        for i in range(n):
            a = int(submits[i] + advance[i])
            T = int(durations[i])
            d = min(a + T + int(laxity[i]), horizon)
            if d - a < T:
                continue
            value = to_ticks(f"{units[i] * widths[i] * T:.4f}")
            req = ReservationRequest(
                job_id=f"{cls.name}-{i:05d}",
                requests=(ResourceRequest({cls.config: int(widths[i])}, T, a, d),),
                max_price=value,
                submit_time=int(submits[i]),
                job_class=cls.name,
            )
            if spec is not None and validate_request(req, spec):
                continue
            jobs.append(req)
            kept += 1
        if n and not kept:
            log.warning("job class %r produced no feasible jobs", cls.name)
    jobs.sort(key=lambda r: (r.submit_time, r.job_class, r.job_id))
    return WorkloadTrace(tuple(jobs))


@dataclass(frozen=True)
class RawJob:
    """A trace row before values and deadlines are known."""

    job_id: str
    submit_time: int
    config: str
    width: int
    duration: int
    job_class: str = ""


ValueRule = Callable[[RawJob, np.random.Generator], float]
LaxityRule = Callable[[RawJob, np.random.Generator], int]


def constant_unit_value(v: float) -> ValueRule:
    return lambda job, rng: v


def class_unit_value(by_class: Mapping[str, float], default: float) -> ValueRule:
    return lambda job, rng: by_class.get(job.job_class, default)


def fixed_laxity(slots: int) -> LaxityRule:
    return lambda job, rng: slots


def uniform_laxity_factor(low: float, high: float) -> LaxityRule:
    return lambda job, rng: int(round(rng.uniform(low, high) * job.duration))


@dataclass
class AugmentResult:
    trace: WorkloadTrace
    flagged: list[tuple[str, list[str]]]


def augment_trace(raw: Iterable[RawJob], value_rule: ValueRule, laxity_rule: LaxityRule, seed: int,
                  grid: TimeGrid | None = None) -> AugmentResult:
    """Attach windows and values: arrival = submit, deadline = arrival + T + laxity,
    value = unit value * W * T.  Rows whose window leaves the grid are flagged
    and left out."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA0]))
    out, flagged = [], []
    for job in raw:
        lax = int(laxity_rule(job, rng))
        unit = float(value_rule(job, rng))
        a = job.submit_time
        d = a + job.duration + lax
        req = ReservationRequest(
            job_id=job.job_id,
            requests=(ResourceRequest({job.config: job.width}, job.duration, a, d),),
            max_price=to_ticks(f"{unit * job.width * job.duration:.4f}"),
            submit_time=a,
            job_class=job.job_class,
        )
        problems = validate_request(req)
        if grid is not None and d > grid.horizon:
            problems.append("window outside horizon")
        if lax < 0:
            problems.append("negative laxity")
        if problems:
            flagged.append((job.job_id, problems))
            continue
        out.append(req)
    return AugmentResult(WorkloadTrace(tuple(out)), flagged)


def demand_resource_slots(trace: Iterable[ReservationRequest], spec_or_actual: Callable[[ResourceRequest], Mapping[str, int]]) -> dict[str, int]:
    """Total requested resource-slots per resource."""
    total: dict[str, int] = {}
    for req in trace:
        for entry in req.requests:
            for r, q in spec_or_actual(entry).items():
                total[r] = total.get(r, 0) + q * entry.duration
    return total


def sized_capacity(total_slots: int, horizon: int, fraction: float) -> int:
    """Constant capacity giving ``fraction`` of the demanded resource-slots."""
    return max(1, math.ceil(fraction * total_slots / horizon))
