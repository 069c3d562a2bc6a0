"""Scenario files: cloud spec + workload + history + predictor + algorithms + seed.

See README.md for the full key reference.  Bundled scenarios live in
``era/scenarios/`` and can be named without a path (``yahoo-like``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources as ilr
from pathlib import Path

import numpy as np

from . import bdl
from .domain import (
    CloudSpec,
    Configuration,
    ResourceType,
    TimeGrid,
    WorkloadTrace,
    demand_of,
    to_ticks,
    validate_request,
)
from .predictor import (
    DemandCurve,
    FlatPredictor,
    build_lp_predictor,
    build_spreading_predictor,
)
from .simulator import AlgorithmConfig, CapacityChange, ConfigError, SimulationConfig
from .workload import JobClassSpec, generate_workload, sized_capacity

ALGORITHMS = ("basicEcon", "firstFit", "onDemand")
PREDICTORS = ("spreading", "lp", "flat")
DAY = 86400


@dataclass
class Scenario:
    name: str
    seed: int
    spec: CloudSpec
    workload: WorkloadTrace
    history: WorkloadTrace
    predictor: dict
    algorithms: dict[str, dict]
    failure_plan: tuple[CapacityChange, ...] = ()
    early_termination: tuple[float, float] | None = None
    empty_allocations: bool = False
    classes: tuple[JobClassSpec, ...] = ()
    raw: dict = field(default_factory=dict, repr=False)


def bundled_scenarios() -> list[str]:
    root = ilr.files("era") / "scenarios"
    return sorted(p.name[:-5].replace("_", "-") for p in root.iterdir() if p.name.endswith(".json"))


def read_scenario_document(ref: str | Path) -> tuple[dict, Path | None]:
    path = Path(ref)
    if path.is_file():
        return json.loads(path.read_text(encoding="utf-8")), path.parent
    name = str(ref).replace("-", "_")
    res = ilr.files("era") / "scenarios" / f"{name}.json"
    if res.is_file():
        return json.loads(res.read_text(encoding="utf-8")), None
    raise FileNotFoundError(f"no scenario file or bundled scenario named {ref!r}")


def load_scenario(ref: str | Path, seed: int | None = None) -> Scenario:
    doc, base = read_scenario_document(ref)
    return scenario_from_dict(doc, base, seed)


def _grid(doc) -> TimeGrid:
    g = doc.get("grid")
    if not g:
        raise ConfigError("scenario needs a grid")
    return TimeGrid(float(g["slotDuration"]), int(g["horizon"]))


def _background_capacity(p: dict, horizon: int, seed: int) -> list[int]:
    """ERA slice left over by a fluctuating exogenous load."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB6]))
    total = float(p["total"])
    share = float(p.get("eraShare", 0.2))
    amp = float(p.get("amplitude", 0.0))
    period = int(p.get("period", horizon))
    noise = float(p.get("noise", 0.0))
    rho = float(p.get("smoothing", 0.9))
    t = np.arange(horizon)
    z = np.zeros(horizon)
    eps = rng.standard_normal(horizon)
    for k in range(horizon):
        z[k] = (rho * z[k - 1] if k else 0.0) + math.sqrt(1 - rho * rho) * eps[k]
    bg = total * (1 - share) * (1 + amp * np.sin(2 * np.pi * t / period) + noise * z)
    bg = np.clip(bg, 0, total)
    return [int(x) for x in np.floor(total - bg)]


def _load_trace(ref: str, base: Path | None) -> WorkloadTrace:
    path = Path(ref)
    if not path.is_absolute() and base is not None:
        path = base / path
    return bdl.parse_trace(path, strict=True)


def scenario_from_dict(doc: dict, base: Path | None = None, seed: int | None = None) -> Scenario:
    seed = int(doc.get("seed", 0)) if seed is None else int(seed)
    grid = _grid(doc)
    resources = tuple(ResourceType(r["id"], r.get("kind", "formal")) for r in doc["resources"])
    configs = tuple(Configuration(c["id"], c["formal"], c.get("actual")) for c in doc["configurations"])
    wl = doc.get("workload", {})
    classes = tuple(JobClassSpec.from_dict(c) for c in wl.get("classes", ()))
    if "trace" in wl:
        workload = _load_trace(wl["trace"], base)
    else:
        workload = generate_workload(classes, grid, seed)

    # capacity may depend on the workload
    probe = CloudSpec(grid, resources, configs, {r.id: 0 for r in resources})
    demand: dict[str, int] = {}
    for req in workload:
        for e in req.requests:
            for r, q in demand_of(e, probe, "actual").items():
                demand[r] = demand.get(r, 0) + q * e.duration
    capacity = {}
    for r in resources:
        c = doc["capacity"][r.id]
        if isinstance(c, dict) and "fractionOfDemand" in c:
            capacity[r.id] = sized_capacity(demand.get(r.id, 0), grid.horizon, float(c["fractionOfDemand"]))
        elif isinstance(c, dict) and "background" in c:
            capacity[r.id] = tuple(_background_capacity(c["background"], grid.horizon, seed))
        else:
            capacity[r.id] = c
    spec = CloudSpec(grid, resources, configs, capacity, doc.get("tickInterval"))
    for req in workload:
        problems = validate_request(req, spec)
        if problems:
            raise ConfigError(f"workload job {req.job_id!r} invalid: {problems}")

    hist = doc.get("history")
    if not hist:
        history = WorkloadTrace()
    elif "trace" in hist:
        history = _load_trace(hist["trace"], base)
    elif hist.get("source") == "workload":
        history = workload
    else:
        history = generate_workload(classes, grid, seed + int(hist.get("seedOffset", 1)))

    failures = tuple(
        CapacityChange(int(f["slot"]), f["resource"], int(f["delta"]), int(f.get("duration", 1)))
        for f in doc.get("failurePlan", ())
    )
    et = doc.get("earlyTermination")
    algorithms = {k: dict(v or {}) for k, v in doc.get("algorithms", {}).items()}
    for k in algorithms:
        if k not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {k!r}")
    return Scenario(
        name=doc.get("name", "scenario"),
        seed=seed,
        spec=spec,
        workload=workload,
        history=history,
        predictor=dict(doc.get("predictor", {"kind": "spreading"})),
        algorithms=algorithms,
        failure_plan=failures,
        early_termination=tuple(et) if et else None,
        empty_allocations=bool(doc.get("emptyAllocations", False)),
        classes=classes,
        raw=doc,
    )


def predictor_period(scn: Scenario, params: dict) -> int | None:
    if "period" in params:
        return None if params["period"] in (None, 0) else int(params["period"])
    return scn.spec.grid.slots_per(float(params.get("periodSeconds", DAY)))


def build_oracle(scn: Scenario, kind: str | None = None):
    params = dict(scn.predictor)
    kind = kind or params.get("kind", "spreading")
    if kind not in PREDICTORS:
        raise ConfigError(f"unknown predictor {kind!r}")
    grid = scn.spec.grid
    if kind == "flat" or len(scn.history) == 0:
        cold = params.get("coldStart") or {}
        curve = DemandCurve()
        if cold.get("quantity"):
            curve = DemandCurve((to_ticks(str(cold["price"])),), (float(cold["quantity"]),))
        return FlatPredictor(curve)
    period = predictor_period(scn, params)
    restrict = bool(params.get("restrictArrivals", True))
    if kind == "spreading":
        return build_spreading_predictor(scn.history, scn.spec, period, restrict, params.get("historySlots"))
    slots = params.get("historySlots", grid.slots_per(7 * DAY))
    return build_lp_predictor(scn.history, scn.spec, period, restrict, slots)


def algorithm_config(scn: Scenario, name: str, oracle=None) -> AlgorithmConfig:
    if name not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}")
    p = scn.algorithms.get(name, {})
    if name == "basicEcon":
        floor, cap = 0, None
        if "listPrice" in p:
            list_price = Decimal(str(p["listPrice"]))
            cap = to_ticks(list_price)
            floor = to_ticks(list_price * (1 - Decimal(str(p.get("maxDiscount", 1)))))
        return AlgorithmConfig(name, unit_floor=floor, unit_cap=cap, oracle=oracle)
    return AlgorithmConfig(name, unit_price=to_ticks(str(p.get("unitPrice", "1"))))


def simulation_config(scn: Scenario, name: str, oracle=None, predictor: str | None = None) -> SimulationConfig:
    if name == "basicEcon" and oracle is None:
        oracle = build_oracle(scn, predictor)
    return SimulationConfig(
        spec=scn.spec,
        workload=scn.workload,
        algorithm=algorithm_config(scn, name, oracle),
        seed=scn.seed,
        failure_plan=scn.failure_plan,
        early_termination=scn.early_termination,
        empty_allocations=scn.empty_allocations,
    )

