"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line (see the terminal summary) before it
asserts, so a failing criterion still reports what was measured.
"""

import time

import numpy as np

from era import cli
from era.domain import (
    INF,
    Bundle,
    CloudSpec,
    Configuration,
    ReservationRequest,
    ResourceRequest,
    ResourceType,
    TimeGrid,
    WorkloadTrace,
    to_ticks,
)
from era.predictor import DemandCurve, FlatPredictor, build_spreading_predictor, solve_fractional_allocation
from era.scenario import build_oracle, load_scenario, read_scenario_document, scenario_from_dict, simulation_config
from era.scheduler import BasicEcon, Placement
from era.simulator import AlgorithmConfig, SimulationConfig, brute_force_optimal, run_simulation

from conftest import job, one_core_spec, record_criterion

SCENARIOS = {
    "day-night": ("basicEcon", "firstFit"),
    "yahoo-like": ("basicEcon", "firstFit"),
    "azure-like": ("basicEcon", "firstFit", "onDemand"),
}

_runs: dict = {}


def scenario_run(name, algo, predictor=None):
    """Run once per session; returns (scenario, result, seconds)."""
    key = (name, algo, predictor)
    if key not in _runs:
        t0 = time.perf_counter()
        scn = load_scenario(name)
        res = run_simulation(simulation_config(scn, algo, predictor=predictor))
        _runs[key] = (scn, res, time.perf_counter() - t0)
    return _runs[key]


class SlotOracle:
    def __init__(self, curves):
        self.curves = curves

    def curve(self, now, t, resource=None):
        return self.curves.get((t, resource), DemandCurve())


def _random_curve(rng):
    k = int(rng.integers(0, 4))
    prices = sorted(rng.choice(50_000, size=k, replace=False).tolist(), reverse=True)
    qty = np.cumsum(rng.choice([0.5, 1.0, 2.0, 3.0, 5.5], size=k)).tolist()
    return DemandCurve(tuple(prices), tuple(qty))


def _random_case(rng):
    horizon = int(rng.integers(4, 16))
    caps = {"core": int(rng.integers(1, 8)), "mem": int(rng.integers(2, 12))}
    spec = CloudSpec(
        TimeGrid(60, horizon),
        (ResourceType("core"), ResourceType("mem")),
        (Configuration("small", {"core": 1, "mem": 1}), Configuration("big", {"core": 2, "mem": 3}),
         Configuration("cpu", {"core": 1})),
        caps,
    )
    oracle = SlotOracle({(t, r): _random_curve(rng) for t in range(horizon) for r in caps})
    econ = BasicEcon(spec, oracle)
    now = int(rng.integers(0, 3))
    for k in range(int(rng.integers(0, 6))):
        s = int(rng.integers(0, horizon))
        d = int(rng.integers(1, horizon - s + 1))
        b = Bundle(core=int(rng.integers(0, caps["core"] + 1)), mem=int(rng.integers(0, caps["mem"] + 1)))
        if b and econ.ledger.fits(b, s, d):
            econ.ledger.add(Placement(f"p{k}", 0, s, d, b, s, s + d))
    entries = []
    for _ in range(int(rng.integers(1, 3))):
        T = int(rng.integers(1, min(4, horizon - now) + 1))
        a = int(rng.integers(now, horizon - T + 1))
        dl = int(rng.integers(a + T, horizon + 1))
        cfg = str(rng.choice(["small", "big", "cpu"]))
        entries.append(ResourceRequest({cfg: int(rng.integers(1, 3))}, T, a, dl))
    return econ, now, tuple(entries)


def _quote(econ, now, entries, bid):
    e = BasicEcon(econ.spec, econ.oracle)
    e.ledger = econ.ledger.copy()
    req = ReservationRequest("q", entries, bid, now)
    placements, price = e._quote(now, req)
    quote = BasicEcon(econ.spec, econ.oracle)
    quote.ledger = econ.ledger.copy()
    return price, quote.make_reservation(now, req)


def test_criterion_1_truthful_by_design():
    rng = np.random.default_rng(np.random.SeedSequence([1, 1000]))
    t0 = time.perf_counter()
    violations = 0
    for _ in range(1000):
        econ, now, entries = _random_case(rng)
        base_price, _ = _quote(econ, now, entries, 0)
        bids = [0, int(rng.integers(0, 2_000_000)), 10**12]
        if base_price != INF:
            bids += [max(base_price - 1, 0), base_price, base_price + 1]
        bids = sorted(set(bids))
        seen_accept = None
        for bid in bids:
            price, q = _quote(econ, now, entries, bid)
            if price != base_price:
                violations += 1
            if q.accepted != (base_price != INF and bid >= base_price):
                violations += 1
            if seen_accept is not None and not q.accepted:
                violations += 1  # accepted at a lower bid, rejected at a higher one
            if q.accepted:
                if seen_accept is not None and (q.price, q.start) != seen_accept:
                    violations += 1
                seen_accept = seen_accept or (q.price, q.start)
    secs = time.perf_counter() - t0
    ok = violations == 0 and secs < 60
    record_criterion(1, "truthfulness by design", ok, f"1000 requests, {violations} violations, {secs:.1f}s")
    assert ok


def _alloc_within_capacity(scn, res, failure_plan):
    """Re-derive per-slot capacity from the cloud capacities and the failure plan and compare with logged allocations."""
    cap = {r: np.array(scn.spec.capacity[r], dtype=np.int64) for r in scn.spec.resource_ids}
    for ch in failure_plan:
        end = min(ch.slot + ch.duration, scn.spec.grid.horizon)
        cap[ch.resource][ch.slot:end] = np.maximum(0, cap[ch.resource][ch.slot:end] + ch.delta)
    bad = 0
    for line in res.event_log.splitlines():
        slot, kind, _, payload = line.split("\t")
        if kind != "alloc":
            continue
        used = dict(kv.split("=") for kv in payload.split())
        for r in cap:
            if int(used.get(r, 0)) > cap[r][int(slot)]:
                bad += 1
    return bad


def _with_failures(name, plan):
    doc, base = read_scenario_document(name)
    doc = dict(doc, failurePlan=plan)
    return scenario_from_dict(doc, base)


FAILURES = {
    "day-night": [{"slot": 5, "resource": "core", "delta": -6, "duration": 4}],
    "azure-like": [{"slot": 100, "resource": "core", "delta": -60, "duration": 30},
                   {"slot": 200, "resource": "core", "delta": -200, "duration": 6}],
}


def test_criterion_2_capacity_safety():
    violations, runs = 0, 0
    for name, algos in SCENARIOS.items():
        for algo in algos:
            scn, res, _ = scenario_run(name, algo)
            violations += _alloc_within_capacity(scn, res, ())
            violations += len(res.engine.ledger.overcommitted()) + len(res.engine.ledger.audit())
            violations += res.metrics.capacity_violations
            runs += 1
    for name, plan in FAILURES.items():
        scn = _with_failures(name, plan)
        for algo in SCENARIOS[name]:
            cfg = simulation_config(scn, algo)
            cfg.audit_every_slot = True
            res = run_simulation(cfg)
            violations += _alloc_within_capacity(scn, res, scn.failure_plan)
            violations += len(res.engine.ledger.overcommitted()) + res.metrics.capacity_violations
            runs += 1
    ok = violations == 0
    record_criterion(2, "capacity safety", ok, f"{runs} runs incl. failure injection, {violations} violations")
    assert ok


def test_criterion_3_guarantees_hold_without_failures():
    worst = []
    for name in SCENARIOS:
        for algo in ("basicEcon", "firstFit"):
            _, res, _ = scenario_run(name, algo)
            m = res.metrics
            worst.append((name, algo, m.late_pct, m.broken_guarantees))
    ok = all(late == 0 and broken == 0 for _, _, late, broken in worst)
    detail = ", ".join(f"{n}/{a} late={l:.4f} broken={b}" for n, a, l, b in worst)
    record_criterion(3, "guarantee fulfillment", ok, detail)
    assert ok


def test_criterion_4_yahoo_like():
    scn, econ, t_econ = scenario_run("yahoo-like", "basicEcon")
    _, ff, t_ff = scenario_run("yahoo-like", "firstFit")
    e, f = econ.metrics.welfare_share, ff.metrics.welfare_share
    secs = t_econ + t_ff
    ok = e >= 2 * f and secs < 300
    record_criterion(4, "yahoo-like welfare ordering", ok,
                     f"{len(scn.workload)} jobs, basicEcon share {e:.3f} vs firstFit {f:.3f} "
                     f"(ratio {e / f:.2f}), {secs:.1f}s")
    assert ok


def test_criterion_5_azure_like():
    runs = {a: scenario_run("azure-like", a) for a in ("basicEcon", "firstFit", "onDemand")}
    m = {a: r[1].metrics for a, r in runs.items()}
    secs = sum(r[2] for r in runs.values())
    ok = (m["basicEcon"].revenue >= m["firstFit"].revenue
          and m["basicEcon"].late_pct <= m["onDemand"].late_pct and secs < 300)
    detail = "; ".join(f"{a} revenue {m[a].row()['revenue']} late {m[a].late_pct:.4f}" for a in m)
    record_criterion(5, "azure-like weak dominance", ok, f"{detail}; {secs:.1f}s")
    assert ok


def _small_instance(rng):
    horizon = int(rng.integers(2, 17))
    cap = int(rng.integers(1, 4))
    jobs = []
    for k in range(int(rng.integers(1, 9))):
        T = int(rng.integers(1, min(4, horizon) + 1))
        a = int(rng.integers(0, horizon - T + 1))
        d = int(rng.integers(a + T, min(horizon, a + T + 5) + 1))
        submit = int(rng.integers(0, a + 1))
        jobs.append(job(f"j{k}", int(rng.integers(1, cap + 1)), T, a, d, int(rng.integers(1, 30)), submit=submit))
    return one_core_spec(cap, horizon), WorkloadTrace(tuple(jobs))


def test_criterion_6_offline_optimum_bounds():
    rng = np.random.default_rng(np.random.SeedSequence([6, 200]))
    t0 = time.perf_counter()
    below, lp_short = 0, 0
    for k in range(200):
        spec, trace = _small_instance(rng)
        opt = brute_force_optimal(trace, spec)
        oracle = FlatPredictor() if k % 2 else build_spreading_predictor(trace, spec)
        econ = run_simulation(SimulationConfig(spec, trace, AlgorithmConfig("basicEcon", oracle=oracle))).metrics
        if econ.welfare > opt:
            below += 1
        frac = solve_fractional_allocation(trace, spec).objective
        opt_units = opt / 1e4
        if frac < opt_units - 1e-6 * max(opt_units, 1.0):
            lp_short += 1
    secs = time.perf_counter() - t0
    ok = below == 0 and lp_short == 0 and secs < 120
    record_criterion(6, "offline optimum bounds", ok,
                     f"200 instances, optimum below econ {below}x, LP below optimum {lp_short}x, {secs:.1f}s")
    assert ok


def _medium_night_value(scn, res):
    """Value of medium jobs that ran to completion in a night (odd) slot."""
    values = {r.job_id: r.max_price for r in scn.workload if r.job_class == "medium"}
    total = 0
    for job_id, plan in res.engine.ledger.jobs.items():
        if job_id in values and plan.cancelled_at is None and plan.finished_at is not None:
            if plan.placements[0].start % 2 == 1:
                total += values[job_id]
    return total


def test_criterion_7_day_night_predictors():
    scn = load_scenario("day-night")
    cap = scn.spec.capacity["core"][1]
    medium = to_ticks(5)
    spread = build_oracle(scn, "spreading").full_curve(1, "core")
    lp = build_oracle(scn, "lp").full_curve(1, "core")
    spread_last = spread.price_exceeding(cap - 1)
    lp_last = lp.price_exceeding(cap - 1)
    _, with_spread, _ = scenario_run("day-night", "basicEcon", "spreading")
    _, with_lp, _ = scenario_run("day-night", "basicEcon", "lp")
    v_spread, v_lp = _medium_night_value(scn, with_spread), _medium_night_value(scn, with_lp)
    ok = spread_last < medium and lp_last == medium and lp.demand(medium) >= cap - 1e-9 and v_lp > v_spread
    record_criterion(7, "day/night predictor property", ok,
                     f"night price of last unit: spreading {spread_last / 1e4:g}, LP {lp_last / 1e4:g} "
                     f"(medium {medium / 1e4:g}); medium night value LP {v_lp / 1e4:g} vs spreading {v_spread / 1e4:g}")
    assert ok


def test_criterion_8_determinism(tmp_path):
    differing = []
    checks = 0
    for name in SCENARIOS:
        for cmd, files in (("simulate", ("metrics.csv", "events.log")), ("compare", ("comparison.csv",))):
            if name == "yahoo-like" and cmd == "compare":
                continue  # simulate already covers it; compare would repeat the same runs
            dirs = [tmp_path / f"{name}-{cmd}-{k}" for k in range(2)]
            for d in dirs:
                assert cli.main([cmd, "--scenario", name, "--out", str(d)]) == 0
            for f in files:
                checks += 1
                if (dirs[0] / f).read_bytes() != (dirs[1] / f).read_bytes():
                    differing.append(f"{name}/{f}")
    ok = not differing
    record_criterion(8, "determinism", ok, f"{checks} file pairs compared, differing: {differing or 'none'}")
    assert ok


def _scan_inverse(curve, q, grid):
    # highest grid price whose demand reaches q, by direct evaluation of the step function
    if q <= 0:
        return INF
    best = None
    for p in grid:
        reach = [qq for bp, qq in zip(curve.prices, curve.quantities) if bp >= p]
        if reach and reach[-1] >= q and (best is None or p > best):
            best = p
    return best


def test_criterion_9_inverse_price():
    rng = np.random.default_rng(np.random.SeedSequence([9, 1000]))
    mismatches, probes = 0, 0
    for _ in range(1000):
        k = int(rng.integers(0, 6))
        prices = sorted(rng.choice(100, size=k, replace=False).tolist(), reverse=True)
        qty = np.cumsum(rng.integers(1, 6, size=k)).astype(float).tolist()
        curve = DemandCurve(tuple(prices), tuple(qty))
        grid = range(0, 101)
        queries = set(qty) | {q + 0.5 for q in qty} | {q - 0.5 for q in qty} | {0, 1, (qty[-1] + 1) if qty else 2}
        for q in sorted(queries):
            probes += 1
            if curve.inverse_price(q) != _scan_inverse(curve, q, grid):
                mismatches += 1
    ok = mismatches == 0
    record_criterion(9, "inverse price vs scan", ok, f"1000 curves, {probes} queries, {mismatches} mismatches")
    assert ok
