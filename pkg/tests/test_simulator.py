import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from era.domain import WorkloadTrace, to_ticks
from era.predictor import FlatPredictor, build_spreading_predictor
from era.simulator import (
    AlgorithmConfig,
    CapacityChange,
    ConfigError,
    InstanceTooLarge,
    SimulationConfig,
    brute_force_optimal,
    compare_algorithms,
    run_simulation,
)

from conftest import job, one_core_spec


def econ(oracle=None, **kw):
    return AlgorithmConfig("basicEcon", oracle=oracle or FlatPredictor(), **kw)


def first_fit(price="1"):
    return AlgorithmConfig("firstFit", unit_price=to_ticks(price))


def on_demand(price="1"):
    return AlgorithmConfig("onDemand", unit_price=to_ticks(price))


def test_empty_workload():
    res = run_simulation(SimulationConfig(one_core_spec(4, 6), WorkloadTrace(), econ()))
    m = res.metrics
    assert (m.welfare, m.revenue, m.submitted, m.late) == (0, 0, 0, 0)
    assert m.utilization == 0.0 and m.late_pct == 0.0 and m.welfare_share == 0.0
    assert res.event_log == ""


def test_single_job_fills_cloud():
    spec = one_core_spec(4, 3)
    res = run_simulation(SimulationConfig(spec, WorkloadTrace((job("a", 4, 3, 0, 3, 7),)), first_fit("0")))
    m = res.metrics
    assert m.utilization == pytest.approx(1.0)
    assert m.welfare == to_ticks(7) and m.late == 0
    assert m.welfare_share == 1.0


def test_event_log_format():
    spec = one_core_spec(2, 4)
    trace = WorkloadTrace((job("a", 1, 2, 0, 4, 3), job("b", 3, 1, 0, 4, 3)))
    lines = run_simulation(SimulationConfig(spec, trace, first_fit("1"))).event_log.splitlines()
    assert lines[0] == "0\tsubmit\ta\tvalue=3.0000"
    assert lines[1] == "0\taccept\ta\tprice=2.0000 start=0"
    assert "0\treject\tb\t" in lines
    assert any(l.startswith("1\tfinish\ta\t") for l in lines)


def test_on_demand_job_can_be_late():
    spec = one_core_spec(1, 10)
    trace = WorkloadTrace((job("x", 1, 3, 1, 4, 10, submit=0), job("y", 1, 2, 0, 2, 10)))
    m = run_simulation(SimulationConfig(spec, trace, on_demand("1"))).metrics
    assert m.accepted == 2 and m.late == 1
    assert m.late_pct == 0.5
    assert m.welfare == to_ticks(10) and m.revenue == to_ticks(3)


def test_guaranteed_algorithms_finish_on_time():
    spec = one_core_spec(3, 12)
    trace = WorkloadTrace(tuple(job(f"j{k}", 1 + k % 3, 1 + k % 4, k % 5, min(12, k % 5 + 6), 20)
                                for k in range(15)))
    for algo in (econ(), first_fit("0.5")):
        m = run_simulation(SimulationConfig(spec, trace, algo, audit_every_slot=True)).metrics
        assert m.late == 0 and m.broken_guarantees == 0


def test_failure_injection_keeps_ledger_within_capacity():
    spec = one_core_spec(4, 12)
    trace = WorkloadTrace(tuple(job(f"j{k}", 2, 3, k, min(12, k + 5), 10) for k in range(8)))
    plan = (CapacityChange(4, "core", -3, 4),)
    for algo in (econ(), first_fit("1"), on_demand("1")):
        res = run_simulation(SimulationConfig(spec, trace, algo, failure_plan=plan, audit_every_slot=True))
        assert res.engine.ledger.overcommitted() == []
        assert "capacity" in res.event_log


def test_failure_counts_broken_guarantee():
    spec = one_core_spec(2, 8)
    trace = WorkloadTrace((job("a", 2, 2, 4, 6, 5, submit=0),))
    res = run_simulation(SimulationConfig(spec, trace, first_fit("1"), failure_plan=(CapacityChange(5, "core", -2),)))
    m = res.metrics
    assert m.broken_guarantees == 1 and m.late == 1 and m.revenue == 0
    assert "\tcancel\ta\t" in res.event_log


def test_early_termination_frees_capacity():
    spec = one_core_spec(1, 12)
    trace = WorkloadTrace(tuple(job(f"j{k}", 1, 4, k, 12, 5) for k in range(4)))
    full = run_simulation(SimulationConfig(spec, trace, first_fit("0"))).metrics
    early = run_simulation(SimulationConfig(spec, trace, first_fit("0"), early_termination=(0.25, 0.5), seed=3)).metrics
    assert early.accepted >= full.accepted
    assert early.late == 0


def test_determinism():
    spec = one_core_spec(3, 12)
    trace = WorkloadTrace(tuple(job(f"j{k}", 1 + k % 2, 2, k % 6, min(12, k % 6 + 4), 5 + k) for k in range(12)))
    oracle = build_spreading_predictor(trace, spec)
    runs = [run_simulation(SimulationConfig(spec, trace, econ(oracle), seed=9, early_termination=(0.5, 1.0)))
            for _ in range(2)]
    assert runs[0].event_log == runs[1].event_log
    assert runs[0].metrics.row() == runs[1].metrics.row()


def test_submission_outside_horizon():
    with pytest.raises(ConfigError):
        run_simulation(SimulationConfig(one_core_spec(1, 4), WorkloadTrace((job("a", 1, 1, 5, 6, 1),)), econ()))


def test_brute_force_examples():
    spec = one_core_spec(1, 4)
    assert brute_force_optimal(WorkloadTrace((job("a", 1, 2, 0, 4, 3),)), spec) == to_ticks(3)
    clash = WorkloadTrace((job("a", 1, 2, 0, 2, 3), job("b", 1, 1, 1, 2, 5)))
    assert brute_force_optimal(clash, spec) == to_ticks(5)
    with pytest.raises(InstanceTooLarge):
        brute_force_optimal(WorkloadTrace(tuple(job(f"j{k}", 1, 1, 0, 4, 1) for k in range(11))), spec)


def naive_optimum(trace, spec):
    """Try every accept/reject and start-slot combination."""
    cap = spec.capacity["core"]
    choices = [[None] + list(range(j.requests[0].arrival, j.requests[0].latest_start + 1)) for j in trace]
    best = 0
    for pick in itertools.product(*choices):
        load = [0] * spec.grid.horizon
        value = 0
        for j, s in zip(trace, pick):
            if s is None:
                continue
            e = j.requests[0]
            for t in range(s, s + e.duration):
                load[t] += e.configs["c1"]
            value += j.max_price
        if all(load[t] <= cap[t] for t in range(len(load))):
            best = max(best, value)
    return best


@st.composite
def tiny(draw):
    horizon = draw(st.integers(2, 6))
    cap = draw(st.integers(1, 3))
    jobs = []
    for k in range(draw(st.integers(1, 4))):
        T = draw(st.integers(1, 2))
        a = draw(st.integers(0, horizon - T))
        d = draw(st.integers(a + T, horizon))
        jobs.append(job(f"j{k}", draw(st.integers(1, cap)), T, a, d, draw(st.integers(1, 9))))
    return one_core_spec(cap, horizon), WorkloadTrace(tuple(jobs))


@settings(max_examples=80, deadline=None)
@given(tiny())
def test_brute_force_matches_naive_enumeration(inst):
    spec, trace = inst
    assert brute_force_optimal(trace, spec) == naive_optimum(trace, spec)


def test_compare_rows():
    spec = one_core_spec(2, 6)
    trace = WorkloadTrace((job("a", 1, 2, 0, 6, 4), job("b", 2, 2, 0, 3, 6)))
    cfgs = [SimulationConfig(spec, trace, a) for a in (econ(), first_fit("1"))]
    rows = compare_algorithms(cfgs)
    assert [r["algorithm"] for r in rows] == ["basicEcon", "firstFit"]
    assert rows == compare_algorithms(cfgs)
    assert rows[0]["welfareOverOpt"] != ""
    assert len(compare_algorithms(cfgs[:1])) == 1


@pytest.mark.parametrize("algo", ["basicEcon", "firstFit"])
def test_allocated_slots_equal_completed_work(algo):
    from era.domain import demand_of
    from era.scenario import load_scenario, simulation_config

    scn = load_scenario("day-night")
    res = run_simulation(simulation_config(scn, algo))
    done = {j for j, p in res.engine.ledger.jobs.items() if p.finished_at is not None}
    work = sum(demand_of(e, scn.spec).total() * e.duration
               for r in scn.workload if r.job_id in done for e in r.requests)
    assert res.metrics.allocated_slots == work
    assert res.metrics.completed == len(done)
