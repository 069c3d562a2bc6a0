import numpy as np
import pytest

from era.domain import TimeGrid
from era.scenario import load_scenario
from era.workload import (
    Arrival,
    Dist,
    JobClassSpec,
    RawJob,
    augment_trace,
    class_unit_value,
    constant_unit_value,
    fixed_laxity,
    generate_workload,
    sized_capacity,
    uniform_laxity_factor,
)

GRID = TimeGrid(600, 200)


def klass(name="a", rate=1.0, **kw):
    d = dict(name=name, config="c1", arrival=Arrival("poisson", rate=rate), width=Dist("const", {"value": 2}),
             duration=Dist("const", {"value": 3}), unit_value=Dist("const", {"value": 4}))
    d.update(kw)
    return JobClassSpec(**d)


def test_rate_zero_is_empty():
    assert len(generate_workload([klass(rate=0.0)], GRID, 1)) == 0


def test_degenerate_distributions_give_identical_jobs():
    tr = generate_workload([klass(laxity=Dist("const", {"value": 2}))], GRID, 5)
    assert len(tr) > 50
    # windows running past the horizon are clipped there, so look at the rest
    inner = [r for r in tr if r.arrival + 5 <= GRID.horizon]
    shapes = {(r.requests[0].configs["c1"], r.requests[0].duration, r.requests[0].laxity, r.max_price) for r in inner}
    assert shapes == {(2, 3, 2, 240_000)}


def test_seed_controls_output():
    a = generate_workload([klass(), klass("b")], GRID, 1)
    assert a == generate_workload([klass(), klass("b")], GRID, 1)
    assert a != generate_workload([klass(), klass("b")], GRID, 2)
    # classes draw from independent streams
    solo = generate_workload([klass()], GRID, 1)
    assert [r for r in a if r.job_class == "a"] == list(solo)


def test_periodic_and_count_arrivals():
    rng = np.random.default_rng(0)
    assert list(Arrival("periodic", period=5, phase=1, batch=2).submit_slots(rng, 12)) == [1, 1, 6, 6, 11, 11]
    assert len(Arrival("count", count=7).submit_slots(rng, 12)) == 7


def test_zero_feasible_class_warns(caplog):
    big = klass(duration=Dist("const", {"value": 500}))
    with caplog.at_level("WARNING"):
        assert len(generate_workload([big], GRID, 0)) == 0
    assert "no feasible jobs" in caplog.text


def test_from_dict_keys():
    c = JobClassSpec.from_dict({"name": "x", "config": "c1", "arrival": {"kind": "poisson", "rate": 2},
                                "width": 3, "duration": {"dist": "uniform_int", "low": 1, "high": 2},
                                "unitValue": 1, "laxityFactor": {"dist": "uniform", "low": 1, "high": 4}})
    assert c.width.kind == "const" and c.laxity_factor.kind == "uniform"


def test_augment_rules():
    raw = [RawJob("a", 0, "c1", 2, 3, "yahoo-5"), RawJob("b", 4, "c1", 1, 2, "yahoo-1")]
    res = augment_trace(raw, class_unit_value({"yahoo-5": 1.0}, 10.0), fixed_laxity(0), seed=0)
    by = {r.job_id: r for r in res.trace}
    assert by["a"].max_price == 60_000 and by["b"].max_price == 200_000
    assert by["a"].requests[0].deadline == 3
    res = augment_trace(raw, constant_unit_value(2.0), uniform_laxity_factor(1, 4), seed=0, grid=TimeGrid(1, 30))
    assert [r.max_price for r in res.trace] == [120_000, 40_000]
    for r, job in zip(res.trace, raw):
        assert job.duration <= r.requests[0].laxity <= 4 * job.duration
    short = augment_trace(raw, constant_unit_value(2.0), uniform_laxity_factor(1, 4), seed=0, grid=TimeGrid(1, 8))
    assert len(short.trace) == 0
    assert short.flagged[0] == ("a", ["window outside horizon"])


def test_sized_capacity():
    assert sized_capacity(1000, 100, 0.25) == 3
    assert sized_capacity(0, 100, 0.25) == 1


def test_yahoo_like_shape():
    scn = load_scenario("yahoo-like")
    counts = {}
    sizes = {}
    for r in scn.workload:
        counts[r.job_class] = counts.get(r.job_class, 0) + 1
        e = r.requests[0]
        sizes.setdefault(r.job_class, []).append(e.configs["container"] * e.duration)
    assert len(counts) == 6
    assert all(1300 <= n <= 1600 for n in counts.values())
    assert 8000 <= len(scn.workload) <= 9500
    means = {k: np.mean(v) for k, v in sizes.items()}
    assert max(means, key=means.get) == "yahoo-5"
    unit = {r.job_class: r.max_price / (r.requests[0].configs["container"] * r.requests[0].duration)
            for r in scn.workload}
    assert unit["yahoo-5"] == 10_000 and all(unit[k] == 100_000 for k in unit if k != "yahoo-5")
    demand = sum(sum(sizes.values(), []))
    cap = scn.spec.capacity["core"][0]
    assert cap * scn.spec.grid.horizon == pytest.approx(0.25 * demand, rel=0.01)
