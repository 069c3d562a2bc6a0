import pytest

from era.domain import CloudSpec, Configuration, ReservationRequest, ResourceRequest, ResourceType, TimeGrid, to_ticks


def one_core_spec(capacity=10, horizon=24, slot=3600.0, configs=None):
    configs = configs or (Configuration("c1", {"core": 1}),)
    return CloudSpec(TimeGrid(slot, horizon), (ResourceType("core"),), configs, {"core": capacity})


def job(job_id, width, duration, arrival, deadline, value, submit=None, config="c1", cls=""):
    """Single-entry reservation; ``value`` in currency units."""
    return ReservationRequest(
        job_id=job_id,
        requests=(ResourceRequest({config: width}, duration, arrival, deadline),),
        max_price=to_ticks(str(value)),
        submit_time=arrival if submit is None else submit,
        job_class=cls,
    )


@pytest.fixture
def spec10():
    return one_core_spec(10, 24)


# one line per acceptance criterion, shown after the run even when output is captured
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
