from __future__ import annotations

import random

import pytest

from evcorr.events import RawEvent
from evcorr.ingest import parse_timestamp

DHCP_TIMES = ("12:31:57.740", "12:33:02.540", "12:35:00.750", "12:38:03.760")


def dhcp_events() -> list[RawEvent]:
    """The four repeated DHCP requests of the worked aggregation example."""
    return [
        RawEvent(parse_timestamp(t), "192.168.204.69", "192.168.204.1", 68, 67, "udp", 328)
        for t in DHCP_TIMES
    ]


def overlapping_events(rng: random.Random, n: int, dup_max: int = 3) -> list[RawEvent]:
    """Events over tiny field pools so every rule level sees collisions."""
    srcs = [f"10.0.0.{i}" for i in range(1, 4)]
    dsts = [f"10.0.1.{i}" for i in range(1, 4)]
    events = []
    for _ in range(n):
        ev = RawEvent(
            rng.randrange(0, 10_000),
            rng.choice(srcs),
            rng.choice(dsts),
            rng.choice((1000, 1001, 1002, 53)),
            rng.choice((80, 443, 53)),
            rng.choice(("tcp", "udp")),
            rng.randrange(0, 1500),
        )
        events.extend([ev] * rng.randint(1, dup_max))
    rng.shuffle(events)
    return events


@pytest.fixture
def dhcp():
    return dhcp_events()


# acceptance summary: one PASS/FAIL line per numbered criterion

_ACCEPTANCE: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance", None)
    if marker is None:
        return
    number, title = marker
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "outcomes": []})
    if report.when == "call" or report.outcome != "passed":
        entry["outcomes"].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        rep.acceptance = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[number]
        outcomes = entry["outcomes"]
        if any(o == "failed" for o in outcomes):
            status = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"[{status}] criterion {number}: {entry['title']}")
