from datetime import date, timedelta

import pytest

from speedclimb.data import AttemptRecord, ClimberProfile, Dataset, Event, Outcome, RoundKind


def make_event(i, start=date(2019, 4, 5)):
    d = start + timedelta(days=30 * i)
    return Event(f"E{i}", f"World Cup {i}", d, d + timedelta(days=1))


def attempt(eid, cid, rnd, result):
    rnd = RoundKind.parse(rnd) if isinstance(rnd, str) else rnd
    if isinstance(result, str):
        return AttemptRecord(eid, cid, rnd, Outcome(result))
    return AttemptRecord.time(eid, cid, rnd, result)


@pytest.fixture
def small_dataset():
    """Two climbers, three events, a few finals with falls and false starts."""
    climbers = [
        ClimberProfile("C1", "A. Climber", "female", date(1998, 5, 1)),
        ClimberProfile("C2", "B. Climber", "male", 1995),
        ClimberProfile("C3", "C. Climber", "male", None),
    ]
    events = [make_event(i) for i in range(1, 4)]
    attempts = [
        attempt("E1", "C1", "qualification", 7.32),
        attempt("E1", "C1", "final_16", 7.10),
        attempt("E1", "C2", "qualification", 6.10),
        attempt("E1", "C2", "final_16", "FALL"),
        attempt("E1", "C3", "qualification", 6.50),
        attempt("E2", "C1", "qualification", 7.00),
        attempt("E2", "C1", "final_16", "FS"),
        attempt("E2", "C2", "qualification", 5.90),
        attempt("E2", "C2", "final_16", 5.80),
        attempt("E2", "C2", "final_8", "FALL"),
        attempt("E3", "C1", "qualification", 6.90),
        attempt("E3", "C2", "qualification", "DNS"),
        attempt("E3", "C3", "qualification", 6.20),
        attempt("E3", "C3", "final_16", 6.40),
    ]
    skips = {("C2", "E2"): True, ("C1", "E3"): True}
    return Dataset(climbers, events, attempts, skips)


# acceptance verdict lines keyed by criterion number, filled by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is None:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        terminalreporter.write_line(ACCEPTANCE.get(n, f"criterion {n:>2} NOT RUN"))
