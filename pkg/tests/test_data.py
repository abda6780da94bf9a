from datetime import date

from hypothesis import given, settings, strategies as st

from speedclimb.data import (AttemptRecord, ClimberProfile, Dataset, Event, Outcome, RoundKind,
                             gender_counts, validate)

from conftest import attempt, make_event


def test_round_order_is_total_with_shared_final_stage():
    order = [RoundKind.QUALIFICATION, RoundKind.FINAL_16, RoundKind.FINAL_8, RoundKind.SEMIFINAL]
    assert [r.stage for r in order] == [0, 1, 2, 3]
    assert RoundKind.SMALL_FINAL.stage == RoundKind.BIG_FINAL.stage == 4
    assert not RoundKind.QUALIFICATION.is_final
    assert all(r.is_final for r in RoundKind if r is not RoundKind.QUALIFICATION)


def test_unknown_climber_is_one_referential_violation():
    ds = Dataset([ClimberProfile("C1", "a", "female")], [make_event(1)],
                 [attempt("E1", "C1", "qualification", 7.0), attempt("E1", "C9", "qualification", 7.1)])
    report = validate(ds)
    assert len(report) == 1
    assert report[0].kind == "unknown_climber"
    assert "C9" in report[0].message


def test_well_formed_dataset_has_empty_report():
    ds = Dataset([ClimberProfile("C1", "a", "female"), ClimberProfile("C2", "b", "male")], [make_event(1)],
                 [attempt("E1", "C1", "qualification", 7.0), attempt("E1", "C2", "qualification", 6.0)])
    assert validate(ds) == []


def test_duplicate_climber_id_is_named():
    ds = Dataset([ClimberProfile("C1", "a", "female"), ClimberProfile("C1", "b", "female")], [make_event(1)],
                 [attempt("E1", "C1", "qualification", 7.0)])
    report = validate(ds)
    assert [v.kind for v in report] == ["duplicate_climber"]
    assert "'C1'" in report[0].message


def test_every_violation_is_reported():
    e = Event("E1", "x", date(2020, 5, 2), date(2020, 5, 1))
    ds = Dataset(
        [ClimberProfile("C1", "a", "other"), ClimberProfile("C2", "b", "male", date(2021, 1, 1))],
        [e],
        [attempt("E1", "C1", "qualification", 7.0), AttemptRecord("E1", "C2", RoundKind.QUALIFICATION, Outcome.TIME, -1.0),
         attempt("E9", "C1", "qualification", 7.0), attempt("E1", "C1", "qualification", 7.5)],
        {("C2", "E5"): True},
    )
    kinds = {v.kind for v in validate(ds)}
    assert kinds == {"gender", "event_dates", "duplicate_attempt", "time", "unknown_event", "dob", "skip_pair"}


def test_validate_is_idempotent(small_dataset):
    assert validate(small_dataset) == validate(small_dataset) == []


def test_gender_counts(small_dataset):
    assert gender_counts(small_dataset) == {"female": 1, "male": 2}


@settings(max_examples=50, deadline=None)
@given(st.randoms(use_true_random=False))
def test_construction_is_order_independent(rnd):
    climbers = [ClimberProfile(f"C{i}", f"n{i}", "female" if i % 2 else "male") for i in range(5)]
    events = [make_event(i) for i in range(4)]
    attempts = [attempt(e.event_id, c.climber_id, "qualification", 6.0 + 0.1 * k)
                for k, (c, e) in enumerate((c, e) for c in climbers for e in events)]
    skips = {(c.climber_id, "E1"): bool(i % 2) for i, c in enumerate(climbers)}
    base = Dataset(climbers, events, attempts, skips)
    for coll in (climbers, events, attempts):
        rnd.shuffle(coll)
    items = list(skips.items())
    rnd.shuffle(items)
    assert Dataset(climbers, events, attempts, dict(items)) == base
