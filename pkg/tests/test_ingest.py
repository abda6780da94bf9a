import csv
from datetime import date

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from speedclimb.data import Outcome, RoundKind
from speedclimb.errors import ConflictingObservation, IngestError
from speedclimb.ingest import (CLIMBERS_HEADER, RESULTS_HEADER, SKIPS_HEADER, load_dataset, read_climbers,
                               read_results, read_skip_observations, write_dataset)


def write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(r + "\n")
    return path


def test_time_row_parses(tmp_path):
    p = write(tmp_path / "r.csv", RESULTS_HEADER, ["E1,World Cup,2019-04-05,2019-04-06,C1,A. Climber,female,qualification,7.32"])
    [rec] = read_results(p)
    assert rec.outcome is Outcome.TIME and rec.seconds == 7.32
    assert rec.round is RoundKind.QUALIFICATION
    assert (rec.event_id, rec.climber_id) == ("E1", "C1")


def test_status_tokens(tmp_path):
    rows = [f"E1,W,2019-04-05,2019-04-06,C1,A,female,{r},{t}" for r, t in
            (("qualification", "FS"), ("final_16", "FALL"), ("final_8", "DNS"))]
    recs = read_results(write(tmp_path / "r.csv", RESULTS_HEADER, rows))
    assert [r.outcome for r in recs] == [Outcome.FALSE_START, Outcome.FALL, Outcome.DID_NOT_START]


def test_negative_time_is_malformed(tmp_path):
    p = write(tmp_path / "r.csv", RESULTS_HEADER, ["E1,W,2019-04-05,2019-04-06,C1,A,female,qualification,-1.0"])
    with pytest.raises(IngestError) as err:
        read_results(p)
    [e] = err.value.errors
    assert e.line == 2 and "non-positive" in e.reason


def test_errors_are_collected_not_first_only(tmp_path):
    rows = [
        "E1,W,2019-04-05,2019-04-06,C1,A,female,qualification,7.0",
        "E1,W,2019-02-30,2019-04-06,C2,A,female,qualification,7.0",
        "E1,W,2019-04-05,2019-04-06,C3,A,female,warmup,7.0",
        "E1,W,2019-04-05,2019-04-06,C4,A,female,qualification,fast",
        "E1,W,2019-04-05,2019-04-06,C5,A,robot,qualification,7.0",
    ]
    with pytest.raises(IngestError) as err:
        read_results(write(tmp_path / "r.csv", RESULTS_HEADER, rows))
    assert [e.line for e in err.value.errors] == [3, 4, 5, 6]
    assert len(err.value.records) == 1


def test_duplicate_round_is_an_error(tmp_path):
    rows = ["E1,W,2019-04-05,2019-04-06,C1,A,female,qualification,7.0"] * 2
    with pytest.raises(IngestError, match="duplicate"):
        read_results(write(tmp_path / "r.csv", RESULTS_HEADER, rows))


def test_bad_header(tmp_path):
    p = write(tmp_path / "r.csv", ["a", "b"], [])
    with pytest.raises(IngestError, match="header"):
        read_results(p)


def test_dob_forms(tmp_path):
    p = write(tmp_path / "c.csv", CLIMBERS_HEADER, [
        "C1,A,female,1995,wiki,2023-01-02",
        "C2,B,male,,,",
        "C3,C,male,1996-07-08,ifsc,",
    ])
    reg = read_climbers(p)
    assert reg["C1"].dob == 1995 and reg["C1"].dob_kind == "year"
    assert reg["C1"].dob_accessed == date(2023, 1, 2)
    assert reg["C2"].dob is None and reg["C2"].dob_kind == "missing"
    assert reg["C3"].dob == date(1996, 7, 8)


@pytest.mark.parametrize("row", ["C1,A,female,1995-13-01,,", "C1,A,nonbinary,1995,,"])
def test_bad_climber_rows(tmp_path, row):
    with pytest.raises(IngestError):
        read_climbers(write(tmp_path / "c.csv", CLIMBERS_HEADER, [row]))


def test_duplicate_climber_id(tmp_path):
    with pytest.raises(IngestError, match="duplicate"):
        read_climbers(write(tmp_path / "c.csv", CLIMBERS_HEADER, ["C1,A,female,,,", "C1,B,female,,,"]))


def test_skip_observations(tmp_path):
    [obs] = read_skip_observations(write(tmp_path / "s.csv", SKIPS_HEADER, ["C1,E3,true"]))
    assert (obs.climber_id, obs.event_id, obs.uses_skip) == ("C1", "E3", True)


def test_conflicting_skip_observation(tmp_path):
    with pytest.raises(ConflictingObservation):
        read_skip_observations(write(tmp_path / "s.csv", SKIPS_HEADER, ["C1,E3,true", "C1,E3,false"]))


def test_skip_tokens_are_case_sensitive(tmp_path):
    with pytest.raises(IngestError):
        read_skip_observations(write(tmp_path / "s.csv", SKIPS_HEADER, ["C1,E3,TRUE"]))


def test_missing_registry_entries_are_synthesized(tmp_path):
    r = write(tmp_path / "r.csv", RESULTS_HEADER, ["E1,W,2019-04-05,2019-04-06,C1,A,female,qualification,7.0"])
    ds = load_dataset(r)
    [c] = ds.climbers
    assert c.climber_id == "C1" and c.gender == "female" and c.dob is None


def test_round_trip(tmp_path, small_dataset):
    paths = write_dataset(small_dataset, tmp_path)
    again = load_dataset(paths["results"], paths["climbers"], paths["skips"])
    assert again == small_dataset
    assert again.skip_annotations == small_dataset.skip_annotations


@st.composite
def result_lines(draw):
    good = st.builds(lambda c, r, t: f"E1,W,2019-04-05,2019-04-06,C{c},A,male,{r},{t}",
                     st.integers(0, 30), st.sampled_from(["qualification", "final_16", "semifinal"]),
                     st.one_of(st.sampled_from(["FALL", "FS", "DNS"]),
                               st.floats(0.5, 30, allow_nan=False).map(repr)))
    bad = st.sampled_from([
        "E1,W,2019-04-05,2019-04-06,C1,A,male,qualification,-3",
        "E1,W,2019-04-05,2019-04-06,C1,A,male,bouldering,7.0",
        "E1,W,20190405,2019-04-06,C1,A,male,qualification,7.0",
        "E1,W,2019-04-05,2019-04-06,C1,A,male",
    ])
    return draw(st.lists(st.one_of(good, bad), min_size=1, max_size=25))


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(result_lines())
def test_no_row_is_dropped_silently(tmp_path, lines):
    p = write(tmp_path / "r.csv", RESULTS_HEADER, lines)
    try:
        n = len(read_results(p))
        errors = 0
    except IngestError as exc:
        n, errors = len(exc.records), len(exc.errors)
    assert n + errors == len(lines)
