"""Readers and writers for the three flat input files.

All files are comma-separated UTF-8 with a header row, ISO-8601 dates and
lowercase booleans. Row-level problems are collected and raised together
as an :class:`IngestError`.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from .data import GENDERS, AttemptRecord, ClimberProfile, Dataset, Event, Outcome, RoundKind
from .errors import ConflictingObservation, IngestError, MalformedRow

RESULTS_HEADER = ["event_id", "event_name", "start_date", "end_date", "climber_id",
                  "climber_name", "gender", "round", "result"]
CLIMBERS_HEADER = ["climber_id", "name", "gender", "dob", "dob_source", "dob_accessed"]
SKIPS_HEADER = ["climber_id", "event_id", "uses_skip"]

STATUS_TOKENS = {"FALL": Outcome.FALL, "FS": Outcome.FALSE_START, "DNS": Outcome.DID_NOT_START}

_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class SkipObservation:
    climber_id: str
    event_id: str
    uses_skip: bool


@dataclass(frozen=True)
class ResultRow:
    """One parsed line of results.csv; carries the event and climber columns too."""

    event: Event
    climber_id: str
    climber_name: str
    gender: str
    attempt: AttemptRecord
    line: int = 0


def _rows(path, header):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise IngestError([MalformedRow(str(path), 1, "missing header row")]) from None
        if [h.strip() for h in got] != header:
            raise IngestError([MalformedRow(str(path), 1, f"expected header {','.join(header)}")])
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            yield lineno, row


def _iso_date(text: str, what: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ValueError(f"bad {what} {text!r}") from None


def parse_result(token: str) -> tuple[Outcome, float | None]:
    token = token.strip()
    if token in STATUS_TOKENS:
        return STATUS_TOKENS[token], None
    if not _DECIMAL.match(token):
        raise ValueError(f"unknown result token {token!r}")
    seconds = float(token)
    if not (seconds > 0 and math.isfinite(seconds)):
        raise ValueError(f"non-positive time {token!r}")
    return Outcome.TIME, seconds


def parse_dob(token: str) -> date | int | None:
    token = token.strip()
    if not token:
        return None
    if re.fullmatch(r"\d{4}", token):
        return int(token)
    return _iso_date(token, "dob")


def _parse_gender(token: str) -> str:
    g = token.strip()
    if g not in GENDERS:
        raise ValueError(f"unknown gender {token!r}")
    return g


def read_result_rows(path) -> list[ResultRow]:
    out, errors = [], []
    seen = set()
    for line, row in _rows(path, RESULTS_HEADER):
        try:
            if len(row) != len(RESULTS_HEADER):
                raise ValueError(f"expected {len(RESULTS_HEADER)} fields, got {len(row)}")
            eid, ename, start, end, cid, cname, gender, rnd, result = (f.strip() for f in row)
            if not eid or not cid:
                raise ValueError("empty event_id or climber_id")
            event = Event(eid, ename, _iso_date(start, "start_date"), _iso_date(end, "end_date"))
            if event.start_date > event.end_date:
                raise ValueError("start_date after end_date")
            outcome, seconds = parse_result(result)
            attempt = AttemptRecord(eid, cid, RoundKind.parse(rnd), outcome, seconds)
            if attempt.key in seen:
                raise ValueError(f"duplicate record for ({eid}, {cid}, {attempt.round.token})")
            seen.add(attempt.key)
            out.append(ResultRow(event, cid, cname, _parse_gender(gender), attempt, line))
        except ValueError as exc:
            errors.append(MalformedRow(str(path), line, str(exc)))
    if errors:
        raise IngestError(errors, out)
    return out


def read_results(path) -> list[AttemptRecord]:
    """Parse results.csv into attempt records."""
    return [r.attempt for r in read_result_rows(path)]


def read_climbers(path) -> dict[str, ClimberProfile]:
    out: dict[str, ClimberProfile] = {}
    errors = []
    for line, row in _rows(path, CLIMBERS_HEADER):
        try:
            if len(row) != len(CLIMBERS_HEADER):
                raise ValueError(f"expected {len(CLIMBERS_HEADER)} fields, got {len(row)}")
            cid, name, gender, dob, source, accessed = (f.strip() for f in row)
            if not cid:
                raise ValueError("empty climber_id")
            if cid in out:
                raise ValueError(f"duplicate climber_id {cid!r}")
            profile = ClimberProfile(
                cid, name, _parse_gender(gender), parse_dob(dob), source,
                _iso_date(accessed, "dob_accessed") if accessed else None,
            )
            out[cid] = profile
        except ValueError as exc:
            errors.append(MalformedRow(str(path), line, str(exc)))
    if errors:
        raise IngestError(errors, out.values())
    return out


def read_skip_observations(path) -> list[SkipObservation]:
    out: dict[tuple[str, str], SkipObservation] = {}
    errors = []
    for line, row in _rows(path, SKIPS_HEADER):
        try:
            if len(row) != len(SKIPS_HEADER):
                raise ValueError(f"expected {len(SKIPS_HEADER)} fields, got {len(row)}")
            cid, eid, flag = (f.strip() for f in row)
            if flag not in ("true", "false"):
                raise ValueError(f"boolean must be 'true' or 'false', got {flag!r}")
            obs = SkipObservation(cid, eid, flag == "true")
        except ValueError as exc:
            errors.append(MalformedRow(str(path), line, str(exc)))
            continue
        prev = out.get((cid, eid))
        if prev is not None and prev.uses_skip != obs.uses_skip:
            raise ConflictingObservation(cid, eid)
        out[(cid, eid)] = obs
    if errors:
        raise IngestError(errors, out.values())
    return list(out.values())


def load_dataset(results, climbers=None, skips=None) -> Dataset:
    """Assemble a Dataset from the three files.

    Climbers present in results but absent from the registry get a profile
    with a missing date of birth.
    """
    rows = read_result_rows(results)
    registry = read_climbers(climbers) if climbers else {}
    observations = read_skip_observations(skips) if skips else []

    events: dict[str, Event] = {}
    errors = []
    for r in rows:
        prev = events.setdefault(r.event.event_id, r.event)
        if prev != r.event:
            errors.append(MalformedRow(str(results), r.line, f"event {r.event.event_id!r} has inconsistent name or dates"))
        if r.climber_id not in registry:
            registry[r.climber_id] = ClimberProfile(r.climber_id, r.climber_name, r.gender)
        elif registry[r.climber_id].gender != r.gender:
            errors.append(MalformedRow(str(results), r.line, f"climber {r.climber_id!r} gender disagrees with registry"))
    if errors:
        raise IngestError(errors)

    return Dataset(
        registry.values(), events.values(), [r.attempt for r in rows],
        {(o.climber_id, o.event_id): o.uses_skip for o in observations},
    )


def _fmt_dob(dob) -> str:
    if dob is None:
        return ""
    return str(dob) if isinstance(dob, int) else dob.isoformat()


def write_dataset(dataset: Dataset, directory) -> dict[str, Path]:
    """Write results.csv, climbers.csv and skip_observations.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    climbers = dataset.climber_map
    events = dataset.event_map
    paths = {
        "results": directory / "results.csv",
        "climbers": directory / "climbers.csv",
        "skips": directory / "skip_observations.csv",
    }
    with paths["results"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for a in dataset.attempts:
            e, c = events[a.event_id], climbers[a.climber_id]
            w.writerow([e.event_id, e.name, e.start_date.isoformat(), e.end_date.isoformat(),
                        c.climber_id, c.name, c.gender, a.round.token, a.result_token()])
    with paths["climbers"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLIMBERS_HEADER)
        for c in dataset.climbers:
            w.writerow([c.climber_id, c.name, c.gender, _fmt_dob(c.dob), c.dob_source,
                        c.dob_accessed.isoformat() if c.dob_accessed else ""])
    with paths["skips"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SKIPS_HEADER)
        for (cid, eid), flag in dataset.skip_annotations.items():
            w.writerow([cid, eid, "true" if flag else "false"])
    return paths
