"""Domain records for speed-climbing results and the immutable Dataset."""

from __future__ import annotations

import enum
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping

GENDERS = ("female", "male")


class RoundKind(enum.IntEnum):
    """Rounds of one event, in the order they are climbed.

    The small and big finals share the last stage, so they compare by
    ``stage`` rather than by their integer value.
    """

    QUALIFICATION = 0
    FINAL_16 = 1
    FINAL_8 = 2
    SEMIFINAL = 3
    SMALL_FINAL = 4
    BIG_FINAL = 5

    @property
    def stage(self) -> int:
        return min(int(self), 4)

    @property
    def is_final(self) -> bool:
        return self is not RoundKind.QUALIFICATION

    @property
    def token(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, token: str) -> "RoundKind":
        try:
            return cls[token.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown round {token!r}") from None


class Outcome(enum.Enum):
    TIME = "time"
    FALL = "FALL"
    FALSE_START = "FS"
    DID_NOT_START = "DNS"


@dataclass(frozen=True, order=True)
class ClimberProfile:
    climber_id: str
    name: str
    gender: str
    # full date, year-only (int), or missing (None)
    dob: date | int | None = None
    dob_source: str = ""
    dob_accessed: date | None = None

    @property
    def dob_kind(self) -> str:
        if self.dob is None:
            return "missing"
        return "year" if isinstance(self.dob, int) else "date"


@dataclass(frozen=True, order=True)
class Event:
    event_id: str
    name: str
    start_date: date
    end_date: date

    @property
    def sort_key(self) -> tuple[date, str]:
        return (self.start_date, self.event_id)


@dataclass(frozen=True, order=True)
class AttemptRecord:
    event_id: str
    climber_id: str
    round: RoundKind
    outcome: Outcome
    seconds: float | None = None

    @property
    def key(self) -> tuple[str, str, RoundKind]:
        return (self.event_id, self.climber_id, self.round)

    @property
    def is_time(self) -> bool:
        return self.outcome is Outcome.TIME

    @classmethod
    def time(cls, event_id, climber_id, round, seconds) -> "AttemptRecord":
        return cls(event_id, climber_id, RoundKind(round), Outcome.TIME, float(seconds))

    def result_token(self) -> str:
        if self.outcome is Outcome.TIME:
            return repr(self.seconds)
        return self.outcome.value


def _attempt_sort_key(a: AttemptRecord):
    return (a.event_id, a.climber_id, int(a.round), a.outcome.value, a.seconds or 0.0)


@dataclass(frozen=True)
class Dataset:
    """Climbers, events, attempts and raw skip observations.

    Record collections are stored sorted, so two datasets built from the
    same records in any order compare equal.  Duplicates are kept so that
    :func:`validate` can report them.
    """

    climbers: tuple[ClimberProfile, ...]
    events: tuple[Event, ...]
    attempts: tuple[AttemptRecord, ...]
    skip_annotations: Mapping[tuple[str, str], bool] = field(default_factory=dict)

    def __init__(
        self,
        climbers: Iterable[ClimberProfile],
        events: Iterable[Event],
        attempts: Iterable[AttemptRecord],
        skip_annotations: Mapping[tuple[str, str], bool] | None = None,
    ):
        object.__setattr__(self, "climbers", tuple(sorted(climbers)))
        object.__setattr__(self, "events", tuple(sorted(events)))
        object.__setattr__(self, "attempts", tuple(sorted(attempts, key=_attempt_sort_key)))
        object.__setattr__(self, "skip_annotations", dict(sorted((skip_annotations or {}).items())))

    def __hash__(self):
        return hash((self.climbers, self.events, self.attempts))

    @property
    def climber_map(self) -> dict[str, ClimberProfile]:
        return {c.climber_id: c for c in self.climbers}

    @property
    def event_map(self) -> dict[str, Event]:
        return {e.event_id: e for e in self.events}

    def ordered_events(self) -> list[Event]:
        """Events by start date, ties broken by id."""
        return sorted(self.events, key=lambda e: e.sort_key)

    def attempts_by_pair(self) -> dict[tuple[str, str], list[AttemptRecord]]:
        """Attempts grouped by (climber_id, event_id)."""
        out: dict[tuple[str, str], list[AttemptRecord]] = defaultdict(list)
        for a in self.attempts:
            out[(a.climber_id, a.event_id)].append(a)
        return dict(out)

    def first_event_date(self) -> date:
        return min(e.start_date for e in self.events)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    where: tuple = ()


def validate(dataset: Dataset) -> list[Violation]:
    """Check every record invariant and return all violations found."""
    report: list[Violation] = []

    ids = Counter(c.climber_id for c in dataset.climbers)
    for cid, n in sorted(ids.items()):
        if n > 1:
            report.append(Violation("duplicate_climber", f"climber id {cid!r} appears {n} times", (cid,)))
    for c in dataset.climbers:
        if c.gender not in GENDERS:
            report.append(Violation("gender", f"climber {c.climber_id!r} has gender {c.gender!r}", (c.climber_id,)))

    eids = Counter(e.event_id for e in dataset.events)
    for eid, n in sorted(eids.items()):
        if n > 1:
            report.append(Violation("duplicate_event", f"event id {eid!r} appears {n} times", (eid,)))
    for e in dataset.events:
        if e.start_date > e.end_date:
            report.append(Violation("event_dates", f"event {e.event_id!r} starts after it ends", (e.event_id,)))

    climbers = dataset.climber_map
    events = dataset.event_map
    keys = Counter(a.key for a in dataset.attempts)
    for key, n in keys.items():
        if n > 1:
            report.append(Violation("duplicate_attempt", f"{n} records for {key[1]!r} in {key[2].token} of {key[0]!r}", key))

    for a in dataset.attempts:
        where = (a.event_id, a.climber_id, a.round.token)
        if a.climber_id not in climbers:
            report.append(Violation("unknown_climber", f"attempt references unknown climber {a.climber_id!r}", where))
        if a.event_id not in events:
            report.append(Violation("unknown_event", f"attempt references unknown event {a.event_id!r}", where))
        if a.outcome is Outcome.TIME and not (a.seconds is not None and a.seconds > 0):
            report.append(Violation("time", f"non-positive time {a.seconds!r}", where))
        c, e = climbers.get(a.climber_id), events.get(a.event_id)
        if c is not None and e is not None and isinstance(c.dob, date) and c.dob >= e.start_date:
            report.append(Violation("dob", f"climber {c.climber_id!r} born on or after event {e.event_id!r}", where))

    pairs = {(a.climber_id, a.event_id) for a in dataset.attempts}
    for cid, eid in dataset.skip_annotations:
        if (cid, eid) not in pairs:
            report.append(Violation("skip_pair", f"skip observation for {cid!r} at {eid!r} has no matching attempt", (cid, eid)))

    # duplicate dob violations for the same (climber, event) across rounds are collapsed
    seen = set()
    unique = []
    for v in report:
        k = (v.kind, v.where[:2]) if v.kind == "dob" else (v.kind, v.where, v.message)
        if k not in seen:
            seen.add(k)
            unique.append(v)
    return unique


def gender_counts(dataset: Dataset) -> dict[str, int]:
    counts = Counter(c.gender for c in dataset.climbers)
    return {g: counts.get(g, 0) for g in GENDERS}
