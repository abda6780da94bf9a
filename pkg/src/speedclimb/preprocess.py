"""Turn a Dataset into model-ready rows and descriptive tables."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from datetime import date
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .data import AttemptRecord, ClimberProfile, Dataset, Event, Outcome
from .errors import NegativeAge, NoAgesAtEvent, ZeroEvents

DAYS_PER_YEAR = 365.25
GENDER_CODING = {"female": 1, "male": 0}

MODEL_ROW_COLUMNS = ["climber_id", "event_id", "y", "log_y", "x1", "x2", "x3_raw", "x4_raw",
                     "x3", "x4", "age_imputed"]


@dataclass(frozen=True)
class ScalingParams:
    age_mean: float
    age_sd: float
    progression_mean: float
    progression_sd: float

    def apply(self, frame: pd.DataFrame) -> pd.DataFrame:
        out = frame.copy()
        out["x3"] = (out["x3_raw"] - self.age_mean) / self.age_sd
        out["x4"] = (out["x4_raw"] - self.progression_mean) / self.progression_sd
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_sd(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    sd = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    # constant columns are centred only
    return mean, (sd if sd > 0 else 1.0)


def standardize(frame: pd.DataFrame) -> tuple[pd.DataFrame, ScalingParams]:
    am, asd = _mean_sd(frame["x3_raw"].to_numpy())
    pm, psd = _mean_sd(frame["x4_raw"].to_numpy())
    scaling = ScalingParams(am, asd, pm, psd)
    return scaling.apply(frame), scaling


# --- skip usage -----------------------------------------------------------

def forward_fill(event_order: Iterable[str], observed: Mapping[str, bool]) -> dict[str, bool]:
    """Carry each observed value forward until the next observation.

    Events before the first observation are False: the technique did not
    exist for the climber yet.
    """
    current = False
    out = {}
    for eid in event_order:
        if eid in observed:
            current = bool(observed[eid])
        out[eid] = current
    return out


def propagate_skip(observations, dataset: Dataset) -> dict[tuple[str, str], bool]:
    """Skip indicator for every (climber, event) pair with an attempt.

    ``observations`` is a mapping (climber_id, event_id) -> bool or an
    iterable of objects with ``climber_id``, ``event_id`` and ``uses_skip``.
    """
    if not isinstance(observations, Mapping):
        observations = {(o.climber_id, o.event_id): o.uses_skip for o in observations}
    order = {e.event_id: i for i, e in enumerate(dataset.ordered_events())}

    attended: dict[str, set[str]] = defaultdict(set)
    for a in dataset.attempts:
        attended[a.climber_id].add(a.event_id)
    per_climber: dict[str, dict[str, bool]] = defaultdict(dict)
    for (cid, eid), flag in observations.items():
        per_climber[cid][eid] = flag
        attended[cid].add(eid)

    out = {}
    for cid in sorted(attended):
        events = sorted(attended[cid], key=lambda e: (order.get(e, math.inf), e))
        for eid, flag in forward_fill(events, per_climber.get(cid, {})).items():
            out[(cid, eid)] = flag
    return out


# --- covariates ---------------------------------------------------------

def dob_as_date(dob) -> date | None:
    if dob is None:
        return None
    if isinstance(dob, int):
        return date(dob, 1, 1)
    return dob


def compute_age(profile: ClimberProfile, event: Event) -> tuple[float | None, bool]:
    """Age in years at the event start; None when the birth date is unknown.

    Year-only birth dates are taken as January 1st of that year.
    """
    born = dob_as_date(profile.dob)
    if born is None:
        return None, False
    days = (event.start_date - born).days
    if days < 0:
        raise NegativeAge(f"climber {profile.climber_id!r} born after event {event.event_id!r} started")
    return days / DAYS_PER_YEAR, False


def fill_missing_ages(rows: pd.DataFrame) -> pd.DataFrame:
    """Replace missing ``x3_raw`` by the mean known age at the same event."""
    out = rows.copy()
    missing = out["x3_raw"].isna()
    out["age_imputed"] = missing
    if not missing.any():
        return out
    means = out.loc[~missing].groupby("event_id")["x3_raw"].mean()
    need = out.loc[missing, "event_id"]
    absent = sorted(set(need) - set(means.index))
    if absent:
        raise NoAgesAtEvent(f"no known ages at event(s) {', '.join(map(str, absent))}")
    out.loc[missing, "x3_raw"] = need.map(means).to_numpy()
    return out


def time_progression(event: Event, first_event_date: date) -> int:
    return (event.start_date - first_event_date).days


# --- per (climber, event) summaries -------------------------------------

def valid_times(attempts: Iterable[AttemptRecord]) -> list[float]:
    return [a.seconds for a in attempts if a.outcome is Outcome.TIME]


def best_time(attempts: Iterable[AttemptRecord]) -> float | None:
    times = valid_times(attempts)
    return min(times) if times else None


def fall_indicator(attempts: Iterable[AttemptRecord]) -> bool:
    return any(a.outcome is Outcome.FALL for a in attempts)


def event_ranges(dataset: Dataset) -> pd.DataFrame:
    """Worst minus best valid time for pairs with at least two times."""
    recs = []
    for (cid, eid), attempts in sorted(dataset.attempts_by_pair().items()):
        times = valid_times(attempts)
        if len(times) >= 2:
            recs.append((cid, eid, min(times), max(times), max(times) - min(times)))
    return pd.DataFrame(recs, columns=["climber_id", "event_id", "best", "worst", "range"])


def _covariate_frame(dataset: Dataset, pairs: list[tuple[str, str]]) -> pd.DataFrame:
    climbers = dataset.climber_map
    events = dataset.event_map
    skip = propagate_skip(dataset.skip_annotations, dataset)
    first = dataset.first_event_date()
    recs = []
    for cid, eid in pairs:
        profile, event = climbers[cid], events[eid]
        age, _ = compute_age(profile, event)
        recs.append({
            "climber_id": cid,
            "event_id": eid,
            "x1": int(skip.get((cid, eid), False)),
            "x2": GENDER_CODING[profile.gender],
            "x3_raw": np.nan if age is None else age,
            "x4_raw": time_progression(event, first),
        })
    frame = pd.DataFrame(recs, columns=["climber_id", "event_id", "x1", "x2", "x3_raw", "x4_raw"])
    frame = fill_missing_ages(frame)
    frame["x4_raw"] = frame["x4_raw"].astype(int)
    return frame


def _ordered_pairs(dataset: Dataset, pairs) -> list[tuple[str, str]]:
    order = {e.event_id: i for i, e in enumerate(dataset.ordered_events())}
    return sorted(pairs, key=lambda p: (order[p[1]], p[0]))


def build_model_rows(dataset: Dataset) -> tuple[pd.DataFrame, ScalingParams]:
    """One row per (climber, event) with a valid best time."""
    best = {}
    for pair, attempts in dataset.attempts_by_pair().items():
        t = best_time(attempts)
        if t is not None:
            best[pair] = t
    pairs = _ordered_pairs(dataset, best)
    frame = _covariate_frame(dataset, pairs)
    frame["y"] = [best[p] for p in pairs]
    frame["log_y"] = np.log(frame["y"].to_numpy(float))
    frame, scaling = standardize(frame)
    return frame[MODEL_ROW_COLUMNS].reset_index(drop=True), scaling


def build_fall_rows(dataset: Dataset) -> tuple[pd.DataFrame, ScalingParams]:
    """One row per (climber, event) that started at least one round, with ``fell``."""
    by_pair = dataset.attempts_by_pair()
    started = {p: a for p, a in by_pair.items() if any(x.outcome is not Outcome.DID_NOT_START for x in a)}
    pairs = _ordered_pairs(dataset, started)
    frame = _covariate_frame(dataset, pairs)
    frame["fell"] = [int(fall_indicator(started[p])) for p in pairs]
    frame, scaling = standardize(frame)
    cols = ["climber_id", "event_id", "fell", "x1", "x2", "x3_raw", "x4_raw", "x3", "x4", "age_imputed"]
    return frame[cols].reset_index(drop=True), scaling


# --- descriptive tables ------------------------------------------------------

@dataclass(frozen=True)
class DisciplineStats:
    category: str
    events: int
    falls: int
    false_starts: int

    @property
    def fall_rate(self) -> float:
        return self.falls / self.events

    @property
    def false_start_rate(self) -> float:
        return self.false_starts / self.events

    @classmethod
    def from_counts(cls, category, events, falls, false_starts) -> "DisciplineStats":
        if events <= 0:
            raise ZeroEvents(f"no events with final rounds for {category}")
        return cls(category, int(events), int(falls), int(false_starts))


def discipline_stats(dataset: Dataset, category: str) -> DisciplineStats:
    """Falls and false starts per event in final-stage rounds for one gender."""
    climbers = dataset.climber_map
    events, falls, false_starts = set(), 0, 0
    for a in dataset.attempts:
        if not a.round.is_final or climbers[a.climber_id].gender != category:
            continue
        if a.outcome is Outcome.DID_NOT_START:
            continue
        events.add(a.event_id)
        falls += a.outcome is Outcome.FALL
        false_starts += a.outcome is Outcome.FALSE_START
    return DisciplineStats.from_counts(category, len(events), falls, false_starts)


def events_per_year(dataset: Dataset) -> pd.DataFrame:
    years = pd.Series([e.start_date.year for e in dataset.events], dtype=int)
    counts = years.value_counts().sort_index()
    return pd.DataFrame({"year": counts.index.astype(int), "events": counts.to_numpy(int)})


def skip_usage_by_event(dataset: Dataset) -> pd.DataFrame:
    """Number of skip users per event and gender (propagated indicator)."""
    skip = propagate_skip(dataset.skip_annotations, dataset)
    climbers = dataset.climber_map
    attended = {(a.climber_id, a.event_id) for a in dataset.attempts}
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for cid, eid in attended:
        counts[(eid, climbers[cid].gender)] += int(skip.get((cid, eid), False))
    recs = []
    for e in dataset.ordered_events():
        for g in ("female", "male"):
            if (e.event_id, g) in counts:
                recs.append((e.event_id, e.start_date.isoformat(), g, counts[(e.event_id, g)]))
    return pd.DataFrame(recs, columns=["event_id", "event_date", "gender", "skip_users"])


def ranges_by_year(dataset: Dataset) -> pd.DataFrame:
    ranges = event_ranges(dataset)
    events = dataset.event_map
    skip = propagate_skip(dataset.skip_annotations, dataset)
    ranges.insert(0, "year", [events[e].start_date.year for e in ranges["event_id"]])
    ranges["uses_skip"] = [int(skip.get((c, e), False)) for c, e in zip(ranges["climber_id"], ranges["event_id"])]
    return ranges.sort_values(["year", "event_id", "climber_id"], kind="stable").reset_index(drop=True)
