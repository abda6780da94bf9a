"""Exception types raised across the package."""

from __future__ import annotations

from dataclasses import dataclass


class SpeedClimbError(Exception):
    """Base class for every error raised by speedclimb."""


@dataclass(frozen=True)
class MalformedRow:
    """One rejected input row. ``line`` is 1-based and counts the header."""

    path: str
    line: int
    reason: str

    def __str__(self) -> str:
        return f"{self.path}:{self.line}: {self.reason}"


class IngestError(SpeedClimbError):
    """All row-level problems found while reading one file.

    ``records`` holds whatever parsed cleanly so callers can account for
    every input row (records + errors == rows read).
    """

    def __init__(self, errors, records=()):
        self.errors = list(errors)
        self.records = list(records)
        lines = "\n  ".join(str(e) for e in self.errors[:20])
        more = "" if len(self.errors) <= 20 else f"\n  ... {len(self.errors) - 20} more"
        super().__init__(f"{len(self.errors)} malformed row(s):\n  {lines}{more}")


class ConflictingObservation(SpeedClimbError):
    def __init__(self, climber_id, event_id):
        self.climber_id = climber_id
        self.event_id = event_id
        super().__init__(
            f"conflicting skip observations for climber {climber_id!r} at event {event_id!r}"
        )


class NegativeAge(SpeedClimbError):
    pass


class NoAgesAtEvent(SpeedClimbError):
    pass


class ZeroEvents(SpeedClimbError):
    pass


class UnknownModelName(SpeedClimbError):
    pass


class EmptyData(SpeedClimbError):
    pass


class SingularSystem(SpeedClimbError):
    pass


class ConvergenceFailure(SpeedClimbError):
    """Optimizer gave up; ``best`` carries the best state reached."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CompleteSeparation(SpeedClimbError):
    pass


class NotNested(SpeedClimbError):
    pass


class CriterionMismatch(SpeedClimbError):
    pass


class UnknownLevel(SpeedClimbError):
    pass


class DegenerateCovariance(SpeedClimbError):
    pass
