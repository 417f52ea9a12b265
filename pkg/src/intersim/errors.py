"""Exception hierarchy for configuration parsing, model building and runs.

Parse errors carry a human-readable ``location`` (file kind plus line or
element path) so a validation report can point at the offending input.
"""

from __future__ import annotations


class SimError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SimError):
    """A configuration document could not be parsed or is inconsistent."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(message if location is None else f"{location}: {message}")


# -- signal program documents -------------------------------------------------

class SignalProgramError(ConfigError):
    pass


class MissingBarrierDef(SignalProgramError):
    pass


class MalformedPhaseTuple(SignalProgramError):
    pass


class UnknownMovementCode(SignalProgramError):
    pass


class NegativeDuration(SignalProgramError):
    pass


class PhaseSequenceError(SignalProgramError):
    """A Green is not followed by its Yellow and Red (or a barrier)."""


class EmptyRing(SignalProgramError):
    pass


class BarrierMismatch(SignalProgramError):
    """Rings do not share the same barrier sequence, which would deadlock."""


# -- demand tables ------------------------------------------------------------

class DemandFormatError(ConfigError):
    pass


class UnequalBucketLengths(DemandFormatError):
    pass


class TooFewRows(DemandFormatError):
    pass


class NonIntegerCount(DemandFormatError):
    pass


class TotalMismatch(DemandFormatError):
    """A Total or Vehicle Total column disagrees with the summed counts."""


class TimestampParseError(DemandFormatError):
    pass


class MultiDaySpanUnsupported(DemandFormatError):
    pass


class UnknownActionCode(DemandFormatError):
    pass


# -- intersection documents ---------------------------------------------------

class IntersectionSpecError(ConfigError):
    pass


class DuplicateRoadDirection(IntersectionSpecError):
    pass


class MalformedLanePair(IntersectionSpecError):
    pass


class UnknownVehicleType(IntersectionSpecError):
    pass


class MissingRoad(IntersectionSpecError):
    pass


# -- model / geometry ---------------------------------------------------------

class ModelError(SimError):
    pass


class UTurnUnsupported(ModelError):
    pass


class InconsistentLaneIndex(ModelError):
    pass


class MovementNotAllowed(ModelError):
    pass


# -- demand expansion / metrics -----------------------------------------------

class NoLaneForAction(SimError):
    pass


class WindowExceedsSpan(SimError):
    pass


# -- reservations ---------------------------------------------------------------

class UnknownReservation(SimError):
    pass


# -- engine ---------------------------------------------------------------------

class VehicleNotCompleted(SimError):
    """Delay was asked of a vehicle that has not exited yet."""


class ConfigInvalid(SimError):
    """Raised by a run when cross-reference validation reports errors."""

    def __init__(self, report):
        self.report = report
        lines = "; ".join(f"{i.location}: {i.message}" for i in report.errors)
        super().__init__(f"configuration invalid: {lines}")
