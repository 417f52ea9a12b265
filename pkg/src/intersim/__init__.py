"""Deterministic microsimulation of one signalized intersection shared by
human drivers, who obey a ring-and-barrier signal program, and connected
autonomous vehicles, which enter on first-come-first-served space-time
tile reservations instead.

Quick start::

    from intersim import RunParams, run_simulation

    summary = run_simulation("intersection.xml", "signals.xml", "demand.csv",
                             RunParams(cav_ratio=0.5, seed=7))
    print(summary.mean_delay)
"""

from .config import (
    DemandTable,
    IntersectionSpecDoc,
    SignalProgramDoc,
    ValidationIssue,
    ValidationReport,
    parse_demand_table,
    parse_intersection_spec,
    parse_signal_program,
    serialize_demand_table,
    serialize_intersection_spec,
    serialize_signal_program,
    validate_cross_references,
)
from .demand import SpawnEvent, SpawnQueue, compute_vlh, expand_schedule
from .engine import (
    RunParams,
    RunSummary,
    Simulation,
    VehicleRecord,
    delay_of,
    emit_summary,
    load_documents,
    run_simulation,
    run_sweep,
)
from .errors import (
    ConfigError,
    ConfigInvalid,
    DemandFormatError,
    IntersectionSpecError,
    ModelError,
    NoLaneForAction,
    SignalProgramError,
    SimError,
    UnknownReservation,
    VehicleNotCompleted,
    WindowExceedsSpan,
)
from .intersection import (
    IntersectionModel,
    Trajectory,
    TurnPolicy,
    apply_turn_policy,
    build_model,
    classify_turn,
)
from .reservations import (
    BlockedRegion,
    Grant,
    Rejection,
    RejectionReason,
    ReservationManager,
    ReservationRequest,
    TileGrid,
    hv_blocked_region,
)
from .signals import (
    AdaptiveTables,
    SignalController,
    analytic_cycle_length,
    conflict_matrix,
    turns_conflict,
)
from .types import Color, Direction, TurnKind, VehicleClass
from .vehicles import VehicleState

__version__ = "0.1.0"

__all__ = [
    "AdaptiveTables",
    "BlockedRegion",
    "Color",
    "ConfigError",
    "ConfigInvalid",
    "DemandFormatError",
    "DemandTable",
    "Direction",
    "Grant",
    "IntersectionModel",
    "IntersectionSpecDoc",
    "IntersectionSpecError",
    "ModelError",
    "NoLaneForAction",
    "Rejection",
    "RejectionReason",
    "ReservationManager",
    "ReservationRequest",
    "RunParams",
    "RunSummary",
    "SignalController",
    "SignalProgramDoc",
    "SignalProgramError",
    "SimError",
    "Simulation",
    "SpawnEvent",
    "SpawnQueue",
    "TileGrid",
    "Trajectory",
    "TurnKind",
    "TurnPolicy",
    "UnknownReservation",
    "ValidationIssue",
    "ValidationReport",
    "VehicleClass",
    "VehicleNotCompleted",
    "VehicleRecord",
    "VehicleState",
    "WindowExceedsSpan",
    "analytic_cycle_length",
    "apply_turn_policy",
    "build_model",
    "classify_turn",
    "compute_vlh",
    "conflict_matrix",
    "delay_of",
    "emit_summary",
    "expand_schedule",
    "hv_blocked_region",
    "load_documents",
    "parse_demand_table",
    "parse_intersection_spec",
    "parse_signal_program",
    "run_simulation",
    "run_sweep",
    "serialize_demand_table",
    "serialize_intersection_spec",
    "serialize_signal_program",
    "turns_conflict",
    "validate_cross_references",
]
