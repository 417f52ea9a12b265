"""Space-time tile reservations for connected vehicles.

The conflict box is covered by an ``n x n`` grid of square tiles whose
time axis is sliced into one-tick slots.  A reservation claims every
(tile, slot) cell a vehicle's buffered body sweeps while traversing its
trajectory at the granted entry speed.  Admission is strictly first come,
first served: a request names one exact entry time and is granted if and
only if its cells collide with nothing already booked and nothing a
human-driven vehicle could legally reach — otherwise it is rejected with
the first reason that failed, and the asker may try again later.

Occupancy is tracked per tile as sorted, disjoint slot intervals; a
trajectory's footprint per tile is the hull of its occupied slots plus
one trailing pad slot, so interval arithmetic and the explicit cell sets
used by brute-force checkers agree exactly (see ``reserved_cells``).
"""

from __future__ import annotations

import math
from bisect import bisect_right, insort
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import UnknownReservation
from .intersection import IntersectionModel, Trajectory
from .kernels import footprint_tiles
from .signals import MovementKey, SignalController
from .types import (
    DEFAULT_TICK,
    Direction,
    TurnKind,
    VehicleClass,
    code_covers,
)
from .vehicles import TURN_SPEED_CAP, VEHICLE_LENGTH, VEHICLE_WIDTH

#: static safety buffer admitted around each vehicle body, meters
TILE_BUFFER = 0.5

#: how long after a green window an entered human vehicle is assumed to
#: still need the box, seconds
CLEARANCE = 3.0

#: wait imposed on a rejected vehicle before it may ask again, seconds
REQUEST_BACKOFF = 0.5

#: trailing slots added to each tile's hull against entry-speed slop
SAFETY_PAD_SLOTS = 1

_FOOTPRINT_STEP = 0.15  # m of front travel between body placements


class RejectionReason(Enum):
    HORIZON_EXCEEDED = "horizon_exceeded"
    TILE_CONFLICT = "tile_conflict"
    HV_CONFLICT = "hv_conflict"


@dataclass(frozen=True)
class TileGrid:
    """Square tiling of the conflict box, anchored at its origin corner."""

    n: int
    tile_size: float

    @classmethod
    def from_model(cls, model: IntersectionModel) -> "TileGrid":
        n = 2 * model.max_incoming_lanes
        return cls(n=n, tile_size=max(model.box_width, model.box_height) / n)

    @property
    def tile_count(self) -> int:
        return self.n * self.n


def profile_speed(trajectory: Trajectory, entry_speed: float) -> float:
    """Traversal speed assumed inside the box for a given entry speed."""
    if trajectory.turn is TurnKind.THROUGH:
        return entry_speed
    return min(entry_speed, TURN_SPEED_CAP)


class _FootprintCache:
    """Per-(lane pair, speed) tile hulls, shared by every consumer."""

    def __init__(self, grid: TileGrid, dt: float) -> None:
        self.grid = grid
        self.dt = dt
        self._hulls: dict[tuple, dict[int, tuple[int, int]]] = {}
        self._marks = np.full(grid.tile_count, -1, dtype=np.int64)
        cap = grid.tile_count * 4096
        self._out_slot = np.empty(cap, dtype=np.int64)
        self._out_tile = np.empty(cap, dtype=np.int64)

    def hull(self, trajectory: Trajectory, speed: float) -> dict[int, tuple[int, int]]:
        """Tile -> inclusive (first, last) relative slot range, padded."""
        key = (
            trajectory.from_direction,
            trajectory.in_lane,
            trajectory.to_direction,
            trajectory.out_lane,
            round(speed, 4),
        )
        cached = self._hulls.get(key)
        if cached is not None:
            return cached
        xs, ys, ss = trajectory.polyline(_FOOTPRINT_STEP)
        self._marks.fill(-1)
        count = footprint_tiles(
            xs,
            ys,
            ss,
            trajectory.length,
            VEHICLE_LENGTH,
            0.5 * VEHICLE_WIDTH + TILE_BUFFER,
            speed,
            self.dt,
            self.grid.n,
            self.grid.tile_size,
            self._marks,
            self._out_slot,
            self._out_tile,
        )
        if count < 0:
            raise RuntimeError("footprint buffer overflow")  # pragma: no cover
        hull: dict[int, tuple[int, int]] = {}
        for i in range(count):
            tile = int(self._out_tile[i])
            slot = int(self._out_slot[i])
            lo, hi = hull.get(tile, (slot, slot))
            hull[tile] = (min(lo, slot), max(hi, slot))
        hull = {t: (lo, hi + SAFETY_PAD_SLOTS) for t, (lo, hi) in hull.items()}
        self._hulls[key] = hull
        return hull


def reserved_cells(
    cache: _FootprintCache, trajectory: Trajectory, entry_speed: float, entry_slot: int
) -> set[tuple[int, int]]:
    """Explicit (tile, slot) cells a grant at ``entry_slot`` occupies.

    This is the definitional expansion of the interval bookkeeping the
    manager uses; brute-force checkers compare against it directly.
    """
    hull = cache.hull(trajectory, profile_speed(trajectory, entry_speed))
    return {
        (tile, entry_slot + s)
        for tile, (lo, hi) in hull.items()
        for s in range(lo, hi + 1)
    }


# ---------------------------------------------------------------------------
# blocked regions


class BlockedRegion:
    """Per-tile sorted slot intervals closed to admission."""

    def __init__(self) -> None:
        self._intervals: dict[int, list[tuple[int, int]]] = {}

    def add(self, tile: int, lo: int, hi: int) -> None:
        if hi < lo:
            return
        self._intervals.setdefault(tile, []).append((lo, hi))

    def seal(self) -> "BlockedRegion":
        """Sort and merge intervals after bulk loading."""
        for tile, spans in self._intervals.items():
            spans.sort()
            merged = [spans[0]]
            for lo, hi in spans[1:]:
                if lo <= merged[-1][1] + 1:
                    merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
                else:
                    merged.append((lo, hi))
            self._intervals[tile] = merged
        return self

    def collides(self, tile: int, lo: int, hi: int) -> bool:
        spans = self._intervals.get(tile)
        if not spans:
            return False
        i = bisect_right(spans, (lo, math.inf)) - 1
        if i >= 0 and spans[i][1] >= lo:
            return True
        return i + 1 < len(spans) and spans[i + 1][0] <= hi

    def first_free_after(self, tile: int, lo: int, hi: int) -> int:
        """Smallest shift of [lo, hi] (in slots) that clears this tile."""
        spans = self._intervals.get(tile)
        shift = 0
        if not spans:
            return 0
        while True:
            a, b = lo + shift, hi + shift
            i = bisect_right(spans, (a, math.inf)) - 1
            if i >= 0 and spans[i][1] >= a:
                shift += spans[i][1] - a + 1
                continue
            if i + 1 < len(spans) and spans[i + 1][0] <= b:
                shift += spans[i + 1][1] - a + 1
                continue
            return shift

    def cells(self) -> set[tuple[int, int]]:
        return {
            (tile, s)
            for tile, spans in self._intervals.items()
            for lo, hi in spans
            for s in range(lo, hi + 1)
        }

    def __bool__(self) -> bool:
        return bool(self._intervals)


class CompositeRegion:
    """Several blocked regions queried as one."""

    def __init__(self, *parts: BlockedRegion) -> None:
        self.parts = [p for p in parts if p]

    def collides(self, tile: int, lo: int, hi: int) -> bool:
        return any(p.collides(tile, lo, hi) for p in self.parts)

    def first_free_after(self, tile: int, lo: int, hi: int) -> int:
        # one sweep is enough for callers that re-verify after shifting
        return max((p.first_free_after(tile, lo, hi) for p in self.parts), default=0)

    def __bool__(self) -> bool:
        return bool(self.parts)


def _movement_kinds(
    model: IntersectionModel, direction: Direction, code: str
) -> list[TurnKind]:
    return [
        kind
        for kind in TurnKind
        if code_covers(code, kind)
        and model.movements_for(VehicleClass.HUMAN, direction, kind)
    ]


def hv_blocked_region(
    controller: SignalController,
    model: IntersectionModel,
    cache: _FootprintCache,
    lookahead: float,
    *,
    arrival_offsets: dict[MovementKey, float] | None = None,
    clearance: float = CLEARANCE,
    active_only: bool = False,
) -> BlockedRegion:
    """Cells a legally behaving human vehicle could occupy.

    For every movement that can show Green within ``lookahead`` (or is
    showing it now, with ``active_only``), every human lane mapping's
    footprint is blocked for entries spanning the whole green window plus
    ``clearance``.  ``arrival_offsets`` — the soonest a human on each
    movement could physically reach the stop line, in seconds from now —
    trims windows nobody can use; a movement missing from the mapping
    blocks nothing.  Offsets only ever shrink a window from the left, so
    passing none is the conservative default.
    """
    dt = controller.dt
    region = BlockedRegion()
    clear_slots = int(math.ceil(clearance / dt))
    for (direction, code), windows in controller.green_windows(lookahead).items():
        kinds = _movement_kinds(model, direction, code)
        if not kinds:
            continue
        earliest = 0.0
        if arrival_offsets is not None:
            bound = arrival_offsets.get((direction, code))
            if bound is None:
                continue
            earliest = bound
        limit = model.roads[direction].speed_limit
        for w_lo, w_hi in windows:
            if active_only and w_lo > dt:
                continue
            lo = max(w_lo, earliest)
            if lo > w_hi:
                continue
            lo_slot = int(math.floor(lo / dt))
            hi_slot = int(math.ceil(w_hi / dt))
            for kind in kinds:
                for traj in model.class_trajectories(VehicleClass.HUMAN, direction, kind):
                    hull = cache.hull(traj, profile_speed(traj, limit))
                    for tile, (a, b) in hull.items():
                        region.add(tile, lo_slot + a, hi_slot + b + clear_slots)
    return region.seal()


# ---------------------------------------------------------------------------
# the manager


@dataclass(frozen=True)
class ReservationRequest:
    vehicle_id: int
    direction: Direction
    trajectory: Trajectory
    proposed_entry_time: float
    entry_speed: float


@dataclass(frozen=True)
class Grant:
    reservation_id: int
    vehicle_id: int
    entry_time: float
    entry_speed: float
    entry_slot: int


@dataclass(frozen=True)
class Rejection:
    vehicle_id: int
    reason: RejectionReason
    retry_after: float = REQUEST_BACKOFF


@dataclass
class _Booking:
    vehicle_id: int
    hull: dict[int, tuple[int, int]]
    entry_slot: int


class ReservationManager:
    """First-come-first-served admission over one intersection's grid."""

    def __init__(
        self,
        grid: TileGrid,
        horizons: dict[Direction, float],
        dt: float = DEFAULT_TICK,
    ) -> None:
        self.grid = grid
        self.horizons = dict(horizons)
        self.dt = dt
        self.cache = _FootprintCache(grid, dt)
        self._occupancy: dict[int, list[tuple[int, int, int]]] = {}
        self._bookings: dict[int, _Booking] = {}
        self._next_id = 1
        self.granted_count = 0
        self.rejected_counts: dict[RejectionReason, int] = {r: 0 for r in RejectionReason}
        self.completed_count = 0
        self.cancelled_count = 0

    # -- admission ----------------------------------------------------------

    def request(
        self,
        req: ReservationRequest,
        now: float,
        hv_region: BlockedRegion | CompositeRegion | None = None,
    ) -> Grant | Rejection:
        """Adjudicate one request against the book as it stands.

        The three admission conditions are checked in a fixed order —
        reservation horizon, booked tiles, human-reachable tiles — and a
        rejection reports the first one that failed.
        """
        if req.proposed_entry_time - now > self.horizons[req.direction]:
            return self._reject(req, RejectionReason.HORIZON_EXCEEDED)
        entry_slot = int(round(req.proposed_entry_time / self.dt))
        hull = self.cache.hull(
            req.trajectory, profile_speed(req.trajectory, req.entry_speed)
        )
        for tile, (a, b) in hull.items():
            if self._tile_busy(tile, entry_slot + a, entry_slot + b):
                return self._reject(req, RejectionReason.TILE_CONFLICT)
        if hv_region is not None:
            for tile, (a, b) in hull.items():
                if hv_region.collides(tile, entry_slot + a, entry_slot + b):
                    return self._reject(req, RejectionReason.HV_CONFLICT)
        rid = self._next_id
        self._next_id += 1
        for tile, (a, b) in hull.items():
            insort(
                self._occupancy.setdefault(tile, []),
                (entry_slot + a, entry_slot + b, rid),
            )
        self._bookings[rid] = _Booking(req.vehicle_id, hull, entry_slot)
        self.granted_count += 1
        return Grant(rid, req.vehicle_id, entry_slot * self.dt, req.entry_speed, entry_slot)

    def release(self, reservation_id: int, outcome: str) -> None:
        """Return a booking's cells to the pool, whatever the reason."""
        if outcome not in ("completed", "cancelled"):
            raise ValueError(f"unknown outcome {outcome!r}")
        self._remove(reservation_id)
        if outcome == "completed":
            self.completed_count += 1
        else:
            self.cancelled_count += 1

    def _remove(self, reservation_id: int) -> None:
        booking = self._bookings.pop(reservation_id, None)
        if booking is None:
            raise UnknownReservation(f"reservation {reservation_id} is not active")
        for tile, (a, b) in booking.hull.items():
            spans = self._occupancy[tile]
            spans.remove((booking.entry_slot + a, booking.entry_slot + b, reservation_id))
            if not spans:
                del self._occupancy[tile]

    @property
    def active_count(self) -> int:
        return len(self._bookings)

    # -- planning helpers -----------------------------------------------------

    def earliest_feasible_entry(
        self,
        trajectory: Trajectory,
        entry_speed: float,
        direction: Direction,
        now: float,
        not_before: float,
        hv_region: BlockedRegion | CompositeRegion | None = None,
    ) -> float | None:
        """First entry time from ``not_before`` the book could accept.

        Jump-scans per-tile conflicts rather than probing tick by tick;
        returns None when nothing inside the road's horizon fits.  This is
        advice for shaping the next request — admission itself stays with
        :meth:`request`.
        """
        hull = self.cache.hull(trajectory, profile_speed(trajectory, entry_speed))
        slot = int(math.ceil(max(not_before, now + self.dt) / self.dt))
        limit_slot = int((now + self.horizons[direction]) / self.dt)
        while slot <= limit_slot:
            shift = 0
            for tile, (a, b) in hull.items():
                lo, hi = slot + a, slot + b
                jump = self._busy_until(tile, lo, hi)
                if hv_region is not None:
                    jump = max(jump, hv_region.first_free_after(tile, lo, hi))
                shift = max(shift, jump)
            if shift == 0:
                return slot * self.dt
            slot += shift
        return None

    # -- internals ------------------------------------------------------------

    def _reject(self, req: ReservationRequest, reason: RejectionReason) -> Rejection:
        self.rejected_counts[reason] += 1
        return Rejection(req.vehicle_id, reason)

    def _tile_busy(self, tile: int, lo: int, hi: int) -> bool:
        return self._busy_until(tile, lo, hi) > 0

    def _busy_until(self, tile: int, lo: int, hi: int) -> int:
        """0 when [lo, hi] is free, else slots to shift past the blocker."""
        spans = self._occupancy.get(tile)
        if not spans:
            return 0
        i = bisect_right(spans, (lo, math.inf, math.inf)) - 1
        if i >= 0 and spans[i][1] >= lo:
            return spans[i][1] - lo + 1
        if i + 1 < len(spans) and spans[i + 1][0] <= hi:
            return spans[i + 1][1] - lo + 1
        return 0
