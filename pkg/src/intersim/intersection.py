"""Geometric model of a four-arm intersection and its legal lane movements.

Coordinates: x grows east, y grows north.  The conflict box spans
``[0, box_width] x [0, box_height]``; each arm's lanes are centered within the
axis band they attach to.  Under right-hand traffic an approach's leftmost
lane (index 0) is the one nearest the arm's centerline.

Turn trajectories are a straight lead-in, a quarter circular arc, and a
straight lead-out (lead segments collapse to zero when the lane offsets are
symmetric); through trajectories are straight segments, diagonal when the
entry and exit lanes are laterally offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .config import IntersectionSpecDoc
from .errors import (
    InconsistentLaneIndex,
    MissingRoad,
    ModelError,
    MovementNotAllowed,
    UTurnUnsupported,
)
from .types import CARDINALS, Direction, TurnKind, VehicleClass

#: Lane width in meters, uniform across all approaches.
LANE_WIDTH = 3.7


class TurnPolicy(Enum):
    """How a vehicle class's lane-movement table is derived."""

    CURRENT = "current"
    PERMISSIVE = "permissive"
    RESTRICTIVE = "restrictive"

    @classmethod
    def from_code(cls, code: str) -> "TurnPolicy":
        table = {"c": cls.CURRENT, "p": cls.PERMISSIVE, "r": cls.RESTRICTIVE}
        try:
            return table[code.lower()]
        except KeyError:
            raise ValueError(f"unknown turn policy code {code!r}") from None


@dataclass(frozen=True)
class RoadSpec:
    direction: Direction
    incoming_lanes: int
    outgoing_lanes: int
    speed_limit: float
    reservation_horizon: float


@dataclass(frozen=True)
class LaneMapping:
    vehicle_class: VehicleClass
    from_direction: Direction
    to_direction: Direction
    pairs: tuple[tuple[int, int], ...]


def classify_turn(from_direction: Direction, to_direction: Direction) -> TurnKind:
    """Turn kind implied by entering heading ``from_direction`` and leaving
    heading ``to_direction``.  U-turns are not representable."""
    if to_direction is from_direction:
        return TurnKind.THROUGH
    if to_direction is from_direction.left:
        return TurnKind.LEFT
    if to_direction is from_direction.right:
        return TurnKind.RIGHT
    raise UTurnUnsupported(
        f"{from_direction.name} to {to_direction.name} reverses direction of travel"
    )


def turn_target(from_direction: Direction, kind: TurnKind) -> Direction:
    if kind is TurnKind.LEFT:
        return from_direction.left
    if kind is TurnKind.RIGHT:
        return from_direction.right
    return from_direction


# ---------------------------------------------------------------------------
# trajectory geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Line:
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def length(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def point_at(self, s: float) -> tuple[float, float, float]:
        f = s / self.length if self.length > 0 else 0.0
        x = self.x0 + (self.x1 - self.x0) * f
        y = self.y0 + (self.y1 - self.y0) * f
        return x, y, math.atan2(self.y1 - self.y0, self.x1 - self.x0)


@dataclass(frozen=True)
class _Arc:
    cx: float
    cy: float
    radius: float
    start_angle: float
    sweep: float  # signed, +pi/2 for a left turn, -pi/2 for a right turn

    @property
    def length(self) -> float:
        return abs(self.sweep) * self.radius

    def point_at(self, s: float) -> tuple[float, float, float]:
        angle = self.start_angle + self.sweep * (s / self.length if self.length > 0 else 0.0)
        x = self.cx + self.radius * math.cos(angle)
        y = self.cy + self.radius * math.sin(angle)
        heading = angle + math.copysign(math.pi / 2, self.sweep)
        return x, y, heading


@dataclass(frozen=True)
class Trajectory:
    """A path through the conflict box from a stop line to an exit boundary."""

    from_direction: Direction
    in_lane: int
    to_direction: Direction
    out_lane: int
    turn: TurnKind
    segments: tuple[_Line | _Arc, ...]
    length: float
    _polyline: tuple[np.ndarray, np.ndarray, np.ndarray] | None = field(
        default=None, compare=False, repr=False
    )

    def point_at(self, s: float) -> tuple[float, float, float]:
        """Position and heading (radians) at arc length ``s``, clamped to the
        path's extent."""
        s = min(max(s, 0.0), self.length)
        for segment in self.segments:
            if s <= segment.length or segment is self.segments[-1]:
                return segment.point_at(min(s, segment.length))
            s -= segment.length
        raise AssertionError("unreachable")

    def polyline(self, max_step: float = 0.25) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sampled path as (x, y, cumulative arc length) float64 arrays."""
        n = max(2, int(math.ceil(self.length / max_step)) + 1)
        ss = np.linspace(0.0, self.length, n)
        xs = np.empty(n)
        ys = np.empty(n)
        for i, s in enumerate(ss):
            xs[i], ys[i], _ = self.point_at(float(s))
        return xs, ys, ss


def _build_trajectory(
    entry: tuple[float, float],
    entry_heading: tuple[float, float],
    exit_: tuple[float, float],
    exit_heading: tuple[float, float],
    turn: TurnKind,
    from_direction: Direction,
    in_lane: int,
    to_direction: Direction,
    out_lane: int,
) -> Trajectory:
    ax, ay = entry
    bx, by = exit_
    if turn is TurnKind.THROUGH:
        segments: tuple[_Line | _Arc, ...] = (_Line(ax, ay, bx, by),)
    else:
        hx, hy = entry_heading
        gx, gy = exit_heading
        dx, dy = bx - ax, by - ay
        d_h = dx * hx + dy * hy  # displacement along the entry heading
        d_g = dx * gx + dy * gy  # displacement along the exit heading
        if d_h <= 0 or d_g <= 0:
            raise ModelError(
                f"no room for a {turn.value} turn from {from_direction.name} lane "
                f"{in_lane} to {to_direction.name} lane {out_lane}"
            )
        radius = min(d_h, d_g)
        lead_in = d_h - radius
        lead_out = d_g - radius
        p1 = (ax + hx * lead_in, ay + hy * lead_in)
        if turn is TurnKind.LEFT:  # counterclockwise
            nx, ny = -hy, hx
            sweep = math.pi / 2
        else:
            nx, ny = hy, -hx
            sweep = -math.pi / 2
        cx, cy = p1[0] + nx * radius, p1[1] + ny * radius
        start_angle = math.atan2(p1[1] - cy, p1[0] - cx)
        segments = ()
        if lead_in > 1e-9:
            segments += (_Line(ax, ay, p1[0], p1[1]),)
        segments += (_Arc(cx, cy, radius, start_angle, sweep),)
        if lead_out > 1e-9:
            p2 = (bx - gx * lead_out, by - gy * lead_out)
            segments += (_Line(p2[0], p2[1], bx, by),)
    length = sum(s.length for s in segments)
    return Trajectory(
        from_direction=from_direction,
        in_lane=in_lane,
        to_direction=to_direction,
        out_lane=out_lane,
        turn=turn,
        segments=segments,
        length=length,
    )


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------

@dataclass
class IntersectionModel:
    roads: dict[Direction, RoadSpec]
    mappings: dict[tuple[VehicleClass, Direction, Direction], tuple[tuple[int, int], ...]]
    box_width: float
    box_height: float
    _arm_offsets: dict[str, float]
    _trajectories: dict[tuple[Direction, int, Direction, int], Trajectory] = field(
        default_factory=dict, repr=False
    )

    # -- lane anchor points -------------------------------------------------

    def entry_point(self, direction: Direction, lane: int) -> tuple[float, float]:
        """Stop-line position of an incoming lane's centerline."""
        w = LANE_WIDTH
        road = self.roads[direction]
        if not 0 <= lane < road.incoming_lanes:
            raise InconsistentLaneIndex(
                f"{direction.name} has no incoming lane {lane}"
            )
        if direction is Direction.EAST:
            y0 = self._arm_offsets["west"]
            return 0.0, y0 + road.incoming_lanes * w - (lane + 0.5) * w
        if direction is Direction.WEST:
            y0 = self._arm_offsets["east"]
            return self.box_width, y0 + self.roads[Direction.EAST].outgoing_lanes * w + (lane + 0.5) * w
        if direction is Direction.NORTH:
            x0 = self._arm_offsets["south"]
            return x0 + self.roads[Direction.SOUTH].outgoing_lanes * w + (lane + 0.5) * w, 0.0
        x0 = self._arm_offsets["north"]
        return x0 + road.incoming_lanes * w - (lane + 0.5) * w, self.box_height

    def exit_point(self, direction: Direction, lane: int) -> tuple[float, float]:
        """Exit-boundary position of an outgoing lane's centerline."""
        w = LANE_WIDTH
        road = self.roads[direction]
        if not 0 <= lane < road.outgoing_lanes:
            raise InconsistentLaneIndex(
                f"{direction.name} has no outgoing lane {lane}"
            )
        if direction is Direction.EAST:
            y0 = self._arm_offsets["east"]
            return self.box_width, y0 + road.outgoing_lanes * w - (lane + 0.5) * w
        if direction is Direction.WEST:
            y0 = self._arm_offsets["west"]
            return 0.0, y0 + self.roads[Direction.EAST].incoming_lanes * w + (lane + 0.5) * w
        if direction is Direction.NORTH:
            x0 = self._arm_offsets["north"]
            return x0 + self.roads[Direction.SOUTH].incoming_lanes * w + (lane + 0.5) * w, self.box_height
        x0 = self._arm_offsets["south"]
        return x0 + road.outgoing_lanes * w - (lane + 0.5) * w, 0.0

    # -- movement queries ------------------------------------------------------

    def allowed_lanes(
        self, vehicle_class: VehicleClass, from_direction: Direction, to_direction: Direction
    ) -> tuple[tuple[int, int], ...]:
        """Legal (incoming, outgoing) lane pairs for a movement, empty when the
        movement is not mapped for the class."""
        classify_turn(from_direction, to_direction)  # rejects U-turns
        return self.mappings.get((vehicle_class, from_direction, to_direction), ())

    def out_lane_for(
        self, vehicle_class: VehicleClass, from_direction: Direction,
        to_direction: Direction, in_lane: int,
    ) -> int:
        for pair in self.allowed_lanes(vehicle_class, from_direction, to_direction):
            if pair[0] == in_lane:
                return pair[1]
        raise MovementNotAllowed(
            f"{vehicle_class.value} may not go {from_direction.name} to "
            f"{to_direction.name} from lane {in_lane}"
        )

    def trajectory(
        self, vehicle_class: VehicleClass, from_direction: Direction,
        to_direction: Direction, in_lane: int,
    ) -> Trajectory:
        out_lane = self.out_lane_for(vehicle_class, from_direction, to_direction, in_lane)
        return self.trajectory_geometry(from_direction, in_lane, to_direction, out_lane)

    def trajectory_geometry(
        self, from_direction: Direction, in_lane: int, to_direction: Direction, out_lane: int
    ) -> Trajectory:
        """Geometric path for a lane pair, independent of vehicle class."""
        key = (from_direction, in_lane, to_direction, out_lane)
        cached = self._trajectories.get(key)
        if cached is None:
            turn = classify_turn(from_direction, to_direction)
            cached = _build_trajectory(
                self.entry_point(from_direction, in_lane),
                from_direction.vector,
                self.exit_point(to_direction, out_lane),
                to_direction.vector,
                turn,
                from_direction,
                in_lane,
                to_direction,
                out_lane,
            )
            self._trajectories[key] = cached
        return cached

    def movements_for(
        self, vehicle_class: VehicleClass, direction: Direction, kind: TurnKind
    ) -> tuple[tuple[int, int], ...]:
        """Lane pairs a class may use for (approach direction, turn kind)."""
        return self.allowed_lanes(vehicle_class, direction, turn_target(direction, kind))

    def class_trajectories(
        self, vehicle_class: VehicleClass, direction: Direction, kind: TurnKind
    ) -> list[Trajectory]:
        target = turn_target(direction, kind)
        return [
            self.trajectory_geometry(direction, i, target, j)
            for i, j in self.allowed_lanes(vehicle_class, direction, target)
        ]

    @property
    def max_incoming_lanes(self) -> int:
        return max(r.incoming_lanes for r in self.roads.values())


def build_model(spec: IntersectionSpecDoc) -> IntersectionModel:
    """Materialize a parsed intersection document into a geometric model."""
    roads: dict[Direction, RoadSpec] = {}
    for entry in spec.roads:
        roads[entry.direction] = RoadSpec(
            direction=entry.direction,
            incoming_lanes=entry.incoming_lanes,
            outgoing_lanes=entry.outgoing_lanes,
            speed_limit=entry.speed_limit,
            reservation_horizon=entry.reservation_horizon,
        )
    for direction in CARDINALS:
        if direction not in roads:
            raise MissingRoad(f"no road declared for direction {direction.name}")

    mappings: dict[tuple[VehicleClass, Direction, Direction], tuple[tuple[int, int], ...]] = {}
    for movement in spec.movements:
        classify_turn(movement.from_direction, movement.to_direction)
        from_road = roads[movement.from_direction]
        to_road = roads[movement.to_direction]
        for vclass, pairs in movement.pairs.items():
            for in_lane, out_lane in pairs:
                if in_lane >= from_road.incoming_lanes:
                    raise InconsistentLaneIndex(
                        f"{movement.from_direction.name} has "
                        f"{from_road.incoming_lanes} incoming lanes, mapping uses {in_lane}"
                    )
                if out_lane >= to_road.outgoing_lanes:
                    raise InconsistentLaneIndex(
                        f"{movement.to_direction.name} has "
                        f"{to_road.outgoing_lanes} outgoing lanes, mapping uses {out_lane}"
                    )
            mappings[(vclass, movement.from_direction, movement.to_direction)] = tuple(pairs)

    w = LANE_WIDTH
    east, west = roads[Direction.EAST], roads[Direction.WEST]
    north, south = roads[Direction.NORTH], roads[Direction.SOUTH]
    box_height = max(
        east.incoming_lanes + west.outgoing_lanes,
        east.outgoing_lanes + west.incoming_lanes,
    ) * w
    box_width = max(
        north.incoming_lanes + south.outgoing_lanes,
        north.outgoing_lanes + south.incoming_lanes,
    ) * w
    if box_width <= 0 or box_height <= 0:
        raise ModelError("intersection must have lanes on both axes")
    arm_offsets = {
        "west": (box_height - (east.incoming_lanes + west.outgoing_lanes) * w) / 2,
        "east": (box_height - (east.outgoing_lanes + west.incoming_lanes) * w) / 2,
        "south": (box_width - (north.incoming_lanes + south.outgoing_lanes) * w) / 2,
        "north": (box_width - (south.incoming_lanes + north.outgoing_lanes) * w) / 2,
    }
    return IntersectionModel(
        roads=roads,
        mappings=mappings,
        box_width=box_width,
        box_height=box_height,
        _arm_offsets=arm_offsets,
    )


# ---------------------------------------------------------------------------
# turn policies
# ---------------------------------------------------------------------------

def _paired(
    in_lanes: list[int], out_count: int, right_aligned: bool = False
) -> tuple[tuple[int, int], ...]:
    """Pair a block of incoming lanes with outgoing lanes, preserving lateral
    order.  Left-aligned pairing keeps the innermost of the block on the
    innermost outgoing lane; right turns align to the curb side instead."""
    n = len(in_lanes)
    pairs = []
    for rank, lane in enumerate(in_lanes):
        if right_aligned:
            out = out_count - 1 - min(n - 1 - rank, out_count - 1)
        else:
            out = min(rank, out_count - 1)
        pairs.append((lane, out))
    return tuple(pairs)


def apply_turn_policy(
    model: IntersectionModel, policy: TurnPolicy, vehicle_class: VehicleClass
) -> IntersectionModel:
    """Return a model whose lane table for ``vehicle_class`` follows the
    policy; the other class's table is untouched.

    ``CURRENT`` keeps the configured table.  ``PERMISSIVE`` maps every
    incoming lane onto every movement whose target road has outgoing lanes.
    ``RESTRICTIVE`` dedicates the leftmost lane to left turns, the rightmost
    to right turns and interior lanes to through traffic (two- and one-lane
    approaches keep enough actions to reach every movement).
    """
    if policy is TurnPolicy.CURRENT:
        return model

    mappings = {k: v for k, v in model.mappings.items() if k[0] is not vehicle_class}
    for direction in CARDINALS:
        road = model.roads[direction]
        if road.incoming_lanes == 0:
            continue
        lane_kinds: dict[int, set[TurnKind]] = {}
        if policy is TurnPolicy.PERMISSIVE:
            for lane in range(road.incoming_lanes):
                lane_kinds[lane] = {TurnKind.LEFT, TurnKind.THROUGH, TurnKind.RIGHT}
        else:
            k = road.incoming_lanes
            if k == 1:
                lane_kinds[0] = {TurnKind.LEFT, TurnKind.THROUGH, TurnKind.RIGHT}
            elif k == 2:
                lane_kinds[0] = {TurnKind.LEFT}
                lane_kinds[1] = {TurnKind.THROUGH, TurnKind.RIGHT}
            else:
                lane_kinds[0] = {TurnKind.LEFT}
                for lane in range(1, k - 1):
                    lane_kinds[lane] = {TurnKind.THROUGH}
                lane_kinds[k - 1] = {TurnKind.RIGHT}
        for kind in TurnKind:
            target = turn_target(direction, kind)
            out_count = model.roads[target].outgoing_lanes
            if out_count == 0:
                continue
            in_lanes = [lane for lane, kinds in sorted(lane_kinds.items()) if kind in kinds]
            if in_lanes:
                mappings[(vehicle_class, direction, target)] = _paired(
                    in_lanes, out_count, right_aligned=kind is TurnKind.RIGHT
                )
    return replace(model, mappings=mappings, _trajectories=model._trajectories)
