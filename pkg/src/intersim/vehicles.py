"""Vehicle kinematics and per-class driver behavior.

All vehicles share one longitudinal model: positions advance along a 1-D
lane-plus-path axis with trapezoidal integration, acceleration bounded by
``A_MAX``/``B_MAX``, and a Krauss-style safe-speed rule for car following
(time headway ``HEADWAY``, standstill gap ``MIN_GAP``).  What differs
between classes is how the entry decision at the stop line is made:

* human-driven vehicles treat the stop line as a wall unless their
  movement shows Green, with the usual yellow-onset dilemma test;
* connected autonomous vehicles ignore indications entirely and regulate
  speed to hit the stop line at the entry time and speed of an approved
  reservation, holding back like red when they have none.

These rules are pure functions so they can be exercised directly in
tests; the engine owns the surrounding state bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .intersection import Trajectory
from .types import Color, Direction, TurnKind, VehicleClass

VEHICLE_LENGTH = 4.5
VEHICLE_WIDTH = 1.8
A_MAX = 3.0  # m/s^2, acceleration
B_MAX = 4.0  # m/s^2, comfortable deceleration
MIN_GAP = 2.0  # m, standstill bumper-to-bumper gap
HEADWAY = 1.0  # s, desired time headway while following
TURN_SPEED_CAP = 9.0  # m/s, speed ceiling on turning paths inside the box
TURN_APPROACH_DECEL = 2.0  # m/s^2, gentle slowdown toward the cap


class LifePhase(Enum):
    APPROACH = "approach"
    INSIDE = "inside"
    DONE = "done"


# ---------------------------------------------------------------------------
# longitudinal primitives


def step_kinematics(pos: float, speed: float, accel: float, dt: float) -> tuple[float, float]:
    """Advance one tick with trapezoidal integration; never reverses.

    A vehicle that would cross zero speed mid-tick stops exactly where the
    braking profile reaches zero instead of backing up.
    """
    new_speed = speed + accel * dt
    if new_speed < 0.0:
        # time at which the speed profile hits zero
        t_stop = speed / -accel if accel < 0.0 else 0.0
        return pos + 0.5 * speed * t_stop, 0.0
    return pos + 0.5 * (speed + new_speed) * dt, new_speed


def stopping_distance(speed: float, decel: float = B_MAX) -> float:
    """Distance covered braking to rest at a constant deceleration."""
    return speed * speed / (2.0 * decel)


def can_stop_before(speed: float, distance: float, decel: float = B_MAX) -> bool:
    """True when a braking profile at ``decel`` rests within ``distance``."""
    return stopping_distance(speed, decel) <= distance


def safe_speed(
    leader_speed: float, gap: float, tau: float = HEADWAY, decel: float = B_MAX
) -> float:
    """Krauss safe speed toward a leader ``gap`` meters ahead.

    Chosen so the follower can always brake to the leader's speed without
    eating into ``MIN_GAP``; at equilibrium the bumper gap settles at
    ``leader_speed * tau + MIN_GAP``.
    """
    usable = max(gap - MIN_GAP, 0.0)
    bt = decel * tau
    return max(-bt + math.sqrt(bt * bt + leader_speed * leader_speed + 2.0 * decel * usable), 0.0)


def hold_speed(distance: float, tau: float = HEADWAY, decel: float = B_MAX) -> float:
    """Speed that still rests ``MIN_GAP``-free exactly at a stop point
    ``distance`` meters ahead (a stationary virtual leader past it)."""
    return safe_speed(0.0, distance + MIN_GAP, tau, decel)


def turn_approach_speed(distance_to_line: float, cap: float = TURN_SPEED_CAP) -> float:
    """Envelope that glides an approaching turner down to ``cap`` at the line."""
    d = max(distance_to_line, 0.0)
    return math.sqrt(cap * cap + 2.0 * TURN_APPROACH_DECEL * d)


def accel_toward(speed: float, target: float, dt: float) -> float:
    """Acceleration that tracks ``target`` within the comfort envelope."""
    return min(max((target - speed) / dt, -B_MAX), A_MAX)


def min_arrival_time(
    distance: float, speed: float, v_max: float, v_end: float
) -> float:
    """Quickest time to cover ``distance`` ending at ``v_end``.

    Assumes the accelerate-(cruise-)decelerate profile within
    ``A_MAX``/``B_MAX`` and a ``v_max`` ceiling; when even full braking
    cannot get down to ``v_end`` in time, returns the braking-limited
    arrival instead of failing, which keeps the estimate usable as a
    lower bound for reservation proposals.
    """
    if distance <= 0.0:
        return 0.0
    v_end = min(v_end, v_max)
    # distance consumed slowing from the current speed to the target
    d_brake = max(speed * speed - v_end * v_end, 0.0) / (2.0 * B_MAX)
    if d_brake >= distance:
        disc = max(speed * speed - 2.0 * B_MAX * distance, v_end * v_end)
        return (speed - math.sqrt(disc)) / B_MAX
    # peak of the accelerate-then-brake profile over the full distance
    vp_sq = (
        2.0 * A_MAX * B_MAX * distance + B_MAX * speed * speed + A_MAX * v_end * v_end
    ) / (A_MAX + B_MAX)
    vp = math.sqrt(vp_sq)
    if vp <= v_max:
        return max(vp - speed, 0.0) / A_MAX + (vp - v_end) / B_MAX
    d_acc = max(v_max * v_max - speed * speed, 0.0) / (2.0 * A_MAX)
    d_dec = (v_max * v_max - v_end * v_end) / (2.0 * B_MAX)
    t_cruise = (distance - d_acc - d_dec) / v_max
    return max(v_max - speed, 0.0) / A_MAX + t_cruise + (v_max - v_end) / B_MAX


# ---------------------------------------------------------------------------
# entry decisions


def signal_requires_stop(color: Color, speed: float, distance_to_line: float) -> bool:
    """Human entry rule at one tick.

    Green never stops, red always does, and yellow stops exactly when a
    comfortable braking profile still rests before the line — otherwise
    the vehicle is committed and proceeds.
    """
    if color is Color.GREEN:
        return False
    if color is Color.RED:
        return True
    return can_stop_before(speed, max(distance_to_line, 0.0))


def tracking_speed(
    distance_to_line: float, time_to_entry: float, entry_speed: float, speed_limit: float
) -> float:
    """Speed command that meets a reservation: arrive at the stop line when
    ``time_to_entry`` elapses, moving at ``entry_speed``.

    The constant-acceleration rendezvous requires a current speed of
    ``2 d / t - v_e``; commanding that each tick converges quadratically on
    the target as the slack shrinks.
    """
    if time_to_entry <= 0.0:
        return entry_speed
    cmd = 2.0 * distance_to_line / time_to_entry - entry_speed
    return min(max(cmd, 0.0), speed_limit)


def tracking_feasible(
    distance_to_line: float, time_to_entry: float, speed_limit: float
) -> bool:
    """Whether a reservation's entry time is still reachable at all."""
    if time_to_entry <= 0.0:
        return distance_to_line <= 0.5
    return distance_to_line / time_to_entry <= speed_limit * 1.001


@dataclass
class VehicleState:
    """Mutable per-vehicle record carried by the engine.

    ``pos`` is the front bumper's arc length along the composite axis:
    0 at the spawn boundary, ``approach_length`` at the stop line, then
    continuing through the trajectory; the vehicle is gone once its rear
    clears the trajectory's end.
    """

    vid: int
    vehicle_class: VehicleClass
    direction: Direction
    to_direction: Direction
    turn: TurnKind
    in_lane: int
    out_lane: int
    trajectory: Trajectory
    speed_limit: float
    scheduled_time: float
    spawn_time: float
    pos: float
    speed: float
    phase: LifePhase = LifePhase.APPROACH
    entry_time: float | None = None
    exit_time: float | None = None
    # reservation bookkeeping (CAVs only)
    grant_id: int | None = None
    granted_entry: float = 0.0
    granted_speed: float = 0.0
    next_request_time: float = 0.0
    last_proposal: float = 0.0
    length: float = VEHICLE_LENGTH

    @property
    def rear(self) -> float:
        return self.pos - self.length

    @property
    def profile_speed(self) -> float:
        """Cruise speed on the in-box portion of the path."""
        if self.turn is TurnKind.THROUGH:
            return self.speed_limit
        return min(self.speed_limit, TURN_SPEED_CAP)

    def desired_speed(self, distance_to_line: float) -> float:
        """Free-flow target at the current position."""
        if self.phase is LifePhase.INSIDE:
            return self.profile_speed
        if self.turn is TurnKind.THROUGH:
            return self.speed_limit
        return min(self.speed_limit, turn_approach_speed(distance_to_line))
