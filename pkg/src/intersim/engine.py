"""The simulation loop: one intersection, one 0.02 s clock.

Each tick runs in a fixed order — signal controller first (fed the stop
bar detections collected while vehicles moved last tick), then
reservation traffic for connected vehicles, then driving decisions and
integration front-to-back so no follower ever steps through its leader,
and finally the spawner, which releases scheduled arrivals as road space
permits.  Everything downstream of the seed is deterministic: two runs
with the same inputs produce byte-identical summaries.

Delay is measured per vehicle against an unobstructed reference: the
time the same vehicle would need from its spawn point through its
trajectory at the speed limits (turn-capped inside the box), subtracted
from its actual scheduled-to-exit span and clamped at zero.  Vehicles
still in the system when the post-demand drain window closes are
reported separately and do not contribute to mean delay.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import (
    DemandTable,
    IntersectionSpecDoc,
    SignalProgramDoc,
    parse_demand_table,
    parse_intersection_spec,
    parse_signal_program,
    validate_cross_references,
)
from .demand import SPAWN_REGION_MARGIN, SpawnQueue, compute_vlh, expand_schedule
from .errors import ConfigInvalid, SimError, VehicleNotCompleted
from .intersection import (
    IntersectionModel,
    TurnPolicy,
    apply_turn_policy,
    build_model,
    turn_target,
)
from .reservations import (
    CLEARANCE,
    REQUEST_BACKOFF,
    BlockedRegion,
    CompositeRegion,
    Grant,
    ReservationManager,
    ReservationRequest,
    TileGrid,
    hv_blocked_region,
    profile_speed,
)
from .signals import DEFAULT_ADAPTIVE_TABLES, MovementKey, SignalController, conflict_matrix
from .types import (
    DEFAULT_TICK,
    CARDINALS,
    Color,
    Direction,
    TurnKind,
    VehicleClass,
    code_covers,
)
from .vehicles import (
    A_MAX,
    B_MAX,
    MIN_GAP,
    TURN_APPROACH_DECEL,
    VEHICLE_LENGTH,
    LifePhase,
    VehicleState,
    accel_toward,
    can_stop_before,
    hold_speed,
    min_arrival_time,
    safe_speed,
    signal_requires_stop,
    step_kinematics,
    tracking_feasible,
    tracking_speed,
)

APPROACH_LENGTH = 150.0  # m of modeled road upstream of each stop line
DRAIN_CAP = 900.0  # s allowed after the last demand bucket before cutoff

#: how coarsely human arrival bounds are quantized when caching the
#: blocked region (coarser = fewer rebuilds, always rounding earlier)
_ARRIVAL_QUANTUM = 0.5

_OVERLAP_EPS = 0.05  # m kept between bumpers by the hard integration clamp

#: where an unreserved connected vehicle waits, short of the stop line, so
#: that it always keeps room to accelerate into a granted slot
_HOLD_STANDOFF = 6.0

#: once a vehicle can no longer stop this far short of the line it is
#: committed: its reservation is kept even if it runs a little late
_COMMIT_MARGIN = 0.5

#: committed vehicles may trail their reserved entry by at most this much
#: (in-box merges can run under profile speed, delaying a follower that is
#: already too close to hold, so the bound is looser than the early side)
_ENTRY_LATE_TOL = 1.0


def _no_early_entry_cap(speed: float, margin: float, span: float, dt: float) -> float:
    """Highest next-tick speed that keeps the stop line out of reach.

    A reserved vehicle may not cross before its slot opens, which is
    ``span`` seconds away.  The cap guarantees that this tick's travel plus
    a worst-case full-brake tail stays within ``margin`` metres, so the
    no-early-entry invariant survives integration exactly (full braking
    itself always satisfies it, hence the cap is always achievable).
    """
    s = span - dt
    room = margin - 0.5 * speed * dt
    if room <= 0.0:
        return 0.0
    if s <= 0.0:
        return 2.0 * room / dt
    linear = (room + 0.5 * B_MAX * s * s) / (s + 0.5 * dt)
    if linear >= B_MAX * s:  # still moving when the slot opens
        return linear
    b = B_MAX * dt
    return 0.5 * (-b + math.sqrt(b * b + 8.0 * B_MAX * room))


@dataclass
class RunParams:
    cav_ratio: float = 0.0
    cav_policy: TurnPolicy = TurnPolicy.CURRENT
    hv_policy: TurnPolicy = TurnPolicy.CURRENT
    actuated: bool = False
    adaptive: bool = False
    seed: int = 0
    dt: float = DEFAULT_TICK
    approach_length: float = APPROACH_LENGTH
    drain_cap: float = DRAIN_CAP
    check_invariants: bool = False
    vehicle_log: str | Path | None = None
    signal_trace: str | Path | None = None
    reservation_log: str | Path | None = None

    @property
    def control_label(self) -> str:
        if self.adaptive:
            return "adaptive"
        return "actuated" if self.actuated else "fixed"


@dataclass
class VehicleRecord:
    vid: int
    vehicle_class: VehicleClass
    direction: Direction
    turn: TurnKind
    in_lane: int
    out_lane: int
    scheduled_time: float
    spawn_time: float
    free_flow: float
    entry_time: float | None = None
    exit_time: float | None = None


def delay_of(record: VehicleRecord) -> float:
    """Seconds lost versus the unobstructed reference, never negative."""
    if record.exit_time is None:
        raise VehicleNotCompleted(f"vehicle {record.vid} has not exited")
    return max(record.exit_time - record.scheduled_time - record.free_flow, 0.0)


@dataclass
class RunSummary:
    seed: int
    cav_ratio: float
    cav_policy: str
    hv_policy: str
    control: str
    scheduled: int
    spawned: int
    completed: int
    still_in_system: int
    never_spawned: int
    mean_delay: float | None
    hv_mean_delay: float | None
    cav_mean_delay: float | None
    spillback: bool
    vlh_average: float
    vlh_peak: float
    vlh_low: float
    end_time: float
    records: list[VehicleRecord] = field(repr=False, default_factory=list)


_SUMMARY_COLUMNS = (
    "seed",
    "cav_ratio",
    "cav_policy",
    "hv_policy",
    "control",
    "mean_delay_s",
    "mean_delay_s_full",
    "hv_mean_delay_s_full",
    "cav_mean_delay_s_full",
    "spillback",
    "scheduled",
    "spawned",
    "completed",
    "still_in_system",
    "never_spawned",
    "vlh_average",
    "vlh_peak",
    "vlh_low",
    "end_time_s",
)


def _fmt_full(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def summary_row(summary: RunSummary) -> dict[str, str]:
    return {
        "seed": str(summary.seed),
        "cav_ratio": repr(float(summary.cav_ratio)),
        "cav_policy": summary.cav_policy,
        "hv_policy": summary.hv_policy,
        "control": summary.control,
        "mean_delay_s": "" if summary.mean_delay is None else f"{summary.mean_delay:.1f}",
        "mean_delay_s_full": _fmt_full(summary.mean_delay),
        "hv_mean_delay_s_full": _fmt_full(summary.hv_mean_delay),
        "cav_mean_delay_s_full": _fmt_full(summary.cav_mean_delay),
        "spillback": "*" if summary.spillback else "",
        "scheduled": str(summary.scheduled),
        "spawned": str(summary.spawned),
        "completed": str(summary.completed),
        "still_in_system": str(summary.still_in_system),
        "never_spawned": str(summary.never_spawned),
        "vlh_average": _fmt_full(summary.vlh_average),
        "vlh_peak": _fmt_full(summary.vlh_peak),
        "vlh_low": _fmt_full(summary.vlh_low),
        "end_time_s": _fmt_full(summary.end_time),
    }


def emit_summary(summary: RunSummary, path: str | Path) -> None:
    """Write the one-row summary CSV: a header row and a data row.

    Mean delay appears twice — rounded to 0.1 s for reading and at full
    precision for machines; the spillback column holds ``*`` or nothing.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_SUMMARY_COLUMNS)
        writer.writeheader()
        writer.writerow(summary_row(summary))


class Simulation:
    """A single seeded run over one intersection."""

    def __init__(
        self,
        spec_doc: IntersectionSpecDoc,
        signal_doc: SignalProgramDoc,
        table: DemandTable,
        params: RunParams | None = None,
    ) -> None:
        self.params = params or RunParams()
        p = self.params
        model = build_model(spec_doc)
        model = apply_turn_policy(model, p.hv_policy, VehicleClass.HUMAN)
        model = apply_turn_policy(model, p.cav_policy, VehicleClass.AUTO)
        self.model = model
        self.table = table
        self.dt = p.dt
        self.controller = SignalController(
            signal_doc,
            dt=p.dt,
            actuated=p.actuated or p.adaptive,
            adaptive=DEFAULT_ADAPTIVE_TABLES if p.adaptive else None,
        )
        self.grid = TileGrid.from_model(model)
        self.manager = ReservationManager(
            self.grid,
            {d: r.reservation_horizon for d, r in model.roads.items()},
            dt=p.dt,
        )
        events = expand_schedule(table, seed=p.seed, cav_ratio=p.cav_ratio)
        self.spawner = SpawnQueue(events, self._eligible_in_lanes)
        self.vehicles: dict[int, VehicleState] = {}
        self.records: dict[int, VehicleRecord] = {}
        self.approach: dict[tuple[Direction, int], deque[int]] = {
            (d, lane): deque()
            for d in CARDINALS
            for lane in range(model.roads[d].incoming_lanes)
        }
        self.inside: list[int] = []
        self._last_entered: dict[tuple[Direction, int], int] = {}
        self.tick_index = 0
        self.now = 0.0
        self._next_vid = 0
        self._det_pending: set[int] = set()
        self._det_key: dict[tuple[Direction, TurnKind], int | None] = {}
        for d in CARDINALS:
            for kind in TurnKind:
                self._det_key[(d, kind)] = self._covering_key(d, kind)
        self._region_cache: tuple | None = None
        self._horizon = max(r.reservation_horizon for r in model.roads.values())
        self._conflicts = conflict_matrix(list(self.controller.movements))
        # adaptive bookkeeping: detection speeds and counts per movement key
        self._cycle_speed = np.zeros(len(self.controller.movements))
        self._cycle_count = np.zeros(len(self.controller.movements), dtype=np.int64)
        self._cycle_open = False
        self._movement_lanes = self._count_movement_lanes()
        self._writers: dict[str, tuple] = {}
        self._open_logs()

    # -- construction helpers ------------------------------------------------

    def _eligible_in_lanes(
        self, vehicle_class: VehicleClass, direction: Direction, kind: TurnKind
    ) -> tuple[int, ...]:
        pairs = self.model.movements_for(vehicle_class, direction, kind)
        return tuple(sorted({p[0] for p in pairs}))

    def _covering_key(self, direction: Direction, kind: TurnKind) -> int | None:
        for i, (d, code) in enumerate(self.controller.movements):
            if d is direction and code_covers(code, kind):
                return i
        return None

    def _count_movement_lanes(self) -> dict[int, int]:
        lanes: dict[int, int] = {}
        for i, (d, code) in enumerate(self.controller.movements):
            served: set[int] = set()
            for kind in TurnKind:
                if not code_covers(code, kind):
                    continue
                for cls in VehicleClass:
                    served.update(p[0] for p in self.model.movements_for(cls, d, kind))
            lanes[i] = max(len(served), 1)
        return lanes

    def _open_logs(self) -> None:
        p = self.params
        for name, path, header in (
            (
                "vehicle",
                p.vehicle_log,
                (
                    "vid", "class", "road", "turn", "in_lane", "out_lane",
                    "scheduled_s", "spawn_s", "entry_s", "exit_s", "delay_s",
                ),
            ),
            ("signal", p.signal_trace, ("tick", "road", "movement", "color")),
            (
                "reservation",
                p.reservation_log,
                ("request_s", "vid", "road", "turn", "outcome", "reason", "entry_s"),
            ),
        ):
            if path is not None:
                fh = open(path, "w", newline="")
                writer = csv.writer(fh)
                writer.writerow(header)
                self._writers[name] = (fh, writer)

    def _log(self, name: str, row: tuple) -> None:
        entry = self._writers.get(name)
        if entry is not None:
            entry[1].writerow(row)

    # -- geometry helpers ------------------------------------------------------

    def _line_pos(self) -> float:
        return self.params.approach_length

    def _exit_pos(self, v: VehicleState) -> float:
        return self.params.approach_length + v.trajectory.length + v.length

    def _free_flow_time(self, v: VehicleState) -> float:
        limit = v.speed_limit
        run = self.params.approach_length - v.length
        cap = v.profile_speed
        if v.turn is TurnKind.THROUGH or limit <= cap:
            t_app = run / limit
        else:
            d_env = (limit * limit - cap * cap) / (2.0 * TURN_APPROACH_DECEL)
            if d_env <= run:
                t_app = (run - d_env) / limit + (limit - cap) / TURN_APPROACH_DECEL
            else:
                v_spawn = math.sqrt(cap * cap + 2.0 * TURN_APPROACH_DECEL * run)
                t_app = (v_spawn - cap) / TURN_APPROACH_DECEL
        return t_app + (v.trajectory.length + v.length) / cap

    # -- human arrival bounds and the blocked region ---------------------------

    def _arrival_offsets(self) -> dict[MovementKey, float]:
        """Soonest, per movement, a human could reach the stop line."""
        offsets: dict[MovementKey, float] = {}
        humans_possible = self.params.cav_ratio < 1.0 and (
            self.spawner.waiting_count > 0
        )
        line = self._line_pos()
        best: dict[int, float] = {}
        for (direction, lane), lane_q in self.approach.items():
            for vid in lane_q:
                v = self.vehicles[vid]
                if v.vehicle_class is not VehicleClass.HUMAN:
                    continue
                key = self._det_key[(direction, v.turn)]
                if key is None:
                    continue
                eta = max(line - v.pos, 0.0) / v.speed_limit
                if eta < best.get(key, math.inf):
                    best[key] = eta
        for i, (direction, code) in enumerate(self.controller.movements):
            bound = best.get(i)
            if bound is None and humans_possible:
                if any(
                    self.model.movements_for(VehicleClass.HUMAN, direction, kind)
                    for kind in TurnKind
                    if code_covers(code, kind)
                ):
                    bound = self._line_pos() / self.model.roads[direction].speed_limit
            if bound is not None:
                quantized = math.floor(bound / _ARRIVAL_QUANTUM) * _ARRIVAL_QUANTUM
                offsets[(direction, code)] = quantized
        return offsets

    def _hv_region(self) -> CompositeRegion:
        offsets = self._arrival_offsets()
        cache_key = (
            self.controller.state_version,
            tuple(sorted(offsets.items(), key=lambda kv: (kv[0][0].value, kv[0][1]))),
        )
        if self._region_cache is None or self._region_cache[0] != cache_key:
            region = hv_blocked_region(
                self.controller,
                self.model,
                self.manager.cache,
                self._horizon + CLEARANCE,
                arrival_offsets=offsets,
            )
            self._region_cache = (cache_key, region)
        overlay = BlockedRegion()
        for vid in self.inside:
            v = self.vehicles[vid]
            if v.vehicle_class is not VehicleClass.HUMAN:
                continue
            remaining = self._exit_pos(v) - v.pos
            hold = remaining / max(v.speed, 1.0) + CLEARANCE
            lo = int(self.now / self.dt)
            hi = int((self.now + hold) / self.dt)
            hull = self.manager.cache.hull(v.trajectory, profile_speed(v.trajectory, v.speed_limit))
            for tile in hull:
                overlay.add(tile, lo, hi)
        return CompositeRegion(self._region_cache[1], overlay.seal())

    # -- reservation traffic ---------------------------------------------------

    def _lane_leader(self, vid: int, v: VehicleState) -> VehicleState | None:
        lane_q = self.approach[(v.direction, v.in_lane)]
        prev = None
        for other in lane_q:
            if other == vid:
                return self.vehicles[prev] if prev is not None else None
            prev = other
        return None

    def _queue_entry_speed(self, dist: float) -> float:
        """Entry speed still reachable after waiting at the standoff point."""
        runway = min(dist, _HOLD_STANDOFF) - _COMMIT_MARGIN
        return max(1.0, math.sqrt(max(2.0 * A_MAX * runway, 0.0)))

    def _service_reservations(self) -> None:
        now = self.now
        region: CompositeRegion | None = None
        line = self._line_pos()
        for vid in sorted(
            vid
            for lane_q in self.approach.values()
            for vid in lane_q
            if self.vehicles[vid].vehicle_class is VehicleClass.AUTO
        ):
            v = self.vehicles[vid]
            dist = line - v.pos
            if v.grant_id is not None:
                slack = v.granted_entry - now
                off_plan = slack < -self.dt or not tracking_feasible(
                    dist, slack, v.speed_limit
                )
                if off_plan and can_stop_before(v.speed, dist - _COMMIT_MARGIN):
                    # late (usually blocked by a leader) but still able to
                    # hold short of the line: give the slot back and rebook
                    self.manager.release(v.grant_id, "cancelled")
                    self._log(
                        "reservation",
                        (f"{now:.2f}", vid, v.direction.name, v.turn.value, "cancelled", "", ""),
                    )
                    v.grant_id = None
                    v.next_request_time = now + REQUEST_BACKOFF
                continue
            if now < v.next_request_time:
                continue
            # the fastest the vehicle could be moving when it reaches the line
            v_fast = min(
                v.profile_speed,
                math.sqrt(v.speed * v.speed + 2.0 * A_MAX * max(dist, 0.0)),
            )
            entry_speed = max(v_fast, 1.0)
            soonest = now + max(
                min_arrival_time(dist, v.speed, v.speed_limit, entry_speed), self.dt
            )
            horizon = self.manager.horizons[v.direction]
            if soonest - now > horizon:
                # too far out to book anything; look again when closer
                v.next_request_time = now + max(soonest - now - horizon, self.dt)
                continue
            leader = self._lane_leader(vid, v)
            floor_t = 0.0
            if leader is not None and leader.grant_id is not None:
                # cannot enter before the vehicle ahead plus its body + gap
                floor_t = leader.granted_entry + (leader.length + MIN_GAP) / max(
                    leader.granted_speed, 1.0
                )
                entry_speed = min(entry_speed, max(leader.granted_speed, 1.0))
            if region is None:
                region = self._hv_region()
            not_before = max(
                soonest, floor_t, v.last_proposal + self.dt if v.last_proposal else 0.0
            )
            proposal = self.manager.earliest_feasible_entry(
                v.trajectory, entry_speed, v.direction, now, not_before, region
            )
            if proposal is not None and proposal > not_before + self.dt:
                # the box is busy around our natural arrival, so the vehicle
                # will have to wait on the approach; book the later slot at a
                # speed it can still reach from a standing start
                entry_speed = min(entry_speed, self._queue_entry_speed(dist))
                soonest_q = now + max(
                    min_arrival_time(dist, v.speed, v.speed_limit, entry_speed), self.dt
                )
                proposal = self.manager.earliest_feasible_entry(
                    v.trajectory,
                    entry_speed,
                    v.direction,
                    now,
                    max(not_before, soonest_q),
                    region,
                )
            if proposal is None:
                v.next_request_time = now + REQUEST_BACKOFF
                continue
            outcome = self.manager.request(
                ReservationRequest(vid, v.direction, v.trajectory, proposal, entry_speed),
                now,
                region,
            )
            if isinstance(outcome, Grant):
                v.grant_id = outcome.reservation_id
                v.granted_entry = outcome.entry_time
                v.granted_speed = outcome.entry_speed
                v.last_proposal = proposal
                self._log(
                    "reservation",
                    (
                        f"{now:.2f}", vid, v.direction.name, v.turn.value,
                        "granted", "", repr(outcome.entry_time),
                    ),
                )
            else:
                v.last_proposal = proposal
                v.next_request_time = now + outcome.retry_after
                self._log(
                    "reservation",
                    (
                        f"{now:.2f}", vid, v.direction.name, v.turn.value,
                        "rejected", outcome.reason.value, repr(proposal),
                    ),
                )

    # -- per-tick motion ---------------------------------------------------------

    def _target_speed(self, v: VehicleState, leader_gap: float | None, leader_speed: float) -> float:
        line = self._line_pos()
        dist = line - v.pos
        target = v.desired_speed(dist)
        if leader_gap is not None:
            target = min(target, safe_speed(leader_speed, leader_gap))
        if v.phase is LifePhase.INSIDE:
            if v.vehicle_class is VehicleClass.AUTO:
                target = min(target, max(v.granted_speed, 1.0))
            return target
        if v.vehicle_class is VehicleClass.HUMAN:
            color = self.controller.color_for_movement(v.direction, v.turn)
            if signal_requires_stop(color, v.speed, dist):
                target = min(target, hold_speed(dist))
        else:
            if v.grant_id is None:
                # wait short of the line, keeping room to launch into a slot
                target = min(target, hold_speed(dist - _HOLD_STANDOFF))
            else:
                slack = v.granted_entry - self.now
                target = min(
                    target,
                    tracking_speed(dist, slack, v.granted_speed, v.speed_limit),
                )
                tau = slack - 2.0 * self.dt
                if tau > 0.0:
                    # the slot is still ahead: never go faster than full
                    # braking can keep behind the line until it opens
                    margin = max(dist - 0.01, 0.0)
                    target = min(
                        target, _no_early_entry_cap(v.speed, margin, tau, self.dt)
                    )
        return target

    def _advance(self, vid: int, clamp_front: float | None, leader_gap: float | None, leader_speed: float) -> None:
        v = self.vehicles[vid]
        target = self._target_speed(v, leader_gap, leader_speed)
        accel = accel_toward(v.speed, target, self.dt)
        new_pos, new_speed = step_kinematics(v.pos, v.speed, accel, self.dt)
        if clamp_front is not None and new_pos > clamp_front:
            new_pos = max(clamp_front, v.pos)
            new_speed = min(new_speed, max((new_pos - v.pos) / self.dt, 0.0))
        v.pos, v.speed = new_pos, new_speed

    def _move_inside(self) -> list[int]:
        """Advance in-box vehicles, nearest exit first; returns exiters."""
        order = sorted(self.inside, key=lambda vid: (self._remaining(vid), vid))
        front_new: dict[tuple[Direction, int], tuple[float, float]] = {}
        exited: list[int] = []
        for vid in order:
            v = self.vehicles[vid]
            out = (v.to_direction, v.out_lane)
            ahead = front_new.get(out)
            clamp = None
            gap = None
            lead_speed = 0.0
            if ahead is not None:
                # the leader's plain remaining IS its rear's distance to gone
                lead_rear_rem, lead_speed = ahead
                gap = self._remaining(vid) - v.length - lead_rear_rem
                clamp = v.pos + max(gap - _OVERLAP_EPS, 0.0)
            self._advance(vid, clamp, gap, lead_speed)
            front_new[out] = (self._remaining(vid), v.speed)
            if v.pos >= self._exit_pos(v):
                exited.append(vid)
        return exited

    def _remaining(self, vid: int) -> float:
        v = self.vehicles[vid]
        return self._exit_pos(v) - v.pos

    def _move_approach(self) -> list[int]:
        """Advance approach lanes front-to-back; returns box entrants."""
        line = self._line_pos()
        entered: list[int] = []
        for (direction, lane), lane_q in self.approach.items():
            prev_rear: float | None = None
            prev_speed = 0.0
            for i, vid in enumerate(lane_q):
                v = self.vehicles[vid]
                if i == 0:
                    guide = self._last_entered.get((direction, lane))
                    if guide is not None and guide in self.vehicles:
                        g = self.vehicles[guide]
                        prev_rear = g.pos - g.length
                        prev_speed = g.speed
                gap = None if prev_rear is None else prev_rear - v.pos
                clamp = None if prev_rear is None else prev_rear - _OVERLAP_EPS
                old_pos = v.pos
                self._advance(vid, clamp, gap, prev_speed)
                prev_rear, prev_speed = v.pos - v.length, v.speed
                if old_pos < line <= v.pos:
                    entered.append(vid)
        return entered

    # -- events --------------------------------------------------------------------

    def _handle_entries(self, entered: list[int]) -> None:
        t_entry = self.now + self.dt
        for vid in entered:
            v = self.vehicles[vid]
            key = self._det_key[(v.direction, v.turn)]
            if key is not None:
                self._det_pending.add(key)
                self._cycle_speed[key] += v.speed
                self._cycle_count[key] += 1
            v.phase = LifePhase.INSIDE
            v.entry_time = t_entry
            self.records[vid].entry_time = t_entry
            lane_key = (v.direction, v.in_lane)
            self.approach[lane_key].popleft()
            self._last_entered[lane_key] = vid
            self.inside.append(vid)
            if self.params.check_invariants:
                if v.vehicle_class is VehicleClass.AUTO:
                    assert v.grant_id is not None, f"CAV {vid} entered without a grant"
                    assert t_entry - v.granted_entry >= -self.dt - 1e-9, (
                        f"CAV {vid} jumped its slot: {t_entry} vs {v.granted_entry}"
                    )
                    assert t_entry - v.granted_entry <= _ENTRY_LATE_TOL + 1e-9, (
                        f"CAV {vid} missed its slot: {t_entry} vs {v.granted_entry}"
                    )
                else:
                    color = self.controller.color_for_movement(v.direction, v.turn)
                    assert color is not Color.RED, (
                        f"HV {vid} entered on red at t={self.now:.2f}"
                    )

    def _handle_exits(self, exited: list[int]) -> None:
        t_exit = self.now + self.dt
        for vid in exited:
            v = self.vehicles.pop(vid)
            self.inside.remove(vid)
            record = self.records[vid]
            record.exit_time = t_exit
            if v.grant_id is not None:
                self.manager.release(v.grant_id, "completed")
                v.grant_id = None
            for lane_key, guide in list(self._last_entered.items()):
                if guide == vid:
                    del self._last_entered[lane_key]
            self._log(
                "vehicle",
                (
                    vid, v.vehicle_class.value, v.direction.name, v.turn.value,
                    v.in_lane, v.out_lane,
                    repr(record.scheduled_time), repr(record.spawn_time),
                    repr(record.entry_time), repr(record.exit_time),
                    repr(delay_of(record)),
                ),
            )

    # -- spawning ---------------------------------------------------------------

    def _region_clear(self, direction: Direction, lane: int) -> bool:
        lane_q = self.approach[(direction, lane)]
        if not lane_q:
            return True
        tail = self.vehicles[lane_q[-1]]
        return tail.pos - tail.length > VEHICLE_LENGTH + SPAWN_REGION_MARGIN

    def _spawn_released(self) -> None:
        released = self.spawner.step(
            self.now,
            queue_length=lambda d, lane: len(self.approach[(d, lane)]),
            region_clear=self._region_clear,
        )
        t_spawn = self.now + self.dt
        for event in released:
            direction = event.direction
            lane = event.assigned_lane
            assert lane is not None
            road = self.model.roads[direction]
            to_direction = turn_target(direction, event.action)
            out_lane = self.model.out_lane_for(
                event.vehicle_class, direction, to_direction, lane
            )
            traj = self.model.trajectory_geometry(direction, lane, to_direction, out_lane)
            lane_q = self.approach[(direction, lane)]
            speed = road.speed_limit
            if lane_q:
                tail = self.vehicles[lane_q[-1]]
                gap = tail.pos - tail.length - VEHICLE_LENGTH
                speed = min(speed, safe_speed(tail.speed, gap))
            vid = self._next_vid
            self._next_vid += 1
            state = VehicleState(
                vid=vid,
                vehicle_class=event.vehicle_class,
                direction=direction,
                to_direction=to_direction,
                turn=event.action,
                in_lane=lane,
                out_lane=out_lane,
                trajectory=traj,
                speed_limit=road.speed_limit,
                scheduled_time=event.scheduled_time,
                spawn_time=t_spawn,
                pos=VEHICLE_LENGTH,
                speed=speed,
            )
            self.vehicles[vid] = state
            lane_q.append(vid)
            self.records[vid] = VehicleRecord(
                vid=vid,
                vehicle_class=event.vehicle_class,
                direction=direction,
                turn=event.action,
                in_lane=lane,
                out_lane=out_lane,
                scheduled_time=event.scheduled_time,
                spawn_time=t_spawn,
                free_flow=self._free_flow_time(state),
            )

    # -- adaptive timing ----------------------------------------------------------

    def _close_cycle(self, crossed: int) -> None:
        if crossed != 0:
            return
        if self._cycle_open and self.controller.adaptive is not None:
            stats: dict[MovementKey, tuple[float, float]] = {}
            for i, key in enumerate(self.controller.movements):
                count = int(self._cycle_count[i])
                direction = key[0]
                speed = (
                    self._cycle_speed[i] / count
                    if count
                    else self.model.roads[direction].speed_limit
                )
                stats[key] = (speed, count / self._movement_lanes[i])
            self.controller.adaptive_update(stats)
        self._cycle_speed[:] = 0.0
        self._cycle_count[:] = 0
        self._cycle_open = True

    # -- invariant checks ---------------------------------------------------------

    def _check_invariants(self) -> None:
        colors = self.controller.colors()
        active = colors > int(Color.RED)
        if active.any():
            partners = self._conflicts @ active.astype(np.int64)
            assert not bool((active & (partners > 0)).any()), (
                f"conflicting movements simultaneously active at t={self.now:.2f}"
            )
        for (direction, lane), lane_q in self.approach.items():
            prev_rear = None
            for vid in lane_q:
                v = self.vehicles[vid]
                if prev_rear is not None:
                    assert v.pos <= prev_rear + 1e-6, (
                        f"overlap in {direction.name} lane {lane} at t={self.now:.2f}"
                    )
                prev_rear = v.pos - v.length
        by_out: dict[tuple[Direction, int], list[tuple[float, int]]] = {}
        for vid in self.inside:
            v = self.vehicles[vid]
            by_out.setdefault((v.to_direction, v.out_lane), []).append(
                (self._remaining(vid), vid)
            )
        for rems in by_out.values():
            rems.sort()
            for (a, va), (b, vb) in zip(rems, rems[1:]):
                x, y = self.vehicles[va], self.vehicles[vb]
                if x.trajectory is y.trajectory:
                    # same path: remaining-distance is the true axis, so the
                    # follower's front must clear the leader's rear
                    limit = VEHICLE_LENGTH - 0.1
                else:
                    # different paths converge only near the box edge; until
                    # both reach the exit zone their remainings alias
                    zone = VEHICLE_LENGTH + 2.0 * y.speed_limit * self.dt
                    if b > zone:
                        continue
                    limit = VEHICLE_LENGTH - 1.0
                assert b - a >= limit, (
                    f"merge overlap inside the box at t={self.now:.2f}: "
                    f"#{va} {x.direction.name}-{x.turn.name} rem={a:.2f} | "
                    f"#{vb} {y.direction.name}-{y.turn.name} rem={b:.2f}"
                )
        assert self.spawner.conservation_holds()

    # -- the loop -----------------------------------------------------------------

    def tick(self) -> None:
        detections = self._det_pending
        self._det_pending = set()
        crossed = self.controller.step(detections if detections else None)
        if self.controller.adaptive is not None and crossed >= 0:
            self._close_cycle(crossed)
        if "signal" in self._writers:
            for (direction, code), color in zip(
                self.controller.movements, self.controller.colors()
            ):
                self._log("signal", (self.tick_index, direction.name, code, int(color)))
        self._service_reservations()
        exited = self._move_inside()
        entered = self._move_approach()
        self._handle_entries(entered)
        self._handle_exits(exited)
        self._spawn_released()
        if self.params.check_invariants:
            self._check_invariants()
        self.tick_index += 1
        self.now = self.tick_index * self.dt

    def run(self) -> RunSummary:
        hard_stop = self.table.span + self.params.drain_cap
        while self.now < hard_stop:
            if not self.vehicles and self.spawner.waiting_count == 0:
                break
            self.tick()
        return self._summarize()

    # -- reporting ------------------------------------------------------------------

    def _summarize(self) -> RunSummary:
        p = self.params
        delays: list[float] = []
        by_class: dict[VehicleClass, list[float]] = {c: [] for c in VehicleClass}
        completed = 0
        for record in self.records.values():
            if record.exit_time is None:
                continue
            completed += 1
            d = delay_of(record)
            delays.append(d)
            by_class[record.vehicle_class].append(d)
        window = min(3600.0, self.table.span)
        vlh = compute_vlh(
            self.table,
            sum(r.incoming_lanes for r in self.model.roads.values()),
            window,
        )

        def _mean(values: list[float]) -> float | None:
            return sum(values) / len(values) if values else None

        summary = RunSummary(
            seed=p.seed,
            cav_ratio=p.cav_ratio,
            cav_policy=p.cav_policy.value,
            hv_policy=p.hv_policy.value,
            control=p.control_label,
            scheduled=self.spawner.scheduled_count,
            spawned=self.spawner.spawned_count,
            completed=completed,
            still_in_system=len(self.vehicles),
            never_spawned=self.spawner.waiting_count + len(self.spawner.rejected),
            mean_delay=_mean(delays),
            hv_mean_delay=_mean(by_class[VehicleClass.HUMAN]),
            cav_mean_delay=_mean(by_class[VehicleClass.AUTO]),
            spillback=self.spawner.spillback_occurred,
            vlh_average=vlh[0],
            vlh_peak=vlh[1],
            vlh_low=vlh[2],
            end_time=self.now,
            records=list(self.records.values()),
        )
        for vid, record in self.records.items():
            if record.exit_time is None and "vehicle" in self._writers:
                self._log(
                    "vehicle",
                    (
                        vid, record.vehicle_class.value, record.direction.name,
                        record.turn.value, record.in_lane, record.out_lane,
                        repr(record.scheduled_time), repr(record.spawn_time),
                        repr(record.entry_time) if record.entry_time else "",
                        "", "",
                    ),
                )
        for fh, _ in self._writers.values():
            fh.close()
        self._writers.clear()
        return summary


# ---------------------------------------------------------------------------
# file-level entry points


def load_documents(
    intersection: str | Path, signals: str | Path, demand: str | Path
) -> tuple[IntersectionSpecDoc, SignalProgramDoc, DemandTable]:
    """Parse and cross-validate the three input files; errors are fatal."""
    spec_doc = parse_intersection_spec(Path(intersection).read_text())
    signal_doc = parse_signal_program(Path(signals).read_text())
    table = parse_demand_table(Path(demand).read_text())
    report = validate_cross_references(spec_doc, signal_doc, table)
    if not report.ok:
        raise ConfigInvalid(report)
    return spec_doc, signal_doc, table


def run_simulation(
    intersection: str | Path,
    signals: str | Path,
    demand: str | Path,
    params: RunParams | None = None,
) -> RunSummary:
    spec_doc, signal_doc, table = load_documents(intersection, signals, demand)
    return Simulation(spec_doc, signal_doc, table, params).run()


# -- sweeps -----------------------------------------------------------------------


def _expand_variations(spec: dict) -> list[dict]:
    if "variations" in spec:
        return list(spec["variations"])
    variations = []
    for ratio in spec.get("cav_ratios", [0.0]):
        for cav_policy, hv_policy in spec.get("policies", [["c", "c"]]):
            for control in spec.get("control", ["fixed"]):
                variations.append(
                    {
                        "cav_ratio": ratio,
                        "cav_policy": cav_policy,
                        "hv_policy": hv_policy,
                        "actuated": control in ("actuated", "adaptive"),
                        "adaptive": control == "adaptive",
                    }
                )
    return variations


def _params_from_variation(variation: dict, seed: int) -> RunParams:
    return RunParams(
        cav_ratio=float(variation.get("cav_ratio", 0.0)),
        cav_policy=TurnPolicy.from_code(variation.get("cav_policy", "c")),
        hv_policy=TurnPolicy.from_code(variation.get("hv_policy", "c")),
        actuated=bool(variation.get("actuated", False)),
        adaptive=bool(variation.get("adaptive", False)),
        seed=seed,
    )


def run_sweep(spec_path: str | Path, out_dir: str | Path) -> Path:
    """Run every (variation, seed) in a sweep file; never stops early.

    Writes ``runs.csv`` (one row per run, with an ``error`` column that
    is empty on success) and ``aggregate.csv`` (per-variation mean and
    sample standard deviation of mean delay) under ``out_dir``; returns
    the directory.
    """
    spec_path = Path(spec_path)
    spec = json.loads(spec_path.read_text())
    base = spec_path.parent
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in spec.get("seeds", [0])]
    variations = _expand_variations(spec)
    files = {
        kind: (base / spec[kind] if not Path(spec[kind]).is_absolute() else Path(spec[kind]))
        for kind in ("intersection", "signals", "demand")
    }
    docs = load_documents(files["intersection"], files["signals"], files["demand"])

    run_rows: list[dict[str, str]] = []
    aggregate_rows: list[dict[str, str]] = []
    for index, variation in enumerate(variations):
        delays: list[float] = []
        errors = 0
        spill_any = False
        for seed in seeds:
            params = _params_from_variation(variation, seed)
            try:
                summary = Simulation(*docs, params).run()
            except (SimError, AssertionError) as exc:
                errors += 1
                run_rows.append(
                    {
                        "variation": str(index),
                        **{c: "" for c in _SUMMARY_COLUMNS},
                        "seed": str(seed),
                        "error": f"{type(exc).__name__}: {exc}",
                    }
                )
                continue
            row = summary_row(summary)
            row["variation"] = str(index)
            row["error"] = ""
            run_rows.append(row)
            spill_any = spill_any or summary.spillback
            if summary.mean_delay is not None:
                delays.append(summary.mean_delay)
        mean = sum(delays) / len(delays) if delays else None
        if len(delays) > 1:
            stddev = math.sqrt(
                sum((d - mean) ** 2 for d in delays) / (len(delays) - 1)
            )
        else:
            stddev = 0.0 if delays else None
        aggregate_rows.append(
            {
                "variation": str(index),
                **{k: repr(v) if isinstance(v, float) else str(v) for k, v in variation.items()},
                "runs": str(len(seeds)),
                "errors": str(errors),
                "mean_delay_s": "" if mean is None else f"{mean:.1f}",
                "mean_delay_s_full": _fmt_full(mean),
                "delay_stddev_s": _fmt_full(stddev),
                "spillback": "*" if spill_any else "",
            }
        )

    with open(out / "runs.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("variation", *_SUMMARY_COLUMNS, "error"))
        writer.writeheader()
        writer.writerows(run_rows)
    agg_fields = list(aggregate_rows[0].keys()) if aggregate_rows else ["variation"]
    with open(out / "aggregate.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=agg_fields)
        writer.writeheader()
        writer.writerows(aggregate_rows)
    return out
