"""Demand expansion and vehicle spawning.

A parsed arrival table says *how many* vehicles of each (bucket, road,
action) cell to create; this module turns those counts into a concrete,
seeded schedule and then feeds vehicles into the simulation as road space
permits.

Reproducibility contract: for a fixed seed, the drawn arrival times and
compound-action splits are identical regardless of ``cav_ratio`` — the
ratio only thresholds an independent per-event uniform draw, so raising
it flips individual vehicles from human to autonomous without moving
anyone's arrival.  Paired comparisons across ratios therefore see the
same traffic, differing only in who is connected.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .config import DemandTable
from .errors import NoLaneForAction, WindowExceedsSpan
from .types import Direction, TurnKind, VehicleClass

_KIND_BY_LETTER = {
    "L": TurnKind.LEFT,
    "T": TurnKind.THROUGH,
    "R": TurnKind.RIGHT,
}

#: extra clear road, beyond one vehicle length, required to release a spawn
SPAWN_REGION_MARGIN = 1.0

#: how long a due vehicle may wait for road space before the delay is
#: called a spillback rather than ordinary entry headway
SPILLBACK_GRACE = 2.0


@dataclass
class SpawnEvent:
    """One scheduled vehicle arrival."""

    event_id: int
    scheduled_time: float
    direction: Direction
    action: TurnKind
    vehicle_class: VehicleClass
    assigned_lane: int | None = None


def expand_schedule(
    table: DemandTable, *, seed: int, cav_ratio: float
) -> list[SpawnEvent]:
    """Draw a concrete arrival schedule from bucketed counts.

    Every cell's vehicles get arrival times uniform within their bucket;
    compound actions ("TR") split uniformly among their letters.  Events
    come back sorted by time with (road order, column order, draw index)
    as the tie-break, numbered in that final order.
    """
    if not 0.0 <= cav_ratio <= 1.0:
        raise ValueError(f"cav_ratio must be within [0, 1], got {cav_ratio}")
    rng = np.random.default_rng(seed)
    drawn: list[tuple[float, int, int, int, Direction, TurnKind, VehicleClass]] = []
    for row_idx, row in enumerate(table.counts):
        bucket_start = row_idx * table.bucket_length
        for road_idx, direction in enumerate(table.road_order):
            for col_idx, letters in enumerate(table.actions[road_idx]):
                n = row[road_idx][col_idx]
                if n == 0:
                    continue
                times = bucket_start + rng.random(n) * table.bucket_length
                if len(letters) > 1:
                    picks = rng.integers(0, len(letters), n)
                else:
                    picks = np.zeros(n, dtype=np.int64)
                classes = rng.random(n) < cav_ratio
                for k in range(n):
                    drawn.append(
                        (
                            float(times[k]),
                            road_idx,
                            col_idx,
                            k,
                            direction,
                            _KIND_BY_LETTER[letters[picks[k]]],
                            VehicleClass.AUTO if classes[k] else VehicleClass.HUMAN,
                        )
                    )
    drawn.sort(key=lambda item: item[:4])
    return [
        SpawnEvent(i, t, direction, kind, cls)
        for i, (t, _, _, _, direction, kind, cls) in enumerate(drawn)
    ]


def resolve_spawn_lane(
    eligible: Iterable[int], queue_length: Callable[[int], int]
) -> int:
    """Shortest entry queue among eligible lanes, leftmost on ties."""
    best = min(((queue_length(lane), lane) for lane in eligible), default=None)
    if best is None:
        raise NoLaneForAction("no lane services this movement")
    return best[1]


class SpawnQueue:
    """Feeds scheduled events onto the road as space allows.

    Events become *due* when the clock passes their arrival; a due event
    is assigned a lane once (shortest queue at that moment, sticky
    thereafter) and then waits in per-lane FIFO order until the first
    ``VEHICLE_LENGTH + SPAWN_REGION_MARGIN`` meters of its lane are clear.
    A due event left waiting longer than ``SPILLBACK_GRACE`` latches the
    spillback flag — the condition the summary's asterisk reports.  The
    grace period keeps ordinary entry headway (a moving predecessor still
    clearing the region) from counting as a backed-up queue.
    """

    def __init__(
        self,
        events: Iterable[SpawnEvent],
        eligible_lanes: Callable[[VehicleClass, Direction, TurnKind], tuple[int, ...]],
    ) -> None:
        self._upcoming = deque(sorted(events, key=lambda e: (e.scheduled_time, e.event_id)))
        self._eligible = eligible_lanes
        self._waiting: dict[tuple[Direction, int], deque[SpawnEvent]] = {}
        self.scheduled_count = len(self._upcoming)
        self.spawned_count = 0
        self.rejected: list[SpawnEvent] = []
        self.spillback_occurred = False

    @property
    def waiting_count(self) -> int:
        return sum(len(q) for q in self._waiting.values()) + len(self._upcoming)

    def queued_in(self, direction: Direction, lane: int) -> int:
        q = self._waiting.get((direction, lane))
        return len(q) if q else 0

    def step(
        self,
        now: float,
        *,
        queue_length: Callable[[Direction, int], int],
        region_clear: Callable[[Direction, int], bool],
    ) -> list[SpawnEvent]:
        """Admit due events and release what fits; returns events to spawn.

        ``queue_length`` should count everything already converging on a
        lane (on-road tail plus waiting spawns); ``region_clear`` says
        whether a lane's spawn region is free right now.
        """
        while self._upcoming and self._upcoming[0].scheduled_time <= now:
            event = self._upcoming.popleft()
            lanes = self._eligible(event.vehicle_class, event.direction, event.action)
            if not lanes:
                self.rejected.append(event)
                continue
            lane = resolve_spawn_lane(
                lanes,
                lambda ln: queue_length(event.direction, ln) + self.queued_in(event.direction, ln),
            )
            event.assigned_lane = lane
            self._waiting.setdefault((event.direction, lane), deque()).append(event)

        released: list[SpawnEvent] = []
        for (direction, lane), fifo in self._waiting.items():
            if fifo and region_clear(direction, lane):
                released.append(fifo.popleft())
            if fifo and now - fifo[0].scheduled_time > SPILLBACK_GRACE:
                self.spillback_occurred = True
        self.spawned_count += len(released)
        return released

    def conservation_holds(self) -> bool:
        """spawned + still waiting + rejected accounts for every event."""
        return (
            self.spawned_count + self.waiting_count + len(self.rejected)
            == self.scheduled_count
        )


def compute_vlh(
    table: DemandTable, incoming_lane_total: int, window: float = 3600.0
) -> tuple[float, float, float]:
    """Average, peak, and low vehicles-per-hour-per-lane over a demand table.

    Peak and low scan every ``window``-long stretch that starts on a
    bucket boundary; the average covers the whole span.
    """
    span = table.span
    if window > span:
        raise WindowExceedsSpan(f"window {window} s exceeds table span {span} s")
    if incoming_lane_total <= 0:
        raise ValueError("incoming_lane_total must be positive")
    per_bucket = [table.bucket_total(i) for i in range(table.row_count)]
    hours = span / 3600.0
    average = table.total() / incoming_lane_total / hours
    k = max(1, int(window / table.bucket_length + 1e-9))
    window_hours = k * table.bucket_length / 3600.0
    rates = [
        sum(per_bucket[i : i + k]) / incoming_lane_total / window_hours
        for i in range(len(per_bucket) - k + 1)
    ]
    return average, max(rates), min(rates)
