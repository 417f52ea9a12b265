"""Ring-and-barrier signal controller.

A program is a set of rings, each a cyclic sequence of green/yellow/red phase
entries and barrier references.  Rings run concurrently and independently
except at barriers: a ring reaching a barrier serves the barrier's yellow and
red windows (standing in for the preceding phase's clearance), then parks
until every ring has parked, and all rings cross together on the same tick.

Greens run in one of three modes:

* fixed — every green holds for exactly its max time; boundary overshoot is
  carried into the next entry so cycle lengths never drift;
* actuated — a green ends at the first tick where its elapsed time has
  reached the min AND no detection has occurred for the gap time (the onset
  counts as a virtual detection), or when it reaches the max;
* adaptive — actuated, with gap and max times re-read from lookup tables
  between phases: gap from the approach speed, max green from the measured
  volume per lane per cycle.

The per-tick state machine itself lives in :mod:`intersim.kernels`; this
module packs parsed programs into the kernel's array encoding, exposes
indications, projects feasible green windows for the reservation layer, and
defines which movements conflict.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .config import BarrierRef, GreenSpec, RedSpec, SignalProgramDoc, YellowSpec
from .errors import BarrierMismatch, EmptyRing, SignalProgramError
from .types import DEFAULT_TICK, Color, Direction, TurnKind

MovementKey = tuple[Direction, str]

_CODE_KINDS: dict[str, tuple[TurnKind, ...]] = {
    "c": (TurnKind.LEFT,),
    "t": (TurnKind.THROUGH, TurnKind.RIGHT),
    "ct": (TurnKind.LEFT, TurnKind.THROUGH, TurnKind.RIGHT),
}

#: Allowed-gap lookup, seconds of gap per approach speed (m/s).  Faster
#: approaches get shorter gaps: a queue discharging at speed needs less
#: slack between detections before the green has served it.
DEFAULT_GAP_BY_SPEED: tuple[tuple[float, float], ...] = (
    (11.2, 3.0),
    (13.4, 2.5),
    (15.6, 2.2),
    (17.9, 2.0),
    (20.1, 1.8),
    (22.4, 1.6),
    (24.6, 1.5),
)

#: Max-green lookup, seconds per measured volume (vehicles per lane per
#: cycle).  Heavier approaches earn longer ceilings.
DEFAULT_MAX_GREEN_BY_VOLUME: tuple[tuple[float, float], ...] = (
    (2.0, 20.0),
    (3.0, 25.0),
    (4.0, 30.0),
    (5.0, 35.0),
    (6.0, 40.0),
    (8.0, 50.0),
    (10.0, 60.0),
)


def _nearest(rows: tuple[tuple[float, float], ...], x: float) -> float:
    """Value of the row whose key is closest to ``x`` (ties go to the lower key)."""
    return min(rows, key=lambda kv: (abs(kv[0] - x), kv[0]))[1]


@dataclass(frozen=True)
class AdaptiveTables:
    """Lookup tables driving the adaptive controller mode."""

    gap_by_speed: tuple[tuple[float, float], ...] = DEFAULT_GAP_BY_SPEED
    max_green_by_volume: tuple[tuple[float, float], ...] = DEFAULT_MAX_GREEN_BY_VOLUME

    def __post_init__(self) -> None:
        for name, rows in (
            ("gap_by_speed", self.gap_by_speed),
            ("max_green_by_volume", self.max_green_by_volume),
        ):
            if not rows:
                raise ValueError(f"{name} table is empty")
            keys = [k for k, _ in rows]
            if any(b <= a for a, b in zip(keys, keys[1:])):
                raise ValueError(f"{name} keys must be strictly increasing")
        gaps = [v for _, v in self.gap_by_speed]
        if any(b > a for a, b in zip(gaps, gaps[1:])):
            raise ValueError("gap values must not increase with speed")
        maxes = [v for _, v in self.max_green_by_volume]
        if any(b < a for a, b in zip(maxes, maxes[1:])):
            raise ValueError("max green values must not decrease with volume")

    def gap_for(self, approach_speed: float) -> float:
        return _nearest(self.gap_by_speed, approach_speed)

    def max_green_for(self, volume_per_lane_per_cycle: float) -> float:
        return _nearest(self.max_green_by_volume, volume_per_lane_per_cycle)

    @property
    def smallest_gap(self) -> float:
        return min(v for _, v in self.gap_by_speed)

    @property
    def largest_max_green(self) -> float:
        return max(v for _, v in self.max_green_by_volume)


DEFAULT_ADAPTIVE_TABLES = AdaptiveTables()


# ---------------------------------------------------------------------------
# conflicts
# ---------------------------------------------------------------------------

def turns_conflict(d1: Direction, k1: TurnKind, d2: Direction, k2: TurnKind) -> bool:
    """Whether two turning movements may not hold right-of-way together.

    Movements leaving the same approach never conflict (they fan out over
    distinct outgoing roads).  Opposing approaches conflict only when a left
    crosses the oncoming through; lefts pass nose-to-nose, and rights hug
    their own curb.  Perpendicular approaches always conflict.
    """
    if d1 is d2:
        return False
    if d1 is d2.opposite:
        return (k1 is TurnKind.LEFT and k2 is TurnKind.THROUGH) or (
            k1 is TurnKind.THROUGH and k2 is TurnKind.LEFT
        )
    return True


def movement_codes_conflict(d1: Direction, code1: str, d2: Direction, code2: str) -> bool:
    """Conflict test lifted from turn kinds to signal movement codes."""
    return any(
        turns_conflict(d1, k1, d2, k2)
        for k1 in _CODE_KINDS[code1]
        for k2 in _CODE_KINDS[code2]
    )


def conflict_matrix(keys: list[MovementKey] | tuple[MovementKey, ...]) -> np.ndarray:
    """Symmetric boolean matrix over the program's movement keys."""
    n = len(keys)
    matrix = np.zeros((n, n), dtype=bool)
    for i, (d1, c1) in enumerate(keys):
        for j, (d2, c2) in enumerate(keys):
            if j > i:
                continue
            hit = movement_codes_conflict(d1, c1, d2, c2)
            matrix[i, j] = hit
            matrix[j, i] = hit
    return matrix


def first_conflicting_tick(colors: np.ndarray, matrix: np.ndarray) -> int:
    """First row of a (ticks, keys) color log where two conflicting movements
    both hold right-of-way (green or yellow); -1 if none."""
    active = colors > int(Color.RED)
    partners = active.astype(np.int32) @ matrix.astype(np.int32)
    bad = (active & (partners > 0)).any(axis=1)
    idx = int(np.argmax(bad))
    return idx if bad[idx] else -1


# ---------------------------------------------------------------------------
# program packing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Entry:
    """Python-side mirror of one packed ring entry (used by the projection)."""

    kind: int  # kernels.ENTRY_*
    key: int  # movement slot, -1 for none
    gap: float
    min_green: float
    max_green: float
    dur0: float  # yellow/red duration; barrier yellow window
    dur1: float  # barrier red window
    yellow_after: float  # clearance shown after a green entry
    group: int  # barrier group ordinal, -1 for non-barriers


class SignalController:
    """Executable form of a parsed signal program.

    ``step`` advances one tick; ``run_batch`` advances many ticks in a single
    kernel call (used by long safety scans and benchmarks).  ``state_version``
    increments whenever the observable phase state — ring cursors or pending
    adaptive parameters — changes, so downstream caches can key off it;
    between versions the remaining-green projection only shrinks, so a stale
    consumer errs on the conservative side.
    """

    def __init__(
        self,
        doc: SignalProgramDoc,
        *,
        dt: float = DEFAULT_TICK,
        actuated: bool = False,
        adaptive: AdaptiveTables | None = None,
    ) -> None:
        self.doc = doc
        self.dt = float(dt)
        self.adaptive = adaptive
        self.actuated = bool(actuated) or adaptive is not None
        self.movements: tuple[MovementKey, ...] = tuple(doc.movement_keys)
        self._key_index: dict[MovementKey, int] = {
            key: i for i, key in enumerate(self.movements)
        }
        self._pack(doc)

        n_rings = len(doc.rings)
        self._cursor = np.zeros(n_rings, dtype=np.int64)
        self._sub = np.zeros(n_rings, dtype=np.int64)
        self._elapsed = np.zeros(n_rings, dtype=np.float64)
        self._gap_timer = np.zeros(n_rings, dtype=np.float64)
        self._active_gap = self._pend_gap[:, 0].copy()
        self._active_max = self._pend_max[:, 0].copy()

        self._colors = np.zeros(len(self.movements), dtype=np.int8)
        kernels.render_colors(self._etype, self._ekey, self._cursor, self._sub, self._colors)
        self._det_row = np.zeros((1, len(self.movements)), dtype=np.bool_)
        self._col_row = np.zeros((1, len(self.movements)), dtype=np.int8)
        self._cross_row = np.zeros(1, dtype=np.int64)

        self.ticks = 0
        self.state_version = 0
        self.crossings: list[tuple[int, int]] = []  # (tick, barrier group)

    # -- construction ------------------------------------------------------

    def _pack(self, doc: SignalProgramDoc) -> None:
        if not doc.rings:
            raise EmptyRing("signal program has no rings")
        for r, ring in enumerate(doc.rings):
            if not ring:
                raise EmptyRing(f"ring {r + 1} has no entries")

        barrier_seqs = [
            tuple(e.ref_id for e in ring if isinstance(e, BarrierRef)) for ring in doc.rings
        ]
        if len(set(barrier_seqs)) > 1:
            raise BarrierMismatch(
                f"rings disagree on barrier sequence: {sorted(set(barrier_seqs))}"
            )

        n_rings = len(doc.rings)
        width = max(len(ring) for ring in doc.rings)
        self._etype = np.full((n_rings, width), -1, dtype=np.int64)
        self._ekey = np.full((n_rings, width), -1, dtype=np.int64)
        self._bgroup = np.full((n_rings, width), -1, dtype=np.int64)
        self._p0 = np.zeros((n_rings, width), dtype=np.float64)
        self._p1 = np.zeros((n_rings, width), dtype=np.float64)
        self._pend_gap = np.zeros((n_rings, width), dtype=np.float64)
        self._pend_max = np.zeros((n_rings, width), dtype=np.float64)
        self._nent = np.array([len(ring) for ring in doc.rings], dtype=np.int64)
        self._entries: list[list[_Entry]] = []

        for r, ring in enumerate(doc.rings):
            mirror: list[_Entry] = []
            group = 0
            total = 0.0
            for i, entry in enumerate(ring):
                if isinstance(entry, GreenSpec):
                    key = self._key_index[(entry.direction, entry.code)]
                    nxt = ring[(i + 1) % len(ring)]
                    if isinstance(nxt, YellowSpec):
                        yellow_after = nxt.duration
                    elif isinstance(nxt, BarrierRef):
                        yellow_after = doc.barrier_defs[nxt.ref_id][0]
                    else:
                        yellow_after = 0.0
                    self._etype[r, i] = kernels.ENTRY_GREEN
                    self._ekey[r, i] = key
                    self._p0[r, i] = entry.gap
                    self._p1[r, i] = entry.min_green
                    self._pend_gap[r, i] = entry.gap
                    self._pend_max[r, i] = entry.max_green
                    total += entry.max_green
                    mirror.append(
                        _Entry(
                            kernels.ENTRY_GREEN, key, entry.gap, entry.min_green,
                            entry.max_green, 0.0, 0.0, yellow_after, -1,
                        )
                    )
                elif isinstance(entry, (YellowSpec, RedSpec)):
                    kind = (
                        kernels.ENTRY_YELLOW
                        if isinstance(entry, YellowSpec)
                        else kernels.ENTRY_RED
                    )
                    key = self._key_index.get((entry.direction, entry.code), -1)
                    self._etype[r, i] = kind
                    self._ekey[r, i] = key if kind == kernels.ENTRY_YELLOW else -1
                    self._p0[r, i] = entry.duration
                    total += entry.duration
                    mirror.append(
                        _Entry(kind, key, 0.0, 0.0, 0.0, entry.duration, 0.0, 0.0, -1)
                    )
                else:  # BarrierRef
                    yellow, red = doc.barrier_defs[entry.ref_id]
                    prev = ring[i - 1]
                    key = (
                        self._key_index[(prev.direction, prev.code)]
                        if isinstance(prev, GreenSpec)
                        else -1
                    )
                    self._etype[r, i] = kernels.ENTRY_BARRIER
                    self._ekey[r, i] = key
                    self._bgroup[r, i] = group
                    self._p0[r, i] = yellow
                    self._p1[r, i] = red
                    total += yellow + red
                    mirror.append(
                        _Entry(kernels.ENTRY_BARRIER, key, 0.0, 0.0, 0.0, yellow, red, 0.0, group)
                    )
                    group += 1
            if total <= 0.0:
                raise SignalProgramError(
                    f"ring {r + 1} has zero total duration", location="signals"
                )
            self._entries.append(mirror)
        self.barrier_groups = len(barrier_seqs[0])

    # -- stepping ----------------------------------------------------------

    def _fill_detections(self, detections, row: np.ndarray) -> None:
        row[:] = False
        if detections is None:
            return
        if isinstance(detections, np.ndarray):
            row[:] = detections
            return
        for d in detections:
            row[self._key_index[d] if isinstance(d, tuple) else int(d)] = True

    def step(self, detections=None) -> int:
        """Advance one tick.  ``detections`` is a bool array over movement
        keys, or an iterable of keys/indices seen by detectors this tick.
        Returns the barrier group crossed this tick, or -1."""
        self._fill_detections(detections, self._det_row[0])
        before = (self._cursor.copy(), self._sub.copy())
        kernels.run_controller_ticks(
            self._etype, self._ekey, self._bgroup, self._p0, self._p1, self._nent,
            self._pend_gap, self._pend_max,
            self._cursor, self._sub, self._elapsed, self._gap_timer,
            self._active_gap, self._active_max,
            self._det_row, self.actuated, self.dt, self._col_row, self._cross_row,
        )
        self._colors[:] = self._col_row[0]
        self.ticks += 1
        if not (
            np.array_equal(before[0], self._cursor) and np.array_equal(before[1], self._sub)
        ):
            self.state_version += 1
        crossed = int(self._cross_row[0])
        if crossed >= 0:
            self.crossings.append((self.ticks, crossed))
        return crossed

    def run_batch(self, n_ticks: int, det_matrix: np.ndarray | None = None) -> np.ndarray:
        """Advance ``n_ticks`` in one kernel call; returns the (ticks, keys)
        color log.  ``det_matrix`` is an optional (ticks, keys) bool array."""
        if det_matrix is None:
            det_matrix = np.zeros((n_ticks, len(self.movements)), dtype=np.bool_)
        if det_matrix.shape != (n_ticks, len(self.movements)):
            raise ValueError(f"det_matrix must be ({n_ticks}, {len(self.movements)})")
        colors = np.zeros((n_ticks, len(self.movements)), dtype=np.int8)
        crossings = np.zeros(n_ticks, dtype=np.int64)
        before = (self._cursor.copy(), self._sub.copy())
        kernels.run_controller_ticks(
            self._etype, self._ekey, self._bgroup, self._p0, self._p1, self._nent,
            self._pend_gap, self._pend_max,
            self._cursor, self._sub, self._elapsed, self._gap_timer,
            self._active_gap, self._active_max,
            np.ascontiguousarray(det_matrix), self.actuated, self.dt, colors, crossings,
        )
        for t in np.nonzero(crossings >= 0)[0]:
            self.crossings.append((self.ticks + int(t) + 1, int(crossings[t])))
        self.ticks += n_ticks
        if n_ticks:
            self._colors[:] = colors[-1]
        if not (
            np.array_equal(before[0], self._cursor) and np.array_equal(before[1], self._sub)
        ):
            self.state_version += 1
        return colors

    # -- observation -------------------------------------------------------

    @property
    def time(self) -> float:
        return self.ticks * self.dt

    def key_of(self, direction: Direction, code: str) -> int:
        return self._key_index[(direction, code)]

    def indication(self, direction: Direction, code: str) -> Color:
        """Current indication for an exact (direction, movement code) pair.
        Movements the program never mentions sit at red."""
        idx = self._key_index.get((direction, code))
        if idx is None:
            return Color.RED
        return Color(int(self._colors[idx]))

    def color_for_movement(self, direction: Direction, kind: TurnKind) -> Color:
        """Best indication an approaching vehicle making ``kind`` can claim:
        the brightest color among this approach's keys whose code covers the
        turn.  Defaults to red."""
        best = Color.RED
        for (d, code), idx in self._key_index.items():
            if d is direction and kind in _CODE_KINDS[code]:
                color = Color(int(self._colors[idx]))
                if color > best:
                    best = color
        return best

    def colors(self) -> np.ndarray:
        return self._colors.copy()

    # -- projection --------------------------------------------------------

    def _green_duration_bounds(self, ring: int, idx: int, entry: _Entry) -> tuple[float, float]:
        """(shortest, longest) possible duration of a green not yet started."""
        pend_gap = float(self._pend_gap[ring, idx])
        pend_max = float(self._pend_max[ring, idx])
        if not self.actuated:
            return pend_max, pend_max
        gap_lo = min(entry.gap, pend_gap)
        max_hi = max(entry.max_green, pend_max)
        if self.adaptive is not None:
            gap_lo = min(gap_lo, self.adaptive.smallest_gap)
            max_hi = max(max_hi, self.adaptive.largest_max_green)
        lo = min(max(entry.min_green, gap_lo), max_hi)
        return lo, max_hi

    def _active_remaining(self) -> tuple[list[tuple[float, float]], dict[int, list[tuple[float, float]]]]:
        """Remaining-time bounds of each ring's current entry, plus blocked
        windows contributed by entries already under way."""
        rem: list[tuple[float, float]] = []
        live: dict[int, list[tuple[float, float]]] = {}
        for r in range(len(self._entries)):
            e = int(self._cursor[r])
            entry = self._entries[r][e]
            elapsed = float(self._elapsed[r])
            if entry.kind == kernels.ENTRY_GREEN:
                hi = max(float(self._active_max[r]) - elapsed, 0.0)
                if self.actuated:
                    lo = max(entry.min_green - elapsed, 0.0)
                    gap = float(self._active_gap[r])
                    timer = float(self._gap_timer[r])
                    if timer < gap:
                        lo = max(lo, gap - timer)
                    lo = min(lo, hi)
                else:
                    lo = hi
                rem.append((lo, hi))
                live.setdefault(entry.key, []).append((0.0, hi + entry.yellow_after))
            elif entry.kind == kernels.ENTRY_YELLOW:
                left = max(entry.dur0 - elapsed, 0.0)
                rem.append((left, left))
                if entry.key >= 0:
                    live.setdefault(entry.key, []).append((0.0, left))
            elif entry.kind == kernels.ENTRY_RED:
                left = max(entry.dur0 - elapsed, 0.0)
                rem.append((left, left))
            else:  # barrier: remaining time until this ring parks
                sub = int(self._sub[r])
                if sub == 0:
                    yellow_left = max(entry.dur0 - elapsed, 0.0)
                    left = yellow_left + entry.dur1
                    if entry.key >= 0:
                        live.setdefault(entry.key, []).append((0.0, yellow_left))
                elif sub == 1:
                    left = max(entry.dur1 - elapsed, 0.0)
                else:
                    left = 0.0
                rem.append((left, left))
        return rem, live

    def green_windows(self, horizon: float) -> dict[MovementKey, tuple[tuple[float, float], ...]]:
        """Feasible right-of-way windows per movement over the next ``horizon``
        seconds (relative to now).

        Each window [lo, hi] bounds every instant at which the movement COULD
        be showing green or yellow, across all admissible controller futures:
        in fixed mode the projection is exact; in actuated/adaptive mode each
        green contributes its earliest possible onset through its latest
        possible end plus trailing clearance.  Barrier synchronization couples
        the rings' bounds.  Windows are padded by one tick on both sides to
        absorb tick quantization, merged per key, and windows opening after
        the horizon are dropped.
        """
        n_rings = len(self._entries)
        windows: dict[int, list[tuple[float, float]]] = {}
        rem, live = self._active_remaining()
        for key, spans in live.items():
            windows.setdefault(key, []).extend(spans)

        # Per-ring walk position: next entry index and the bounds on the time
        # at which it begins.  A ring sitting at a barrier is "parked" once
        # its clearance windows have been served.
        idx = [int(self._cursor[r]) for r in range(n_rings)]
        lo = [rem[r][0] for r in range(n_rings)]
        hi = [rem[r][1] for r in range(n_rings)]
        at_barrier = [
            self._entries[r][idx[r]].kind == kernels.ENTRY_BARRIER for r in range(n_rings)
        ]

        guard = 0
        while guard < 100_000:
            # advance every non-parked ring until it parks or leaves the horizon
            any_open = False
            for r in range(n_rings):
                ring = self._entries[r]
                n = len(ring)
                while not at_barrier[r] and lo[r] <= horizon and guard < 100_000:
                    guard += 1
                    idx[r] = (idx[r] + 1) % n
                    entry = ring[idx[r]]
                    if entry.kind == kernels.ENTRY_GREEN:
                        d_lo, d_hi = self._green_duration_bounds(r, idx[r], entry)
                        windows.setdefault(entry.key, []).append(
                            (lo[r], hi[r] + d_hi + entry.yellow_after)
                        )
                        lo[r] += d_lo
                        hi[r] += d_hi
                    elif entry.kind in (kernels.ENTRY_YELLOW, kernels.ENTRY_RED):
                        lo[r] += entry.dur0
                        hi[r] += entry.dur0
                    else:  # barrier — serve clearance, then park
                        if entry.key >= 0:
                            # the barrier's yellow window re-covers the green
                            # that precedes it; already counted via yellow_after
                            pass
                        lo[r] += entry.dur0 + entry.dur1
                        hi[r] += entry.dur0 + entry.dur1
                        at_barrier[r] = True
                if not at_barrier[r] and lo[r] <= horizon:
                    any_open = True
            if any_open:
                continue
            if not all(at_barrier):
                break  # some ring ran past the horizon without parking
            cross_lo = max(lo)
            cross_hi = max(hi)
            if cross_lo > horizon:
                break
            for r in range(n_rings):
                ring = self._entries[r]
                idx[r] = (idx[r] + 1) % len(ring)
                lo[r] = cross_lo
                hi[r] = cross_hi
                at_barrier[r] = False
                entry = ring[idx[r]]
                if entry.kind == kernels.ENTRY_GREEN:
                    d_lo, d_hi = self._green_duration_bounds(r, idx[r], entry)
                    windows.setdefault(entry.key, []).append(
                        (cross_lo, cross_hi + d_hi + entry.yellow_after)
                    )
                    lo[r] += d_lo
                    hi[r] += d_hi
                elif entry.kind == kernels.ENTRY_BARRIER:
                    at_barrier[r] = True
                    lo[r] += entry.dur0 + entry.dur1
                    hi[r] += entry.dur0 + entry.dur1
                else:
                    lo[r] += entry.dur0
                    hi[r] += entry.dur0

        pad = self.dt
        out: dict[MovementKey, tuple[tuple[float, float], ...]] = {}
        for key, spans in windows.items():
            padded = sorted((max(s - pad, 0.0), e + pad) for s, e in spans if s <= horizon)
            merged: list[tuple[float, float]] = []
            for s, e in padded:
                if merged and s <= merged[-1][1]:
                    merged[-1] = (merged[-1][0], max(merged[-1][1], e))
                else:
                    merged.append((s, e))
            if merged:
                out[self.movements[key]] = tuple(merged)
        return out

    # -- adaptation --------------------------------------------------------

    def adaptive_update(self, stats: dict[MovementKey, tuple[float, float]]) -> None:
        """Re-read gap and max-green from the tables for the supplied
        movements.  ``stats`` maps a movement key to (mean approach speed in
        m/s, measured volume in vehicles per lane per cycle).  New values take
        effect at each green's next onset; the active green keeps the
        parameters it latched when it started.
        """
        if self.adaptive is None:
            raise SignalProgramError("controller was not built with adaptive tables")
        changed = False
        for r, ring in enumerate(self._entries):
            for i, entry in enumerate(ring):
                if entry.kind != kernels.ENTRY_GREEN:
                    continue
                stat = stats.get(self.movements[entry.key])
                if stat is None:
                    continue
                speed, volume = stat
                gap = self.adaptive.gap_for(speed)
                max_green = max(self.adaptive.max_green_for(volume), entry.min_green)
                if gap != self._pend_gap[r, i] or max_green != self._pend_max[r, i]:
                    self._pend_gap[r, i] = gap
                    self._pend_max[r, i] = max_green
                    changed = True
        if changed:
            self.state_version += 1


# ---------------------------------------------------------------------------
# program-level helpers
# ---------------------------------------------------------------------------

def _entry_duration(entry) -> float:
    return entry.max_green if isinstance(entry, GreenSpec) else entry.duration


def analytic_cycle_length(doc: SignalProgramDoc) -> float:
    """Steady-state cycle length of a fixed-time program.

    Between consecutive barriers each ring needs the sum of its stage's
    durations (greens held for their max); the stage lasts as long as its
    slowest ring, and every barrier adds its own yellow+red clearance.
    Programs without barriers take ring 1's total (rings then free-run
    independently).
    """
    barrier_ids = [e.ref_id for e in doc.rings[0] if isinstance(e, BarrierRef)]
    sequences = {
        tuple(e.ref_id for e in ring if isinstance(e, BarrierRef)) for ring in doc.rings
    }
    if len(sequences) > 1:
        raise BarrierMismatch(f"rings disagree on barrier sequence: {sorted(sequences)}")
    if not barrier_ids:
        return sum(_entry_duration(e) for e in doc.rings[0])

    # stage j of a ring = total duration of the entries cyclically preceding
    # its j-th barrier; equal barrier sequences make stage j concurrent
    # across rings.
    per_ring_stages: list[list[float]] = []
    for ring in doc.rings:
        positions = [i for i, e in enumerate(ring) if isinstance(e, BarrierRef)]
        stages: list[float] = []
        for j, p in enumerate(positions):
            acc = 0.0
            i = (positions[j - 1] + 1) % len(ring)
            while i != p:
                acc += _entry_duration(ring[i])
                i = (i + 1) % len(ring)
            stages.append(acc)
        per_ring_stages.append(stages)

    total = 0.0
    for j, barrier_id in enumerate(barrier_ids):
        total += max(stages[j] for stages in per_ring_stages)
        yellow, red = doc.barrier_defs[barrier_id]
        total += yellow + red
    return total
