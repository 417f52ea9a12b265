"""Shared builders and oracles used by several test modules.

Nothing here touches module internals: programs are built from the same
document dataclasses the parser emits, and the brute-force reservation
oracle works purely from the definitional cell expansion.
"""

from __future__ import annotations

import numpy as np

from intersim import Direction
from intersim.config import BarrierRef, GreenSpec, RedSpec, SignalProgramDoc, YellowSpec
from intersim.reservations import reserved_cells
from intersim.types import Color

# ---------------------------------------------------------------------------
# random ring-and-barrier programs


def _green_block(rng: np.random.Generator, direction: Direction, code: str) -> list:
    gap = round(float(rng.uniform(1.0, 6.0)), 1)
    min_green = round(float(rng.uniform(2.0, 8.0)), 1)
    max_green = round(min_green + float(rng.uniform(2.0, 30.0)), 1)
    return [
        GreenSpec(direction, code, gap, min_green, max_green),
        YellowSpec(direction, code, round(float(rng.uniform(3.0, 5.0)), 1)),
        RedSpec(direction, code, round(float(rng.uniform(0.5, 2.0)), 1)),
    ]


def random_program(rng: np.random.Generator) -> SignalProgramDoc:
    """A random dual-ring program with compatible-by-construction phases.

    Each barrier group serves one street (an opposing direction pair) in
    the standard arrangement: ring 1 runs one approach's protected left
    then the opposing through, ring 2 the mirror image.  Lefts are
    independently present or absent per group, durations are random, and
    which street leads is coin-flipped, so phase overlaps at every
    alignment get exercised while remaining conflict-free by design.
    """
    streets = [(Direction.NORTH, Direction.SOUTH), (Direction.EAST, Direction.WEST)]
    if rng.integers(0, 2):
        streets.reverse()
    rings: list[list] = [[], []]
    barrier_defs: dict[str, tuple[float, float]] = {}
    for group, (d1, d2) in enumerate(streets):
        bid = f"b{group + 1}"
        barrier_defs[bid] = (
            round(float(rng.uniform(3.0, 5.0)), 1),
            round(float(rng.uniform(1.0, 3.0)), 1),
        )
        with_lefts = bool(rng.integers(0, 2))
        for ring, (lead, follow) in enumerate(((d1, d2), (d2, d1))):
            if with_lefts:
                rings[ring].extend(_green_block(rng, lead, "c"))
            rings[ring].extend(_green_block(rng, follow, "t"))
            rings[ring].append(BarrierRef(bid))
    return SignalProgramDoc(rings=rings, barrier_defs=barrier_defs)


# ---------------------------------------------------------------------------
# color-log observers


def green_runs(column: np.ndarray) -> list[tuple[int, int]]:
    """(start tick, length) of full GREEN runs, dropping truncated ends."""
    green = column == int(Color.GREEN)
    padded = np.concatenate(([False], green, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    starts, stops = edges[::2], edges[1::2]
    runs = []
    for a, b in zip(starts, stops):
        if a == 0 or b == len(column):
            continue  # truncated by the observation window
        runs.append((int(a), int(b - a)))
    return runs


def green_starts(column: np.ndarray) -> list[int]:
    green = column == int(Color.GREEN)
    padded = np.concatenate(([False], green))
    return [int(i) for i in np.flatnonzero(~padded[:-1] & green)]


# ---------------------------------------------------------------------------
# brute-force reservation admission


def greedy_admission(cache, requests, horizons, now, dt) -> list[bool]:
    """Reference first-come-first-served outcomes over explicit cells.

    Processes ``requests`` in order, granting exactly when the request is
    inside its road's horizon and its expanded (tile, slot) cells are
    disjoint from every previously granted request's cells.
    """
    taken: set[tuple[int, int]] = set()
    outcomes: list[bool] = []
    for req in requests:
        if req.proposed_entry_time - now > horizons[req.direction]:
            outcomes.append(False)
            continue
        slot = int(round(req.proposed_entry_time / dt))
        cells = reserved_cells(cache, req.trajectory, req.entry_speed, slot)
        if cells & taken:
            outcomes.append(False)
        else:
            taken |= cells
            outcomes.append(True)
    return outcomes


# ---------------------------------------------------------------------------
# random demand files


def write_random_demand(path, rng: np.random.Generator, *, buckets: int, heavy: bool = False) -> int:
    """Write a four-road demand table with moderate random counts.

    Returns the total vehicle count.  Rates stay near or below one
    lane's service rate so random scenarios load the intersection
    without guaranteeing gridlock.
    """
    hi = (10, 28, 8) if heavy else (6, 16, 5)
    lines = [
        "EAST, WEST, NORTH, SOUTH",
        ",".join(["L,T,R,Total"] * 4) + ",Vehicle Total",
    ]
    total = 0
    for row in range(buckets):
        minute = row * 5
        clock = f"{5 + minute // 60}:{minute % 60:02d} AM"
        cells = []
        row_total = 0
        for _ in range(4):
            left = int(rng.integers(0, hi[0]))
            through = int(rng.integers(2, hi[1]))
            right = int(rng.integers(0, hi[2]))
            cells += [left, through, right, left + through + right]
            row_total += left + through + right
        total += row_total
        lines.append(clock + "," + ",".join(str(c) for c in cells) + f",{row_total}")
    path.write_text("\n".join(lines) + "\n")
    return total
