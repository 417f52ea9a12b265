"""Hot per-tick kernels: signal-controller stepping and footprint rasterization.

Both kernels are written in nopython-compatible style and compiled with numba
when it is available.  Setting ``INTERSIM_DISABLE_NUMBA=1`` (or running
without numba installed) selects the interpreted pure-Python/NumPy path.  The
``py_``-prefixed names always refer to that interpreted path — each kernel is
deliberately self-contained (no cross-kernel calls), so the two families stay
independent and the compiled one remains cacheable.

Encoding shared with :mod:`intersim.signals`:

* ring entries: ``etype`` 0=green, 1=yellow, 2=red, 3=barrier, -1=padding;
* per-entry parameters ``p0/p1``: green=(gap, min), yellow/red=(duration, -),
  barrier=(yellow, red); a green's max lives in the pending/active arrays;
* ``ekey`` maps an entry to its movement slot (a barrier carries the movement
  of the preceding green, whose yellow window it displays);
* colors: 0=red, 1=yellow, 2=green (``intersim.types.Color``).
"""

from __future__ import annotations

import math
import os

import numpy as np

_EPS = 1e-9

ENTRY_GREEN = 0
ENTRY_YELLOW = 1
ENTRY_RED = 2
ENTRY_BARRIER = 3


def _render_colors(etype, ekey, cursor, sub, colors):
    """Paint the indication array from the current ring cursors (default red)."""
    for k in range(colors.shape[0]):
        colors[k] = 0
    for r in range(etype.shape[0]):
        e = cursor[r]
        t = etype[r, e]
        key = ekey[r, e]
        if key < 0:
            continue
        if t == ENTRY_GREEN:
            if colors[key] < 2:
                colors[key] = 2
        elif t == ENTRY_YELLOW or (t == ENTRY_BARRIER and sub[r] == 0):
            if colors[key] < 1:
                colors[key] = 1


def _run_controller_ticks(
    etype, ekey, bgroup, p0, p1, nent,
    pend_gap, pend_max,
    cursor, sub, elapsed, gap_timer, active_gap, active_max,
    det_matrix, actuated, dt, out_colors, out_cross,
):
    """Advance the ring-and-barrier state machine one tick per detection row.

    Fixed-duration entries carry their overshoot into the next entry so ring
    cycle lengths stay drift-free; actuated greens terminate on the first tick
    their gap-out or max-out condition holds.  A ring reaching a barrier
    serves the barrier's yellow and red windows, then parks; when every ring
    is parked they all cross on the same tick.  ``out_cross[t]`` records the
    barrier group crossed at tick ``t`` (-1 otherwise) and ``out_colors[t]``
    the indication after the tick.
    """
    n_ticks = det_matrix.shape[0]
    n_keys = out_colors.shape[1]
    n_rings = etype.shape[0]
    max_entries = etype.shape[1]
    for tick in range(n_ticks):
        for r in range(n_rings):
            e = cursor[r]
            t = etype[r, e]
            if t == ENTRY_BARRIER and sub[r] == 2:
                # Parked, waiting for the other rings.  elapsed keeps counting
                # time past the ring's exact arrival so the crossing can carry
                # the quantization remainder instead of drifting by up to one
                # tick per barrier.
                elapsed[r] += dt
                continue
            elapsed[r] += dt
            if t == ENTRY_GREEN:
                gap_timer[r] += dt
                if det_matrix[tick, ekey[r, e]]:
                    gap_timer[r] = 0.0
            guard = 0
            while guard < 3 * max_entries + 6:
                guard += 1
                e = cursor[r]
                t = etype[r, e]
                ended = False
                carry = 0.0
                if t == ENTRY_GREEN:
                    if actuated:
                        if elapsed[r] >= active_max[r] - _EPS or (
                            elapsed[r] >= p1[r, e] - _EPS
                            and gap_timer[r] >= active_gap[r] - _EPS
                        ):
                            ended = True
                    else:
                        if elapsed[r] >= active_max[r] - _EPS:
                            ended = True
                            carry = elapsed[r] - active_max[r]
                elif t == ENTRY_YELLOW or t == ENTRY_RED:
                    if elapsed[r] >= p0[r, e] - _EPS:
                        ended = True
                        carry = elapsed[r] - p0[r, e]
                else:  # barrier: yellow window, red window, then parked
                    if sub[r] == 0:
                        if elapsed[r] >= p0[r, e] - _EPS:
                            elapsed[r] -= p0[r, e]
                            sub[r] = 1
                            continue
                    elif sub[r] == 1:
                        if elapsed[r] >= p1[r, e] - _EPS:
                            sub[r] = 2
                            elapsed[r] -= p1[r, e]  # time past exact arrival
                    break
                if not ended:
                    break
                nxt = (e + 1) % nent[r]
                cursor[r] = nxt
                sub[r] = 0
                elapsed[r] = carry
                if etype[r, nxt] == ENTRY_GREEN:
                    active_gap[r] = pend_gap[r, nxt]
                    active_max[r] = pend_max[r, nxt]
                    gap_timer[r] = carry  # onset counts as a virtual detection

        crossed = -1
        all_parked = True
        for r in range(n_rings):
            e = cursor[r]
            if etype[r, e] != ENTRY_BARRIER or sub[r] != 2:
                all_parked = False
                break
        if all_parked:
            crossed = bgroup[0, cursor[0]]
            # The ring that arrived last fixes the crossing instant; its
            # overshoot (the smallest accumulated wait) carries forward.
            carry = elapsed[0]
            for r in range(1, n_rings):
                if elapsed[r] < carry:
                    carry = elapsed[r]
            for r in range(n_rings):
                nxt = (cursor[r] + 1) % nent[r]
                cursor[r] = nxt
                sub[r] = 0
                elapsed[r] = carry
                if etype[r, nxt] == ENTRY_GREEN:
                    active_gap[r] = pend_gap[r, nxt]
                    active_max[r] = pend_max[r, nxt]
                    gap_timer[r] = carry
        out_cross[tick] = crossed

        # render indication (same rules as _render_colors, inlined)
        for k in range(n_keys):
            out_colors[tick, k] = 0
        for r in range(n_rings):
            e = cursor[r]
            t = etype[r, e]
            key = ekey[r, e]
            if key < 0:
                continue
            if t == ENTRY_GREEN:
                if out_colors[tick, key] < 2:
                    out_colors[tick, key] = 2
            elif t == ENTRY_YELLOW or (t == ENTRY_BARRIER and sub[r] == 0):
                if out_colors[tick, key] < 1:
                    out_colors[tick, key] = 1


def _footprint_tiles(
    px, py, ps, path_len, veh_len, half_w, speed, dt,
    n_tiles, tile_size, marks, out_slot, out_tile,
):
    """Rasterize a constant-speed traversal into (slot, tile) pairs.

    The vehicle body is the rectangle spanning its rear and front path points
    (width ``2*half_w``, which already includes the static buffer, and
    extended by the buffer at both ends).  Within each slot the body is placed
    every 0.15 m of front travel so the union of placements covers the swept
    region even on the tightest turning radii.  ``marks`` must hold
    ``n_tiles**2`` int32 entries initialized to -1; it is reused across calls.
    Returns the pair count, or -1 if the output buffers are too small.
    """
    total = path_len + veh_len
    if speed <= 0.0:
        return 0
    n_slots = int(math.ceil(total / (speed * dt) - 1e-12))
    step = 0.15
    n_points = ps.shape[0]
    count = 0
    for k in range(n_slots):
        s_lo = speed * k * dt
        s_hi = speed * (k + 1) * dt
        if s_hi > total:
            s_hi = total
        n_place = int(math.ceil((s_hi - s_lo) / step)) + 1
        denom = n_place - 1 if n_place > 1 else 1
        for p in range(n_place):
            s = s_lo + (s_hi - s_lo) * p / denom
            s_front = s if s < path_len else path_len
            s_rear = s - veh_len
            if s_rear < 0.0:
                s_rear = 0.0
            if s_rear > path_len:
                s_rear = path_len
            if s_front <= s_rear + 1e-9:
                if s_rear >= path_len:  # body fully past the exit boundary
                    continue
                s_front = min(s_rear + 0.05, path_len)
            # interpolate rear and front points on the sampled path (inline)
            fx0 = px[0]
            fy0 = py[0]
            fx1 = px[n_points - 1]
            fy1 = py[n_points - 1]
            if s_rear <= ps[0]:
                fx0, fy0 = px[0], py[0]
            elif s_rear >= ps[n_points - 1]:
                fx0, fy0 = px[n_points - 1], py[n_points - 1]
            else:
                i1 = int(np.searchsorted(ps, s_rear))
                i0 = i1 - 1
                span = ps[i1] - ps[i0]
                f = (s_rear - ps[i0]) / span if span > 0 else 0.0
                fx0 = px[i0] + (px[i1] - px[i0]) * f
                fy0 = py[i0] + (py[i1] - py[i0]) * f
            if s_front <= ps[0]:
                fx1, fy1 = px[0], py[0]
            elif s_front >= ps[n_points - 1]:
                fx1, fy1 = px[n_points - 1], py[n_points - 1]
            else:
                i1 = int(np.searchsorted(ps, s_front))
                i0 = i1 - 1
                span = ps[i1] - ps[i0]
                f = (s_front - ps[i0]) / span if span > 0 else 0.0
                fx1 = px[i0] + (px[i1] - px[i0]) * f
                fy1 = py[i0] + (py[i1] - py[i0]) * f

            ux, uy = fx1 - fx0, fy1 - fy0
            norm = math.sqrt(ux * ux + uy * uy)
            if norm < 1e-12:
                continue
            ux /= norm
            uy /= norm
            cx = (fx0 + fx1) * 0.5
            cy = (fy0 + fy1) * 0.5
            hu = norm * 0.5 + half_w  # half length plus buffer-sized end caps
            hv = half_w
            # axis-aligned bounding box -> candidate tiles
            ex = hu * abs(ux) + hv * abs(uy)
            ey = hu * abs(uy) + hv * abs(ux)
            ix0 = int(math.floor((cx - ex) / tile_size))
            ix1 = int(math.floor((cx + ex) / tile_size))
            iy0 = int(math.floor((cy - ey) / tile_size))
            iy1 = int(math.floor((cy + ey) / tile_size))
            if ix0 < 0:
                ix0 = 0
            if iy0 < 0:
                iy0 = 0
            if ix1 > n_tiles - 1:
                ix1 = n_tiles - 1
            if iy1 > n_tiles - 1:
                iy1 = n_tiles - 1
            for iy in range(iy0, iy1 + 1):
                for ix in range(ix0, ix1 + 1):
                    tile = iy * n_tiles + ix
                    if marks[tile] == k:
                        continue
                    # separating-axis test: axis-aligned tile vs oriented body
                    tcx = (ix + 0.5) * tile_size
                    tcy = (iy + 0.5) * tile_size
                    dx = tcx - cx
                    dy = tcy - cy
                    ht = tile_size * 0.5
                    if abs(dx) > ht + ex:
                        continue
                    if abs(dy) > ht + ey:
                        continue
                    if abs(dx * ux + dy * uy) > hu + ht * (abs(ux) + abs(uy)):
                        continue
                    if abs(dx * uy - dy * ux) > hv + ht * (abs(uy) + abs(ux)):
                        continue
                    if count >= out_slot.shape[0]:
                        return -1
                    marks[tile] = k
                    out_slot[count] = k
                    out_tile[count] = tile
                    count += 1
    return count


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

#: Pure-Python references, always available (used by the benchmark and by
#: equivalence tests against the compiled path).
py_render_colors = _render_colors
py_run_controller_ticks = _run_controller_ticks
py_footprint_tiles = _footprint_tiles

_disabled = os.environ.get("INTERSIM_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

USING_NUMBA = False
if not _disabled:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - depends on environment
        njit = None
    if njit is not None:
        render_colors = njit(cache=True)(_render_colors)
        run_controller_ticks = njit(cache=True)(_run_controller_ticks)
        footprint_tiles = njit(cache=True)(_footprint_tiles)
        USING_NUMBA = True
if not USING_NUMBA:
    render_colors = _render_colors
    run_controller_ticks = _run_controller_ticks
    footprint_tiles = _footprint_tiles
