"""Parity between the compiled kernels and their pure-python twins.

Every kernel has a ``py_``-prefixed alias bound to the uncompiled function;
when numba is present the public names are @njit-compiled versions of the
same bodies.  These tests drive both over identical inputs and demand
bit-identical outputs, so the fallback path is always a faithful stand-in.
"""

from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from intersim import Direction, TileGrid, TurnKind, VehicleClass
from intersim import kernels
from intersim.reservations import _FOOTPRINT_STEP, TILE_BUFFER
from intersim.signals import SignalController
from intersim.vehicles import VEHICLE_LENGTH, VEHICLE_WIDTH

from helpers import random_program

DT = 0.02

needs_numba = pytest.mark.skipif(
    not kernels.USING_NUMBA,
    reason="compiled backend not active; both names bind the same function",
)


def _controller_state(ctl: SignalController) -> dict[str, np.ndarray]:
    return {
        "cursor": ctl._cursor.copy(),
        "sub": ctl._sub.copy(),
        "elapsed": ctl._elapsed.copy(),
        "gap_timer": ctl._gap_timer.copy(),
        "active_gap": ctl._active_gap.copy(),
        "active_max": ctl._active_max.copy(),
    }


def _drive(ctl: SignalController, fn, det: np.ndarray, state: dict[str, np.ndarray]):
    n_ticks, n_keys = det.shape
    colors = np.zeros((n_ticks, n_keys), dtype=np.int8)
    cross = np.zeros(n_ticks, dtype=np.int64)
    fn(
        ctl._etype, ctl._ekey, ctl._bgroup, ctl._p0, ctl._p1, ctl._nent,
        ctl._pend_gap, ctl._pend_max,
        state["cursor"], state["sub"], state["elapsed"], state["gap_timer"],
        state["active_gap"], state["active_max"],
        det, ctl.actuated, ctl.dt, colors, cross,
    )
    return colors, cross


@needs_numba
@pytest.mark.parametrize("seed", range(8))
def test_controller_kernel_matches_pure_python(seed):
    rng = np.random.default_rng(seed)
    doc = random_program(rng)
    ctl = SignalController(doc, dt=DT, actuated=bool(seed % 2))
    n_ticks = int(90.0 / DT)
    det = rng.random((n_ticks, len(ctl.movements))) < 0.05
    jit_state = _controller_state(ctl)
    py_state = _controller_state(ctl)

    jit_colors, jit_cross = _drive(ctl, kernels.run_controller_ticks, det, jit_state)
    py_colors, py_cross = _drive(ctl, kernels.py_run_controller_ticks, det, py_state)

    assert np.array_equal(jit_colors, py_colors)
    assert np.array_equal(jit_cross, py_cross)
    for name in jit_state:
        assert np.array_equal(jit_state[name], py_state[name]), name


@needs_numba
def test_render_kernel_matches_pure_python():
    rng = np.random.default_rng(99)
    doc = random_program(rng)
    ctl = SignalController(doc, dt=DT, actuated=True)
    det = rng.random((int(45.0 / DT), len(ctl.movements))) < 0.03
    ctl.run_batch(det.shape[0], det)

    jit_out = np.zeros(len(ctl.movements), dtype=np.int8)
    py_out = np.zeros(len(ctl.movements), dtype=np.int8)
    kernels.render_colors(ctl._etype, ctl._ekey, ctl._cursor, ctl._sub, jit_out)
    kernels.py_render_colors(ctl._etype, ctl._ekey, ctl._cursor, ctl._sub, py_out)
    assert np.array_equal(jit_out, py_out)
    assert np.array_equal(jit_out, ctl.colors())


@needs_numba
@pytest.mark.parametrize("speed", [2.0, 6.5, 13.4])
def test_footprint_kernel_matches_pure_python(excerpt_model, speed):
    grid = TileGrid.from_model(excerpt_model)
    half_w = 0.5 * VEHICLE_WIDTH + TILE_BUFFER
    for direction in Direction:
        for kind in TurnKind:
            for traj in excerpt_model.class_trajectories(VehicleClass.AUTO, direction, kind):
                xs, ys, ss = traj.polyline(_FOOTPRINT_STEP)
                outs = []
                for fn in (kernels.footprint_tiles, kernels.py_footprint_tiles):
                    marks = np.full(grid.tile_count, -1, dtype=np.int64)
                    out_slot = np.empty(grid.tile_count * 4096, dtype=np.int64)
                    out_tile = np.empty(grid.tile_count * 4096, dtype=np.int64)
                    count = fn(
                        xs, ys, ss, traj.length, VEHICLE_LENGTH, half_w,
                        speed, DT, grid.n, grid.tile_size,
                        marks, out_slot, out_tile,
                    )
                    assert count > 0
                    outs.append((count, out_slot[:count].copy(), out_tile[:count].copy()))
                (jc, js, jt), (pc, ps_, pt) = outs
                assert jc == pc
                assert np.array_equal(js, ps_)
                assert np.array_equal(jt, pt)


def test_disable_flag_selects_the_pure_backend():
    env = dict(os.environ, INTERSIM_DISABLE_NUMBA="1")
    code = (
        "from intersim import kernels; "
        "assert not kernels.USING_NUMBA; "
        "assert kernels.render_colors is kernels.py_render_colors; "
        "assert kernels.run_controller_ticks is kernels.py_run_controller_ticks; "
        "assert kernels.footprint_tiles is kernels.py_footprint_tiles"
    )
    subprocess.run([sys.executable, "-c", code], check=True, env=env)


def test_step_and_batch_agree():
    """Per-tick stepping and one batch call visit identical states."""
    rng = np.random.default_rng(4)
    doc = random_program(rng)
    n_ticks = int(60.0 / DT)
    det = rng.random((n_ticks, 8)) < 0.04

    one = SignalController(doc, dt=DT, actuated=True)
    det = det[:, : len(one.movements)]
    stepped = np.zeros((n_ticks, len(one.movements)), dtype=np.int8)
    for t in range(n_ticks):
        one.step(det[t])
        stepped[t] = one.colors()

    two = SignalController(doc, dt=DT, actuated=True)
    batched = two.run_batch(n_ticks, det)

    assert np.array_equal(stepped, batched)
    assert one.crossings == two.crossings
