from __future__ import annotations

import csv
import filecmp

import pytest

from intersim import (
    Direction,
    RunParams,
    TurnKind,
    VehicleClass,
    VehicleNotCompleted,
    delay_of,
    emit_summary,
    run_simulation,
)
from intersim.engine import VehicleRecord

from conftest import dpath

SLOW = (
    dpath("slow_intersection.xml"),
    dpath("slow_signals.xml"),
    dpath("slow_demand.csv"),
)


# ---------------------------------------------------------------------------
# delay bookkeeping


def _record(**kw) -> VehicleRecord:
    base = dict(
        vid=7,
        vehicle_class=VehicleClass.HUMAN,
        direction=Direction.EAST,
        turn=TurnKind.THROUGH,
        in_lane=0,
        out_lane=0,
        scheduled_time=10.0,
        spawn_time=12.0,
        free_flow=50.0,
    )
    base.update(kw)
    return VehicleRecord(**base)


def test_delay_is_measured_from_the_scheduled_time():
    assert delay_of(_record(exit_time=100.0)) == pytest.approx(40.0)


def test_delay_never_goes_negative():
    assert delay_of(_record(exit_time=55.0)) == 0.0


def test_delay_requires_a_completed_trip():
    with pytest.raises(VehicleNotCompleted):
        delay_of(_record(entry_time=60.0))


# ---------------------------------------------------------------------------
# whole-run accounting


def test_vehicle_conservation(run_cache):
    for ratio in (0.0, 0.5, 1.0):
        s = run_cache.run(ratio, seed=1)
        assert s.scheduled == s.completed + s.still_in_system + s.never_spawned
        assert s.spawned == s.completed + s.still_in_system
        assert s.completed == sum(1 for r in s.records if r.exit_time is not None)


def test_all_human_run_reports_no_cav_delay(run_cache):
    s = run_cache.run(0.0, seed=1)
    assert s.cav_mean_delay is None
    assert all(r.vehicle_class is VehicleClass.HUMAN for r in s.records)
    assert s.hv_mean_delay == pytest.approx(s.mean_delay)


def test_all_cav_run_reports_no_hv_delay(run_cache):
    s = run_cache.run(1.0, seed=1)
    assert s.hv_mean_delay is None
    assert all(r.vehicle_class is VehicleClass.AUTO for r in s.records)
    assert s.cav_mean_delay == pytest.approx(s.mean_delay)


def test_mixed_run_mean_is_the_weighted_class_mean(run_cache):
    s = run_cache.run(0.5, seed=1)
    hv = [delay_of(r) for r in s.records if r.exit_time and r.vehicle_class is VehicleClass.HUMAN]
    cav = [delay_of(r) for r in s.records if r.exit_time and r.vehicle_class is VehicleClass.AUTO]
    assert s.hv_mean_delay == pytest.approx(sum(hv) / len(hv))
    assert s.cav_mean_delay == pytest.approx(sum(cav) / len(cav))
    blended = (sum(hv) + sum(cav)) / (len(hv) + len(cav))
    assert s.mean_delay == pytest.approx(blended)


def test_runs_with_the_same_seed_are_identical(tmp_path):
    params = RunParams(cav_ratio=0.5, seed=9, check_invariants=True)
    a = run_simulation(*SLOW, params)
    b = run_simulation(*SLOW, params)
    assert a == b
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_summary(a, pa)
    emit_summary(b, pb)
    assert filecmp.cmp(pa, pb, shallow=False)
    assert pa.read_bytes() == pb.read_bytes()


def test_seed_changes_the_run(run_cache):
    a = run_cache.run(0.5, seed=1)
    b = run_cache.run(0.5, seed=2)
    assert a.mean_delay != b.mean_delay


def test_zero_drain_cap_strands_vehicles_but_keeps_the_books(sim_paths):
    s = run_simulation(*sim_paths, RunParams(cav_ratio=0.5, seed=1, drain_cap=0.0))
    assert s.end_time == pytest.approx(600.0, abs=0.05)  # cut at the last bucket
    assert s.still_in_system > 0
    assert s.completed < s.scheduled
    assert s.scheduled == s.completed + s.still_in_system + s.never_spawned
    # stranded vehicles contribute no delay samples
    assert s.completed == sum(1 for r in s.records if r.exit_time is not None)


def test_spillback_flags_the_oversaturated_fixture(overload_runs):
    full, half = overload_runs
    assert full.spillback
    assert not half.spillback


def test_oversaturation_costs_delay(overload_runs):
    full, half = overload_runs
    assert full.mean_delay > half.mean_delay
    assert full.scheduled == 2 * half.scheduled


def test_vehicle_log_covers_every_scheduled_vehicle(tmp_path):
    log = tmp_path / "vehicles.csv"
    s = run_simulation(*SLOW, RunParams(seed=0, vehicle_log=log))
    with open(log, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == s.scheduled
    done = [r for r in rows if r["exit_s"]]
    assert len(done) == s.completed
    for row in done:
        assert float(row["exit_s"]) > float(row["entry_s"]) > float(row["spawn_s"])
