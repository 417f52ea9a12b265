from __future__ import annotations

from pathlib import Path

import pytest

from intersim import (
    DemandTable,
    IntersectionSpecDoc,
    RunParams,
    RunSummary,
    SignalProgramDoc,
    build_model,
    parse_demand_table,
    parse_intersection_spec,
    parse_signal_program,
    run_simulation,
)

DATA = Path(__file__).parent / "data"


def dpath(name: str) -> Path:
    return DATA / name


@pytest.fixture(scope="session")
def excerpt_intersection() -> IntersectionSpecDoc:
    return parse_intersection_spec(dpath("excerpt_intersection.xml").read_text())


@pytest.fixture(scope="session")
def excerpt_signals() -> SignalProgramDoc:
    return parse_signal_program(dpath("excerpt_signals.xml").read_text())


@pytest.fixture(scope="session")
def excerpt_demand() -> DemandTable:
    return parse_demand_table(dpath("excerpt_demand.csv").read_text())


@pytest.fixture(scope="session")
def excerpt_model(excerpt_intersection):
    return build_model(excerpt_intersection)


@pytest.fixture(scope="session")
def sim_paths() -> tuple[Path, Path, Path]:
    return (
        dpath("sim_intersection.xml"),
        dpath("sim_signals.xml"),
        dpath("sim_demand.csv"),
    )


@pytest.fixture(scope="session")
def sim_model():
    doc = parse_intersection_spec(dpath("sim_intersection.xml").read_text())
    return build_model(doc)


class RunCache:
    """Session-wide memo of simulation runs on the moderate-demand fixture.

    The acceptance sweep and several integration tests want the same
    (ratio, seed, control) runs; one cache keeps the suite's wall time
    down to a single pass over each distinct configuration.
    """

    def __init__(self, paths: tuple[Path, Path, Path]):
        self._paths = paths
        self._memo: dict[tuple, RunSummary] = {}

    def run(
        self,
        cav_ratio: float,
        seed: int,
        *,
        actuated: bool = False,
        adaptive: bool = False,
        check_invariants: bool = True,
    ) -> RunSummary:
        key = (cav_ratio, seed, actuated, adaptive, check_invariants)
        if key not in self._memo:
            self._memo[key] = run_simulation(
                *self._paths,
                RunParams(
                    cav_ratio=cav_ratio,
                    seed=seed,
                    actuated=actuated,
                    adaptive=adaptive,
                    check_invariants=check_invariants,
                ),
            )
        return self._memo[key]


@pytest.fixture(scope="session")
def run_cache(sim_paths) -> RunCache:
    return RunCache(sim_paths)


@pytest.fixture(scope="session")
def overload_runs(sim_paths) -> tuple[RunSummary, RunSummary]:
    """(full demand, half demand) runs of the oversaturated fixture."""
    inter, signals, _ = sim_paths
    params = RunParams(cav_ratio=0.0, seed=11, check_invariants=True)
    full = run_simulation(inter, signals, dpath("overload_demand.csv"), params)
    half = run_simulation(inter, signals, dpath("overload_half_demand.csv"), params)
    return full, half
