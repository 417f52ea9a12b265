from __future__ import annotations

import csv
import json

from intersim.cli import main

from conftest import dpath

SLOW = [
    str(dpath("slow_intersection.xml")),
    str(dpath("slow_signals.xml")),
    str(dpath("slow_demand.csv")),
]


def _run_args(out, **extra) -> list[str]:
    args = [
        "run",
        "--intersection", SLOW[0],
        "--signals", SLOW[1],
        "--demand", SLOW[2],
        "--cav-ratio", "1.0",
        "--cav-policy", "c",
        "--hv-policy", "c",
        "--seed", "3",
        "--out", str(out),
    ]
    for flag, value in extra.items():
        args += [f"--{flag.replace('_', '-')}", str(value)]
    return args


def test_run_writes_a_one_row_summary(tmp_path, capsys):
    out = tmp_path / "summary.csv"
    assert main(_run_args(out)) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["seed"] == "3"
    assert rows[0]["cav_ratio"] == "1.0"
    assert rows[0]["control"] == "fixed"
    assert rows[0]["completed"] == rows[0]["scheduled"]
    printed = capsys.readouterr().out
    assert "summary written" in printed
    assert "mean delay" in printed


def test_run_side_logs(tmp_path):
    out = tmp_path / "summary.csv"
    vlog = tmp_path / "vehicles.csv"
    rlog = tmp_path / "reservations.csv"
    assert main(_run_args(out, vehicle_log=vlog, reservation_log=rlog)) == 0
    with open(vlog, newline="") as fh:
        vrows = list(csv.DictReader(fh))
    assert len(vrows) == 1 and vrows[0]["class"] == "AUTO"
    with open(rlog, newline="") as fh:
        rrows = list(csv.DictReader(fh))
    assert rrows and rrows[-1]["outcome"] == "granted"


def test_sweep_writes_runs_and_aggregate(tmp_path, capsys):
    spec = tmp_path / "sweep.json"
    spec.write_text(
        json.dumps(
            {
                "intersection": SLOW[0],
                "signals": SLOW[1],
                "demand": SLOW[2],
                "seeds": [0, 1],
                "cav_ratios": [0.0, 1.0],
            }
        )
    )
    out = tmp_path / "grid"
    assert main(["sweep", "--spec", str(spec), "--out", str(out)]) == 0
    with open(out / "runs.csv", newline="") as fh:
        runs = list(csv.DictReader(fh))
    assert len(runs) == 4
    assert all(r["error"] == "" for r in runs)
    assert {r["seed"] for r in runs} == {"0", "1"}
    with open(out / "aggregate.csv", newline="") as fh:
        agg = list(csv.DictReader(fh))
    assert len(agg) == 2
    assert [a["cav_ratio"] for a in agg] == ["0.0", "1.0"]
    assert all(a["errors"] == "0" for a in agg)
    assert str(out) in capsys.readouterr().out


def test_validate_accepts_the_fixture_trio(capsys):
    code = main(["validate", *SLOW])
    printed = capsys.readouterr().out
    assert code == 0, printed
    assert printed.count("parsed") == 3


def test_validate_rejects_a_corrupt_demand_table(tmp_path, capsys):
    bad = tmp_path / "demand.csv"
    bad.write_text(dpath("slow_demand.csv").read_text().replace("1,1,1", "1,2,1"))
    assert main(["validate", str(bad)]) == 1
    assert "error" in capsys.readouterr().out


def test_validate_reports_cross_reference_breaks(tmp_path, capsys):
    text = dpath("excerpt_intersection.xml").read_text()
    lopsided = "\n".join(
        line for line in text.splitlines() if not line.strip().startswith("<road>WEST")
    )
    bad = tmp_path / "intersection.xml"
    bad.write_text(lopsided)
    code = main(
        ["validate", str(bad), str(dpath("excerpt_signals.xml")), str(dpath("excerpt_demand.csv"))]
    )
    printed = capsys.readouterr().out
    assert code == 1
    assert "WEST" in printed


def test_unreadable_path_fails_cleanly(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.xml")]) == 1
    assert "error" in capsys.readouterr().out
