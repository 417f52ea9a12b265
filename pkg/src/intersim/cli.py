"""Command-line front end: ``run`` one scenario, ``sweep`` many, or
``validate`` configuration files without simulating anything."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import (
    parse_demand_table,
    parse_intersection_spec,
    parse_signal_program,
    validate_cross_references,
)
from .engine import RunParams, emit_summary, run_simulation, run_sweep
from .errors import SimError
from .intersection import TurnPolicy


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intersim",
        description="Deterministic single-intersection traffic simulator "
        "mixing signal-following human drivers with reservation-holding "
        "connected vehicles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one seeded scenario")
    run.add_argument("--intersection", required=True, help="intersection layout XML")
    run.add_argument("--signals", required=True, help="signal program XML")
    run.add_argument("--demand", required=True, help="arrival table CSV")
    run.add_argument("--cav-ratio", type=float, required=True,
                     help="probability each vehicle is connected, in [0, 1]")
    run.add_argument("--cav-policy", choices=("c", "p", "r"), required=True,
                     help="lane policy for connected vehicles: current/permissive/restrictive")
    run.add_argument("--hv-policy", choices=("c", "p", "r"), required=True,
                     help="lane policy for human drivers")
    run.add_argument("--actuated", action="store_true",
                     help="gap-out greens from stop-bar detections")
    run.add_argument("--adaptive", action="store_true",
                     help="retime gaps and max greens each cycle (implies --actuated)")
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--out", required=True, help="summary CSV destination")
    run.add_argument("--vehicle-log", default=None, help="optional per-vehicle CSV")
    run.add_argument("--signal-trace", default=None, help="optional per-tick indication CSV")
    run.add_argument("--reservation-log", default=None, help="optional reservation outcome CSV")

    sweep = sub.add_parser("sweep", help="run a grid of scenarios from a JSON spec")
    sweep.add_argument("--spec", required=True, help="sweep description JSON")
    sweep.add_argument("--out", required=True, help="output directory")

    validate = sub.add_parser("validate", help="check configuration files")
    validate.add_argument("paths", nargs="+", help="any mix of the three file kinds")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    params = RunParams(
        cav_ratio=args.cav_ratio,
        cav_policy=TurnPolicy.from_code(args.cav_policy),
        hv_policy=TurnPolicy.from_code(args.hv_policy),
        actuated=args.actuated,
        adaptive=args.adaptive,
        seed=args.seed,
        vehicle_log=args.vehicle_log,
        signal_trace=args.signal_trace,
        reservation_log=args.reservation_log,
    )
    summary = run_simulation(args.intersection, args.signals, args.demand, params)
    emit_summary(summary, args.out)
    delay = "n/a" if summary.mean_delay is None else f"{summary.mean_delay:.1f} s"
    flag = "*" if summary.spillback else ""
    print(
        f"mean delay {delay}{flag}  "
        f"(completed {summary.completed}/{summary.scheduled}, seed {summary.seed})"
    )
    print(f"summary written to {args.out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    out = run_sweep(args.spec, args.out)
    print(f"sweep results in {out}/runs.csv and {out}/aggregate.csv")
    return 0


def _sniff(text: str, path: Path) -> str:
    if path.suffix.lower() == ".csv":
        return "demand"
    if "<intersection>" in text:
        return "intersection"
    if "<ring>" in text or "<root>" in text:
        return "signals"
    return "demand"


def _cmd_validate(args: argparse.Namespace) -> int:
    docs: dict[str, object] = {}
    failed = False
    for raw in args.paths:
        path = Path(raw)
        try:
            text = path.read_text()
        except OSError as exc:
            print(f"{path}: error: {exc}")
            failed = True
            continue
        kind = _sniff(text, path)
        parser = {
            "intersection": parse_intersection_spec,
            "signals": parse_signal_program,
            "demand": parse_demand_table,
        }[kind]
        try:
            docs[kind] = parser(text)
            print(f"{path}: {kind} parsed")
        except SimError as exc:
            print(f"{path}: error: {exc}")
            failed = True
    if "intersection" in docs:
        report = validate_cross_references(
            docs["intersection"],
            docs.get("signals"),
            docs.get("demand"),
        )
        print(report)
        failed = failed or not report.ok
    return 1 if failed else 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_validate(args)
    except SimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
