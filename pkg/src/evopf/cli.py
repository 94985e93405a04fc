"""Command line entry point: ``evopf {solve,sweep,verify,dump-program}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .grid import NetworkError, load_network
from .powerflow import verify_opf
from .scenario import ScenarioError, load_scenario, scale_penetration
from .socp import build_fixed_power, dump_program
from .study import StudySpec, emit_plots, read_csv_solutions, run_study

EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2
INPUT_ERRORS = (NetworkError, ScenarioError, FileNotFoundError, json.JSONDecodeError, ValueError)


def _common(p, multi: bool):
    p.add_argument("--network", help="network JSON (default: bundled IEEE 33-bus)")
    p.add_argument("--scenario", help="scenario JSON (default: bundled CAISO-shaped day)")
    p.add_argument("--penetration", type=float, nargs="+" if multi else None,
                   default=[0.0, 0.25, 0.5] if multi else 0.5, help="EV penetration as a fraction")
    p.add_argument("--tou-scenario", type=int, choices=(1, 2, 3, 4), nargs="*" if multi else "?",
                   default=[2] if multi else 2,
                   help="TOU price overlay; omit the value to keep the scenario file prices")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evopf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, multi in (("solve", False), ("sweep", True)):
        p = sub.add_parser(name, help="solve one cell" if not multi else "run a full study")
        _common(p, multi)
        p.add_argument("--model", default="fixed_power",
                       choices=("fixed_power", "fixed_current") + (("both",) if multi else ()))
        p.add_argument("--tol", type=float, default=1e-5, help="fixed-current voltage tolerance (p.u.)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--plots", action="store_true")
        p.add_argument("--verify", action="store_true", help="replay each hour with Newton-Raphson")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--buses", type=int, nargs="+", default=[17, 33], help="buses to plot")
        p.add_argument("--hours", type=int, nargs="+", default=[1], help="hours to plot")

    p = sub.add_parser("verify", help="replay solutions written by solve/sweep")
    p.add_argument("--network")
    p.add_argument("--scenario")
    p.add_argument("--out", required=True, help="directory holding voltages.csv and dispatch.csv")

    p = sub.add_parser("dump-program", help="write the conic instance as text")
    _common(p, False)
    p.add_argument("--out", required=True, help="output file ('-' for stdout)")
    return parser


def _tou_tuple(value):
    if value is None:
        return ()
    return tuple(value) if isinstance(value, list) else (value,)


def _study(args) -> int:
    levels = args.penetration if isinstance(args.penetration, list) else [args.penetration]
    spec = StudySpec(
        network=args.network, scenario=args.scenario, model=args.model,
        penetration_levels=tuple(levels), tou_scenarios=_tou_tuple(args.tou_scenario),
        out=args.out, verify=args.verify, plots=False, workers=args.workers, tol=args.tol,
        report_buses=tuple(args.buses), report_hours=tuple(args.hours),
    )
    result = run_study(spec)
    if args.plots:
        emit_plots(result, args.out)
    for c in result.cells:
        extra = f" ({c.error})" if c.error else ""
        print(f"{c.model:14s} penetration={c.penetration:<5g} tou={c.tou:4s} {c.status}{extra}")
    return EXIT_FAILED if result.failed else EXIT_OK


def _verify(args) -> int:
    network = load_network(args.network)
    scenario = load_scenario(args.scenario, network)
    solutions = read_csv_solutions(args.out, network)
    failed = False
    reports = []
    for (model, level, tou), sol in sorted(solutions.items()):
        scn = scenario if tou == "file" else scenario.with_tou(int(tou))
        rep = verify_opf(network, sol, scn)
        failed |= not rep.passed
        reports.append(f'{{"model": "{model}", "penetration": {level:g}, "tou": "{tou}", "report": {rep.to_json()}}}')
        print(f"{model:14s} penetration={level:<5g} tou={tou:4s} "
              f"{'pass' if rep.passed else 'FAIL'} max_dv={rep.max_v_dev:.3e} failed_hours={rep.failed_hours}")
    Path(args.out, "verification.json").write_text("[\n" + ",\n".join(reports) + "\n]\n")
    return EXIT_FAILED if failed else EXIT_OK


def _dump(args) -> int:
    network = load_network(args.network)
    scenario = load_scenario(args.scenario, network)
    if args.tou_scenario is not None:
        scenario = scenario.with_tou(args.tou_scenario)
    program = build_fixed_power(network, scenario, scale_penetration(scenario.fleets, args.penetration))
    if args.out == "-":
        dump_program(program, sys.stdout)
    else:
        with open(args.out, "w") as fh:
            dump_program(program, fh)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"solve": _study, "sweep": _study, "verify": _verify, "dump-program": _dump}[args.command]
    try:
        return handler(args)
    except INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
