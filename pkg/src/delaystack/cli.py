"""``delaystack`` command line.

Exit codes: 0 success, 1 usage or I/O error, 2 blow-up, 3 certificate failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import DelayStackError
from .exprlang import ExprError
from .runs import (EXIT_USAGE, REPRODUCTIONS, parse_values, run_certify, run_reproduce, run_simulate, run_sweep,
                   run_transform)
from .scenario_io import ScenarioError, load_scenario, validate_document


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="delaystack", description="Simulate and certify coupled delay / difference systems.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="solve a scenario; writes trajectory.csv, jumps.txt, trajectory.svg")
    s.add_argument("scenario")
    s.add_argument("-o", "--out", required=True)

    c = sub.add_parser("certify", help="run the scenario's checks; writes report.json")
    c.add_argument("scenario")
    c.add_argument("-o", "--out", required=True)

    r = sub.add_parser("reproduce", help="run a canned example; writes summary.txt and report.json")
    r.add_argument("example", choices=sorted(REPRODUCTIONS))
    r.add_argument("-o", "--out", required=True)

    w = sub.add_parser("sweep", help="repeat certify (or simulate) over parameter values; writes sweep.csv")
    w.add_argument("scenario")
    w.add_argument("--param", required=True)
    w.add_argument("--values", required=True, help="comma-separated numbers")
    w.add_argument("--mode", choices=("certify", "simulate"), default="certify")
    w.add_argument("-o", "--out", required=True)

    t = sub.add_parser("transform", help="write the coupled form of a scenario; writes transform.txt")
    t.add_argument("scenario")
    t.add_argument("--to", choices=("coupled",), default="coupled")
    t.add_argument("-o", "--out", required=True)
    return p


def _read_document(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    validate_document(doc)
    return doc


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return run_simulate(load_scenario(args.scenario), args.out)
        if args.command == "certify":
            return run_certify(load_scenario(args.scenario), args.out)
        if args.command == "reproduce":
            return run_reproduce(args.example, args.out)
        if args.command == "sweep":
            return run_sweep(_read_document(args.scenario), args.param, parse_values(args.values), args.out,
                             args.mode)
        return run_transform(load_scenario(args.scenario), args.out)
    except (DelayStackError, ExprError, OSError) as exc:
        print(f"delaystack: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
