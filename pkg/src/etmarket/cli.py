"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path
from typing import Any

from .equilibrium import solve_equilibrium
from .errors import EtMarketError, ValidationError
from .pbs import derive_payoffs
from .scenario import Scenario, load_scenario
from .sim import run_slots
from .valuation import rank_valuations
from .verify import cmd_verify

TRACE_HEADER = ["slot", "winner_id", "realized_mev", "pnl", "exercised_self"]

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _flatten(obj: Any, prefix: str = "") -> list[tuple[str, str]]:
    if isinstance(obj, dict):
        rows = []
        for k in sorted(obj, key=str):
            rows += _flatten(obj[k], f"{prefix}.{k}" if prefix else str(k))
        return rows
    if isinstance(obj, list) and obj and isinstance(obj[0], dict):
        rows = []
        for i, v in enumerate(obj):
            rows += _flatten(v, f"{prefix}[{i}]")
        return rows
    if isinstance(obj, float):
        return [(prefix, f"{obj:.12g}")]
    if isinstance(obj, list):
        return [(prefix, ", ".join(str(x) for x in obj))]
    return [(prefix, "null" if obj is None else str(obj))]


def render(obj: Any, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"
    rows = _flatten(obj)
    width = max((len(k) for k, _ in rows), default=0)
    return "".join(f"{k:<{width}}  {v}\n" for k, v in rows)


def _emit(obj: Any, args) -> None:
    text = render(obj, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _scenario(args) -> Scenario:
    if not args.scenario:
        raise ValidationError("--scenario is required for this command")
    sc = load_scenario(args.scenario)
    if args.__dict__.get("lam") is not None:
        if not 0 <= args.lam <= 1:
            raise ValidationError(f"--lambda must lie in [0, 1], got {args.lam}")
        sc = dataclasses.replace(sc, lam=args.lam)
    return sc


def cmd_valuate(args) -> int:
    sc = _scenario(args)
    _emit({"scenario": sc.name, **rank_valuations(sc.market).to_dict()}, args)
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    sc = _scenario(args)
    eq = solve_equilibrium(sc.market, sc.lam)
    _emit({"scenario": sc.name, **eq.to_dict()}, args)
    return EXIT_OK


def cmd_pbs_derive(args) -> int:
    sc = _scenario(args)
    _emit({"scenario": sc.name, "derived": [d.to_dict() for d in derive_payoffs(sc.market)]}, args)
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    slots = args.slots or (sc.sim.slots if sc.sim else None)
    if not slots or slots < 1:
        raise ValidationError("simulate needs a positive slot count (--slots or sim.slots)")
    seed = args.seed if args.seed is not None else (sc.sim.seed if sc.sim else 0)
    trace = bool(args.trace_csv) or (sc.sim.trace if sc.sim else False)
    eq = solve_equilibrium(sc.market, sc.lam)
    rep = run_slots(sc.market, eq, slots, seed, trace=trace)
    if args.trace_csv:
        with open(args.trace_csv, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for o in rep.trace:
                w.writerow([o.slot, o.winner_id, repr(o.realized_mev), repr(o.pnl), str(o.exercised_self).lower()])
    out = rep.to_dict()
    if not (sc.sim and sc.sim.trace):
        out.pop("trace", None)
    _emit({"scenario": sc.name, "equilibrium": eq.to_dict(), "report": out}, args)
    return EXIT_OK


def cmd_verify_cli(args) -> int:
    suite = args.suite or args.scenario
    report, code = cmd_verify(suite)
    _emit(report.to_dict(), args)
    return code


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--scenario", help="scenario JSON file")
    shared.add_argument("--out", help="write the report here instead of stdout")
    shared.add_argument("--format", choices=["json", "text"], default="json")
    shared.add_argument("--lambda", dest="lam", type=float, help="price selection in [0, 1]")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--slots", type=int)

    p = argparse.ArgumentParser(prog="etmarket", description="Execution-ticket market solver and simulator")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("valuate", parents=[shared], help="maximal prices and the top set").set_defaults(fn=cmd_valuate)
    sub.add_parser("equilibrium", parents=[shared], help="price, holdings and capture ratio").set_defaults(
        fn=cmd_equilibrium
    )
    sub.add_parser("pbs-derive", parents=[shared], help="derived PBS payoff laws").set_defaults(fn=cmd_pbs_derive)
    s = sub.add_parser("simulate", parents=[shared], help="seeded slot simulation")
    s.add_argument("--trace-csv", help="write the per-slot trace as CSV")
    s.set_defaults(fn=cmd_simulate)
    v = sub.add_parser("verify", parents=[shared], help="run a verification suite (built-in by default)")
    v.add_argument("--suite", help="suite JSON file")
    v.set_defaults(fn=cmd_verify_cli)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.fn(args)
    except EtMarketError as e:
        # Parse/schema/validation problems and solver errors on bad inputs alike.
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
