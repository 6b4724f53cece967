"""Command-line entry point: aggregate, disaggregate, simulate, oracle-check, emit-plot.

Exit codes: 0 success, 2 invalid input, 3 problem too large, 4 infeasible case
or dispatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import io
from .aggregation import MODELS, InfeasibleCaseError, PreconditionError, aggregate
from .disaggregation import DispatchInfeasibleError, SetpointOutOfBandError, parse_strategy, run_rolling
from .harness import SAMPLE_MODES, run_comparison
from .lp import LPError
from .model import CaseValidationError
from .oracle import VARIANTS, GridError, GridSpec, verify_band
from .scenario import ScenarioSizeError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_TOO_LARGE = 3
EXIT_INFEASIBLE = 4

log = logging.getLogger("flexagg")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags already; keep it but route through our handler
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _csv_list(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flexagg", description="Power flexibility aggregation with energy storage.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver details to stderr")
    p.add_argument("--backend", choices=("highs", "simplex"), default=None, help="LP solver (default highs)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("aggregate", help="compute a flexibility band")
    a.add_argument("--case", required=True, help="case file or builtin:NAME")
    a.add_argument("--model", required=True, choices=MODELS)
    a.add_argument("--mode", choices=("full", "lazy"), default="full")
    a.add_argument("--out", required=True, help="result file (JSON)")

    d = sub.add_parser("disaggregate", help="dispatch devices along a setpoint trajectory")
    d.add_argument("--case", required=True)
    d.add_argument("--result", required=True, help="result file from `aggregate`")
    d.add_argument("--trajectory", required=True, help="JSON/CSV file or comma-separated setpoints")
    d.add_argument("--strategy", default=None,
                   help="enumeration, rectangular, envelope or myopic, optionally with -baseline; "
                        "defaults to the strategy matching the result's model")
    d.add_argument("--out", required=True, help="dispatch log (JSON)")

    s = sub.add_parser("simulate", help="compare models and strategies on sampled trajectories")
    s.add_argument("--case", required=True)
    s.add_argument("--models", type=_csv_list, default=None, help="comma-separated; default all that apply")
    s.add_argument("--strategies", type=_csv_list, default=[], help="comma-separated strategy names")
    s.add_argument("--n", type=_nonneg_int, default=100, help="number of trajectories")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sample-modes", type=_csv_list, default=["uniform", "vertex"],
                   help=f"cycle of sampling modes from {', '.join(SAMPLE_MODES)}")
    s.add_argument("--mode", choices=("full", "lazy"), default="full")
    s.add_argument("--out", required=True, help="report (JSON); timings go to <out>.timing.json")

    o = sub.add_parser("oracle-check", help="check a band against the grid-based reachability oracle")
    o.add_argument("--case", required=True)
    o.add_argument("--band", required=True, help="result file or {lower, upper} JSON")
    o.add_argument("--grid-step", type=_positive, default=0.05, help="power and SoC grid step")
    o.add_argument("--variant", choices=VARIANTS, default="conservative")

    e = sub.add_parser("emit-plot", help="write band curves as CSV")
    e.add_argument("--result", required=True, action="append", help="result file; repeat for several")
    e.add_argument("--out", required=True, help="CSV with columns period, lower, upper, model")
    return p


def _aggregate(args) -> int:
    case = io.load_case(args.case)
    res = aggregate(case, args.model, args.mode, args.backend)
    io.save_result(res, args.out)
    print(f"{res.model}: objective {res.objective:.9g}")
    return EXIT_OK


def _disaggregate(args) -> int:
    case = io.load_case(args.case)
    res = io.load_result(args.result)
    if res.case_name and res.case_name != case.name:
        log.warning("result was computed for %r, case is %r", res.case_name, case.name)
    if args.strategy is not None:
        parse_strategy(args.strategy)
    traj = io.load_trajectory(args.trajectory, case.T)
    out = run_rolling(case, res, traj, args.strategy, args.backend)
    io.save_log(out, args.out)
    print(f"{out.strategy}: {case.T} periods dispatched, cost {out.total_cost:.9g}")
    return EXIT_OK


def _simulate(args) -> int:
    for m in args.sample_modes:
        if m not in SAMPLE_MODES:
            raise ValueError(f"unknown sampling mode {m!r}; choose from {', '.join(SAMPLE_MODES)}")
    for m in args.models or ():
        if m not in MODELS:
            raise ValueError(f"unknown model {m!r}; choose from {', '.join(MODELS)}")
    for s in args.strategies:
        parse_strategy(s)
    case = io.load_case(args.case)
    rep = run_comparison(case, args.models, args.strategies, args.n, args.seed, args.sample_modes,
                         args.mode, args.backend)
    Path(args.out).write_text(io.dumps(rep.to_dict()))
    Path(f"{args.out}.timing.json").write_text(json.dumps(rep.timing_dict(), indent=2) + "\n")
    for m, v in rep.objectives.items():
        print(f"{m:>12}: {v:.9g}")
    for s, v in rep.strategies.items():
        print(f"{s:>12}: feasible {v.feasibility_rate:.0%}, average cost {v.average_cost:.6g}")
    return EXIT_OK


def _oracle_check(args) -> int:
    case = io.load_case(args.case)
    band = io.load_band(args.band)
    ok = verify_band(case, band, GridSpec(args.grid_step, args.grid_step), args.variant, args.backend)
    print(f"{args.variant} oracle: band {'servable' if ok else 'NOT servable'}")
    return EXIT_OK if ok else EXIT_INFEASIBLE


def _emit_plot(args) -> int:
    io.write_band_csv([io.load_result(r) for r in args.result], args.out)
    return EXIT_OK


_COMMANDS = {
    "aggregate": _aggregate,
    "disaggregate": _disaggregate,
    "simulate": _simulate,
    "oracle-check": _oracle_check,
    "emit-plot": _emit_plot,
}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"flexagg: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ScenarioSizeError, GridError) as exc:
        code, msg = EXIT_TOO_LARGE, str(exc)
    except (InfeasibleCaseError, DispatchInfeasibleError) as exc:
        code, msg = EXIT_INFEASIBLE, str(exc)
    except SetpointOutOfBandError as exc:
        code, msg = EXIT_INVALID, str(exc)
    except FileNotFoundError as exc:
        code, msg = EXIT_INVALID, f"file not found: {exc.filename}"
    except (CaseValidationError, PreconditionError, ValueError, LPError) as exc:
        code, msg = EXIT_INVALID, str(exc)
    print(f"flexagg {args.command}: error: {msg}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(cli_main())
