"""Command line entry point.

    sprayctl spray <scenario> [--out trace.csv] [--format csv|json] [--debug-qp DIR] [--no-plot]
    sprayctl ik <scenario> [--out report.json] [--batch N --seed S]
    sprayctl check <chain.json>

Scenario arguments may also name a shipped scenario (``sprayctl spray spray_slow``).
Exit codes: 0 success, 1 validation error, 2 solver failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import InfeasibleError, SprayctlError
from .kinematics import load_chain
from .qp import QpDumper
from .scenario import (
    CONTINUOUS,
    SELECTIVE,
    ik_summary,
    load_scenario,
    run_continuous,
    run_random_batch,
    run_selective,
    shipped_scenarios,
)
from .trace import TraceIOError, emit_trace, reports_to_csv, trace_to_csv, trace_to_json

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_IO = 3

log = logging.getLogger("sprayctl")


def _resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    shipped = shipped_scenarios()
    if arg in shipped:
        return shipped[arg]
    return path  # let the loader raise the I/O error with the path


def _figure_path(out: Path) -> Path:
    return out.with_suffix(".png")


def _write_text(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        out.write_text(text)
    except OSError as exc:
        raise TraceIOError(f"{out}: {exc.strerror or exc}") from exc


def _cmd_spray(args: argparse.Namespace) -> int:
    scenario = load_scenario(_resolve_scenario(args.scenario))
    if scenario.mode != CONTINUOUS:
        log.error("%s is a %s scenario; use `sprayctl ik`", args.scenario, scenario.mode)
        return EXIT_VALIDATION
    hook = QpDumper(args.debug_qp) if args.debug_qp else None
    trace = run_continuous(scenario, on_qp=hook)
    if args.out is None:
        sys.stdout.write(trace_to_csv(trace) if args.format == "csv" else trace_to_json(trace))
    else:
        emit_trace(trace, args.format, args.out)
        if not args.no_plot:
            from .plotting import plot_trace

            fig = plot_trace(trace, _figure_path(args.out), title=scenario.name)
            log.info("figure written to %s", fig)
    if trace.status != "ok":
        log.error("%s", trace.status)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_ik(args: argparse.Namespace) -> int:
    scenario = load_scenario(_resolve_scenario(args.scenario))
    if scenario.mode != SELECTIVE:
        log.error("%s is a %s scenario; use `sprayctl spray`", args.scenario, scenario.mode)
        return EXIT_VALIDATION
    if args.batch is not None:
        summary = run_random_batch(scenario, count=args.batch, seed=args.seed)
        _write_text(json.dumps(summary, indent=1) + "\n", args.out)
        log.info("batch success rate %.3f over %d targets", summary["success_rate"], summary["count"])
        return EXIT_OK
    hook = QpDumper(args.debug_qp) if args.debug_qp else None
    reports = run_selective(scenario, on_qp=hook)
    if args.format == "csv":
        text = reports_to_csv(reports)
    else:
        text = json.dumps(ik_summary(reports), indent=1) + "\n"
    _write_text(text, args.out)
    if args.out is not None and not args.no_plot:
        from .plotting import plot_ik_reports

        plot_ik_reports(reports, _figure_path(args.out), title=scenario.name)
    if any(r.termination.value == "SolverFailure" for r in reports):
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_check(args: argparse.Namespace) -> int:
    chain = load_chain(args.chain)
    info = {"dof": chain.dof, "reach": round(chain.reach(), 9), "frames": sorted(chain.frames)}
    print(json.dumps(info))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sprayctl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def outputs(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", type=Path, help="output file (default: stdout); a .png figure is written beside it")
        p.add_argument("--format", choices=("csv", "json"), default="csv" if p.prog.endswith("spray") else "json")
        p.add_argument("--debug-qp", type=Path, metavar="DIR", help="dump every cascade-level QP as JSON into DIR")
        p.add_argument("--no-plot", action="store_true", help="skip the figure")

    p = sub.add_parser("spray", help="closed-loop continuous spraying run")
    p.add_argument("scenario")
    outputs(p)
    p.set_defaults(func=_cmd_spray)

    p = sub.add_parser("ik", help="prioritized IK for a selective-spraying task stack")
    p.add_argument("scenario")
    outputs(p)
    p.add_argument("--batch", type=int, metavar="N", help="solve N random reachable targets instead")
    p.add_argument("--seed", type=int, default=0, help="seed for --batch (unsigned 64-bit)")
    p.set_defaults(func=_cmd_ik)

    p = sub.add_parser("check", help="validate a chain file and print dof/reach")
    p.add_argument("chain", type=Path)
    p.set_defaults(func=_cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="sprayctl: %(message)s")
    if getattr(args, "seed", 0) is not None and not 0 <= getattr(args, "seed", 0) < 2**64:
        log.error("--seed must be an unsigned 64-bit integer")
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except InfeasibleError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except (TraceIOError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except (SprayctlError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
