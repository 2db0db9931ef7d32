"""Benchmark command line.

    python cli.py --map maps/random-32-32-20.map --scen scens/random-32-32-20-random-1.scen \
        --agents 20,40 --solver dag ecbs --window 1 2 --subopt 2 --out results.csv
"""

import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from app.env import get_settings
from app.libs.bench import ExperimentConfig, run_benchmark, summarize_results
from app.libs.errors import WinMapfError
from app.libs.executor import Solver
from app.libs.model import SuboptFactor

logger = logging.getLogger("winmapf.cli")


def _agent_counts(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"agent counts must be comma-separated integers, got {text!r}")


def _subopt(text: str) -> str:
    try:
        return str(SuboptFactor.parse(text))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(description="Run windowed MAPF benchmark episodes and write one CSV row each.")
    parser.add_argument("--map", type=Path, help="benchmark .map file")
    parser.add_argument("--scen", nargs="+", type=Path, default=[], help="one or more benchmark .scen files")
    parser.add_argument("--agents", type=_agent_counts, default=[], help="comma-separated agent counts, e.g. 10,20")
    parser.add_argument("--solver", nargs="+", choices=[s.value for s in Solver], default=[Solver.DAG.value])
    parser.add_argument("--window", nargs="+", type=int, default=[1], help="window sizes W")
    parser.add_argument("--subopt", nargs="+", type=_subopt, default=["1"], help="suboptimalities, e.g. 1 3/2 2")
    parser.add_argument("--timeout-s", type=float, default=settings.timeout_s)
    parser.add_argument("--iteration-cap", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0, help="instance sampling seed")
    parser.add_argument("--random-instances", type=int, default=0, help="sample K random task sets per agent count")
    parser.add_argument("--deadlock-suite", action="store_true", help="run the built-in deadlock suite")
    parser.add_argument("--blocked-goal", action="store_true", help="append the blocked-goal corridors to the suite")
    parser.add_argument("--out", type=Path, default=None, help="CSV path (stdout when omitted)")
    parser.add_argument("--trace-dir", type=Path, default=settings.trace_dir)
    parser.add_argument("--workers", type=int, default=settings.workers)
    parser.add_argument("--no-timings", action="store_true", help="blank timing columns for reproducible CSV")
    parser.add_argument("--summary", action="store_true", help="also print the per-setting summary table")
    parser.add_argument("--log-level", default=settings.log_level)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        map_path=args.map,
        scen_paths=args.scen,
        agent_counts=args.agents,
        solvers=args.solver,
        windows=args.window,
        subopts=args.subopt,
        timeout_s=args.timeout_s,
        iteration_cap=args.iteration_cap,
        seed=args.seed,
        random_instances=args.random_instances,
        deadlock_suite=args.deadlock_suite,
        include_blocked_goal=args.blocked_goal,
        out=args.out,
        trace_dir=args.trace_dir,
        workers=args.workers,
        record_timings=not args.no_timings,
    )


def main(argv: list[str] | None = None) -> int:
    """Exit code 0 unless an episode raised an internal error; solver failures are rows."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
    except ValidationError as e:
        print(f"Invalid arguments: {e}", file=sys.stderr)
        return 2
    try:
        frame = run_benchmark(config)
    except (WinMapfError, OSError) as e:
        logger.error(f"Benchmark aborted: {e}")
        return 1
    if config.out is None:
        frame.to_csv(sys.stdout, index=False)
    else:
        logger.info(f"Wrote {len(frame)} rows to {config.out}")
    if args.summary:
        print(summarize_results(frame).to_string(index=False), file=sys.stderr)
    return 1 if (frame["status"] == "error").any() else 0


if __name__ == "__main__":
    sys.exit(main())
