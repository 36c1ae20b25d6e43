"""Command-line interface for the FedExProx laboratory.

Usage:
  python -m fedexprox run --config CONFIG
  python -m fedexprox run --preset NAME [--n N] [--theta THETA] [--gamma GAMMA]
                          [--seed SEED] [--iterations K] [--output DIR]
  python -m fedexprox compare A.csv B.csv --threshold T
  python -m fedexprox rates (--config CONFIG | --preset NAME)

Defaults for the output directory, log level and worker count are read from
a .env file (FEDEXPROX_OUTPUT_DIR, FEDEXPROX_LOG_LEVEL, FEDEXPROX_WORKERS).

Exit codes: 0 success, 2 validation failure, 3 oracle failure, 1 anything else.
"""
from __future__ import annotations

import argparse
import asyncio
import logging
import sys
from typing import List, Optional

from .config import EnvironmentConfig, load_environment, load_experiment_config
from .const import (
    ANSI_BLUE,
    ANSI_BOLD,
    ANSI_GREEN,
    ANSI_RED,
    ANSI_RESET,
    ANSI_YELLOW,
    EXIT_OK,
    PRESETS,
    STARTUP_MESSAGE,
    STATUS_OK,
)
from .errors import FedExProxError
from .harness import (
    async_run_experiment,
    build_preset,
    compare_traces,
    exit_code_for,
    resolve_problem,
)
from .models import ExperimentConfig, RateReport
from .theory import build_rate_report

_LOGGER = logging.getLogger(__name__)


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="fedexprox",
        description="Federated proximal-optimization laboratory",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--log-level",
        help="Logging level (overrides FEDEXPROX_LOG_LEVEL)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Run an experiment")
    source = run_parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="Experiment configuration file")
    source.add_argument("--preset", choices=PRESETS, help="Named preset experiment")
    run_parser.add_argument("--n", type=int, help="Number of clients")
    run_parser.add_argument("--theta", type=float, help="Curvature of the separable preset")
    run_parser.add_argument("--gamma", type=float, help="Single local step size")
    run_parser.add_argument("--seed", type=int, help="Problem seed")
    run_parser.add_argument("--iterations", type=int, help="Number of rounds K")
    run_parser.add_argument("--output", help="Output directory (overrides FEDEXPROX_OUTPUT_DIR)")
    run_parser.add_argument("--workers", type=int, help="Concurrent runs (overrides FEDEXPROX_WORKERS)")

    compare_parser = subparsers.add_parser("compare", help="Compare two trace CSVs")
    compare_parser.add_argument("csv_a")
    compare_parser.add_argument("csv_b")
    compare_parser.add_argument("--threshold", type=float, required=True)

    rates_parser = subparsers.add_parser("rates", help="Print the rate constants of an experiment")
    rates_source = rates_parser.add_mutually_exclusive_group(required=True)
    rates_source.add_argument("--config", help="Experiment configuration file")
    rates_source.add_argument("--preset", choices=PRESETS, help="Named preset experiment")
    rates_parser.add_argument("--n", type=int)
    rates_parser.add_argument("--theta", type=float)
    rates_parser.add_argument("--gamma", type=float)
    rates_parser.add_argument("--seed", type=int)

    return parser.parse_args(argv)


def _experiment(args: argparse.Namespace, env: EnvironmentConfig) -> ExperimentConfig:
    """Build the experiment named on the command line."""
    output_dir = getattr(args, "output", None) or env.output_dir
    if args.config:
        cfg = load_experiment_config(args.config, output_dir=output_dir)
        if getattr(args, "output", None):
            cfg.output_dir = args.output
        return cfg
    return build_preset(
        args.preset,
        output_dir=output_dir,
        n=args.n,
        theta=args.theta,
        gamma=args.gamma,
        seed=args.seed,
        iterations=getattr(args, "iterations", None),
    )


def _format(value: Optional[float]) -> str:
    """Format an optional constant for the rates table."""
    return "n/a" if value is None else f"{value:.6g}"


def print_rate_table(reports: List[RateReport]) -> None:
    """Print a formatted table of rate reports."""
    if not reports:
        print("No rate reports.")
        return

    header = (
        f"{ANSI_BOLD}{'gamma':<10} | {'tau':<5} | {'L_max':<12} | {'L_gamma':<12} | "
        f"{'L_gamma_tau':<12} | {'alpha_opt':<12} | {'C_opt':<12} | {'speedup':<10} | "
        f"{'bound':<10}{ANSI_RESET}"
    )
    print("\n" + header)
    print("-" * len(header.replace(ANSI_BOLD, "").replace(ANSI_RESET, "")))

    for report in reports:
        speedup = _format(report.speedup_vs_fedprox)
        bound = report.speedup_lower_bound
        if report.speedup_vs_fedprox is not None and bound is not None:
            color = ANSI_GREEN if report.speedup_vs_fedprox >= bound else ANSI_RED
            speedup = f"{color}{speedup:<10}{ANSI_RESET}"
        else:
            speedup = f"{ANSI_YELLOW}{speedup:<10}{ANSI_RESET}"
        print(
            f"{ANSI_BLUE}{report.gamma:<10g}{ANSI_RESET} | "
            f"{report.tau:<5} | "
            f"{_format(report.L_max):<12} | "
            f"{_format(report.L_gamma):<12} | "
            f"{_format(report.L_gamma_tau):<12} | "
            f"{_format(report.alpha_opt):<12} | "
            f"{_format(report.C_opt):<12} | "
            f"{speedup} | "
            f"{_format(bound):<10}"
        )
        if report.fedexp_gain is not None:
            lo, hi = report.fedexp_worst_ratio_bounds
            print(f"{'':<10}   gain L_max/C = {report.fedexp_gain:.6g} in [{lo:.6g}, {hi:.6g}]")
            print(f"{'':<10}   FedExP worst case C = {_format(report.fedexp_worst_case)}")
        if report.strongly_convex_rate is not None:
            print(f"{'':<10}   mu = {report.mu:.6g}, contraction = {report.strongly_convex_rate:.12g}")


async def _run(args: argparse.Namespace, env: EnvironmentConfig) -> int:
    """Execute the run command."""
    cfg = _experiment(args, env)
    result = await async_run_experiment(cfg, workers=args.workers or env.workers)
    print(f"Wrote {len(result.csv_paths)} traces and {result.meta_path}")
    for label, trace in result.traces.items():
        print(f"  - {label}: {trace.status}, {len(trace)} rounds")
    return EXIT_OK


def _compare(args: argparse.Namespace) -> int:
    """Execute the compare command."""
    comparison = compare_traces(args.csv_a, args.csv_b, args.threshold)
    if comparison.status != STATUS_OK:
        print(
            f"{comparison.status}: rounds_a={comparison.rounds_a} rounds_b={comparison.rounds_b}"
        )
        return EXIT_OK
    print(
        f"speedup={comparison.speedup!r} rounds_a={comparison.rounds_a} rounds_b={comparison.rounds_b}"
    )
    return EXIT_OK


def _rates(args: argparse.Namespace, env: EnvironmentConfig) -> int:
    """Execute the rates command."""
    cfg = _experiment(args, env)
    problem = resolve_problem(cfg.problem)
    reports = []
    seen = set()
    for variant in cfg.variants:
        key = (variant.gamma, variant.tau or problem.n)
        if key in seen:
            continue
        seen.add(key)
        reports.append(build_rate_report(problem, key[0], key[1]))
    print_rate_table(reports)
    return EXIT_OK


async def main(argv: Optional[List[str]] = None) -> int:
    """Run the command-line interface and return the exit code."""
    try:
        env = load_environment()
    except FedExProxError as error:
        print(f"error: {error}", file=sys.stderr)
        return exit_code_for(error)

    args = parse_arguments(argv)
    logging.basicConfig(
        level=(args.log_level or env.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    _LOGGER.info(STARTUP_MESSAGE)

    try:
        if args.command == "run":
            return await _run(args, env)
        if args.command == "compare":
            return _compare(args)
        return _rates(args, env)
    except FedExProxError as error:
        print(f"error: {error}", file=sys.stderr)
        return exit_code_for(error)
    except Exception as error:  # pylint: disable=broad-except
        _LOGGER.exception("Unexpected error")
        print(f"error: unexpected: {error}", file=sys.stderr)
        return exit_code_for(error)


def cli() -> None:
    """Console entry point."""
    sys.exit(asyncio.run(main()))
