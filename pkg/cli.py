"""
Command-line front end: run, verify and sweep scenarios.

Exit codes: 0 on success, 1 on infeasibility, solver failure or a failed
check, 2 on configuration errors such as an unknown scenario.
"""
import argparse
import logging
import sys
from typing import List, Optional, Sequence

from config import LOG_FORMAT, settings
from core.errors import ConfigurationError, CoopMpcError, InfeasibleProblemError
from services.run_service import RunConfig, run_service

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def parse_horizons(values: Sequence[str]) -> List[int]:
    """Horizons given as separate values, comma separated, or both."""
    horizons = []
    for value in values:
        for part in value.split(","):
            if part.strip():
                try:
                    horizons.append(int(part))
                except ValueError:
                    raise ConfigurationError(f"horizon '{part}' is not an integer", "horizons")
    if not horizons:
        raise ConfigurationError("at least one horizon is required", "horizons")
    if any(h < 0 for h in horizons):
        raise ConfigurationError("horizons must be non-negative", "horizons")
    return horizons


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coopmpc", description=__doc__.splitlines()[1])
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser):
        sub.add_argument("--scenario", required=True, help="Built-in scenario name or path to a YAML config")
        sub.add_argument("--steps", type=int, default=None, help="Closed-loop steps")
        sub.add_argument("--out", default=None, help=f"Output directory (default {settings.output_dir}, env OUTPUT_DIR)")
        sub.add_argument("--seed", type=int, default=None, help="Seed of the randomised checks")
        sub.add_argument("--plots", action="store_true", help="Render plots from the trace")
        sub.add_argument("--soften", action="store_true", default=None, help="Soften mid-run infeasible problems")

    common(commands.add_parser("run", help="Run a scenario in closed loop"))
    common(commands.add_parser("verify", help="Run the diagnostic suite of a scenario"))
    sweep = commands.add_parser("sweep", help="Accumulated cost against the prediction horizon")
    common(sweep)
    sweep.add_argument("--horizons", nargs="+", required=True, help="Horizons, e.g. 2 4 8 or 2,4,8")
    sweep.add_argument("--k", type=int, default=50, help="Steps of accumulated cost")
    return parser


def run_config(args: argparse.Namespace) -> RunConfig:
    if args.steps is not None and args.steps < 0:
        raise ConfigurationError(f"steps must be non-negative, got {args.steps}", "steps")
    return RunConfig(
        scenario=args.scenario,
        steps=args.steps,
        out_dir=args.out,
        seed=args.seed,
        plots=args.plots,
        soften=args.soften,
    )


def cmd_run(config: RunConfig) -> int:
    result = run_service.run(config)
    print(f"{result.scenario}: {result.steps} steps, trace {result.trace_path}, metrics {result.metrics_path}")
    for plot in result.plots:
        print(f"  plot {plot}")
    return EXIT_OK


def cmd_verify(config: RunConfig) -> int:
    result = run_service.verify(config)
    for check in result.checks:
        print(f"{check.status.upper():5} {check.name:24} {check.detail}")
    print(f"{result.scenario}: {'PASSED' if result.passed else 'FAILED'}")
    return result.exit_code


def cmd_sweep(config: RunConfig, horizons: Sequence[int], k: int) -> int:
    result = run_service.sweep(config, horizons, k)
    for row in result.rows:
        line = f"N={row.horizon:4d}  J_K={row.performance}  baseline={row.baseline}"
        print(line if row.ok else f"N={row.horizon:4d}  failed: {row.error}")
    print(f"{result.scenario}: table written to {result.path} ({'monotone' if result.monotone else 'not monotone'})")
    return result.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format=LOG_FORMAT)
    try:
        config = run_config(args)
        if args.command == "run":
            return cmd_run(config)
        if args.command == "verify":
            return cmd_verify(config)
        return cmd_sweep(config, parse_horizons(args.horizons), args.k)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleProblemError as e:
        print(f"error: infeasible at step {e.step}: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except CoopMpcError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
