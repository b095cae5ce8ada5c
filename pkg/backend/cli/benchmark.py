"""
benchmark: compare selection strategies over a shared seed list.
"""

import argparse
import logging

from backend.cli.common import add_config_argument, add_run_arguments, load_inputs, output_dir
from backend.models.simulation import Strategy
from backend.services.experiment_service import benchmark, write_rows
from config.run_config import override

logger = logging.getLogger(__name__)


def parse_strategies(value: str):
    """Comma-separated strategy names."""
    try:
        return [Strategy(name.strip()) for name in value.split(",") if name.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def add_parser(subparsers):
    parser = subparsers.add_parser("benchmark", help="Compare selection strategies")
    add_config_argument(parser)
    parser.add_argument(
        "--strategies",
        type=parse_strategies,
        default=[Strategy.FULL, Strategy.RANDOM],
        help="Comma-separated strategies (default: full,random)",
    )
    add_run_arguments(parser)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    config, scene = load_inputs(args.config)
    config = override(config, seed=args.seed, max_cycles=args.cycles, output_dir=args.out)
    rows = benchmark(config, scene, args.strategies, args.runs, args.workers)
    path = write_rows(rows, output_dir(config, args.out) / "benchmark.csv")
    logger.info(f"✅ benchmark: {len(rows)} strategies written to {path}")
    return 0
