"""
ablate: full utility against one variant per dropped factor.
"""

import argparse
import logging

from backend.cli.common import add_config_argument, add_run_arguments, load_inputs, output_dir
from backend.models.simulation import ABLATION_NAMES
from backend.services.experiment_service import ablate, write_rows
from config.run_config import override

logger = logging.getLogger(__name__)


def add_parser(subparsers):
    parser = subparsers.add_parser("ablate", help="Ablation of utility factors")
    add_config_argument(parser)
    parser.add_argument(
        "--drop",
        nargs="*",
        choices=list(ABLATION_NAMES),
        default=None,
        help="Factors to drop, one variant each (default: all)",
    )
    add_run_arguments(parser)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> int:
    config, scene = load_inputs(args.config)
    config = override(config, seed=args.seed, max_cycles=args.cycles, output_dir=args.out)
    rows = ablate(config, scene, args.drop, args.runs, args.workers)
    path = write_rows(rows, output_dir(config, args.out) / "ablation.csv")
    logger.info(f"✅ ablate: {len(rows)} variants written to {path}")
    return 0
