"""
pilemap command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 configuration or input error.
"""

import argparse
import logging
import sys
from json import JSONDecodeError
from typing import List, Optional

from pydantic import ValidationError

from backend.cli import ablate, benchmark, export_mesh, simulate
from backend.utils.exceptions import PileMapError, SnapshotFormatError
from config.settings import settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pilemap",
        description="Dynamic GPIS mapping and next-best-view planning for pile picking",
    )
    parser.add_argument("--version", action="version", version=settings.app_version)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (simulate, ablate, benchmark, export_mesh):
        command.add_parser(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, configure logging and dispatch to a command.

    Returns:
        int: Process exit code
    """
    logging.basicConfig(level=settings.log_level, format=settings.log_format)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK

    try:
        return args.handler(args)
    except (ValidationError, JSONDecodeError, SnapshotFormatError, FileNotFoundError) as e:
        logger.error(f"❌ Invalid configuration or input: {e}")
        return EXIT_CONFIG
    except PileMapError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"❌ {args.command} failed: {e}", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
