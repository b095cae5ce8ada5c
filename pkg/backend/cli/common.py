"""
Shared command helpers: config and scene loading, common flags.
"""

import argparse
import logging
from pathlib import Path
from typing import Optional, Tuple

from backend.models.simulation import Scene
from backend.services.scene_service import canonical_pile, load_scene
from config.run_config import RunConfig, load_run_config
from config.settings import settings

logger = logging.getLogger(__name__)


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def add_config_argument(parser: argparse.ArgumentParser):
    parser.add_argument(
        "config",
        nargs="?",
        default=None,
        help=f"Run config JSON (default: {settings.default_config_path})",
    )


def add_run_arguments(parser: argparse.ArgumentParser):
    """Flags shared by the multi-run commands."""
    parser.add_argument("--runs", type=int, default=1, help="Seeded runs per variant")
    parser.add_argument("--seed", type=int, default=None, help="First seed of the seed list")
    parser.add_argument("--cycles", type=int, default=None, help="Planning cycles per run")
    parser.add_argument("--workers", type=int, default=1, help="Parallel worker processes")
    parser.add_argument("--out", default=None, help="Output directory")


def load_inputs(config_path: Optional[str]) -> Tuple[RunConfig, Scene]:
    """
    Load the run config and its scene.

    Without ``scene_path`` the canonical pile is used.
    """
    config = load_run_config(config_path or settings.default_config_path)
    if config.scene_path:
        scene = load_scene(config.scene_path)
    else:
        logger.info("No scene_path configured, using the canonical pile")
        scene = canonical_pile()
    return config, scene


def output_dir(config: RunConfig, flag: Optional[str]) -> Path:
    out = Path(flag or config.output_dir or settings.default_output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out
