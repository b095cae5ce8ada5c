"""Configuration package: process settings and experiment run configs."""

from .run_config import RunConfig, load_run_config, override
from .settings import DEFAULTS_DIR, settings

__all__ = ["DEFAULTS_DIR", "RunConfig", "load_run_config", "override", "settings"]
