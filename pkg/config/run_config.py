"""
Experiment run configuration.

A single self-describing JSON file holds every module config. Unknown keys are
rejected at every level; command-line flags override fields after loading.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from backend.models.gpis import GpisConfig, ScanConfig
from backend.models.planning import (
    AnnulusConfig,
    ArmModel,
    OccupancyParams,
    PlannerConfig,
    UtilityConfig,
)
from backend.models.simulation import EpisodeConfig

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    """Everything needed to reproduce an experiment from a seed."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scene_path: Optional[str] = Field(
        None, description="Scene JSON; relative paths resolve against the config file"
    )
    output_dir: str = Field("./output", description="Directory for run artefacts")
    gpis: GpisConfig = Field(default_factory=GpisConfig)
    scan: ScanConfig = Field(default_factory=ScanConfig)
    planner: PlannerConfig = Field(default_factory=PlannerConfig)
    utility: UtilityConfig = Field(default_factory=UtilityConfig)
    occupancy: OccupancyParams = Field(default_factory=OccupancyParams)
    arm: ArmModel = Field(default_factory=ArmModel)
    annulus: AnnulusConfig = Field(default_factory=AnnulusConfig)
    episode: EpisodeConfig = Field(default_factory=EpisodeConfig)

    def module_configs(self) -> Dict[str, Any]:
        """Keyword configs accepted by ``run_episode``."""
        return {
            "gpis": self.gpis,
            "scan": self.scan,
            "planner": self.planner,
            "occupancy": self.occupancy,
            "annulus": self.annulus,
        }


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    Load and validate a run config.

    Args:
        path (str | Path): JSON config file

    Returns:
        RunConfig: Validated config with ``scene_path`` made absolute

    Raises:
        FileNotFoundError: If the file does not exist
        pydantic.ValidationError: On schema violations
    """
    path = Path(path)
    raw = json.loads(path.read_text())
    config = RunConfig.model_validate(raw)
    if config.scene_path and not Path(config.scene_path).is_absolute():
        resolved = (path.parent / config.scene_path).resolve()
        config = config.model_copy(update={"scene_path": str(resolved)})
    logger.info(f"✅ Loaded run config from {path}")
    return config


def override(config: RunConfig, **episode_fields: Any) -> RunConfig:
    """
    Apply command-line overrides to the episode section and ``output_dir``.

    ``None`` values are ignored. The result is re-validated.
    """
    updates = {k: v for k, v in episode_fields.items() if v is not None}
    output_dir = updates.pop("output_dir", None)
    data = config.model_dump()
    data["episode"] = {**data["episode"], **updates}
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    return RunConfig.model_validate(data)
