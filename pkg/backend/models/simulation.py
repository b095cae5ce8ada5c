"""
Simulation Models.

Ground-truth scenes, episode settings and the per-cycle records an episode emits.
"""

from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from backend.models.camera import CameraIntrinsics
from backend.models.planning import Factor, UtilityRow


class Strategy(str, Enum):
    """Candidate selection strategy."""
    FULL = "full"
    RANDOM = "random"
    FRONTIER = "frontier"
    NO_MANIP = "no-manip"
    NO_ORDER = "no-order"
    NO_DISTANCE = "no-distance"
    NO_UNCERTAINTY = "no-uncertainty"
    NO_FRONTIER = "no-frontier"
    NO_PENALTY = "no-penalty"

    @property
    def dropped(self) -> Optional[str]:
        """Factor name removed by an ablation, or 'penalty'."""
        if self.value.startswith("no-"):
            return self.value[3:]
        return None

    @classmethod
    def ablation(cls, name: str) -> "Strategy":
        return cls(f"no-{name}")


ABLATION_NAMES = tuple(f.value for f in Factor) + ("penalty",)


class SceneObject(BaseModel):
    """Oriented box resting in the world."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str = Field(..., min_length=1, description="Unique object id")
    center: Tuple[float, float, float] = Field(..., description="Box center (meters)")
    half_extents: Tuple[float, float, float] = Field(..., description="Half sizes (meters)")
    yaw: float = Field(0.0, description="Heading about +z (radians)")

    @field_validator("half_extents")
    @classmethod
    def check_extents(cls, v: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(h <= 0 for h in v):
            raise ValueError("half_extents must be positive")
        return v

    @model_validator(mode="after")
    def check_above_ground(self) -> "SceneObject":
        if self.center[2] < self.half_extents[2] - 1e-9:
            raise ValueError(f"Object {self.id} penetrates the ground")
        return self

    @property
    def rotation(self) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """World points expressed in the box frame."""
        return (np.atleast_2d(points) - np.asarray(self.center)) @ self.rotation

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        local = np.abs(self.to_local(points))
        return np.all(local <= np.asarray(self.half_extents) + margin, axis=1)


class Scene(BaseModel):
    """Ground-truth world: boxes on the plane z = 0."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    objects: List[SceneObject] = Field(default_factory=list)
    bounds_min: Tuple[float, float, float] = Field((-1.0, -1.0, 0.0), description="Map bounds")
    bounds_max: Tuple[float, float, float] = Field((1.0, 1.0, 0.6), description="Map bounds")

    @model_validator(mode="after")
    def check_ids(self) -> "Scene":
        ids = [obj.id for obj in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError("Scene object ids must be unique")
        if any(lo >= hi for lo, hi in zip(self.bounds_min, self.bounds_max)):
            raise ValueError("bounds_min must be below bounds_max")
        return self

    @property
    def ids(self) -> List[str]:
        return [obj.id for obj in self.objects]

    def get(self, object_id: str) -> Optional[SceneObject]:
        return next((obj for obj in self.objects if obj.id == object_id), None)


class CameraMount(BaseModel):
    """Camera placement on the robot."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    height: float = Field(1.0, gt=0.0, description="Camera height above ground (meters)")
    forward_offset: float = Field(0.0, description="Offset along the robot heading (meters)")
    pitch: float = Field(0.75, description="Downward tilt (radians)")


class EpisodeConfig(BaseModel):
    """Closed-loop episode settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    intrinsics: CameraIntrinsics = Field(default_factory=CameraIntrinsics)
    mount: CameraMount = Field(default_factory=CameraMount)
    depth_noise: float = Field(0.005, ge=0.0, description="Depth noise std (meters)")
    seed: int = Field(0, ge=0, description="RNG seed")
    max_cycles: int = Field(8, ge=0, description="Planning cycle limit")
    strategy: Strategy = Field(Strategy.FULL, description="Selection strategy")
    start_pose: Tuple[float, float, float] = Field(
        (0.0, -1.3, 1.5707963267948966), description="Initial robot (x, y, yaw)"
    )
    failure_rate: float = Field(0.0, ge=0.0, le=1.0, description="Injected pick failure rate")
    max_rescans: int = Field(
        2, ge=0, description="Turn-and-rescan attempts in a row before a dead end stops the run"
    )
    rescan_turn: float = Field(
        0.7853981633974483, description="Yaw step of one turn-and-rescan (radians)"
    )


class CycleMetrics(BaseModel):
    """Metrics recorded at the end of one planning cycle."""

    cycle: int
    picks: int = Field(..., ge=0, description="Cumulative successful picks")
    remaining: int = Field(..., ge=0, description="Objects left in the scene")
    coverage: float = Field(..., ge=0.0, le=100.0, description="Map coverage (%)")
    travel: float = Field(..., ge=0.0, description="Cumulative travel distance (meters)")
    collisions: int = Field(..., ge=0, description="Cumulative footprint collisions")
    nbv: Optional[int] = Field(None, description="Selected segment index")
    points: int = Field(0, ge=0, description="GPIS training points")


class EpisodeEvent(BaseModel):
    """One event log record."""

    cycle: int
    action: str
    pose: Tuple[float, float, float]
    counts: dict = Field(default_factory=dict)


class EpisodeResult(BaseModel):
    """Outcome of a full episode."""

    metrics: List[CycleMetrics] = Field(default_factory=list)
    events: List[EpisodeEvent] = Field(default_factory=list)
    utility_tables: List[List[UtilityRow]] = Field(
        default_factory=list, description="Utility table of every planning cycle"
    )
    initial_objects: int = 0

    @property
    def picks(self) -> int:
        return self.metrics[-1].picks if self.metrics else 0

    @property
    def coverage(self) -> float:
        return self.metrics[-1].coverage if self.metrics else 0.0

    @property
    def collisions(self) -> int:
        return self.metrics[-1].collisions if self.metrics else 0
