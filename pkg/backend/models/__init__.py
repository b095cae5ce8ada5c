"""Pydantic models and numeric value types."""

from .camera import OVER_LIMIT, CameraIntrinsics, DepthImage
from .gpis import GpisConfig, GpisPoint, GpisQuery, ScanConfig, TriangleMesh, UpdateStats
from .kernels import Kernel, Matern32Kernel, OuKernel
from .planning import (
    FACTORS,
    AnnulusConfig,
    AnnulusSector,
    ArmModel,
    DhJoint,
    Factor,
    LogisticParams,
    OccupancyParams,
    PlannerConfig,
    Segment,
    UtilityConfig,
    UtilityRow,
)
from .simulation import (
    ABLATION_NAMES,
    CameraMount,
    CycleMetrics,
    EpisodeConfig,
    EpisodeEvent,
    EpisodeResult,
    Scene,
    SceneObject,
    Strategy,
)

__all__ = [
    # Sensor
    "OVER_LIMIT",
    "CameraIntrinsics",
    "DepthImage",
    # Mapping
    "GpisConfig",
    "GpisPoint",
    "GpisQuery",
    "ScanConfig",
    "TriangleMesh",
    "UpdateStats",
    "Kernel",
    "Matern32Kernel",
    "OuKernel",
    # Planning
    "FACTORS",
    "AnnulusConfig",
    "AnnulusSector",
    "ArmModel",
    "DhJoint",
    "Factor",
    "LogisticParams",
    "OccupancyParams",
    "PlannerConfig",
    "Segment",
    "UtilityConfig",
    "UtilityRow",
    # Simulation
    "ABLATION_NAMES",
    "CameraMount",
    "CycleMetrics",
    "EpisodeConfig",
    "EpisodeEvent",
    "EpisodeResult",
    "Scene",
    "SceneObject",
    "Strategy",
]
