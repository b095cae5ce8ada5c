"""
Planning Models.

Candidate segments, utility weighting, the arm model and its manipulable
workspace sector.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class Factor(str, Enum):
    """Information-gain factors of the utility, in weighting order."""
    MANIP = "manip"
    ORDER = "order"
    DISTANCE = "distance"
    UNCERTAINTY = "uncertainty"
    FRONTIER = "frontier"


FACTORS: Tuple[Factor, ...] = tuple(Factor)


class LogisticParams(BaseModel):
    """L(x) = scale / (1 + exp(-slope·x + offset))."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scale: float = Field(1.0, gt=0.0, description="Upper asymptote l_k")
    slope: Optional[float] = Field(
        None, gt=0.0, description="Steepness a_k; None means calibrate from the map"
    )
    offset: float = Field(0.0, description="Shift b_k")


def _uniform_weights() -> Dict[Factor, float]:
    return {factor: 1.0 / len(FACTORS) for factor in FACTORS}


def _default_logistics() -> Dict[Factor, LogisticParams]:
    return {factor: LogisticParams() for factor in FACTORS}


class UtilityConfig(BaseModel):
    """Utility weights, squashing functions and failure decay."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    weights: Dict[Factor, float] = Field(
        default_factory=_uniform_weights, description="β_k per factor; must sum to 1"
    )
    logistics: Dict[Factor, LogisticParams] = Field(
        default_factory=_default_logistics, description="Squashing function per factor"
    )
    gamma: float = Field(0.8, gt=0.0, lt=1.0, description="Failure penalty decay per cycle")
    penalty_enabled: bool = Field(True, description="Apply the discounted failure penalty")
    recalibrate: bool = Field(
        False, description="Calibrate unset slopes on every map instead of only the first"
    )

    @model_validator(mode="after")
    def check_weights(self) -> "UtilityConfig":
        if set(self.weights) != set(FACTORS):
            raise ValueError(f"weights must name exactly {[f.value for f in FACTORS]}")
        if set(self.logistics) != set(FACTORS):
            raise ValueError(f"logistics must name exactly {[f.value for f in FACTORS]}")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be non-negative")
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {total}")
        return self


class OccupancyParams(BaseModel):
    """Φ-squashing of signed distance into occupancy probability."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(20.0, gt=0.0, description="Sharpness α_occ (1/meters)")
    beta: float = Field(0.0, description="Offset β_occ")


class DhJoint(BaseModel):
    """One revolute joint in standard DH convention."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float = Field(0.0, description="Link length (meters)")
    alpha: float = Field(0.0, description="Link twist (radians)")
    d: float = Field(0.0, description="Link offset (meters)")
    theta_offset: float = Field(0.0, description="Joint angle offset (radians)")
    lower: float = Field(-math.pi, description="Lower joint limit (radians)")
    upper: float = Field(math.pi, description="Upper joint limit (radians)")

    @model_validator(mode="after")
    def check_limits(self) -> "DhJoint":
        if self.lower > self.upper:
            raise ValueError(f"Joint limits out of order: {self.lower} > {self.upper}")
        return self


def _default_joints() -> List[DhJoint]:
    return [
        DhJoint(a=0.0, alpha=math.pi / 2, lower=-1.0, upper=1.0),
        DhJoint(a=0.4, lower=-1.2, upper=1.2),
        DhJoint(a=0.35, lower=-2.5, upper=0.0),
    ]


class ArmModel(BaseModel):
    """Serial arm mounted on the mobile base."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    joints: List[DhJoint] = Field(default_factory=_default_joints, min_length=2)
    base_height: float = Field(0.35, ge=0.0, description="Arm base height above ground")
    m_thres: float = Field(0.04, ge=0.0, description="Manipulability threshold")

    @property
    def dof(self) -> int:
        return len(self.joints)


class AnnulusConfig(BaseModel):
    """Sampling of the manipulable workspace."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    resolution: float = Field(0.1, gt=0.0, description="Joint-space sweep step (radians)")
    sample_spacing: float = Field(0.05, gt=0.0, description="Cartesian sample spacing (meters)")


class PlannerConfig(BaseModel):
    """Segment extraction and attribute settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    ground_resolution: float = Field(0.02, gt=0.0, description="Ground raster cell (meters)")
    ground_clearance: float = Field(
        0.02, ge=0.0, description="Vertices below this height count as ground"
    )
    segment_length: float = Field(0.3, gt=0.0, description="Target segment length (meters)")
    standoff: float = Field(0.45, gt=0.0, description="Robot standoff from the contour")
    slab_width: float = Field(0.1, gt=0.0, description="Half width of a segment's vertex slab")
    probe_spacing: float = Field(0.05, gt=0.0, description="Probe curtain spacing (meters)")
    variance_threshold: float = Field(0.5, gt=0.0, description="Real/imaginary σ² threshold")
    variance_aggregate: str = Field("mean", pattern="^(mean|max)$", description="mean or max")
    travel_resolution: float = Field(0.05, gt=0.0, description="Travel raster cell (meters)")
    robot_radius: float = Field(0.25, gt=0.0, description="Robot footprint radius (meters)")
    failure_radius: float = Field(0.2, gt=0.0, description="Failure memory match radius")
    ground_tolerance: float = Field(
        0.05, gt=0.0, description="Depth band for ground visibility votes (meters)"
    )


@dataclass(frozen=True)
class AnnulusSector:
    """
    Manipulable workspace sector in the robot frame.

    Attributes:
        r_min (float): Inner radius (meters)
        r_max (float): Outer radius (meters)
        h_min (float): Lowest end-effector height above ground (meters)
        h_max (float): Highest end-effector height above ground (meters)
        half_angle (float): Half opening angle about the robot heading (radians)
        samples (np.ndarray): (n, 3) sample points p_j in the robot frame
    """

    r_min: float
    r_max: float
    h_min: float
    h_max: float
    half_angle: float
    samples: np.ndarray = field(repr=False)

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """In-sector test for (n, 3) robot-frame points."""
        points = np.atleast_2d(points)
        radius = np.hypot(points[:, 0], points[:, 1])
        angle = np.abs(np.arctan2(points[:, 1], points[:, 0]))
        return (
            (radius >= self.r_min - tol)
            & (radius <= self.r_max + tol)
            & (points[:, 2] >= self.h_min - tol)
            & (points[:, 2] <= self.h_max + tol)
            & (angle <= self.half_angle + tol)
        )


@dataclass
class Segment:
    """
    Candidate robot placement along the pile contour.

    Attributes:
        index (int): Position in the contour chain
        start (np.ndarray): (2,) first endpoint
        end (np.ndarray): (2,) second endpoint
        surface_points (np.ndarray): (n, 3) points P_i associated with the segment
        is_real (bool): Observed with low variance
        m (float): Manipulability score
        h (float): Height (meters)
        d (float): Travel distance (meters); inf when unreachable
        sigma2 (float): Aggregated variance over P_i
        frontier (float): SDSD frontier score
        last_failure (float): Cycle of the last failed pick here, -inf if none
    """

    index: int
    start: np.ndarray
    end: np.ndarray
    surface_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)), repr=False)
    outward: np.ndarray = field(default_factory=lambda: np.zeros(2), repr=False)
    standoff_distance: float = 0.45
    is_real: bool = False
    m: float = 0.0
    h: float = 0.0
    d: float = math.inf
    sigma2: float = 0.0
    frontier: float = 0.0
    last_failure: float = -math.inf

    @property
    def direction(self) -> np.ndarray:
        delta = self.end - self.start
        return delta / np.linalg.norm(delta)

    @property
    def direction3(self) -> np.ndarray:
        return np.array([*self.direction, 0.0])

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.start + self.end)

    @property
    def standoff_pose(self) -> Tuple[float, float, float]:
        """Robot (x, y, yaw) facing the pile from outside the contour."""
        origin = self.midpoint + self.standoff_distance * self.outward
        yaw = math.atan2(-self.outward[1], -self.outward[0])
        return float(origin[0]), float(origin[1]), yaw


class UtilityRow(BaseModel):
    """One exported row of the utility table."""

    segment_id: int
    is_real: bool
    m: float
    h: float
    d: float
    sigma2: float
    frontier: float
    penalty: float
    utility: float
    selected: bool = False
