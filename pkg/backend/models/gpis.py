"""
GPIS Models.

Configuration for the scan GP and the clustered GPIS map, plus the value types
returned by map queries, updates and surface extraction.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ScanConfig(BaseModel):
    """Per-frame bearing → inverse-depth regression settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha_ou: float = Field(20.0, gt=0.0, description="OU decay rate over bearings")
    idp_noise: float = Field(1e-4, gt=0.0, description="Inverse-depth noise variance σ²_IDP")
    wall_depth: float = Field(100.0, gt=0.0, description="Virtual wall depth D_wall (meters)")
    stride: int = Field(4, ge=1, description="Pixel lattice stride for training bearings")
    local_radius_factor: float = Field(
        3.0, gt=0.0, description="Local window radius in units of 1/alpha_ou"
    )


class GpisConfig(BaseModel):
    """Clustered GPIS settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    length_scale: float = Field(0.08, gt=0.0, description="Matérn 3/2 length scale l (meters)")
    cell_size: Optional[float] = Field(
        None, gt=0.0, description="Cluster cell side L_cell (meters); defaults to 2l"
    )
    voxel: float = Field(0.04, gt=0.0, description="Mesh voxel size (meters)")
    companion_offset: Optional[float] = Field(
        None, gt=0.0, description="Off-surface companion offset ε (meters); defaults to 1.5 voxel"
    )
    gate: float = Field(3.0, gt=0.0, description="Anomaly gate g in units of σ_IDP")
    fresh_noise: float = Field(1e-4, gt=0.0, description="Noise variance of new samples (m²)")
    fused_noise_floor: float = Field(1e-6, gt=0.0, description="Lower bound on fused noise (m²)")
    min_insert_height: float = Field(
        0.02, description="Samples below this world height are not inserted (meters)"
    )
    support_radius: Optional[float] = Field(
        None, gt=0.0, description="Mesh nodes farther than this from data are unknown (default l)"
    )
    floor_height: Optional[float] = Field(
        0.0, description="Ground plane height; meshing starts here (None meshes below it too)"
    )

    @property
    def effective_cell_size(self) -> float:
        return self.cell_size or 2.0 * self.length_scale

    @property
    def effective_offset(self) -> float:
        return self.companion_offset or 1.5 * self.voxel

    @property
    def effective_support(self) -> float:
        return self.support_radius or self.length_scale


@dataclass(frozen=True)
class GpisPoint:
    """
    One GPIS training sample.

    Attributes:
        position (np.ndarray): World position (meters)
        target (float): Signed distance y (meters), + outside
        noise (float): Noise variance (m²)
        group (int): Sample group id shared by a surface point and its companions
    """

    position: np.ndarray
    target: float
    noise: float
    group: int = -1


@dataclass(frozen=True)
class GpisQuery:
    """Signed distance, variance and normal at one query point."""

    mean: float
    variance: float
    normal: Optional[np.ndarray]
    prior: bool = False

    @property
    def normal_defined(self) -> bool:
        return self.normal is not None


class UpdateStats(BaseModel):
    """Counts produced by one dynamic map update."""

    deleted: int = Field(0, ge=0, description="Stored surface samples removed")
    fused: int = Field(0, ge=0, description="Stored surface samples fused with the scan")
    ignored: int = Field(0, ge=0, description="Occluded stored surface samples left unchanged")
    inserted: int = Field(0, ge=0, description="New surface samples inserted")
    merged: int = Field(0, ge=0, description="New samples merged into existing points")
    out_of_view: int = Field(0, ge=0, description="Stored surface samples outside the FOV")
    touched_clusters: int = Field(0, ge=0, description="Clusters refactorized")


@dataclass(frozen=True)
class TriangleMesh:
    """
    Triangle mesh with per-vertex GPIS variance.

    Attributes:
        vertices (np.ndarray): (n, 3) positions (meters)
        faces (np.ndarray): (m, 3) vertex indices
        variances (np.ndarray): (n,) σ² interpolated at each vertex
    """

    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    variances: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def is_empty(self) -> bool:
        return self.vertices.shape[0] == 0
