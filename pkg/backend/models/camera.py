"""
Camera Models.

Pinhole intrinsics and depth frames produced by the renderer or read from disk.
"""

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from backend.utils.exceptions import DomainError

# Marker stored in depth arrays for pixels without a return
OVER_LIMIT = float("nan")


class CameraIntrinsics(BaseModel):
    """Pinhole camera intrinsics."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    width: int = Field(48, gt=1, description="Image width (pixels)")
    height: int = Field(36, gt=1, description="Image height (pixels)")
    fx: float = Field(40.0, gt=0.0, description="Focal length along u (pixels)")
    fy: float = Field(40.0, gt=0.0, description="Focal length along v (pixels)")
    cx: float = Field(24.0, description="Principal point u (pixels)")
    cy: float = Field(18.0, description="Principal point v (pixels)")
    max_range: float = Field(4.0, gt=0.0, description="Maximum sensor range (meters)")

    @model_validator(mode="after")
    def check_principal_point(self) -> "CameraIntrinsics":
        if not 0.0 < self.cx < self.width:
            raise ValueError(f"cx={self.cx} must lie inside (0, {self.width})")
        if not 0.0 < self.cy < self.height:
            raise ValueError(f"cy={self.cy} must lie inside (0, {self.height})")
        return self

    def pixel_bearings(self) -> np.ndarray:
        """
        Bearing θ = ((u - cx)/fx, (v - cy)/fy) of every pixel.

        Returns:
            np.ndarray: (height, width, 2) array
        """
        u = (np.arange(self.width) - self.cx) / self.fx
        v = (np.arange(self.height) - self.cy) / self.fy
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu, vv], axis=-1)

    def bearing_to_pixel(self, bearings: np.ndarray) -> np.ndarray:
        """Continuous pixel coordinates (u, v) for (n, 2) bearings."""
        bearings = np.atleast_2d(bearings)
        return np.column_stack(
            [bearings[:, 0] * self.fx + self.cx, bearings[:, 1] * self.fy + self.cy]
        )

    def in_view(self, bearings: np.ndarray) -> np.ndarray:
        """FOV test with a one-pixel margin on every side."""
        pixels = self.bearing_to_pixel(bearings)
        return (
            (pixels[:, 0] >= 1.0)
            & (pixels[:, 0] <= self.width - 2.0)
            & (pixels[:, 1] >= 1.0)
            & (pixels[:, 1] <= self.height - 2.0)
        )


@dataclass(frozen=True)
class DepthImage:
    """
    One depth frame.

    Attributes:
        intrinsics (CameraIntrinsics): Camera model
        depths (np.ndarray): (height, width) z-depth in meters; NaN marks over-limit
    """

    intrinsics: CameraIntrinsics
    depths: np.ndarray

    def __post_init__(self):
        depths = np.asarray(self.depths, dtype=float)
        expected = (self.intrinsics.height, self.intrinsics.width)
        if depths.size != expected[0] * expected[1]:
            raise DomainError(f"Depth array has {depths.size} entries, expected {expected}")
        depths = depths.reshape(expected).copy()
        finite = np.isfinite(depths)
        if np.any(depths[finite] <= 0):
            raise DomainError("Depths must be positive")
        depths[finite & (depths >= self.intrinsics.max_range)] = OVER_LIMIT
        depths[~finite] = OVER_LIMIT
        object.__setattr__(self, "depths", depths)

    @property
    def over_limit(self) -> np.ndarray:
        """Boolean mask of pixels without a return."""
        return np.isnan(self.depths)

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(~self.over_limit))
