"""
Scan Service.

Builds the per-frame bearing → inverse-range GP (with a virtual wall standing in for
over-limit pixels) and serves inverse-depth inference, bearing projection and point
inversion. Also reads and writes the raw binary depth format.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from backend.models.camera import CameraIntrinsics, DepthImage
from backend.models.gpis import ScanConfig
from backend.models.kernels import OuKernel
from backend.services.gp_core import GpModel, gp_fit, predict_batch
from backend.utils.exceptions import DomainError, EmptyScanError, SnapshotFormatError
from backend.utils.geometry import RigidTransform

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScanGp:
    """
    Immutable 2.5D⁻¹ map of one depth frame.

    Training bearings lie on a pixel lattice; every lattice node owns a GP fitted on
    the block of nodes around it, and a query is answered by its nearest node.

    Attributes:
        intrinsics (CameraIntrinsics): Camera model of the frame
        pose (RigidTransform): Camera-to-world transform
        config (ScanConfig): Regression settings
        kernel (OuKernel): Covariance over bearings
        lattice_u (np.ndarray): Pixel columns of the lattice
        lattice_v (np.ndarray): Pixel rows of the lattice
        bearings (np.ndarray): (rows, cols, 2) training bearings
        targets (np.ndarray): (rows, cols) inverse ranges, wall included
        wall (np.ndarray): (rows, cols) True where the raw depth was over-limit
        models (tuple): Row-major GpModel per lattice node
    """

    intrinsics: CameraIntrinsics
    pose: RigidTransform
    config: ScanConfig
    kernel: OuKernel
    lattice_u: np.ndarray = field(repr=False)
    lattice_v: np.ndarray = field(repr=False)
    bearings: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    wall: np.ndarray = field(repr=False)
    models: Tuple[GpModel, ...] = field(repr=False)

    @property
    def wall_target(self) -> float:
        return 1.0 / self.config.wall_depth

    @property
    def world_to_camera(self) -> RigidTransform:
        return self.pose.inverse()


@dataclass(frozen=True)
class ScanSamples:
    """Inferred surface points of a scan at its non-wall training bearings."""

    points: np.ndarray
    bearings: np.ndarray
    inverse_depth: np.ndarray
    sigma: np.ndarray

    @property
    def size(self) -> int:
        return int(self.points.shape[0])


# ========== Bearings ==========

def to_bearing(
    x_local: np.ndarray, intrinsics: Optional[CameraIntrinsics] = None
) -> Optional[np.ndarray]:
    """
    Project a camera-frame point to its bearing θ = (x/z, y/z).

    Args:
        x_local (np.ndarray): Point in the camera frame
        intrinsics (CameraIntrinsics, optional): Adds the image FOV test when given

    Returns:
        np.ndarray or None: Bearing, or None when the point is out of view
    """
    x_local = np.asarray(x_local, dtype=float).reshape(3)
    if x_local[2] <= 0:
        return None
    bearing = x_local[:2] / x_local[2]
    if intrinsics is not None and not intrinsics.in_view(bearing.reshape(1, 2))[0]:
        return None
    return bearing


def to_bearing_batch(
    points_local: np.ndarray, intrinsics: CameraIntrinsics
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched projection with FOV test.

    Returns:
        tuple: (bearings (n, 2) with NaN where out of view, in-view mask (n,))
    """
    points_local = np.atleast_2d(points_local)
    front = points_local[:, 2] > 0
    bearings = np.full((points_local.shape[0], 2), np.nan)
    bearings[front] = points_local[front, :2] / points_local[front, 2:3]
    in_view = front.copy()
    in_view[front] = intrinsics.in_view(bearings[front])
    bearings[~in_view] = np.nan
    return bearings, in_view


def invert_to_point(r_idp: float, bearing: np.ndarray) -> np.ndarray:
    """
    Camera-frame point at inverse range r_idp along bearing θ.

    Raises:
        DomainError: If r_idp is not positive
    """
    if r_idp <= 0:
        raise DomainError(f"Inverse depth must be positive, got {r_idp}")
    return invert_batch(np.array([r_idp]), np.asarray(bearing, dtype=float).reshape(1, 2))[0]


def invert_batch(inverse_depth: np.ndarray, bearings: np.ndarray) -> np.ndarray:
    """x = v / r with v the unit vector of [θ, 1]."""
    rays = np.column_stack([bearings, np.ones(bearings.shape[0])])
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    return rays / np.asarray(inverse_depth, dtype=float)[:, None]


# ========== Build ==========

def build_scan_gp(image: DepthImage, pose: RigidTransform, config: ScanConfig) -> ScanGp:
    """
    Regress inverse range over the bearings of one depth frame.

    Over-limit pixels are replaced by the virtual wall at ``config.wall_depth``.

    Args:
        image (DepthImage): Depth frame (z-depth)
        pose (RigidTransform): Camera-to-world transform
        config (ScanConfig): Regression settings

    Returns:
        ScanGp: Immutable scan model

    Raises:
        EmptyScanError: If no pixel can serve as a training bearing
    """
    intr = image.intrinsics
    stride = config.stride
    lattice_u = np.arange(stride // 2, intr.width, stride)
    lattice_v = np.arange(stride // 2, intr.height, stride)
    lattice_u = lattice_u[(lattice_u >= 1) & (lattice_u <= intr.width - 2)]
    lattice_v = lattice_v[(lattice_v >= 1) & (lattice_v <= intr.height - 2)]
    if lattice_u.size == 0 or lattice_v.size == 0:
        raise EmptyScanError(f"{intr.width}x{intr.height} image has no usable training pixels")

    bearings = intr.pixel_bearings()[np.ix_(lattice_v, lattice_u)]
    depths = image.depths[np.ix_(lattice_v, lattice_u)]
    wall = np.isnan(depths)
    ranges = depths * np.sqrt(1.0 + np.sum(bearings**2, axis=-1))
    targets = np.where(wall, 1.0 / config.wall_depth, 1.0 / np.where(wall, 1.0, ranges))

    kernel = OuKernel(alpha_ou=config.alpha_ou)
    radius = config.local_radius_factor / config.alpha_ou
    half_u = max(1, math.ceil(radius * intr.fx / stride))
    half_v = max(1, math.ceil(radius * intr.fy / stride))

    rows, cols = targets.shape
    models = []
    for i in range(rows):
        r0, r1 = max(0, i - half_v), min(rows, i + half_v + 1)
        for j in range(cols):
            c0, c1 = max(0, j - half_u), min(cols, j + half_u + 1)
            block_targets = targets[r0:r1, c0:c1].reshape(-1)
            models.append(
                gp_fit(
                    bearings[r0:r1, c0:c1].reshape(-1, 2),
                    block_targets,
                    config.idp_noise,
                    kernel,
                    prior_mean=float(block_targets.mean()),
                )
            )

    logger.debug(
        f"Scan GP: {rows}x{cols} lattice, {int(wall.sum())} wall nodes, "
        f"window {2 * half_v + 1}x{2 * half_u + 1}"
    )
    return ScanGp(
        intrinsics=intr,
        pose=pose,
        config=config,
        kernel=kernel,
        lattice_u=lattice_u,
        lattice_v=lattice_v,
        bearings=bearings,
        targets=targets,
        wall=wall,
        models=tuple(models),
    )


# ========== Inference ==========

def _nearest_nodes(scan: ScanGp, bearings: np.ndarray) -> np.ndarray:
    pixels = scan.intrinsics.bearing_to_pixel(bearings)
    stride = scan.config.stride
    n_cols, n_rows = scan.lattice_u.size, scan.lattice_v.size
    cols = np.clip(np.rint((pixels[:, 0] - scan.lattice_u[0]) / stride), 0, n_cols - 1)
    rows = np.clip(np.rint((pixels[:, 1] - scan.lattice_v[0]) / stride), 0, n_rows - 1)
    return rows.astype(int) * n_cols + cols.astype(int)


def infer_batch(scan: ScanGp, bearings: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Inverse depth and its std-dev along each bearing.

    Args:
        scan (ScanGp): Scan model
        bearings (np.ndarray): (n, 2) bearings

    Returns:
        tuple: (r_idp (n,), σ_idp (n,), in-view mask (n,)); NaN where out of view
    """
    bearings = np.atleast_2d(np.asarray(bearings, dtype=float))
    n = bearings.shape[0]
    r_idp = np.full(n, np.nan)
    sigma = np.full(n, np.nan)
    in_view = np.zeros(n, dtype=bool)
    finite = np.all(np.isfinite(bearings), axis=1)
    in_view[finite] = scan.intrinsics.in_view(bearings[finite])
    if not in_view.any():
        return r_idp, sigma, in_view

    idx = np.flatnonzero(in_view)
    nodes = _nearest_nodes(scan, bearings[idx])
    for node in np.unique(nodes):
        members = idx[nodes == node]
        mean, variance = predict_batch(scan.models[node], bearings[members])
        r_idp[members] = mean
        sigma[members] = np.sqrt(variance)
    return r_idp, sigma, in_view


def infer_idp(scan: ScanGp, bearing: np.ndarray) -> Optional[Tuple[float, float]]:
    """
    Inverse depth and std-dev along one bearing.

    Returns:
        tuple or None: (r_idp, σ_idp), or None when the bearing is out of view
    """
    r_idp, sigma, in_view = infer_batch(scan, np.asarray(bearing, dtype=float).reshape(1, 2))
    if not in_view[0]:
        return None
    return float(r_idp[0]), float(sigma[0])


def surface_samples(scan: ScanGp) -> ScanSamples:
    """
    Inferred world-frame surface points at every non-wall training bearing.

    Returns:
        ScanSamples: Points, bearings, inverse depths and std-devs
    """
    keep = ~scan.wall.reshape(-1)
    bearings = scan.bearings.reshape(-1, 2)[keep]
    if bearings.shape[0] == 0:
        empty = np.zeros((0, 3))
        return ScanSamples(empty, np.zeros((0, 2)), np.zeros(0), np.zeros(0))
    r_idp, sigma, _ = infer_batch(scan, bearings)
    ok = r_idp > scan.wall_target
    local = invert_batch(r_idp[ok], bearings[ok])
    return ScanSamples(scan.pose.apply(local), bearings[ok], r_idp[ok], sigma[ok])


# ========== Depth file I/O ==========

def save_depth_image(image: DepthImage, path: Union[str, Path]) -> None:
    """Write ``<u4 width><u4 height>`` then row-major little-endian float32 depths."""
    header = np.array([image.intrinsics.width, image.intrinsics.height], dtype="<u4")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(image.depths.astype("<f4").tobytes())


def load_depth_image(path: Union[str, Path], intrinsics: CameraIntrinsics) -> DepthImage:
    """
    Read a binary depth frame; NaN or ≥ max_range become over-limit.

    Raises:
        SnapshotFormatError: On a size mismatch with the intrinsics
    """
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise SnapshotFormatError(f"{path}: truncated depth header")
    width, height = np.frombuffer(raw[:8], dtype="<u4")
    if (width, height) != (intrinsics.width, intrinsics.height):
        raise SnapshotFormatError(
            f"{path}: image is {width}x{height}, intrinsics expect "
            f"{intrinsics.width}x{intrinsics.height}"
        )
    depths = np.frombuffer(raw[8:], dtype="<f4")
    if depths.size != width * height:
        raise SnapshotFormatError(f"{path}: expected {width * height} depths, got {depths.size}")
    return DepthImage(intrinsics, depths.astype(float).reshape(height, width))
