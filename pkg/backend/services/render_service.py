"""
Render Service.

Ray-cast depth frames of a box scene: slab-method ray/box intersection plus the
ground plane, nearest hit as z-depth, seeded Gaussian depth noise.
"""

import logging
from typing import Optional, Union

import numpy as np

from backend.models.camera import OVER_LIMIT, CameraIntrinsics, DepthImage
from backend.models.simulation import Scene, SceneObject
from backend.utils.geometry import RigidTransform

logger = logging.getLogger(__name__)


def camera_rays(intrinsics: CameraIntrinsics) -> np.ndarray:
    """Camera-frame ray per pixel with unit z, shape (height·width, 3)."""
    bearings = intrinsics.pixel_bearings().reshape(-1, 2)
    return np.column_stack([bearings, np.ones(bearings.shape[0])])


def ray_box_hits(origin: np.ndarray, directions: np.ndarray, box: SceneObject) -> np.ndarray:
    """
    Entry parameter of each ray into an oriented box (slab method).

    Args:
        origin (np.ndarray): (3,) shared ray origin in world frame
        directions (np.ndarray): (n, 3) world ray directions
        box (SceneObject): Oriented box

    Returns:
        np.ndarray: (n,) ray parameter of the first hit; inf on a miss or when the
        origin is inside the box
    """
    rotation = box.rotation
    o_local = (origin - np.asarray(box.center)) @ rotation
    d_local = directions @ rotation
    half = np.asarray(box.half_extents)

    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d_local
        t1 = (-half - o_local) * inv
        t2 = (half - o_local) * inv
    parallel = d_local == 0.0
    inside_slab = np.abs(o_local) <= half
    t_near = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
    t_far = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
    t_enter = t_near.max(axis=1)
    t_exit = t_far.min(axis=1)
    hit = (t_exit >= t_enter) & (t_enter > 0.0)
    return np.where(hit, t_enter, np.inf)


def render_depth(
    scene: Scene,
    pose: RigidTransform,
    intrinsics: CameraIntrinsics,
    noise: float = 0.0,
    seed: Optional[Union[int, np.random.Generator]] = None,
) -> DepthImage:
    """
    Render the z-depth frame seen from ``pose``.

    Args:
        scene (Scene): Ground-truth boxes on the plane z = 0
        pose (RigidTransform): Camera-to-world transform (z forward, x right, y down)
        intrinsics (CameraIntrinsics): Camera model
        noise (float): Depth noise std (meters)
        seed (int | Generator, optional): Seed or generator for the noise

    Returns:
        DepthImage: Depths with NaN for misses and returns beyond max_range
    """
    rays = camera_rays(intrinsics)
    directions = rays @ pose.rotation.T
    origin = pose.translation

    depth = np.full(rays.shape[0], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = np.where(directions[:, 2] < 0.0, -origin[2] / directions[:, 2], np.inf)
    if origin[2] > 0.0:
        depth = np.minimum(depth, t_ground)
    for obj in scene.objects:
        depth = np.minimum(depth, ray_box_hits(origin, directions, obj))

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perturbation = rng.normal(0.0, noise, depth.shape) if noise > 0 else np.zeros(depth.shape)
    hit = np.isfinite(depth)
    depth[hit] = np.maximum(depth[hit] + perturbation[hit], 1e-6)
    depth[~hit | (depth >= intrinsics.max_range)] = OVER_LIMIT
    return DepthImage(intrinsics, depth.reshape(intrinsics.height, intrinsics.width))
