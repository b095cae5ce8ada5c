"""
Scene Service.

Ground-truth scene I/O and the kinematic world operations of the simulator: picking,
reachability by the annulus sector, footprint collisions and map coverage.
"""

import json
import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from backend.models.gpis import TriangleMesh
from backend.models.planning import AnnulusSector
from backend.models.simulation import Scene, SceneObject
from backend.utils.exceptions import UnknownObjectError
from backend.utils.geometry import box_footprint_distance, planar_pose

logger = logging.getLogger(__name__)

GROUND_CONTACT = 1e-6


# ========== Scene I/O ==========

def load_scene(path: Union[str, Path]) -> Scene:
    """Read a JSON scene file ({objects: [{id, center, half_extents, yaw}], ...})."""
    scene = Scene.model_validate_json(Path(path).read_text())
    logger.info(f"✅ Loaded scene with {len(scene.objects)} objects from {path}")
    return scene


def save_scene(scene: Scene, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(scene.model_dump(mode="json"), indent=2) + "\n")


def canonical_pile(half_extents: Tuple[float, float, float] = (0.1, 0.1, 0.06)) -> Scene:
    """
    Twelve bricks: a 3x3 bottom tier with 2 cm gaps and three bricks on top.

    Returns:
        Scene: The canonical evaluation pile
    """
    hx, hy, hz = half_extents
    pitch_x, pitch_y = 2 * hx + 0.02, 2 * hy + 0.02
    objects = []
    for i in range(3):
        for j in range(3):
            objects.append(
                SceneObject(
                    id=f"brick_{i}{j}",
                    center=((i - 1) * pitch_x, (j - 1) * pitch_y, hz),
                    half_extents=half_extents,
                )
            )
    top = [(-0.5 * pitch_x, -0.5 * pitch_y), (0.5 * pitch_x, -0.5 * pitch_y), (0.0, 0.5 * pitch_y)]
    for k, (x, y) in enumerate(top):
        objects.append(
            SceneObject(id=f"top_{k}", center=(x, y, 3 * hz), half_extents=half_extents)
        )
    return Scene(objects=objects, bounds_min=(-0.6, -0.6, 0.0), bounds_max=(0.6, 0.6, 0.4))


# ========== World operations ==========

def pick(scene: Scene, object_id: str) -> Scene:
    """
    Remove one object.

    Raises:
        UnknownObjectError: If the id is not in the scene
    """
    if scene.get(object_id) is None:
        raise UnknownObjectError(object_id)
    remaining = [obj for obj in scene.objects if obj.id != object_id]
    return scene.model_copy(update={"objects": remaining})


def pickable_objects(
    scene: Scene, pose: Tuple[float, float, float], annulus: AnnulusSector
) -> List[str]:
    """Ids of objects whose center lies inside the annulus placed at ``pose``."""
    if not scene.objects:
        return []
    centers = np.array([obj.center for obj in scene.objects])
    local = planar_pose(*pose).inverse().apply(centers)
    inside = annulus.contains(local)
    return [obj.id for obj, ok in zip(scene.objects, inside) if ok]


def footprint_collides(scene: Scene, xy: Tuple[float, float], radius: float) -> bool:
    """True when a disc of ``radius`` at ``xy`` overlaps any box footprint."""
    point = np.asarray(xy[:2], dtype=float)
    for obj in scene.objects:
        center, half = np.asarray(obj.center[:2]), np.asarray(obj.half_extents[:2])
        if box_footprint_distance(point, center, half, obj.yaw) < radius:
            return True
    return False


# ========== Coverage ==========

def _face_samples(obj: SceneObject, spacing: float) -> np.ndarray:
    half = np.asarray(obj.half_extents)
    samples = []
    for axis in range(3):
        if axis == 2:
            signs = (1.0,) if obj.center[2] - half[2] <= GROUND_CONTACT else (-1.0, 1.0)
        else:
            signs = (-1.0, 1.0)
        u, v = [a for a in range(3) if a != axis]
        us = np.arange(-half[u] + 0.5 * spacing, half[u], spacing)
        vs = np.arange(-half[v] + 0.5 * spacing, half[v], spacing)
        uu, vv = np.meshgrid(us, vs, indexing="ij")
        for sign in signs:
            face = np.zeros((uu.size, 3))
            face[:, axis] = sign * half[axis]
            face[:, u] = uu.reshape(-1)
            face[:, v] = vv.reshape(-1)
            samples.append(face)
    local = np.vstack(samples)
    return local @ obj.rotation.T + np.asarray(obj.center)


def surface_samples(scene: Scene, spacing: float) -> np.ndarray:
    """
    Ground-truth surface samples on exposed faces.

    Ground-resting bottoms and samples inside other boxes are excluded.

    Returns:
        np.ndarray: (n, 3) world points
    """
    parts = []
    for k, obj in enumerate(scene.objects):
        points = _face_samples(obj, spacing)
        hidden = np.zeros(points.shape[0], dtype=bool)
        for other_k, other in enumerate(scene.objects):
            if other_k != k:
                hidden |= other.contains(points, margin=1e-9)
        parts.append(points[~hidden])
    return np.vstack(parts) if parts else np.zeros((0, 3))


def coverage(mesh: TriangleMesh, scene: Scene, voxel: float, spacing: float = 0.02) -> float:
    """
    Percentage of ground-truth samples within 2 voxels of a mesh vertex.

    Returns:
        float: 0 for an empty mesh, 100 when there is nothing to cover
    """
    samples = surface_samples(scene, spacing)
    if samples.shape[0] == 0:
        return 100.0
    if mesh.is_empty:
        return 0.0
    dist, _ = cKDTree(mesh.vertices).query(samples)
    return float(100.0 * np.count_nonzero(dist < 2.0 * voxel) / samples.shape[0])
