"""
Rigid transforms and small geometric helpers shared by mapping and simulation.
"""

from dataclasses import dataclass

import numpy as np

from backend.utils.exceptions import DomainError


@dataclass(frozen=True)
class RigidTransform:
    """
    Rigid transform x_parent = R x_child + t.

    Attributes:
        rotation (np.ndarray): 3x3 orthonormal matrix with det = +1
        translation (np.ndarray): Translation in meters
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-9):
            raise DomainError("Rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > 1e-9:
            raise DomainError("Rotation determinant must be +1")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """
        Map points from the child frame to the parent frame.

        Args:
            points (np.ndarray): (n, 3) or (3,) points

        Returns:
            np.ndarray: Transformed points, same shape
        """
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rot_t = self.rotation.T
        return RigidTransform(rot_t, -rot_t @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self * other (apply other first)."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


def yaw_rotation(yaw: float) -> np.ndarray:
    """Rotation about +z by ``yaw`` radians."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def planar_pose(x: float, y: float, yaw: float, z: float = 0.0) -> RigidTransform:
    """Robot-on-ground pose as a rigid transform."""
    return RigidTransform(yaw_rotation(yaw), np.array([x, y, z]))


def camera_pose(
    x: float,
    y: float,
    yaw: float,
    height: float,
    pitch: float,
    forward_offset: float = 0.0,
) -> RigidTransform:
    """
    Camera-to-world transform for a camera mounted on a planar robot.

    The camera frame has z forward, x right and y down. ``pitch`` tilts the optical
    axis downwards (radians).

    Args:
        x (float): Robot x in world (meters)
        y (float): Robot y in world (meters)
        yaw (float): Robot heading (radians)
        height (float): Camera height above ground (meters)
        pitch (float): Downward tilt (radians)
        forward_offset (float): Camera offset along the robot heading (meters)

    Returns:
        RigidTransform: Camera pose in world frame
    """
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    forward = np.array([cy * cp, sy * cp, -sp])
    right = np.array([sy, -cy, 0.0])
    down = np.cross(forward, right)
    rotation = np.column_stack([right, down, forward])
    origin = np.array([x + forward_offset * cy, y + forward_offset * sy, height])
    return RigidTransform(rotation, origin)


def box_footprint_distance(
    point: np.ndarray, center: np.ndarray, half_extents: np.ndarray, yaw: float
) -> float:
    """
    Ground-plane distance from a point to an oriented rectangle (0 inside).

    Args:
        point (np.ndarray): (2,) query point
        center (np.ndarray): (2,) rectangle center
        half_extents (np.ndarray): (2,) half sizes along the box axes
        yaw (float): Box heading (radians)

    Returns:
        float: Euclidean distance in meters
    """
    c, s = np.cos(yaw), np.sin(yaw)
    delta = np.asarray(point, dtype=float) - np.asarray(center, dtype=float)
    local = np.array([c * delta[0] + s * delta[1], -s * delta[0] + c * delta[1]])
    outside = np.maximum(np.abs(local) - np.asarray(half_extents, dtype=float), 0.0)
    return float(np.linalg.norm(outside))
