"""
Manipulability Service.

DH forward kinematics, the manipulability index, the annulus sector of well-conditioned
end-effector positions, and the occupancy-weighted manipulability score of a segment.
"""

import itertools
import logging
import math

import numpy as np
from scipy.stats import norm

from backend.models.planning import (
    AnnulusConfig,
    AnnulusSector,
    ArmModel,
    OccupancyParams,
    Segment,
)
from backend.services.gpis_service import GpisMap
from backend.utils.exceptions import DomainError, EmptyWorkspaceError
from backend.utils.geometry import planar_pose

logger = logging.getLogger(__name__)

JACOBIAN_STEP = 1e-6
DEGENERATE_PAD = 1e-3


# ========== Kinematics ==========

def dh_matrix(theta: np.ndarray, a: float, d: float, alpha: float) -> np.ndarray:
    """
    Standard DH link transforms for a batch of joint angles.

    Args:
        theta (np.ndarray): (m,) joint angles (radians)
        a (float): Link length
        d (float): Link offset
        alpha (float): Link twist

    Returns:
        np.ndarray: (m, 4, 4) homogeneous transforms
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    out = np.zeros((theta.size, 4, 4))
    out[:, 0, 0], out[:, 0, 1], out[:, 0, 2], out[:, 0, 3] = ct, -st * ca, st * sa, a * ct
    out[:, 1, 0], out[:, 1, 1], out[:, 1, 2], out[:, 1, 3] = st, ct * ca, -ct * sa, a * st
    out[:, 2, 1], out[:, 2, 2], out[:, 2, 3] = sa, ca, d
    out[:, 3, 3] = 1.0
    return out


def fk_positions(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """
    End-effector positions in the robot frame (base height included).

    Args:
        arm (ArmModel): Arm description
        q (np.ndarray): (m, dof) or (dof,) joint vectors

    Returns:
        np.ndarray: (m, 3) positions
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if q.shape[1] != arm.dof:
        raise DomainError(f"Expected {arm.dof} joint values, got {q.shape[1]}")
    transform = np.broadcast_to(np.eye(4), (q.shape[0], 4, 4)).copy()
    transform[:, 2, 3] = arm.base_height
    for k, joint in enumerate(arm.joints):
        link = dh_matrix(q[:, k] + joint.theta_offset, joint.a, joint.d, joint.alpha)
        transform = transform @ link
    return transform[:, :3, 3]


def position_jacobian(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    """
    Central-difference position Jacobians.

    Returns:
        np.ndarray: (m, 3, dof) for (m, dof) input
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    m, dof = q.shape
    steps = np.eye(dof) * JACOBIAN_STEP
    plus = (q[:, None, :] + steps[None]).reshape(-1, dof)
    minus = (q[:, None, :] - steps[None]).reshape(-1, dof)
    diff = (fk_positions(arm, plus) - fk_positions(arm, minus)).reshape(m, dof, 3)
    return np.transpose(diff, (0, 2, 1)) / (2.0 * JACOBIAN_STEP)


def _index_from_jacobians(jac: np.ndarray) -> np.ndarray:
    rows, cols = jac.shape[1:]
    jt = np.transpose(jac, (0, 2, 1))
    gram = jac @ jt if rows <= cols else jt @ jac
    return np.sqrt(np.maximum(np.linalg.det(gram), 0.0))


def manipulability_index(arm: ArmModel, q: np.ndarray) -> float:
    """
    m = √det(J Jᵀ) of the position Jacobian (√det(JᵀJ) for tall Jacobians).

    Args:
        arm (ArmModel): Arm description
        q (np.ndarray): Joint vector within limits

    Returns:
        float: Non-negative manipulability

    Raises:
        DomainError: If q violates a joint limit
    """
    q = np.asarray(q, dtype=float).reshape(-1)
    for value, joint in zip(q, arm.joints):
        if value < joint.lower - 1e-9 or value > joint.upper + 1e-9:
            raise DomainError(f"Joint value {value} outside [{joint.lower}, {joint.upper}]")
    return float(_index_from_jacobians(position_jacobian(arm, q))[0])


# ========== Workspace ==========

def _joint_grid(arm: ArmModel, resolution: float) -> np.ndarray:
    axes = []
    for joint in arm.joints:
        span = joint.upper - joint.lower
        count = int(math.floor(span / resolution + 1e-9)) + 1
        values = joint.lower + resolution * np.arange(count)
        if values[-1] < joint.upper - 1e-9:
            values = np.append(values, joint.upper)
        axes.append(values)
    return np.array(list(itertools.product(*axes)))


def _padded(lo: float, hi: float):
    if hi - lo < DEGENERATE_PAD:
        return lo - DEGENERATE_PAD, hi + DEGENERATE_PAD
    return lo, hi


def build_annulus(arm: ArmModel, m_thres: float, config: AnnulusConfig) -> AnnulusSector:
    """
    Fit the annulus sector of end-effector positions with m ≥ m_thres.

    Sweeps the joint grid at ``config.resolution``, keeps well-conditioned poses, fits
    radial, height and angular bounds and fills them with a Cartesian sample grid.

    Raises:
        EmptyWorkspaceError: If no configuration reaches the threshold
    """
    q = _joint_grid(arm, config.resolution)
    index = _index_from_jacobians(position_jacobian(arm, q))
    keep = index >= m_thres
    if not keep.any():
        raise EmptyWorkspaceError(
            f"No configuration reaches m ≥ {m_thres} (max {index.max():.4f})"
        )
    points = fk_positions(arm, q[keep])
    radius = np.hypot(points[:, 0], points[:, 1])
    angle = np.abs(np.arctan2(points[:, 1], points[:, 0]))
    r_min, r_max = _padded(float(radius.min()), float(radius.max()))
    h_min, h_max = _padded(float(points[:, 2].min()), float(points[:, 2].max()))
    r_min = max(0.0, r_min)
    half_angle = min(math.pi, max(DEGENERATE_PAD, float(angle.max())))

    spacing = config.sample_spacing
    xs = np.arange(-r_max, r_max + 1e-9, spacing)
    zs = np.arange(h_min, h_max + 1e-9, spacing)
    grid = np.stack(np.meshgrid(xs, xs, zs, indexing="ij"), axis=-1).reshape(-1, 3)
    sector = AnnulusSector(r_min, r_max, h_min, h_max, half_angle, np.zeros((0, 3)))
    samples = grid[sector.contains(grid)]
    if samples.shape[0] == 0:
        mid_r = 0.5 * (r_min + r_max)
        samples = np.array([[mid_r, 0.0, 0.5 * (h_min + h_max)]])

    logger.info(
        f"✅ Annulus: r∈[{r_min:.2f}, {r_max:.2f}] h∈[{h_min:.2f}, {h_max:.2f}] "
        f"±{half_angle:.2f} rad, {samples.shape[0]} samples from {int(keep.sum())} poses"
    )
    return AnnulusSector(r_min, r_max, h_min, h_max, half_angle, samples)


# ========== Scoring ==========

def occupancy_probability(
    mean: np.ndarray, variance: np.ndarray, occ: OccupancyParams
) -> np.ndarray:
    """Φ((-α μ + β) / √(1 + α² σ²)); interior (μ < 0) tends to 1."""
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    return norm.cdf((-occ.alpha * mean + occ.beta) / np.sqrt(1.0 + occ.alpha**2 * variance))


def manipulability_score(
    seg: Segment, gpis_map: GpisMap, annulus: AnnulusSector, occ: OccupancyParams
) -> float:
    """
    Occupancy-weighted manipulability of a segment's standoff pose.

    Each annulus sample is placed at the standoff pose and weighted by how well the
    surface normal there aligns with the direction from the standoff origin.

    Returns:
        float: Σ_j w_j · occupancy_j; prior-flagged samples contribute 0
    """
    x, y, yaw = seg.standoff_pose
    world = planar_pose(x, y, yaw).apply(annulus.samples)
    mean, variance, normals, prior = gpis_map.query_batch(world)

    direction = world - np.array([x, y, 0.0])
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    weight = np.maximum(0.0, np.nan_to_num(np.sum(normals * direction, axis=1), nan=0.0))
    occupancy = np.where(prior, 0.0, occupancy_probability(np.nan_to_num(mean), variance, occ))
    return float(np.sum(weight * occupancy))
