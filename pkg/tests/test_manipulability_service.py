"""
Unit tests for kinematics, the manipulability index and the annulus sector.
"""

import math

import numpy as np
import pytest

from backend.models.camera import CameraIntrinsics
from backend.models.gpis import ScanConfig
from backend.models.planning import (
    AnnulusConfig,
    ArmModel,
    DhJoint,
    OccupancyParams,
    Segment,
)
from backend.models.simulation import Scene, SceneObject
from backend.services.gpis_service import GpisMap
from backend.services.manipulability_service import (
    build_annulus,
    fk_positions,
    manipulability_index,
    manipulability_score,
    occupancy_probability,
)
from backend.services.render_service import render_depth
from backend.services.scan_service import build_scan_gp
from backend.utils.exceptions import DomainError, EmptyWorkspaceError
from backend.utils.geometry import camera_pose


def planar_arm(l1: float = 0.5, l2: float = 0.3) -> ArmModel:
    return ArmModel(joints=[DhJoint(a=l1), DhJoint(a=l2)], base_height=0.0)


class TestKinematics:
    """Forward kinematics and manipulability."""

    def setup_method(self):
        self.arm = planar_arm()

    def test_stretched_arm(self):
        np.testing.assert_allclose(fk_positions(self.arm, np.zeros(2))[0], [0.8, 0.0, 0.0])

    def test_base_height_is_added(self):
        arm = ArmModel(joints=self.arm.joints, base_height=0.35)
        assert fk_positions(arm, np.zeros(2))[0, 2] == pytest.approx(0.35)

    def test_planar_2r_index(self):
        rng = np.random.default_rng(5)
        for q in rng.uniform(-math.pi, math.pi, (100, 2)):
            expected = 0.5 * 0.3 * abs(math.sin(q[1]))
            assert manipulability_index(self.arm, q) == pytest.approx(
                expected, rel=1e-4, abs=1e-9
            )

    def test_singular_configuration(self):
        assert manipulability_index(self.arm, np.array([0.3, 0.0])) == pytest.approx(0.0, abs=1e-8)

    def test_joint_limits_enforced(self):
        arm = ArmModel(joints=[DhJoint(a=0.5, lower=-1, upper=1), DhJoint(a=0.3)])
        with pytest.raises(DomainError):
            manipulability_index(arm, np.array([2.0, 0.0]))

    def test_wrong_joint_count(self):
        with pytest.raises(DomainError):
            fk_positions(self.arm, np.zeros(3))


class TestAnnulus:
    """Annulus sector fitting."""

    def test_planar_radii_within_reach(self):
        sector = build_annulus(planar_arm(), 0.01, AnnulusConfig(resolution=0.1))
        assert sector.r_min >= 0.2 - 1e-3
        assert sector.r_max <= 0.8 + 1e-3
        assert sector.r_min < sector.r_max
        assert sector.samples.shape[0] > 0
        assert np.all(sector.contains(sector.samples))

    def test_unreachable_threshold(self):
        with pytest.raises(EmptyWorkspaceError):
            build_annulus(planar_arm(), 10.0, AnnulusConfig())

    def test_default_arm_sector(self):
        arm = ArmModel()
        sector = build_annulus(arm, arm.m_thres, AnnulusConfig())
        assert sector.half_angle == pytest.approx(1.0, abs=1e-6)
        assert 0.0 < sector.r_min < sector.r_max <= 0.75 + 1e-3
        assert sector.contains(np.array([[0.55, 0.0, 0.06]]))[0]
        assert not sector.contains(np.array([[-0.55, 0.0, 0.06]]))[0]


class TestScoring:
    """Occupancy weighting and the segment score."""

    def test_occupancy_probability(self):
        occ = OccupancyParams()
        probs = occupancy_probability(np.array([0.0, -0.5, 0.5]), np.zeros(3), occ)
        assert probs[0] == pytest.approx(0.5)
        assert probs[1] > 0.99
        assert probs[2] < 0.01

    def test_variance_pulls_toward_half(self):
        occ = OccupancyParams()
        sure = occupancy_probability(np.array([-0.05]), np.array([0.0]), occ)[0]
        unsure = occupancy_probability(np.array([-0.05]), np.array([1.0]), occ)[0]
        assert 0.5 < unsure < sure

    def test_empty_map_scores_zero(self):
        arm = ArmModel()
        sector = build_annulus(arm, arm.m_thres, AnnulusConfig())
        seg = Segment(
            index=0,
            start=np.array([0.0, -0.2]),
            end=np.array([0.2, -0.2]),
            outward=np.array([0.0, -1.0]),
        )
        assert manipulability_score(seg, GpisMap(), sector, OccupancyParams()) == 0.0

    def observed_box(self, x: float) -> GpisMap:
        """Map of a brick at (x, -0.05) after one scan from in front of it."""
        box = SceneObject(id="box", center=(x, -0.05, 0.06), half_extents=(0.1, 0.1, 0.06))
        scene = Scene(objects=[box], bounds_min=(x - 1, -1, 0), bounds_max=(x + 1, 1, 0.5))
        pose = camera_pose(x, -1.3, math.pi / 2, 1.0, 0.75)
        image = render_depth(scene, pose, CameraIntrinsics())
        gpis_map = GpisMap()
        gpis_map.dynamic_update(build_scan_gp(image, pose, ScanConfig(stride=3)))
        return gpis_map

    def test_box_inside_annulus_outscores_box_outside(self):
        arm = ArmModel()
        sector = build_annulus(arm, arm.m_thres, AnnulusConfig())
        seg = Segment(
            index=0,
            start=np.array([-0.1, -0.2]),
            end=np.array([0.1, -0.2]),
            outward=np.array([0.0, -1.0]),
        )
        inside = manipulability_score(seg, self.observed_box(0.0), sector, OccupancyParams())
        outside = manipulability_score(seg, self.observed_box(2.5), sector, OccupancyParams())
        assert inside > 0.0
        assert outside == pytest.approx(0.0, abs=1e-9)
