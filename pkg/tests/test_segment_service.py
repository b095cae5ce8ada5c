"""
Unit tests for ground projection, segment extraction and map-derived attributes.
"""

import math

import numpy as np
import pytest
from scipy.sparse import lil_matrix
from scipy.sparse.csgraph import dijkstra

from backend.models.camera import CameraIntrinsics
from backend.models.gpis import TriangleMesh
from backend.models.planning import PlannerConfig, Segment
from backend.models.simulation import Scene, SceneObject
from backend.services.gpis_service import GpisMap
from backend.services.render_service import render_depth
from backend.services.segment_service import (
    FREE,
    HIDDEN,
    UNSEEN,
    GroundEvidence,
    GroundRaster,
    _surface_points,
    build_ground_raster,
    classify_segment,
    distance_field,
    extract_segments,
    frontier_score,
    height,
    outer_contour,
    travel_distance,
)
from backend.utils.exceptions import NoCandidatesError
from backend.utils.geometry import camera_pose


def box_surface(half: float = 0.2, top: float = 0.2, spacing: float = 0.01) -> np.ndarray:
    """Points on the sides and top of an axis-aligned box resting on the ground."""
    s = np.arange(-half, half + 1e-9, spacing)
    z = np.arange(0.0, top + 1e-9, spacing)
    ss, zz = np.meshgrid(s, z, indexing="ij")
    ss, zz = ss.reshape(-1), zz.reshape(-1)
    sides = [
        np.column_stack([ss, np.full_like(ss, sign * half), zz]) for sign in (-1, 1)
    ] + [np.column_stack([np.full_like(ss, sign * half), ss, zz]) for sign in (-1, 1)]
    xx, yy = np.meshgrid(s, s, indexing="ij")
    cap = np.column_stack([xx.reshape(-1), yy.reshape(-1), np.full(xx.size, top)])
    return np.vstack(sides + [cap])


def box_mesh() -> TriangleMesh:
    vertices = box_surface()
    return TriangleMesh(vertices, np.zeros((0, 3), dtype=np.int64), np.zeros(len(vertices)))


class TestContour:
    """Ground contour and segment chain."""

    def setup_method(self):
        self.config = PlannerConfig()
        self.mesh = box_mesh()

    def test_contour_is_counter_clockwise_and_tight(self):
        polygon = outer_contour(self.mesh, self.config)
        x, y = polygon[:, 0], polygon[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert area > 0
        assert np.all(np.abs(polygon) <= 0.2 + 2 * self.config.ground_resolution)
        assert area == pytest.approx(0.16, rel=0.15)

    def test_empty_mesh_has_no_candidates(self):
        with pytest.raises(NoCandidatesError):
            extract_segments(TriangleMesh(), self.config)

    def test_ground_only_mesh_has_no_candidates(self):
        flat = TriangleMesh(np.zeros((10, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(10))
        with pytest.raises(NoCandidatesError):
            extract_segments(flat, self.config)

    def test_segments_have_about_the_target_length(self):
        segments = extract_segments(self.mesh, self.config)
        assert len(segments) >= 3
        for seg in segments:
            assert 0.5 * self.config.segment_length < seg.length < 1.5 * self.config.segment_length
        assert [seg.index for seg in segments] == list(range(len(segments)))

    def test_segments_chain_and_face_the_pile(self):
        segments = extract_segments(self.mesh, self.config)
        for a, b in zip(segments, segments[1:] + segments[:1]):
            np.testing.assert_allclose(a.end, b.start, atol=1e-9)
        for seg in segments:
            assert seg.midpoint @ seg.outward > 0
            x, y, yaw = seg.standoff_pose
            heading = np.array([math.cos(yaw), math.sin(yaw)])
            assert heading @ -seg.outward == pytest.approx(1.0)
            assert np.hypot(x, y) > 0.55

    def test_surface_points_include_ground_curtain(self):
        seg = extract_segments(self.mesh, self.config)[0]
        assert seg.surface_points.shape[0] > 0
        assert seg.surface_points[:, 2].min() == pytest.approx(self.config.ground_clearance)
        assert height(seg) == pytest.approx(0.2, abs=0.011)

    def test_curtain_of_empty_slab_stays_on_the_ground(self):
        seg = Segment(
            index=0,
            start=np.array([2.0, 0.0]),
            end=np.array([2.0, 0.3]),
            outward=np.array([1.0, 0.0]),
        )
        points = _surface_points(seg, box_surface(), self.config)
        assert points.shape[0] > 0
        assert np.all(points[:, 2] == pytest.approx(self.config.ground_clearance))
        seg.surface_points = points
        assert height(seg) < 0.05


class TestTravel:
    """Ground raster and Dijkstra distances."""

    def setup_method(self):
        self.config = PlannerConfig()

    def test_raster_blocks_around_pile(self):
        raster = build_ground_raster(box_mesh(), (-1.5, -1.5), (1.5, 1.5), self.config)
        assert raster.blocked[raster.cell((0.0, 0.0))]
        assert raster.blocked[raster.cell((0.0, 0.4))]
        assert not raster.blocked[raster.cell((0.0, 0.6))]

    def test_surface_samples_block_without_mesh(self):
        raster = build_ground_raster(
            TriangleMesh(), (-1.5, -1.5), (1.5, 1.5), self.config, surface=box_surface()
        )
        assert raster.blocked[raster.cell((0.0, 0.0))]
        assert raster.blocked[raster.cell((0.0, 0.4))]
        assert not raster.blocked[raster.cell((0.0, 0.6))]

    def test_ground_level_samples_do_not_block(self):
        flat = np.column_stack([np.zeros(5), np.linspace(-0.2, 0.2, 5), np.zeros(5)])
        raster = build_ground_raster(
            TriangleMesh(), (-1.0, -1.0), (1.0, 1.0), self.config, surface=flat
        )
        assert not raster.blocked.any()

    def test_distance_field_matches_graph_oracle(self):
        rng = np.random.default_rng(11)
        blocked = rng.random((15, 12)) < 0.25
        blocked[0, 0] = False
        raster = GroundRaster(np.zeros(2), 0.1, blocked.copy(), blocked)
        field = distance_field(raster, (0.05, 0.05))

        rows, cols = blocked.shape
        graph = lil_matrix((rows * cols, rows * cols))
        for i in range(rows):
            for j in range(cols):
                for di in (-1, 0, 1):
                    for dj in (-1, 0, 1):
                        ni, nj = i + di, j + dj
                        if (di, dj) == (0, 0) or not (0 <= ni < rows and 0 <= nj < cols):
                            continue
                        if not blocked[ni, nj]:
                            graph[i * cols + j, ni * cols + nj] = 0.1 * math.hypot(di, dj)
        oracle = dijkstra(graph.tocsr(), directed=True, indices=0).reshape(rows, cols)
        np.testing.assert_allclose(field, oracle)

    def test_travel_is_at_least_straight_line(self):
        raster = build_ground_raster(box_mesh(), (-1.5, -1.5), (1.5, 1.5), self.config)
        start = (0.0, -1.2)
        field = distance_field(raster, start)
        for seg in extract_segments(box_mesh(), self.config):
            d = travel_distance(start, seg, raster, field)
            x, y, _ = seg.standoff_pose
            assert math.isfinite(d)
            assert d >= math.hypot(x - start[0], y - start[1]) - 2 * raster.resolution

    def test_standoff_outside_raster_is_unreachable(self):
        raster = build_ground_raster(box_mesh(), (-0.3, -0.3), (0.3, 0.3), self.config)
        seg = extract_segments(box_mesh(), self.config)[0]
        assert travel_distance((0.0, 0.0), seg, raster) == math.inf


class TestMapAttributes:
    """Classification and frontier scores against a GPIS."""

    def setup_method(self):
        self.config = PlannerConfig()
        self.mesh = box_mesh()
        self.map = GpisMap()
        points = box_surface(spacing=0.04)
        self.map.insert_samples(points, np.zeros(len(points)), 1e-4)

    def test_unmapped_segment_is_imaginary(self):
        seg = extract_segments(self.mesh, self.config)[0]
        seg.m, seg.h = 1.0, 1.0
        assert not classify_segment(seg, GpisMap(), self.config)
        assert seg.m == seg.h == seg.sigma2 == 0.0

    def test_mapped_segment_is_real(self):
        for seg in extract_segments(self.mesh, self.config):
            assert classify_segment(seg, self.map, self.config)
            assert 0.0 <= seg.sigma2 < self.config.variance_threshold

    def test_frontier_matches_finite_differences(self):
        seg = extract_segments(self.mesh, self.config)[0]
        # Keep every point off the cluster cell faces
        seg.surface_points = seg.surface_points + 0.0031
        h = 1e-6
        step = h * seg.direction3
        _, plus, _, _ = self.map.query_batch(seg.surface_points + step, with_normals=False)
        _, minus, _, _ = self.map.query_batch(seg.surface_points - step, with_normals=False)
        oracle = float(np.sum(((plus - minus) / (2 * h)) ** 2))
        assert frontier_score(seg, self.map) == pytest.approx(oracle, rel=1e-4)

    def test_frontier_peaks_at_explored_boundary(self):
        xs, ys = np.meshgrid(np.arange(-0.5, 0.0, 0.03), np.arange(-0.2, 0.21, 0.03))
        plane = np.column_stack([xs.reshape(-1), ys.reshape(-1), np.full(xs.size, 0.1)])
        half_map = GpisMap()
        half_map.insert_samples(plane, np.zeros(len(plane)), 1e-4)

        def along(x0, x1):
            seg = Segment(index=0, start=np.array([x0, 0.01]), end=np.array([x1, 0.01]))
            t = np.linspace(0.0, 1.0, 9)[:, None]
            xy = seg.start + t * (seg.end - seg.start)
            seg.surface_points = np.column_stack([xy, np.full(9, 0.1)])
            return seg

        interior = frontier_score(along(-0.4, -0.25), half_map)
        boundary = frontier_score(along(-0.08, 0.07), half_map)
        assert boundary > interior
        assert frontier_score(along(2.0, 2.2), half_map) == 0.0


class TestGroundEvidence:
    """Ground cells seen free or hidden behind objects."""

    def setup_method(self):
        self.intrinsics = CameraIntrinsics()
        self.camera = camera_pose(0.0, -1.3, math.pi / 2, 1.0, 0.75)
        self.brick = Scene(
            objects=[
                SceneObject(id="brick", center=(0.0, 0.0, 0.06), half_extents=(0.1, 0.1, 0.06))
            ],
            bounds_min=(-0.4, -0.4, 0.0),
            bounds_max=(0.4, 0.4, 0.3),
        )
        self.ground = GroundEvidence.empty((-1.0, -1.5), (1.0, 1.0), 0.1)

    def look(self, scene):
        image = render_depth(scene, self.camera, self.intrinsics)
        return self.ground.observe(image, self.camera, 0.05)

    def state_at(self, xy):
        cell = np.floor((np.asarray(xy) - self.ground.origin) / self.ground.resolution)
        return self.ground.state[int(cell[0]), int(cell[1])]

    def test_everything_starts_unseen(self):
        assert np.all(self.ground.state == UNSEEN)
        assert self.ground.footprint_clear((0.0, 0.3), 0.25)

    def test_ground_in_front_is_free_and_behind_is_hidden(self):
        free, hidden = self.look(self.brick)
        assert free > 0
        assert hidden > 0
        assert self.state_at((0.05, -0.55)) == FREE
        assert self.state_at((0.05, 0.15)) == HIDDEN

    def test_footprint_over_shadow_is_not_clear(self):
        self.look(self.brick)
        assert not self.ground.footprint_clear((0.0, 0.35), 0.25)
        assert self.ground.footprint_clear((0.0, -0.6), 0.25)

    def test_revealed_ground_becomes_free(self):
        self.look(self.brick)
        self.look(Scene())
        assert self.state_at((0.05, 0.15)) == FREE
        assert not np.any(self.ground.state == HIDDEN)

    def test_free_is_final(self):
        self.look(Scene())
        before = self.ground.state.copy()
        self.look(self.brick)
        np.testing.assert_array_equal(self.ground.state[before == FREE], FREE)

    def test_camera_looking_up_votes_nothing(self):
        sky = camera_pose(0.0, -1.3, math.pi / 2, 1.0, -0.9)
        image = render_depth(self.brick, sky, self.intrinsics)
        assert self.ground.observe(image, sky, 0.05) == (0, 0)
