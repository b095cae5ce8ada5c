"""
Episode Service.

The closed active/interactive mapping loop: scan, update the GPIS, extract and score
candidate segments, move to the next best view, rescan, pick, rescan. Every step is
appended to the event log; all randomness flows from the episode seed.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from backend.models.gpis import GpisConfig, ScanConfig, TriangleMesh, UpdateStats
from backend.models.planning import (
    AnnulusConfig,
    AnnulusSector,
    ArmModel,
    OccupancyParams,
    PlannerConfig,
    Segment,
    UtilityConfig,
    UtilityRow,
)
from backend.models.simulation import (
    CycleMetrics,
    EpisodeConfig,
    EpisodeEvent,
    EpisodeResult,
    Scene,
)
from backend.services.gpis_service import GpisMap
from backend.services.manipulability_service import build_annulus, manipulability_score
from backend.services.render_service import render_depth
from backend.services.scan_service import build_scan_gp
from backend.services.scene_service import (
    coverage,
    footprint_collides,
    pick,
    pickable_objects,
)
from backend.services.segment_service import (
    GroundEvidence,
    GroundRaster,
    build_ground_raster,
    classify_segment,
    distance_field,
    extract_segments,
    frontier_score,
    height,
    travel_distance,
)
from backend.services.utility_service import (
    FailureMemory,
    calibrate_logistics,
    exploration_fallback,
    select_with_strategy,
)
from backend.utils.exceptions import EmptyScanError, NoCandidatesError, NoViableCandidateError
from backend.utils.geometry import camera_pose

logger = logging.getLogger(__name__)

Pose = Tuple[float, float, float]


class EpisodeRunner:
    """
    Stateful driver of one seeded episode.

    Holds the ground-truth scene, the robot pose, the GPIS map and the running
    metrics. Single-threaded and deterministic for a given seed.
    """

    def __init__(
        self,
        scene: Scene,
        episode: EpisodeConfig,
        utility: UtilityConfig,
        arm: ArmModel,
        gpis: Optional[GpisConfig] = None,
        scan: Optional[ScanConfig] = None,
        planner: Optional[PlannerConfig] = None,
        occupancy: Optional[OccupancyParams] = None,
        annulus: Optional[AnnulusConfig] = None,
    ):
        self.scene = scene
        self.bounds = (np.asarray(scene.bounds_min), np.asarray(scene.bounds_max))
        self.episode = episode
        self.utility = utility
        self.arm = arm
        self.scan_config = scan or ScanConfig()
        self.planner = planner or PlannerConfig()
        self.occupancy = occupancy or OccupancyParams()
        self.gpis = GpisMap(gpis or GpisConfig())
        self.annulus: AnnulusSector = build_annulus(arm, arm.m_thres, annulus or AnnulusConfig())
        self.rng = np.random.default_rng(episode.seed)
        self.pose: Pose = tuple(float(v) for v in episode.start_pose)
        self.failures = FailureMemory(self.planner.failure_radius)
        self.calibrated: Optional[UtilityConfig] = None
        self.mesh: Optional[TriangleMesh] = None
        lo, hi = self._planning_area()
        self.ground = GroundEvidence.empty(lo, hi, self.planner.travel_resolution)
        self.stalls = 0

        self.initial_objects = len(scene.objects)
        self.picks = 0
        self.travel = 0.0
        self.collisions = 0
        self.result = EpisodeResult(initial_objects=self.initial_objects)

    # ========== Steps ==========

    def _log(self, cycle: int, action: str, **counts):
        pose = tuple(round(v, 9) for v in self.pose)
        event = EpisodeEvent(cycle=cycle, action=action, pose=pose, counts=counts)
        self.result.events.append(event)

    def observe(self, cycle: int) -> Optional[UpdateStats]:
        """Render from the current pose and fold the frame into the map."""
        mount = self.episode.mount
        x, y, yaw = self.pose
        cam = camera_pose(x, y, yaw, mount.height, mount.pitch, mount.forward_offset)
        image = render_depth(
            self.scene, cam, self.episode.intrinsics, self.episode.depth_noise, self.rng
        )
        free, hidden = self.ground.observe(image, cam, self.planner.ground_tolerance)
        logger.debug(f"Ground votes: {free} free, {hidden} hidden")
        try:
            stats = self.gpis.dynamic_update(build_scan_gp(image, cam, self.scan_config))
        except EmptyScanError as e:
            logger.warning(f"⚠️ Scan skipped: {e}")
            self._log(cycle, "scan_skipped")
            return None
        self.mesh = None
        self._log(cycle, "scan", **stats.model_dump())
        return stats

    def current_mesh(self) -> TriangleMesh:
        if self.mesh is None:
            self.mesh = self.gpis.extract_mesh(*self.bounds)
        return self.mesh

    def _planning_area(self) -> Tuple[np.ndarray, np.ndarray]:
        reach = self.planner.standoff + 2.0 * self.planner.robot_radius + 0.5
        return self.bounds[0][:2] - reach, self.bounds[1][:2] + reach

    def _travel_raster(self, mesh: TriangleMesh) -> GroundRaster:
        lo, hi = self._planning_area()
        lo = np.minimum(lo, np.asarray(self.pose[:2]) - 0.5)
        hi = np.maximum(hi, np.asarray(self.pose[:2]) + 0.5)
        surface = self.gpis.positions[self.gpis.surface_mask]
        return build_ground_raster(mesh, lo, hi, self.planner, surface)

    def score_segments(self, mesh: TriangleMesh, cycle: int) -> List[Segment]:
        """
        Extract candidates and fill every attribute.

        A standoff whose footprint covers ground that the scans saw something standing
        on is unreachable, whatever the mesh says.

        Raises:
            NoCandidatesError: On a degenerate ground projection
        """
        segments = extract_segments(mesh, self.planner)
        raster = self._travel_raster(mesh)
        field = distance_field(raster, self.pose[:2])
        self.failures.apply(segments)
        blocked = 0
        for seg in segments:
            seg.d = travel_distance(self.pose[:2], seg, raster, field)
            if math.isfinite(seg.d) and not self.ground.footprint_clear(
                seg.standoff_pose[:2], self.planner.robot_radius
            ):
                seg.d = math.inf
                blocked += 1
            seg.frontier = frontier_score(seg, self.gpis)
            if classify_segment(seg, self.gpis, self.planner):
                seg.h = height(seg)
                seg.m = manipulability_score(seg, self.gpis, self.annulus, self.occupancy)
        real = sum(seg.is_real for seg in segments)
        logger.info(
            f"🎯 Cycle {cycle}: {len(segments)} segments, {real} real, "
            f"{blocked} standoffs on hidden ground"
        )
        return segments

    def choose(
        self, segments: List[Segment], cycle: int
    ) -> Tuple[Optional[int], List[UtilityRow]]:
        if self.calibrated is None or self.utility.recalibrate:
            self.calibrated = calibrate_logistics(self.utility, segments)
        try:
            return select_with_strategy(
                segments, self.calibrated, cycle, self.episode.strategy, self.rng
            )
        except NoViableCandidateError as e:
            fallback = exploration_fallback(segments)
            logger.warning(f"⚠️ No viable candidate, exploring segment {fallback}")
            self._log(cycle, "no_viable_candidate", fallback=fallback)
            rows = e.table
            if fallback is not None:
                rows[fallback].selected = True
            return fallback, rows

    def interact(self, seg: Segment, cycle: int):
        """Pick the highest reachable object, or register a failure at ``seg``."""
        ids = pickable_objects(self.scene, self.pose, self.annulus)
        injected = bool(ids) and self.rng.random() < self.episode.failure_rate
        if not ids or injected:
            self.failures.record(seg.standoff_pose, cycle)
            self._log(cycle, "pick_failed", reachable=len(ids))
            return
        target = max(ids, key=lambda oid: (self.scene.get(oid).center[2], oid))
        self.scene = pick(self.scene, target)
        self.picks += 1
        self._log(cycle, "pick", object=target, remaining=len(self.scene.objects))
        logger.info(f"✅ Cycle {cycle}: picked {target}, {len(self.scene.objects)} left")
        self.observe(cycle)

    def reorient(self, cycle: int) -> bool:
        """
        Turn in place and rescan after a dead end.

        Returns:
            bool: False once ``max_rescans`` turns in a row have not helped
        """
        if self.stalls >= self.episode.max_rescans:
            logger.warning(f"⚠️ Cycle {cycle}: still stuck after {self.stalls} rescans")
            return False
        self.stalls += 1
        x, y, yaw = self.pose
        self.pose = (x, y, math.remainder(yaw + self.episode.rescan_turn, 2.0 * math.pi))
        self._log(cycle, "reorient", attempt=self.stalls)
        logger.info(f"🔄 Cycle {cycle}: turning to yaw {self.pose[2]:.2f} and rescanning")
        self.observe(cycle)
        self._record(cycle, None)
        return True

    def _record(self, cycle: int, nbv: Optional[int]):
        self.result.metrics.append(
            CycleMetrics(
                cycle=cycle,
                picks=self.picks,
                remaining=len(self.scene.objects),
                coverage=coverage(self.current_mesh(), self.scene, self.gpis.config.voxel),
                travel=self.travel,
                collisions=self.collisions,
                nbv=nbv,
                points=self.gpis.size,
            )
        )

    def run_cycle(self, cycle: int) -> bool:
        """
        One planning cycle.

        A cycle with no candidates, or none reachable, turns in place and rescans.

        Returns:
            bool: False when the episode cannot continue
        """
        mesh = self.current_mesh()
        try:
            segments = self.score_segments(mesh, cycle)
        except NoCandidatesError as e:
            logger.warning(f"⚠️ Cycle {cycle}: {e}")
            self._log(cycle, "no_candidates")
            self.result.utility_tables.append([])
            return self.reorient(cycle)

        best, rows = self.choose(segments, cycle)
        self.result.utility_tables.append(rows)
        if best is None:
            return self.reorient(cycle)

        self.stalls = 0
        seg = segments[best]
        target = seg.standoff_pose
        if math.isfinite(seg.d):
            self.travel += seg.d
        if footprint_collides(self.scene, target[:2], self.planner.robot_radius):
            self.collisions += 1
            logger.warning(f"⚠️ Cycle {cycle}: footprint collision at segment {seg.index}")
        self.pose = target
        self._log(cycle, "move", segment=seg.index, utility=rows[best].utility)

        self.observe(cycle)
        self.interact(seg, cycle)
        self._record(cycle, seg.index)
        return True

    def run(self) -> EpisodeResult:
        """Run until the cycle limit, an empty scene or a dead end."""
        logger.info(
            f"🔄 Episode seed={self.episode.seed} strategy={self.episode.strategy.value} "
            f"objects={self.initial_objects}"
        )
        if self.scene.objects and self.episode.max_cycles > 0:
            self.observe(0)
        for cycle in range(self.episode.max_cycles):
            if not self.scene.objects:
                self._log(cycle, "scene_empty")
                break
            if not self.run_cycle(cycle):
                break
        logger.info(
            f"✅ Episode done: {self.picks}/{self.initial_objects} picks, "
            f"{self.result.coverage:.1f}% coverage, {self.collisions} collisions"
        )
        return self.result


def run_episode(
    scene: Scene,
    episode: EpisodeConfig,
    utility: UtilityConfig,
    arm: ArmModel,
    **configs,
) -> EpisodeResult:
    """
    Run one seeded episode.

    Args:
        scene (Scene): Initial ground truth
        episode (EpisodeConfig): Camera, noise, seed, cycles and strategy
        utility (UtilityConfig): Utility weights
        arm (ArmModel): Arm used for the annulus sector
        **configs: Optional ``gpis``, ``scan``, ``planner``, ``occupancy``, ``annulus``

    Returns:
        EpisodeResult: Per-cycle metrics, events and utility tables
    """
    return EpisodeRunner(scene, episode, utility, arm, **configs).run()
