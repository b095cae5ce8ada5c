"""
Tests for the closed-loop episode driver.

The end-to-end runs are marked slow; deselect with ``-m "not slow"``.
"""

import math

import pytest

from backend.models.gpis import TriangleMesh
from backend.models.planning import ArmModel, Factor, UtilityConfig
from backend.models.simulation import EpisodeConfig, Scene
from backend.services.episode_service import EpisodeRunner, run_episode
from config.run_config import load_run_config
from config.settings import settings


def short_episode(**fields):
    return EpisodeConfig(**{"max_cycles": 2, "seed": 3, **fields})


class TestTrivialEpisodes:
    """Episodes that end before any planning."""

    def test_empty_scene_stops_immediately(self):
        result = run_episode(Scene(), short_episode(), UtilityConfig(), ArmModel())
        assert len(result.metrics) <= 2
        assert [event.action for event in result.events] == ["scene_empty"]
        assert result.picks == 0

    def test_zero_cycles_does_nothing(self, canonical_scene):
        runner = EpisodeRunner(
            canonical_scene, short_episode(max_cycles=0), UtilityConfig(), ArmModel()
        )
        result = runner.run()
        assert result.metrics == []
        assert result.events == []
        assert runner.current_mesh().is_empty
        assert result.initial_objects == 12


class TestObserve:
    """Single scans folded into the map."""

    def test_first_scan_populates_map(self, single_brick, scan_config):
        runner = EpisodeRunner(
            single_brick, short_episode(), UtilityConfig(), ArmModel(), scan=scan_config
        )
        stats = runner.observe(0)
        assert stats is not None
        assert runner.gpis.size > 0
        assert runner.result.events[-1].action == "scan"
        assert not runner.current_mesh().is_empty


    def test_scan_records_ground_evidence(self, single_brick, scan_config):
        runner = EpisodeRunner(
            single_brick, short_episode(), UtilityConfig(), ArmModel(), scan=scan_config
        )
        runner.observe(0)
        assert runner.ground.footprint_clear((0.0, -0.6), 0.25)
        assert not runner.ground.footprint_clear((0.0, 0.35), 0.25)

    def test_travel_raster_blocks_at_surface_samples(self, single_brick, scan_config):
        runner = EpisodeRunner(
            single_brick, short_episode(), UtilityConfig(), ArmModel(), scan=scan_config
        )
        runner.observe(0)
        raster = runner._travel_raster(TriangleMesh())
        assert raster.blocked[raster.cell((0.0, -0.1))]


class TestDeadEnds:
    """Turning in place when nothing can be planned."""

    def facing_away(self, **fields):
        return short_episode(start_pose=(0.0, -1.3, -math.pi / 2), **fields)

    def test_stops_after_max_rescans(self, single_brick, scan_config):
        runner = EpisodeRunner(
            single_brick,
            self.facing_away(max_cycles=6, max_rescans=2),
            UtilityConfig(),
            ArmModel(),
            scan=scan_config,
        )
        result = runner.run()
        actions = [event.action for event in result.events]
        assert actions.count("reorient") == 2
        assert actions.count("no_candidates") == 3
        assert [row.nbv for row in result.metrics] == [None, None]
        assert result.utility_tables == [[], [], []]
        assert runner.pose[2] == pytest.approx(0.0)

    def test_zero_rescans_stops_at_first_dead_end(self, single_brick, scan_config):
        result = run_episode(
            single_brick,
            self.facing_away(max_rescans=0),
            UtilityConfig(),
            ArmModel(),
            scan=scan_config,
        )
        assert "reorient" not in [event.action for event in result.events]
        assert result.metrics == []

    @pytest.mark.slow
    def test_turning_around_finds_the_pile(self, single_brick, scan_config):
        runner = EpisodeRunner(
            single_brick,
            self.facing_away(max_cycles=2, max_rescans=1, rescan_turn=math.pi),
            UtilityConfig(),
            ArmModel(),
            scan=scan_config,
        )
        result = runner.run()
        actions = [event.action for event in result.events]
        assert actions.index("reorient") < actions.index("move")
        assert result.metrics[0].nbv is None
        assert result.metrics[1].nbv is not None
        assert runner.stalls == 0


class TestCalibration:
    """Logistic slopes fitted from the candidates."""

    def runner(self, scene, scan_config, **utility):
        return EpisodeRunner(
            scene, short_episode(), UtilityConfig(**utility), ArmModel(), scan=scan_config
        )

    def test_slopes_are_kept_from_the_first_map(self, single_brick, scan_config):
        runner = self.runner(single_brick, scan_config)
        runner.observe(0)
        segments = runner.score_segments(runner.current_mesh(), 0)
        runner.choose(segments, 0)
        first = runner.calibrated
        for seg in segments:
            seg.d *= 10.0
        runner.choose(segments, 1)
        assert runner.calibrated is first

    def test_recalibrate_refits_every_cycle(self, single_brick, scan_config):
        runner = self.runner(single_brick, scan_config, recalibrate=True)
        runner.observe(0)
        segments = runner.score_segments(runner.current_mesh(), 0)
        runner.choose(segments, 0)
        first = runner.calibrated.logistics
        reachable = [seg for seg in segments if math.isfinite(seg.d)]
        assert reachable
        for seg in reachable:
            seg.d *= 10.0
        runner.choose(segments, 1)
        second = runner.calibrated.logistics
        assert runner.utility.logistics[Factor.DISTANCE].slope is None
        ratio = first[Factor.DISTANCE].slope / second[Factor.DISTANCE].slope
        assert ratio == pytest.approx(10.0)

@pytest.mark.slow
class TestClosedLoop:
    """Short end-to-end runs."""

    def test_seeded_runs_are_identical(self, canonical_scene, scan_config):
        first = run_episode(
            canonical_scene, short_episode(), UtilityConfig(), ArmModel(), scan=scan_config
        )
        second = run_episode(
            canonical_scene, short_episode(), UtilityConfig(), ArmModel(), scan=scan_config
        )
        assert first.model_dump() == second.model_dump()

    def test_objects_are_conserved(self, canonical_scene, scan_config):
        result = run_episode(
            canonical_scene, short_episode(), UtilityConfig(), ArmModel(), scan=scan_config
        )
        for row in result.metrics:
            assert row.picks + row.remaining == 12
            assert 0.0 <= row.coverage <= 100.0
        assert len(result.utility_tables) >= len(result.metrics)

    def test_injected_failures_block_every_pick(self, single_brick, scan_config):
        result = run_episode(
            single_brick,
            short_episode(failure_rate=1.0),
            UtilityConfig(),
            ArmModel(),
            scan=scan_config,
        )
        failed = [event for event in result.events if event.action == "pick_failed"]
        assert result.picks == 0
        assert len(failed) == len(result.metrics)

    def test_single_reachable_brick_is_picked(self, single_brick):
        config = load_run_config(settings.default_config_path)
        result = run_episode(
            single_brick, config.episode, config.utility, config.arm, **config.module_configs()
        )
        assert result.picks == 1
        assert result.coverage >= 90.0
        assert result.collisions == 0
