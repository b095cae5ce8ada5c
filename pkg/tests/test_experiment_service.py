"""
Tests for seeded batches, summaries and the strategy trends on the shipped config.

The trend runs are marked slow; deselect with ``-m "not slow"``.
"""

import pytest

from backend.models.simulation import Strategy
from backend.services.experiment_service import (
    RunOutcome,
    ablate,
    run_batch,
    seed_list,
    summarize_ablation,
)
from backend.services.scene_service import load_scene
from backend.utils.exceptions import DomainError
from config.run_config import load_run_config
from config.settings import settings

TREND_SEEDS = 20


def outcome(picks: int, coverage: float, collisions: int = 0) -> RunOutcome:
    return RunOutcome(
        strategy=Strategy.FULL,
        seed=0,
        picks=picks,
        initial_objects=12,
        coverage=coverage,
        collisions=collisions,
    )


class TestSummaries:
    """Seed lists and aggregate rows."""

    def test_seed_list_is_consecutive(self):
        assert seed_list(5, 3) == [5, 6, 7]

    def test_seed_list_needs_a_run(self):
        with pytest.raises(DomainError):
            seed_list(0, 0)

    def test_ablation_row_uses_population_std(self):
        row = summarize_ablation("full", [outcome(2, 40.0), outcome(4, 60.0, 1)])
        assert row.runs == 2
        assert row.picks_mean == pytest.approx(3.0)
        assert row.picks_std == pytest.approx(1.0)
        assert row.coverage_mean == pytest.approx(50.0)
        assert row.collisions_mean == pytest.approx(0.5)

    def test_picks_pct_of_empty_scene(self):
        empty = outcome(0, 0.0).model_copy(update={"initial_objects": 0})
        assert empty.picks_pct == 100.0

    def test_unknown_drop_is_rejected(self):
        config = load_run_config(settings.default_config_path)
        with pytest.raises(DomainError):
            ablate(config, load_scene(config.scene_path), drops=["colour"])


@pytest.fixture(scope="class")
def trend_outcomes():
    """Outcomes per strategy on the canonical pile over the same seeds."""
    config = load_run_config(settings.default_config_path)
    scene = load_scene(config.scene_path)
    seeds = seed_list(config.episode.seed, TREND_SEEDS)
    strategies = (
        Strategy.FULL,
        Strategy.RANDOM,
        Strategy.ablation("frontier"),
        Strategy.ablation("penalty"),
    )
    return {strategy: run_batch(config, scene, strategy, seeds) for strategy in strategies}


def mean(outcomes, attribute):
    return sum(getattr(o, attribute) for o in outcomes) / len(outcomes)


@pytest.mark.slow
class TestStrategyTrends:
    """Directional comparisons on the shipped run config."""

    def test_full_picks_at_least_as_many_as_random(self, trend_outcomes):
        full = mean(trend_outcomes[Strategy.FULL], "picks")
        assert full >= mean(trend_outcomes[Strategy.RANDOM], "picks")

    def test_dropping_frontier_costs_coverage(self, trend_outcomes):
        full = mean(trend_outcomes[Strategy.FULL], "coverage")
        assert mean(trend_outcomes[Strategy.NO_FRONTIER], "coverage") < full

    def test_dropping_the_failure_penalty_costs_picks(self, trend_outcomes):
        full = mean(trend_outcomes[Strategy.FULL], "picks")
        assert mean(trend_outcomes[Strategy.NO_PENALTY], "picks") < full

    def test_full_never_collides(self, trend_outcomes):
        assert all(o.collisions == 0 for o in trend_outcomes[Strategy.FULL])
