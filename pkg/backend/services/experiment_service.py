"""
Experiment Service.

Seeded multi-run harness behind the ablation and benchmark commands. Runs are
independent and may execute in worker processes; results are always ordered by seed.
"""

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from backend.models.simulation import ABLATION_NAMES, Scene, Strategy
from backend.services.episode_service import run_episode
from backend.utils.exceptions import DomainError
from config.run_config import RunConfig

logger = logging.getLogger(__name__)


class RunOutcome(BaseModel):
    """Headline numbers of one episode."""

    strategy: Strategy
    seed: int
    picks: int
    initial_objects: int
    coverage: float
    collisions: int

    @property
    def picks_pct(self) -> float:
        if self.initial_objects == 0:
            return 100.0
        return 100.0 * self.picks / self.initial_objects


class AblationRow(BaseModel):
    variant: str = Field(..., description="'full' or the dropped factor as no-<factor>")
    runs: int
    picks_mean: float
    picks_std: float
    coverage_mean: float
    coverage_std: float
    collisions_mean: float


class BenchmarkRow(BaseModel):
    strategy: str
    runs: int
    picks_pct_mean: float
    picks_pct_std: float
    map_pct_mean: float
    map_pct_std: float


# ========== Running ==========

def seed_list(base_seed: int, runs: int) -> List[int]:
    """Consecutive seeds starting at ``base_seed``."""
    if runs < 1:
        raise DomainError(f"runs must be at least 1, got {runs}")
    return [base_seed + k for k in range(runs)]


def run_one(config: RunConfig, scene: Scene, strategy: Strategy, seed: int) -> RunOutcome:
    """Run a single seeded episode and keep its headline numbers."""
    episode = config.episode.model_copy(update={"strategy": strategy, "seed": seed})
    result = run_episode(scene, episode, config.utility, config.arm, **config.module_configs())
    return RunOutcome(
        strategy=strategy,
        seed=seed,
        picks=result.picks,
        initial_objects=result.initial_objects,
        coverage=result.coverage,
        collisions=result.collisions,
    )


def run_batch(
    config: RunConfig,
    scene: Scene,
    strategy: Strategy,
    seeds: Sequence[int],
    workers: int = 1,
) -> List[RunOutcome]:
    """
    Run one strategy over a seed list.

    Args:
        config (RunConfig): Experiment config
        scene (Scene): Initial scene, shared by every run
        strategy (Strategy): Selection strategy
        seeds (Sequence[int]): Episode seeds
        workers (int): Worker processes; 1 runs in-process

    Returns:
        List[RunOutcome]: One outcome per seed, in seed-list order
    """
    logger.info(f"🔄 {strategy.value}: {len(seeds)} runs on {workers} worker(s)")
    if workers <= 1:
        return [run_one(config, scene, strategy, seed) for seed in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_one, config, scene, strategy, seed) for seed in seeds]
        return [future.result() for future in futures]


# ========== Summaries ==========

def _mean_std(values: Sequence[float]):
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def summarize_ablation(variant: str, outcomes: Sequence[RunOutcome]) -> AblationRow:
    picks_mean, picks_std = _mean_std([o.picks for o in outcomes])
    coverage_mean, coverage_std = _mean_std([o.coverage for o in outcomes])
    return AblationRow(
        variant=variant,
        runs=len(outcomes),
        picks_mean=picks_mean,
        picks_std=picks_std,
        coverage_mean=coverage_mean,
        coverage_std=coverage_std,
        collisions_mean=float(np.mean([o.collisions for o in outcomes])),
    )


def summarize_benchmark(strategy: Strategy, outcomes: Sequence[RunOutcome]) -> BenchmarkRow:
    picks_mean, picks_std = _mean_std([o.picks_pct for o in outcomes])
    map_mean, map_std = _mean_std([o.coverage for o in outcomes])
    return BenchmarkRow(
        strategy=strategy.value,
        runs=len(outcomes),
        picks_pct_mean=picks_mean,
        picks_pct_std=picks_std,
        map_pct_mean=map_mean,
        map_pct_std=map_std,
    )


def ablate(
    config: RunConfig,
    scene: Scene,
    drops: Optional[Sequence[str]] = None,
    runs: int = 1,
    workers: int = 1,
) -> List[AblationRow]:
    """
    Full utility plus one variant per dropped factor.

    Args:
        drops (Sequence[str], optional): Factor names or 'penalty'; None means all

    Returns:
        List[AblationRow]: 'full' first, then the variants in the given order

    Raises:
        DomainError: On an unknown factor name or runs < 1
    """
    names = list(ABLATION_NAMES) if drops is None else list(drops)
    unknown = [name for name in names if name not in ABLATION_NAMES]
    if unknown:
        raise DomainError(f"Unknown factor(s) {unknown}; choose from {list(ABLATION_NAMES)}")
    seeds = seed_list(config.episode.seed, runs)

    rows = [summarize_ablation("full", run_batch(config, scene, Strategy.FULL, seeds, workers))]
    for name in names:
        strategy = Strategy.ablation(name)
        outcomes = run_batch(config, scene, strategy, seeds, workers)
        rows.append(summarize_ablation(strategy.value, outcomes))
    for row in rows:
        logger.info(
            f"🎯 {row.variant}: picks {row.picks_mean:.2f}±{row.picks_std:.2f}, "
            f"coverage {row.coverage_mean:.1f}±{row.coverage_std:.1f}%"
        )
    return rows


def benchmark(
    config: RunConfig,
    scene: Scene,
    strategies: Sequence[Strategy] = (Strategy.FULL, Strategy.RANDOM),
    runs: int = 1,
    workers: int = 1,
) -> List[BenchmarkRow]:
    """Picks-% and map-% mean ± population std per strategy over shared seeds."""
    seeds = seed_list(config.episode.seed, runs)
    rows = []
    for strategy in strategies:
        outcomes = run_batch(config, scene, strategy, seeds, workers)
        rows.append(summarize_benchmark(strategy, outcomes))
        logger.info(
            f"🎯 {strategy.value}: picks {rows[-1].picks_pct_mean:.1f}%, "
            f"map {rows[-1].map_pct_mean:.1f}%"
        )
    return rows


def write_rows(rows: Sequence[BaseModel], path: Union[str, Path]) -> Path:
    """CSV with one column per model field."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return path
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(type(rows[0]).model_fields))
        writer.writeheader()
        for row in rows:
            writer.writerow(row.model_dump())
    logger.info(f"✅ Wrote {len(rows)} rows to {path}")
    return path
