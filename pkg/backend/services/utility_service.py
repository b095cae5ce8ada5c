"""
Utility Service.

Logistic squashing of segment attributes, the discounted failure penalty, NBV
selection and the strategy variants used for benchmarking and ablation.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from backend.models.planning import (
    FACTORS,
    Factor,
    LogisticParams,
    Segment,
    UtilityConfig,
    UtilityRow,
)
from backend.models.simulation import Strategy
from backend.utils.exceptions import DomainError, NoCandidatesError, NoViableCandidateError

logger = logging.getLogger(__name__)


# ========== Building blocks ==========

def logistic(x: float, params: LogisticParams) -> float:
    """
    L(x) = scale / (1 + exp(-slope·x + offset)).

    Raises:
        DomainError: If the slope has not been calibrated
    """
    if params.slope is None:
        raise DomainError("Logistic slope is unset; run calibrate_logistics first")
    z = -params.slope * x + params.offset
    if z > 700:
        return 0.0
    return params.scale / (1.0 + math.exp(z))


def failure_penalty(t: float, t_f: float, gamma: float) -> float:
    """
    Discounted penalty γ^(t - t_f); 0 when the segment never failed.

    Raises:
        DomainError: If t precedes a finite t_f
    """
    if t_f == -math.inf:
        return 0.0
    if t < t_f:
        raise DomainError(f"Cycle {t} precedes failure time {t_f}")
    return gamma ** (t - t_f)


def attribute_values(seg: Segment) -> Dict[Factor, float]:
    """Raw attribute per factor; distance enters negated."""
    return {
        Factor.MANIP: seg.m,
        Factor.ORDER: seg.h,
        Factor.DISTANCE: -seg.d,
        Factor.UNCERTAINTY: seg.sigma2,
        Factor.FRONTIER: seg.frontier,
    }


def calibrate_logistics(config: UtilityConfig, segments: Sequence[Segment]) -> UtilityConfig:
    """
    Fill every unset slope with 4 / (largest finite |attribute|) over ``segments``.

    Returns:
        UtilityConfig: Copy with all slopes set
    """
    logistics = dict(config.logistics)
    for factor in FACTORS:
        params = logistics[factor]
        if params.slope is not None:
            continue
        values = [abs(attribute_values(seg)[factor]) for seg in segments]
        finite = [v for v in values if math.isfinite(v)]
        scale = max(finite, default=0.0)
        slope = 4.0 / scale if scale > 0 else 1.0
        logistics[factor] = params.model_copy(update={"slope": slope})
        logger.debug(f"Calibrated {factor.value} slope to {slope:.4g}")
    return config.model_copy(update={"logistics": logistics})


def strategy_config(config: UtilityConfig, strategy: Strategy) -> UtilityConfig:
    """
    Utility config for an ablation: zero the dropped weight and renormalise the rest.

    Dropping ``penalty`` disables the failure penalty instead.
    """
    dropped = strategy.dropped
    if dropped is None:
        return config
    if dropped == "penalty":
        return config.model_copy(update={"penalty_enabled": False})
    factor = Factor(dropped)
    weights = {f: (0.0 if f == factor else w) for f, w in config.weights.items()}
    total = sum(weights.values())
    if total <= 0:
        raise DomainError(f"Dropping {dropped} leaves no positive weight")
    weights = {f: w / total for f, w in weights.items()}
    return UtilityConfig.model_validate({**config.model_dump(), "weights": weights})


# ========== Selection ==========

def utility(seg: Segment, config: UtilityConfig, t: float) -> Tuple[float, float]:
    """
    Utility of one segment.

    Returns:
        tuple: (utility, penalty); utility is 0 for imaginary or unreachable segments
    """
    penalty = 0.0
    if config.penalty_enabled:
        penalty = failure_penalty(t, seg.last_failure, config.gamma)
    if not seg.is_real or not math.isfinite(seg.d):
        return 0.0, penalty
    values = attribute_values(seg)
    gain = sum(
        config.weights[f] * logistic(values[f], config.logistics[f])
        for f in FACTORS
        if config.weights[f] > 0
    )
    return (1.0 - penalty) * gain, penalty


def utility_table(
    segments: Sequence[Segment], config: UtilityConfig, t: float
) -> List[UtilityRow]:
    rows = []
    for seg in segments:
        value, penalty = utility(seg, config, t)
        rows.append(
            UtilityRow(
                segment_id=seg.index,
                is_real=seg.is_real,
                m=seg.m,
                h=seg.h,
                d=seg.d,
                sigma2=seg.sigma2,
                frontier=seg.frontier,
                penalty=penalty,
                utility=value,
            )
        )
    return rows


def select_nbv(
    segments: Sequence[Segment], config: UtilityConfig, t: float
) -> Tuple[int, List[UtilityRow]]:
    """
    Maximum-utility segment.

    Ties break toward the smaller travel distance, then the smaller position.

    Args:
        segments (Sequence[Segment]): Candidates with attributes filled
        config (UtilityConfig): Calibrated utility config
        t (float): Current planning cycle

    Returns:
        tuple: (position of the chosen segment, utility table)

    Raises:
        NoCandidatesError: If ``segments`` is empty
        NoViableCandidateError: If every utility is 0; carries the table
    """
    if not segments:
        raise NoCandidatesError("No candidate segments to select from")
    rows = utility_table(segments, config, t)
    if all(row.utility <= 0.0 for row in rows):
        raise NoViableCandidateError("Every candidate has zero utility", rows)
    best = min(range(len(rows)), key=lambda k: (-rows[k].utility, segments[k].d, k))
    rows[best].selected = True
    return best, rows


def exploration_fallback(segments: Sequence[Segment]) -> Optional[int]:
    """Reachable segment with the largest frontier score, or None."""
    reachable = [k for k, seg in enumerate(segments) if math.isfinite(seg.d)]
    if not reachable:
        return None
    return min(reachable, key=lambda k: (-segments[k].frontier, segments[k].d, k))


def select_with_strategy(
    segments: Sequence[Segment],
    config: UtilityConfig,
    t: float,
    strategy: Strategy,
    rng: np.random.Generator,
) -> Tuple[int, List[UtilityRow]]:
    """
    Dispatch selection by strategy.

    ``random`` picks uniformly among reachable candidates, ``frontier`` greedily takes
    the largest SDSD, the rest evaluate the (possibly ablated) utility.

    Raises:
        NoViableCandidateError: If nothing can be selected
    """
    if strategy in (Strategy.RANDOM, Strategy.FRONTIER):
        rows = utility_table(segments, config, t)
        reachable = [k for k, seg in enumerate(segments) if math.isfinite(seg.d)]
        if not reachable:
            raise NoViableCandidateError("No reachable candidate", rows)
        if strategy == Strategy.RANDOM:
            best = int(reachable[rng.integers(len(reachable))])
        else:
            best = exploration_fallback(segments)
        rows[best].selected = True
        return best, rows
    return select_nbv(segments, strategy_config(config, strategy), t)


# ========== Failure memory ==========

@dataclass
class FailureMemory:
    """Failed pick locations, matched to new segments by standoff proximity."""

    radius: float
    records: List[Tuple[np.ndarray, float]] = field(default_factory=list)

    def record(self, xy: Sequence[float], t: float):
        self.records.append((np.asarray(xy[:2], dtype=float), float(t)))

    def lookup(self, xy: Sequence[float]) -> float:
        """Latest failure time within the radius, -inf if none."""
        xy = np.asarray(xy[:2], dtype=float)
        times = [t for loc, t in self.records if np.linalg.norm(loc - xy) <= self.radius]
        return max(times, default=-math.inf)

    def apply(self, segments: Sequence[Segment]):
        for seg in segments:
            seg.last_failure = self.lookup(seg.standoff_pose)
