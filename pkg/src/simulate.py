"""Synthetic cohorts: Bernoulli adherence and Beta-distributed self-reports."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from .constants import (
    DEFAULT_ADHERENCE_RATE, DEFAULT_PARAM_LO, DEFAULT_PARAM_HI, DEFAULT_SUBJECTS, DEFAULT_SEED
)
from .core import ObservationSeries, PathLike, StudyDesign, adherence_count, parallel_map
from .errors import DesignError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """Settings of a simulated cohort.

    Attributes:
        n_subjects: Number of subjects.
        adherence_rate: Per-slot answer probability chi.
        param_lo: Lower bound of the uniform draw of delta and xi.
        param_hi: Upper bound of the uniform draw of delta and xi.
        design: Study design (fixes N and N_h).
        seed: Root seed of every subject substream.
    """

    n_subjects: int = DEFAULT_SUBJECTS
    adherence_rate: float = DEFAULT_ADHERENCE_RATE
    param_lo: float = DEFAULT_PARAM_LO
    param_hi: float = DEFAULT_PARAM_HI
    design: StudyDesign = field(default_factory=StudyDesign)
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        if self.n_subjects < 0:
            raise DesignError(f"n_subjects must be non-negative, got {self.n_subjects}")
        if not 0.0 <= self.adherence_rate <= 1.0:
            raise DesignError(f"adherence_rate must lie in [0, 1], got {self.adherence_rate}")
        if not 0.0 < self.param_lo < self.param_hi:
            raise DesignError(
                f"parameter range must satisfy 0 < lo < hi, got [{self.param_lo}, {self.param_hi}]"
            )


def _draw_shapes(rng: np.random.Generator, config: SimConfig) -> Tuple[float, float]:
    delta, xi = rng.uniform(config.param_lo, config.param_hi, size=2)
    return float(delta), float(xi)


def _subject_seeds(config: SimConfig) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(config.seed).spawn(config.n_subjects)


def _generate_subject(task: Tuple[int, np.random.SeedSequence, SimConfig]) -> ObservationSeries:
    index, seed, config = task
    rng = np.random.default_rng(seed)
    n_total = config.design.total_slots
    delta, xi = _draw_shapes(rng, config)
    present = rng.random(n_total) < config.adherence_rate
    draws = rng.beta(delta, xi, size=n_total)
    values = tuple(float(x) if p else None for x, p in zip(draws, present))
    return ObservationSeries(f"sim-{index:05d}", values, config.design.slots_per_day)


def generate_cohort(config: SimConfig, workers: int = 1) -> List[ObservationSeries]:
    """Generate a reproducible synthetic cohort.

    Each subject draws delta and xi independently from
    U[param_lo, param_hi], answers each slot with probability chi and
    reports i.i.d. Beta(delta, xi) values. Subject ``i`` uses the ``i``-th
    spawned child of the root seed, so output is identical for any
    number of workers.

    Args:
        config: Cohort settings.
        workers: Worker processes.

    Returns:
        Series ordered by subject index.
    """
    tasks = [(i, child, config) for i, child in enumerate(_subject_seeds(config))]
    cohort = parallel_map(_generate_subject, tasks, workers)
    logger.info(
        "Generated %d subjects (chi=%s, params in [%s, %s], seed=%s)",
        len(cohort), config.adherence_rate, config.param_lo, config.param_hi, config.seed,
    )
    return cohort


def subject_shapes(config: SimConfig) -> List[Tuple[float, float]]:
    """True ``(delta, xi)`` of every subject ``generate_cohort`` builds from ``config``."""
    return [_draw_shapes(np.random.default_rng(child), config) for child in _subject_seeds(config)]


def estimate_cohort_adherence(cohort: Sequence[ObservationSeries], design: StudyDesign) -> float:
    """Method-of-moments adherence rate of a cohort: mean capped count / N."""
    if not cohort:
        raise DesignError("cannot estimate adherence from an empty cohort")
    counts = [adherence_count(s, s.total_slots, design.slots_per_day) for s in cohort]
    return float(np.mean(counts)) / design.total_slots


def present_count_histogram(cohort: Sequence[ObservationSeries]) -> Dict[int, int]:
    """Number of subjects per total count of reported values."""
    counts = pd.Series([s.present_count for s in cohort], dtype="int64")
    return {int(k): int(v) for k, v in counts.value_counts().sort_index().items()}


def write_histogram_csv(histogram: Dict[int, int], path: PathLike) -> None:
    """Write a histogram as ``present_count,subjects`` rows."""
    frame = pd.DataFrame(sorted(histogram.items()), columns=["present_count", "subjects"])
    frame.to_csv(path, index=False)
