"""Triggering policies: random, static thresholds and the two control charts."""

import logging
import zlib
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Union

import numpy as np

from .beta_stats import BetaParams, control_limits, fit_beta_mom, outside_limits
from .constants import (
    MIN_FIT_SAMPLES, POLICY_RANDOM, POLICY_STATIC, POLICY_ALG1, POLICY_ALG2
)
from .core import (
    ObservationSeries, Observation, StudyDesign, TriggerDecision, TriggerLog, adherence_count
)
from .design import optimal_alpha
from .errors import DesignError, SeriesError

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence]


@dataclass
class SchedulerState:
    """Mutable loop state of one scheduler run.

    Attributes:
        history: Reported values seen so far, in timeline order.
        adherence_seen: Interactions seen per calendar day.
        triggers_so_far: Triggers fired so far.
        current_params: Last Beta fit, if a chart evaluated its limits.
        adherence_rate: Last adherence estimate (adaptive chart only).
        expected_samples: Last estimate of the final sample count.
        alpha: Last significance level used.
    """

    history: List[float] = field(default_factory=list)
    adherence_seen: Dict[int, int] = field(default_factory=dict)
    triggers_so_far: int = 0
    current_params: Optional[BetaParams] = None
    adherence_rate: Optional[float] = None
    expected_samples: Optional[float] = None
    alpha: Optional[float] = None

    def capped_adherence(self, cap_per_day: int) -> int:
        """Interactions seen so far with at most ``cap_per_day`` per day."""
        return sum(min(count, cap_per_day) for count in self.adherence_seen.values())


class Scheduler:
    """Base streaming policy.

    ``observe`` consumes one timeline point at a time and never looks ahead.
    Subclasses implement ``_decide`` for present points.
    """

    policy = ""
    enforces_cap = True

    def __init__(self, design: StudyDesign):
        self.design = design
        self.state = SchedulerState()
        self.reset()

    def reset(self) -> None:
        """Clear the loop state before a new subject."""
        self.state = SchedulerState()

    def under_cap(self) -> bool:
        """Whether the stopping rule still allows a trigger."""
        cap = self.design.trigger_cap
        if not self.enforces_cap or cap is None:
            return True
        return self.state.triggers_so_far < cap

    def observe(self, point: Observation) -> TriggerDecision:
        """Decide at one timeline point and update the state.

        Args:
            point: The next point of the subject's timeline.

        Returns:
            The decision; missing points never trigger.
        """
        if not point.present:
            return TriggerDecision(point.slot, False, point.overflow_rank)

        day = self.design.day_of(point.slot)
        self.state.adherence_seen[day] = self.state.adherence_seen.get(day, 0) + 1
        decision = self._decide(point)
        self.state.history.append(point.value)
        if decision.triggered:
            self.state.triggers_so_far += 1
        return decision

    def _decide(self, point: Observation) -> TriggerDecision:
        raise NotImplementedError

    def run(self, series: ObservationSeries) -> TriggerLog:
        """Replay a whole series through the policy.

        Args:
            series: The subject's series; its length must match the design.

        Returns:
            One decision per timeline point.
        """
        if series.total_slots != self.design.total_slots or series.slots_per_day != self.design.slots_per_day:
            raise SeriesError(
                f"subject {series.subject_id}: series has {series.total_slots} slots "
                f"({series.slots_per_day}/day), design expects {self.design.total_slots} "
                f"({self.design.slots_per_day}/day)"
            )
        self.reset()
        decisions = tuple(self.observe(point) for point in series.timeline)
        logger.debug(
            "%s on subject %s: %d triggers", self.policy, series.subject_id, self.state.triggers_so_far
        )
        return TriggerLog(series.subject_id, self.policy, decisions)


class StaticScheduler(Scheduler):
    """Triggers whenever a report falls outside fixed thresholds."""

    policy = POLICY_STATIC

    @property
    def enforces_cap(self) -> bool:  # type: ignore[override]
        return self.design.static_uses_cap

    def _decide(self, point: Observation) -> TriggerDecision:
        design = self.design
        if design.static_uses_start_point and point.slot < design.start_point:
            return TriggerDecision(point.slot, False, point.overflow_rank)
        outside = outside_limits(point.value, design.static_lo, design.static_hi)
        return TriggerDecision(point.slot, outside and self.under_cap(), point.overflow_rank)


class RandomScheduler(Scheduler):
    """Preselects slots at random and shifts unanswered ones forward.

    A selection that lands on a missing slot waits for the next interaction
    not already claimed; selections still pending at the end of the series
    lapse.
    """

    policy = POLICY_RANDOM
    enforces_cap = False

    def __init__(self, design: StudyDesign, seed: SeedLike):
        super().__init__(design)
        self.seed = seed
        self.selected = self._draw_slots()

    def _draw_slots(self) -> FrozenSet[int]:
        first = 1 if self.design.random_full_window else self.design.start_point
        pool = np.arange(first, self.design.total_slots + 1)
        count = min(self.design.random_trigger_count, len(pool))
        rng = np.random.default_rng(self.seed)
        return frozenset(int(slot) for slot in rng.choice(pool, size=count, replace=False))

    def reset(self) -> None:
        super().reset()
        self.pending = 0

    def observe(self, point: Observation) -> TriggerDecision:
        if point.overflow_rank == 0 and point.slot in self.selected:
            self.pending += 1
        return super().observe(point)

    def _decide(self, point: Observation) -> TriggerDecision:
        if self.pending > 0:
            self.pending -= 1
            return TriggerDecision(point.slot, True, point.overflow_rank)
        return TriggerDecision(point.slot, False, point.overflow_rank)

    def run(self, series: ObservationSeries) -> TriggerLog:
        log = super().run(series)
        if self.pending:
            logger.warning("Subject %s: %d random triggers lapsed at series end", series.subject_id, self.pending)
        return log


class ControlChartScheduler(Scheduler):
    """Beta control chart: triggers at reports outside the fitted limits.

    The model is refitted on every value strictly before the current point.
    """

    def significance_level(self, point: Observation) -> float:
        raise NotImplementedError

    def _decide(self, point: Observation) -> TriggerDecision:
        slot, rank = point.slot, point.overflow_rank
        if slot < self.design.start_point:
            return TriggerDecision(slot, False, rank)

        alpha = self.significance_level(point)
        self.state.alpha = alpha
        if alpha >= 1.0:
            return TriggerDecision(slot, self.under_cap(), rank, alpha=alpha)
        if alpha <= 0.0:
            return TriggerDecision(slot, False, rank, alpha=alpha)
        if len(self.state.history) < MIN_FIT_SAMPLES:
            return TriggerDecision(slot, False, rank, alpha=alpha)

        params = fit_beta_mom(self.state.history)
        self.state.current_params = params
        lower, upper = control_limits(params, alpha)
        extreme = outside_limits(point.value, lower, upper)
        return TriggerDecision(slot, extreme and self.under_cap(), rank, alpha, lower, upper)


class FixedChartScheduler(ControlChartScheduler):
    """Chart with one significance level from a prior estimate of N'."""

    policy = POLICY_ALG1

    def __init__(self, design: StudyDesign, n_bar_prime: float):
        if not n_bar_prime > 0:
            raise DesignError(f"n_bar_prime must be positive, got {n_bar_prime}")
        super().__init__(design)
        self.n_bar_prime = n_bar_prime
        self.alpha = optimal_alpha(n_bar_prime, design.start_point, design.target_triggers)

    def significance_level(self, point: Observation) -> float:
        return self.alpha


class AdaptiveChartScheduler(ControlChartScheduler):
    """Chart whose significance level follows the subject's own adherence."""

    policy = POLICY_ALG2

    def significance_level(self, point: Observation) -> float:
        design = self.design
        rate = self.state.capped_adherence(design.slots_per_day) / point.slot
        expected = estimate_final_samples(rate, design.total_slots)
        self.state.adherence_rate = rate
        self.state.expected_samples = expected
        return optimal_alpha(expected, design.start_point, design.target_triggers)


def subject_seed(root_seed: int, subject_id: str) -> np.random.SeedSequence:
    """Per-subject random substream keyed by subject id, not cohort position."""
    return np.random.SeedSequence([int(root_seed), zlib.crc32(subject_id.encode("utf-8"))])


def create_scheduler(
    policy: str,
    design: StudyDesign,
    n_bar_prime: Optional[float] = None,
    seed: Optional[SeedLike] = None,
) -> Scheduler:
    """Build a scheduler by policy name.

    Args:
        policy: One of ``random``, ``static``, ``alg1``, ``alg2``.
        design: Study design.
        n_bar_prime: Expected sample count, required by ``alg1``.
        seed: Random seed, required by ``random``.

    Returns:
        A fresh scheduler.
    """
    if policy == POLICY_STATIC:
        return StaticScheduler(design)
    if policy == POLICY_ALG2:
        return AdaptiveChartScheduler(design)
    if policy == POLICY_ALG1:
        if n_bar_prime is None:
            raise DesignError("alg1 needs n_bar_prime")
        return FixedChartScheduler(design, n_bar_prime)
    if policy == POLICY_RANDOM:
        if seed is None:
            raise DesignError("random policy needs a seed")
        return RandomScheduler(design, seed)
    raise DesignError(f"unknown policy {policy!r}")


def estimate_adherence_rate(series: ObservationSeries, t: int, design: StudyDesign) -> float:
    """Adherence estimate chi_hat(t): capped interactions up to t divided by t."""
    if t < design.start_point:
        raise SeriesError(f"adherence is estimated from slot {design.start_point} on, got {t}")
    return adherence_count(series, t, design.slots_per_day) / t


def estimate_final_samples(rate: float, n_total: float) -> float:
    """Expected final sample count N'_hat = rate * N, not rounded."""
    if not 0.0 <= rate <= 1.0:
        raise DesignError(f"adherence rate must lie in [0, 1], got {rate}")
    return rate * n_total


def mean_present_count(cohort: Sequence[ObservationSeries], design: StudyDesign) -> float:
    """Cohort mean of the capped sample count, the prior N'_bar of alg1."""
    if not cohort:
        raise DesignError("cannot estimate n_bar_prime from an empty cohort")
    counts = [adherence_count(s, s.total_slots, design.slots_per_day) for s in cohort]
    return float(np.mean(counts))


def run_control_chart_fixed(
    series: ObservationSeries, design: StudyDesign, n_bar_prime: float
) -> TriggerLog:
    return FixedChartScheduler(design, n_bar_prime).run(series)


def run_control_chart_adaptive(series: ObservationSeries, design: StudyDesign) -> TriggerLog:
    return AdaptiveChartScheduler(design).run(series)


def run_random(series: ObservationSeries, design: StudyDesign, seed: SeedLike) -> TriggerLog:
    return RandomScheduler(design, seed).run(series)


def run_static(series: ObservationSeries, design: StudyDesign) -> TriggerLog:
    return StaticScheduler(design).run(series)
