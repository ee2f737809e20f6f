"""Scoring of trigger logs against a per-subject ground truth and rank-sum comparison of policies."""

import json
import logging
import math
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .beta_stats import BetaParams, control_limits, fit_beta_mom, outside_limits
from .constants import (
    ALL_POLICIES, ALL_METRICS, COMPARISON_PAIRS, EXACT_TEST_MAX_TOTAL, METRIC_F1,
    SIDE_HIGH, SIDE_LOW, UTILITY_SIGN_NEGATED, UTILITY_SIGN_RAW
)
from .core import ObservationSeries, PathLike, StudyDesign, TriggerLog, adherence_count, parallel_map
from .design import optimal_alpha
from .errors import EvaluationError, TestInfeasibleError, TriggeringError
from .schedulers import create_scheduler, mean_present_count, subject_seed

logger = logging.getLogger(__name__)

SIDE_UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class GroundTruth:
    """Gray-area labels of one subject, computed after all data is in.

    Attributes:
        subject_id: Subject the labels belong to.
        labels: One entry per timeline point: True (extreme), False (normal),
            or None for missing points and points before the starting point.
        params: Beta fit on every reported value.
        alpha: Significance level from the realized sample count.
        lower: Lower limit of the gray area, None when alpha is 0 or 1.
        upper: Upper limit of the gray area, None when alpha is 0 or 1.
    """

    subject_id: str
    labels: Tuple[Optional[bool], ...]
    params: BetaParams
    alpha: float
    lower: Optional[float] = None
    upper: Optional[float] = None

    @property
    def extreme_count(self) -> int:
        return sum(1 for label in self.labels if label)


@dataclass(frozen=True)
class SubjectMetrics:
    """Confusion counts and utilities of one policy on one subject."""

    subject_id: str
    policy: str
    tp: int
    fp: int
    tn: int
    fn: int
    f1: Optional[float]
    u1: float
    trigger_total: int
    triggers_high: int = 0
    triggers_low: int = 0


@dataclass(frozen=True)
class PValueEntry:
    """One-sided p-value for ``first > second`` on a metric."""

    first: str
    second: str
    metric: str
    p: float

    @property
    def pair(self) -> str:
        return f"{self.first}>{self.second}"


@dataclass(frozen=True)
class EcdfPoint:
    """A jump of the empirical CDF of a policy's metric."""

    policy: str
    metric: str
    x: float
    cdf: float


def compute_ground_truth(series: ObservationSeries, design: StudyDesign) -> GroundTruth:
    """Label every present point from the slot S* on as extreme or normal.

    The Beta model is fitted on all reported values; alpha follows from the
    capped adherence count at the end of the study.

    Args:
        series: The subject's complete series.
        design: Study design.

    Returns:
        The subject's ground truth.
    """
    params = fit_beta_mom(series.present_values())
    realized = adherence_count(series, series.total_slots, design.slots_per_day)
    alpha = optimal_alpha(realized, design.start_point, design.target_triggers)

    lower = upper = None
    if 0.0 < alpha < 1.0:
        lower, upper = control_limits(params, alpha)

    labels: List[Optional[bool]] = []
    for point in series.timeline:
        if point.value is None or point.slot < design.start_point:
            labels.append(None)
        elif alpha >= 1.0:
            labels.append(True)
        elif alpha <= 0.0:
            labels.append(False)
        else:
            labels.append(outside_limits(point.value, lower, upper))
    return GroundTruth(series.subject_id, tuple(labels), params, alpha, lower, upper)


def split_trigger_sides(series: ObservationSeries, log: TriggerLog) -> Dict[str, int]:
    """Count triggers above the upper and below the lower chart limit.

    Triggers fired without limits (alpha of 1, or non-chart policies) are
    counted as ``unbounded``.
    """
    counts = {SIDE_HIGH: 0, SIDE_LOW: 0, SIDE_UNBOUNDED: 0}
    for point, decision in zip(series.timeline, log.decisions):
        if not decision.triggered:
            continue
        if not decision.has_bounds:
            counts[SIDE_UNBOUNDED] += 1
        elif point.value > decision.upper:
            counts[SIDE_HIGH] += 1
        else:
            counts[SIDE_LOW] += 1
    return counts


def score_subject(
    truth: GroundTruth, log: TriggerLog, design: StudyDesign, series: Optional[ObservationSeries] = None
) -> SubjectMetrics:
    """Compare a trigger log with the subject's ground truth.

    Only labelled points enter the confusion counts; every trigger counts
    towards ``trigger_total`` and u1.

    Args:
        truth: Ground truth of the subject.
        log: Trigger log of one policy on the same series.
        design: Study design (provides the target v).
        series: The series, when high/low trigger counts are wanted.

    Returns:
        The subject's metrics; ``f1`` is None when TP = FP = FN = 0.
    """
    if truth.subject_id != log.subject_id or len(truth.labels) != len(log.decisions):
        raise EvaluationError(
            f"ground truth of subject {truth.subject_id} ({len(truth.labels)} points) does not align "
            f"with {log.policy} log of subject {log.subject_id} ({len(log.decisions)} points)"
        )

    tp = fp = tn = fn = 0
    for label, decision in zip(truth.labels, log.decisions):
        if label is None:
            continue
        if decision.triggered:
            tp += label
            fp += not label
        else:
            fn += label
            tn += not label

    denominator = 2 * tp + fp + fn
    f1 = 2 * tp / denominator if denominator else None
    total = log.total
    sides = split_trigger_sides(series, log) if series is not None else {SIDE_HIGH: 0, SIDE_LOW: 0}
    return SubjectMetrics(
        subject_id=log.subject_id,
        policy=log.policy,
        tp=tp, fp=fp, tn=tn, fn=fn,
        f1=f1,
        u1=float((total - design.target_triggers) ** 2),
        trigger_total=total,
        triggers_high=sides[SIDE_HIGH],
        triggers_low=sides[SIDE_LOW],
    )


def _defined(values: Iterable[Optional[float]]) -> List[float]:
    return [float(v) for v in values if v is not None and not math.isnan(v)]


def mann_whitney_greater(sample_a: Iterable[Optional[float]], sample_b: Iterable[Optional[float]]) -> float:
    """One-sided Wilcoxon-Mann-Whitney test that A is stochastically greater than B.

    Undefined entries (None, NaN) are dropped first. Small tie-free samples
    use the exact null distribution; otherwise the normal approximation with
    tie and continuity correction.

    Returns:
        The p-value; 0.5 when every pooled value is identical.
    """
    a, b = _defined(sample_a), _defined(sample_b)
    if not a or not b:
        raise TestInfeasibleError(f"rank-sum test needs two non-empty samples, got {len(a)} and {len(b)}")

    pooled = a + b
    if min(pooled) == max(pooled):
        return 0.5
    has_ties = len(set(pooled)) < len(pooled)
    method = "exact" if len(pooled) <= EXACT_TEST_MAX_TOTAL and not has_ties else "asymptotic"
    result = stats.mannwhitneyu(a, b, alternative="greater", method=method, use_continuity=True)
    return float(result.pvalue)


def empirical_cdf(values: Iterable[Optional[float]]) -> List[Tuple[float, float]]:
    """Jump points ``(x, F(x))`` of the right-continuous empirical CDF."""
    data = np.asarray(_defined(values), dtype=float)
    if data.size == 0:
        return []
    xs, counts = np.unique(data, return_counts=True)
    cdf = np.cumsum(counts) / data.size
    return [(float(x), float(f)) for x, f in zip(xs, cdf)]


def _score_task(task: Tuple[ObservationSeries, StudyDesign, int, float]) -> List[SubjectMetrics]:
    series, design, seed, n_bar_prime = task
    try:
        truth = compute_ground_truth(series, design)
        results = []
        for policy in ALL_POLICIES:
            scheduler = create_scheduler(
                policy, design, n_bar_prime=n_bar_prime, seed=subject_seed(seed, series.subject_id)
            )
            results.append(score_subject(truth, scheduler.run(series), design, series))
        return results
    except TriggeringError as err:
        raise EvaluationError(f"subject {series.subject_id}: {err}") from err


@dataclass
class EvaluationReport:
    """Per-subject metrics, the p-value matrix and eCDF point sets of a comparison run."""

    design: StudyDesign
    n_bar_prime: float
    utility_sign: str
    metrics: List[SubjectMetrics]
    pvalues: List[PValueEntry]
    ecdf: List[EcdfPoint]
    subjects_skipped: int = 0

    def pvalue(self, first: str, second: str, metric: str) -> float:
        """Look up the p-value of ``first > second`` on ``metric``."""
        for entry in self.pvalues:
            if (entry.first, entry.second, entry.metric) == (first, second, metric):
                return entry.p
        raise KeyError(f"no p-value for {first}>{second} on {metric}")

    def metrics_for(self, policy: str) -> List[SubjectMetrics]:
        return [m for m in self.metrics if m.policy == policy]

    def summary(self) -> Dict[str, Any]:
        """Run header: scoring window, prior, conventions and per-policy aggregates."""
        policies = {}
        for policy in ALL_POLICIES:
            rows = self.metrics_for(policy)
            policies[policy] = {
                "subjects": len(rows),
                "undefined_f1": sum(1 for m in rows if m.f1 is None),
                "mean_triggers": float(np.mean([m.trigger_total for m in rows])) if rows else None,
                "mean_triggers_high": float(np.mean([m.triggers_high for m in rows])) if rows else None,
                "mean_triggers_low": float(np.mean([m.triggers_low for m in rows])) if rows else None,
            }
        return {
            "window": {"first_slot": self.design.start_point, "last_slot": self.design.total_slots},
            "n_bar_prime": self.n_bar_prime,
            "utility_sign": self.utility_sign,
            "subjects_skipped": self.subjects_skipped,
            "policies": policies,
            "design": self.design.to_dict(),
        }

    def save(self, output_dir: PathLike) -> List[Path]:
        """Write ``metrics.csv``, ``pvalues.csv``, ``ecdf.csv`` and ``summary.json``.

        Returns:
            The written paths.
        """
        out = Path(output_dir)
        paths = [out / "metrics.csv", out / "pvalues.csv", out / "ecdf.csv", out / "summary.json"]

        metric_frame = pd.DataFrame([asdict(m) for m in self.metrics])
        metric_frame.to_csv(paths[0], index=False, float_format="%.17g")
        pd.DataFrame(
            [(e.pair, e.metric, e.p) for e in self.pvalues], columns=["pair", "metric", "p"]
        ).to_csv(paths[1], index=False, float_format="%.17g")
        pd.DataFrame(
            [(e.policy, e.metric, e.x, e.cdf) for e in self.ecdf], columns=["algorithm", "metric", "x", "F"]
        ).to_csv(paths[2], index=False, float_format="%.17g")
        with open(paths[3], "w") as f:
            json.dump(self.summary(), f, indent=2)

        logger.info("Wrote evaluation report to %s", out)
        return paths


def _test_values(rows: Sequence[SubjectMetrics], metric: str, utility_sign: str) -> List[Optional[float]]:
    if metric == METRIC_F1:
        return [m.f1 for m in rows]
    if utility_sign == UTILITY_SIGN_NEGATED:
        return [-m.u1 for m in rows]
    return [m.u1 for m in rows]


def compare_algorithms(
    cohort: Sequence[ObservationSeries],
    design: StudyDesign,
    seed: int,
    n_bar_prime: Optional[float] = None,
    utility_sign: str = UTILITY_SIGN_NEGATED,
    workers: int = 1,
) -> EvaluationReport:
    """Run all four policies on a cohort, score them and compare them pairwise.

    Subjects with fewer than two reported values have no ground truth and
    are skipped.

    Args:
        cohort: Subject series.
        design: Study design.
        seed: Root seed of the random policy.
        n_bar_prime: Prior sample count of alg1; defaults to the cohort mean
            of the capped count.
        utility_sign: ``negated`` tests -u1, ``raw`` tests u1 as defined.
        workers: Worker processes.

    Returns:
        The evaluation report.
    """
    if utility_sign not in (UTILITY_SIGN_NEGATED, UTILITY_SIGN_RAW):
        raise EvaluationError(f"unknown utility sign {utility_sign!r}")
    if not cohort:
        raise EvaluationError("cannot compare algorithms on an empty cohort")

    scored = [s for s in cohort if s.present_count >= 2]
    skipped = len(cohort) - len(scored)
    if skipped:
        logger.warning("Skipping %d subjects with fewer than two reported values", skipped)
    if not scored:
        raise EvaluationError("no subject has at least two reported values")

    if n_bar_prime is None:
        n_bar_prime = mean_present_count(cohort, design)
    logger.info("Comparing policies on %d subjects (n_bar_prime=%.4g)", len(scored), n_bar_prime)

    tasks = [(series, design, seed, n_bar_prime) for series in scored]
    metrics = [m for subject in parallel_map(_score_task, tasks, workers) for m in subject]
    by_policy = {policy: [m for m in metrics if m.policy == policy] for policy in ALL_POLICIES}

    pvalues = []
    for metric in ALL_METRICS:
        for first, second in COMPARISON_PAIRS:
            try:
                p = mann_whitney_greater(
                    _test_values(by_policy[first], metric, utility_sign),
                    _test_values(by_policy[second], metric, utility_sign),
                )
            except TestInfeasibleError as err:
                logger.warning("No p-value for %s>%s on %s: %s", first, second, metric, err)
                p = float("nan")
            pvalues.append(PValueEntry(first, second, metric, p))
            logger.debug("%s>%s on %s: p=%.3g", first, second, metric, p)

    ecdf = [
        EcdfPoint(policy, metric, x, f)
        for policy in ALL_POLICIES
        for metric in ALL_METRICS
        for x, f in empirical_cdf(m.f1 if metric == METRIC_F1 else m.u1 for m in by_policy[policy])
    ]
    return EvaluationReport(design, float(n_bar_prime), utility_sign, metrics, pvalues, ecdf, skipped)
