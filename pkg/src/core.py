"""Domain types shared by every module: study design, slotted series, trigger logs."""

import logging
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

import pandas as pd

from .constants import (
    DEFAULT_N_DAYS, DEFAULT_SLOTS_PER_DAY, DEFAULT_START_POINT, DEFAULT_TARGET_TRIGGERS,
    DEFAULT_TRIGGER_CAP, DEFAULT_STATIC_LO, DEFAULT_STATIC_HI, DEFAULT_RANDOM_TRIGGER_COUNT,
    MISSING_TOKEN, SERIES_COLUMNS, TRIGGER_LOG_COLUMNS
)
from .errors import DesignError, SeriesError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class StudyDesign:
    """Experiment-level constants of an EMA triggering study.

    Attributes:
        n_days: Number of study days (N_d).
        slots_per_day: Scheduled self-report prompts per day (N_h).
        start_point: First 1-based slot at which a trigger may fire (S*).
        target_triggers: Desired number of secondary tasks per subject (v).
        trigger_cap: Stopping rule R; ``None`` disables the cap.
        static_lo: Lower threshold of the static policy.
        static_hi: Upper threshold of the static policy.
        random_trigger_count: Slots preselected by the random policy.
        static_uses_cap: Whether the static policy honours the stopping rule.
        static_uses_start_point: Whether the static policy waits for S*.
        random_full_window: Draw random slots from 1..N instead of S*..N.
    """

    n_days: int = DEFAULT_N_DAYS
    slots_per_day: int = DEFAULT_SLOTS_PER_DAY
    start_point: int = DEFAULT_START_POINT
    target_triggers: int = DEFAULT_TARGET_TRIGGERS
    trigger_cap: Optional[int] = DEFAULT_TRIGGER_CAP
    static_lo: float = DEFAULT_STATIC_LO
    static_hi: float = DEFAULT_STATIC_HI
    random_trigger_count: int = DEFAULT_RANDOM_TRIGGER_COUNT
    static_uses_cap: bool = True
    static_uses_start_point: bool = True
    random_full_window: bool = False

    def __post_init__(self) -> None:
        if self.n_days < 1 or self.slots_per_day < 1:
            raise DesignError(
                f"n_days and slots_per_day must be positive, got {self.n_days} and {self.slots_per_day}"
            )
        if not 2 <= self.start_point <= self.total_slots:
            raise DesignError(f"start_point must lie in [2, {self.total_slots}], got {self.start_point}")
        if not 1 <= self.target_triggers <= self.total_slots:
            raise DesignError(f"target_triggers must lie in [1, {self.total_slots}], got {self.target_triggers}")
        if self.trigger_cap is not None and self.trigger_cap < 0:
            raise DesignError(f"trigger_cap must be non-negative, got {self.trigger_cap}")
        if not 0.0 <= self.static_lo < self.static_hi <= 1.0:
            raise DesignError(
                f"static thresholds must satisfy 0 <= lo < hi <= 1, got {self.static_lo} and {self.static_hi}"
            )
        if self.random_trigger_count < 1:
            raise DesignError(f"random_trigger_count must be at least 1, got {self.random_trigger_count}")

    @property
    def total_slots(self) -> int:
        """Total number of prompts N = N_d * N_h."""
        return self.n_days * self.slots_per_day

    def day_of(self, slot: int) -> int:
        """Return the 1-based study day of a 1-based slot."""
        return (slot - 1) // self.slots_per_day + 1

    def to_dict(self) -> Dict[str, Any]:
        """Serialize the design to a dictionary.

        Returns:
            A dictionary with every field plus the derived ``total_slots``.
        """
        data = asdict(self)
        data["total_slots"] = self.total_slots
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StudyDesign":
        """Create a design from a dictionary.

        Unknown keys are ignored. If ``total_slots`` is given it must agree
        with ``n_days * slots_per_day``.

        Args:
            data: Mapping of design field names to values.

        Returns:
            A validated StudyDesign.
        """
        known = {name: data[name] for name in cls.__dataclass_fields__ if name in data}
        design = cls(**known)
        if "total_slots" in data and int(data["total_slots"]) != design.total_slots:
            raise DesignError(
                f"total_slots={data['total_slots']} disagrees with "
                f"n_days * slots_per_day = {design.total_slots}"
            )
        return design


@dataclass(frozen=True)
class Observation:
    """One point of a subject's timeline.

    ``overflow_rank`` is 0 for the scheduled prompt of ``slot`` and k >= 1 for
    the k-th extra same-day interaction recorded after it.
    """

    slot: int
    value: Optional[float]
    overflow_rank: int = 0

    @property
    def present(self) -> bool:
        return self.value is not None

    @property
    def key(self) -> Tuple[int, int]:
        return (self.slot, self.overflow_rank)


@dataclass(frozen=True)
class ObservationSeries:
    """Slotted self-report series of one subject.

    Attributes:
        subject_id: Opaque subject identifier.
        values: One entry per slot (index ``slot - 1``); ``None`` marks a
            missing report.
        slots_per_day: Prompts per day, used for calendar-day grouping.
        overflow: Extra same-day interactions as ``(slot, value)`` pairs in
            arrival order. They may only follow the last slot of a day whose
            scheduled prompts were all answered.
    """

    subject_id: str
    values: Tuple[Optional[float], ...]
    slots_per_day: int = DEFAULT_SLOTS_PER_DAY
    overflow: Tuple[Tuple[int, float], ...] = field(default=())

    def __post_init__(self) -> None:
        values = tuple(None if v is None else float(v) for v in self.values)
        overflow = tuple((int(s), float(v)) for s, v in self.overflow)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "overflow", overflow)

        if self.slots_per_day < 1 or not values or len(values) % self.slots_per_day:
            raise SeriesError(
                f"subject {self.subject_id}: {len(values)} slots is not a positive multiple "
                f"of {self.slots_per_day} slots per day"
            )
        for slot, value in enumerate(values, start=1):
            if value is not None and not 0.0 <= value <= 1.0:
                raise SeriesError(f"subject {self.subject_id}: value {value} at slot {slot} outside [0, 1]")
        for slot, value in overflow:
            if not 1 <= slot <= len(values) or slot % self.slots_per_day:
                raise SeriesError(
                    f"subject {self.subject_id}: overflow at slot {slot} is not the last slot of a day"
                )
            first = slot - self.slots_per_day
            if any(v is None for v in values[first:slot]):
                raise SeriesError(
                    f"subject {self.subject_id}: overflow at slot {slot} follows an incomplete day"
                )
            if not 0.0 <= value <= 1.0:
                raise SeriesError(f"subject {self.subject_id}: overflow value {value} outside [0, 1]")

    @property
    def total_slots(self) -> int:
        return len(self.values)

    @property
    def n_days(self) -> int:
        return len(self.values) // self.slots_per_day

    def day_of(self, slot: int) -> int:
        """Return the 1-based calendar day of a slot."""
        return (slot - 1) // self.slots_per_day + 1

    @property
    def adherence(self) -> Tuple[int, ...]:
        """Adherence indicator a_t: 1 where the scheduled prompt was answered."""
        return tuple(0 if v is None else 1 for v in self.values)

    @cached_property
    def timeline(self) -> Tuple[Observation, ...]:
        """Every scheduled slot followed by the overflow interactions attached to it."""
        extras: Dict[int, List[float]] = {}
        for slot, value in self.overflow:
            extras.setdefault(slot, []).append(value)

        points: List[Observation] = []
        for slot, value in enumerate(self.values, start=1):
            points.append(Observation(slot, value))
            for rank, extra in enumerate(extras.get(slot, ()), start=1):
                points.append(Observation(slot, extra, rank))
        return tuple(points)

    def present_values(self) -> List[float]:
        """All reported values in timeline order, overflow included."""
        return [p.value for p in self.timeline if p.value is not None]

    @property
    def present_count(self) -> int:
        """Number of reported values, overflow included."""
        return len(self.overflow) + sum(self.adherence)


def adherence_count(series: ObservationSeries, up_to: int, cap_per_day: int) -> int:
    """Count answered prompts up to a slot with a per-day cap.

    Args:
        series: The subject's series.
        up_to: Last 1-based slot to include.
        cap_per_day: Maximum number of interactions counted per calendar day.

    Returns:
        Sum over days of ``min(interactions that day up to up_to, cap_per_day)``.
    """
    if not 1 <= up_to <= series.total_slots:
        raise SeriesError(f"up_to must lie in [1, {series.total_slots}], got {up_to}")
    if cap_per_day < 0:
        raise SeriesError(f"cap_per_day must be non-negative, got {cap_per_day}")

    per_day: Counter = Counter()
    for point in series.timeline:
        if point.slot > up_to:
            break
        if point.present:
            per_day[series.day_of(point.slot)] += 1
    return sum(min(count, cap_per_day) for count in per_day.values())


@dataclass(frozen=True)
class TriggerDecision:
    """Decision taken at one timeline point.

    Bounds are present only when a control chart evaluated its limits there.
    """

    slot: int
    triggered: bool
    overflow_rank: int = 0
    alpha: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None

    @property
    def key(self) -> Tuple[int, int]:
        return (self.slot, self.overflow_rank)

    @property
    def has_bounds(self) -> bool:
        return self.lower is not None and self.upper is not None


@dataclass(frozen=True)
class TriggerLog:
    """Per-subject trigger decisions of one policy, aligned to the timeline."""

    subject_id: str
    policy: str
    decisions: Tuple[TriggerDecision, ...]

    @property
    def total(self) -> int:
        """Realized number of triggers V."""
        return sum(1 for d in self.decisions if d.triggered)

    @property
    def alpha_used(self) -> Tuple[Optional[float], ...]:
        return tuple(d.alpha for d in self.decisions)

    def triggered_keys(self) -> List[Tuple[int, int]]:
        """Timeline keys ``(slot, overflow_rank)`` at which the task fired."""
        return [d.key for d in self.decisions if d.triggered]


def _format_number(value: Optional[float], missing: str) -> str:
    if value is None:
        return missing
    return repr(float(value))


def write_series_csv(series_list: Iterable[ObservationSeries], path: PathLike) -> None:
    """Write series in the canonical ``subject_id,slot,value`` format.

    Overflow interactions repeat the slot of the day's last prompt and
    follow its row. Values are written with ``repr`` so they read back
    bit-exactly.

    Args:
        series_list: Series to write.
        path: Destination CSV file.
    """
    rows = [
        (series.subject_id, str(point.slot), _format_number(point.value, MISSING_TOKEN))
        for series in series_list
        for point in series.timeline
    ]
    frame = pd.DataFrame(rows, columns=list(SERIES_COLUMNS))
    frame.to_csv(path, index=False)
    logger.info("Wrote %d series rows to %s", len(frame), path)


def read_series_csv(path: PathLike, slots_per_day: int, total_slots: int) -> List[ObservationSeries]:
    """Read series from the canonical CSV format.

    The first row of a slot holds its scheduled value, later rows with the
    same slot are overflow interactions. Slots without any row are missing.

    Args:
        path: Source CSV file.
        slots_per_day: Prompts per day (N_h).
        total_slots: Study length N.

    Returns:
        Series in order of first appearance of each subject.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing_columns = [c for c in SERIES_COLUMNS if c not in frame.columns]
    if missing_columns:
        raise SeriesError(f"{path}: missing columns {missing_columns}")

    values: Dict[str, List[Optional[float]]] = {}
    overflow: Dict[str, List[Tuple[int, float]]] = {}
    seen: Dict[str, set] = {}
    for line, (subject_id, slot_text, value_text) in enumerate(
        frame[list(SERIES_COLUMNS)].itertuples(index=False, name=None), start=2
    ):
        try:
            slot = int(slot_text)
            value = None if value_text == MISSING_TOKEN else float(value_text)
        except ValueError as err:
            raise SeriesError(f"{path}:{line}: subject {subject_id}: {err}") from err
        if not 1 <= slot <= total_slots:
            raise SeriesError(f"{path}:{line}: subject {subject_id}: slot {slot} outside [1, {total_slots}]")
        if value is not None and math.isnan(value):
            raise SeriesError(f"{path}:{line}: subject {subject_id}: NaN must be written as {MISSING_TOKEN}")

        if subject_id not in values:
            values[subject_id] = [None] * total_slots
            overflow[subject_id] = []
            seen[subject_id] = set()
        if slot not in seen[subject_id]:
            seen[subject_id].add(slot)
            values[subject_id][slot - 1] = value
        elif value is None:
            raise SeriesError(f"{path}:{line}: subject {subject_id}: repeated slot {slot} without a value")
        else:
            overflow[subject_id].append((slot, value))

    result = [
        ObservationSeries(subject_id, tuple(values[subject_id]), slots_per_day, tuple(overflow[subject_id]))
        for subject_id in values
    ]
    logger.info("Read %d series from %s", len(result), path)
    return result


def write_trigger_logs_csv(logs: Iterable[TriggerLog], path: PathLike) -> None:
    """Write logs as ``subject_id,slot,triggered,alpha,lower,upper`` rows.

    Fields that do not apply are left empty.
    """
    rows = [
        (
            log.subject_id,
            str(d.slot),
            "1" if d.triggered else "0",
            _format_number(d.alpha, ""),
            _format_number(d.lower, ""),
            _format_number(d.upper, ""),
        )
        for log in logs
        for d in log.decisions
    ]
    pd.DataFrame(rows, columns=list(TRIGGER_LOG_COLUMNS)).to_csv(path, index=False)
    logger.info("Wrote %d trigger decisions to %s", len(rows), path)


def available_workers() -> int:
    """Default degree of parallelism: the number of available processors."""
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def parallel_map(func: Callable[[T], R], items: Sequence[T], workers: int = 1) -> List[R]:
    """Apply ``func`` to every item, optionally in a process pool.

    Results keep the order of ``items`` whatever the number of workers.

    Args:
        func: A picklable top-level callable.
        items: Work items.
        workers: Number of worker processes; 1 runs inline.

    Returns:
        The list of results in input order.
    """
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    chunksize = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunksize))
