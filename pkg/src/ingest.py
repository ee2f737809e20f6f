"""Cleaning pipeline for raw EMA exports in the TrackYourTinnitus schema."""

import json
import logging
from dataclasses import dataclass, field, asdict
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from .constants import (
    COLUMN_USER_ID, COLUMN_SAVE, COLUMN_SAVE_DATE, COLUMN_SEVERITY,
    TIMESTAMP_MERGE, TIMESTAMP_SAVE_DATE, TIMESTAMP_SAVE, TIMESTAMP_MODES,
    DEFAULT_MIN_INTERACTIONS, DEFAULT_TIMEZONE
)
from .core import ObservationSeries, PathLike, StudyDesign
from .errors import IngestError

logger = logging.getLogger(__name__)

# Columns of the cleaned record frame
USER = "user_id"
TIMESTAMP = "timestamp"
SEVERITY = "severity"
ROW = "row"
DAY = "study_day"


@dataclass(frozen=True)
class RawRecord:
    """One parsed interaction of the export."""

    user_id: str
    save_timestamp: datetime
    severity: Optional[float]


@dataclass
class CleaningReport:
    """Per-stage counts of the cleaning pipeline.

    Row counters refer to export rows, user counters to distinct user ids.
    ``users_in`` equals ``users_retained + users_without_valid_rows +
    users_below_min_interactions``.
    """

    rows_in: int = 0
    rows_incomplete: int = 0
    rows_malformed: int = 0
    rows_duplicate: int = 0
    rows_same_time: int = 0
    rows_outside_window: int = 0
    rows_overflow: int = 0
    rows_retained: int = 0
    users_in: int = 0
    users_without_valid_rows: int = 0
    users_below_min_interactions: int = 0
    users_retained: int = 0
    users_truncated_by_window: int = 0
    rejects: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def save(self, filepath: PathLike) -> None:
        """Save the report as JSON."""
        with open(filepath, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


def read_raw_export(path: PathLike, delimiter: str = ",") -> pd.DataFrame:
    """Read an export as strings, keeping empty cells as missing.

    Args:
        path: CSV file with at least ``user_id``, ``save_date``, ``question_2``.
        delimiter: Field delimiter.

    Returns:
        The raw frame with a ``row`` column holding 1-based data-row numbers.
    """
    frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False, na_values=["", "NA", "NaN"])
    required = [COLUMN_USER_ID, COLUMN_SAVE_DATE, COLUMN_SEVERITY]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise IngestError(f"{path}: missing columns {missing}")
    frame.insert(0, ROW, range(1, len(frame) + 1))
    logger.info("Read %d export rows from %s", len(frame), path)
    return frame


def _timestamp_text(raw: pd.DataFrame, mode: str) -> Tuple[pd.Series, List[str]]:
    """Assemble the timestamp string column and name the columns it needs."""
    has_save = COLUMN_SAVE in raw.columns
    if mode == TIMESTAMP_MERGE and has_save:
        return raw[COLUMN_SAVE_DATE].str.strip() + " " + raw[COLUMN_SAVE].str.strip(), [COLUMN_SAVE_DATE, COLUMN_SAVE]
    if mode in (TIMESTAMP_MERGE, TIMESTAMP_SAVE_DATE):
        return raw[COLUMN_SAVE_DATE].str.strip(), [COLUMN_SAVE_DATE]
    if not has_save:
        raise IngestError(f"timestamp mode {mode!r} needs a {COLUMN_SAVE!r} column")
    return raw[COLUMN_SAVE].str.strip(), [COLUMN_SAVE]


def clean_records(
    raw: pd.DataFrame,
    design: StudyDesign,
    min_interactions: int = DEFAULT_MIN_INTERACTIONS,
    timezone: str = DEFAULT_TIMEZONE,
    timestamp_mode: str = TIMESTAMP_MERGE,
    timestamp_format: Optional[str] = None,
) -> Tuple[pd.DataFrame, CleaningReport]:
    """Apply every cleaning stage to a raw export.

    Stages, in order: drop rows with a missing field, reject malformed rows,
    drop exact duplicates, keep the first-listed of same-time reports,
    keep the first ``n_days`` calendar days after each user's first
    interaction, drop users with fewer than ``min_interactions`` rows.

    Args:
        raw: Export frame from ``read_raw_export`` (or a cleaned frame).
        design: Study design; ``n_days`` bounds the window.
        min_interactions: Minimum retained interactions per user.
        timezone: Timezone in which calendar days are taken; naive
            timestamps are read as UTC.
        timestamp_mode: ``merge``, ``save_date`` or ``save``.
        timestamp_format: Optional strptime format of the assembled text.

    Returns:
        Cleaned frame with columns ``row, user_id, timestamp, severity``
        sorted by user and time, and the stage report.
    """
    if timestamp_mode not in TIMESTAMP_MODES:
        raise IngestError(f"unknown timestamp mode {timestamp_mode!r}, expected one of {TIMESTAMP_MODES}")
    report = CleaningReport(rows_in=len(raw))

    if TIMESTAMP in raw.columns:
        # Already cleaned: columns are typed
        frame = raw[[ROW, USER, TIMESTAMP, SEVERITY]].copy()
        required = [USER, TIMESTAMP, SEVERITY]
        stamp_text = None
    else:
        stamp_text, stamp_columns = _timestamp_text(raw, timestamp_mode)
        frame = pd.DataFrame({
            ROW: raw[ROW] if ROW in raw.columns else range(1, len(raw) + 1),
            USER: raw[COLUMN_USER_ID].str.strip(),
            TIMESTAMP: stamp_text,
            SEVERITY: raw[COLUMN_SEVERITY],
        })
        required = [COLUMN_USER_ID, COLUMN_SEVERITY] + stamp_columns

    user_ids = frame[USER].dropna()
    report.users_in = int(user_ids[user_ids != ""].nunique())

    source = raw if stamp_text is not None else frame
    incomplete = source[required].isna().any(axis=1).to_numpy() | (frame[USER].fillna("") == "").to_numpy()
    report.rows_incomplete = int(incomplete.sum())
    frame = frame[~incomplete]

    if stamp_text is not None:
        frame = _parse_fields(frame, timezone, timestamp_format, report)

    before = len(frame)
    frame = frame.drop_duplicates(subset=[USER, TIMESTAMP, SEVERITY], keep="first")
    report.rows_duplicate = before - len(frame)

    before = len(frame)
    frame = frame.drop_duplicates(subset=[USER, TIMESTAMP], keep="first")
    report.rows_same_time = before - len(frame)

    surviving_users = set(frame[USER])
    report.users_without_valid_rows = report.users_in - len(surviving_users)

    frame = frame.sort_values([USER, TIMESTAMP, ROW], kind="mergesort")
    local_day = _local_dates(frame[TIMESTAMP], timezone)
    first_day = local_day.groupby(frame[USER]).transform("min")
    study_day = (local_day - first_day).dt.days + 1
    in_window = study_day <= design.n_days
    report.rows_outside_window = int((~in_window).sum())
    report.users_truncated_by_window = int(frame.loc[~in_window, USER].nunique())
    frame = frame[in_window]

    sizes = frame.groupby(USER)[ROW].transform("size")
    enough = sizes >= min_interactions
    report.users_below_min_interactions = int(frame.loc[~enough, USER].nunique())
    frame = frame[enough].reset_index(drop=True)

    report.users_retained = int(frame[USER].nunique())
    report.rows_retained = len(frame)
    logger.info(
        "Cleaning kept %d of %d users (%d rows); %d without valid rows, %d below %d interactions",
        report.users_retained, report.users_in, report.rows_retained,
        report.users_without_valid_rows, report.users_below_min_interactions, min_interactions,
    )
    return frame, report


def _local_dates(stamps: pd.Series, timezone: str) -> pd.Series:
    """Calendar dates (as naive midnights) of aware timestamps in ``timezone``."""
    return stamps.dt.tz_convert(timezone).dt.tz_localize(None).dt.normalize()


def _parse_fields(
    frame: pd.DataFrame, timezone: str, timestamp_format: Optional[str], report: CleaningReport
) -> pd.DataFrame:
    """Parse timestamps and severities, moving malformed rows to the rejects list."""
    stamps = pd.to_datetime(frame[TIMESTAMP], format=timestamp_format, errors="coerce", utc=True)
    severity = pd.to_numeric(frame[SEVERITY].str.strip(), errors="coerce")

    bad_stamp = stamps.isna()
    bad_severity = severity.isna() | (severity < 0.0) | (severity > 1.0)
    for row, text, value, stamp_bad in zip(
        frame.loc[bad_stamp | bad_severity, ROW],
        frame.loc[bad_stamp | bad_severity, TIMESTAMP],
        frame.loc[bad_stamp | bad_severity, SEVERITY],
        bad_stamp[bad_stamp | bad_severity],
    ):
        reason = f"unparseable timestamp {text!r}" if stamp_bad else f"severity {value!r} not a value in [0, 1]"
        report.rejects.append({"row": int(row), "reason": reason})
        logger.warning("Rejected export row %d: %s", row, reason)
    report.rows_malformed = len(report.rejects)

    keep = ~(bad_stamp | bad_severity)
    parsed = frame[keep].copy()
    parsed[TIMESTAMP] = stamps[keep].dt.tz_convert(timezone)
    parsed[SEVERITY] = severity[keep].astype(float)
    return parsed


def slot_records(cleaned: pd.DataFrame, design: StudyDesign, timezone: str = DEFAULT_TIMEZONE) -> List[ObservationSeries]:
    """Map cleaned interactions onto the slot grid.

    Interactions of a calendar day fill slots 1..N_h of that day in arrival
    order; later ones on the same day become overflow of the day's last slot.

    Args:
        cleaned: Frame returned by ``clean_records``.
        design: Study design.
        timezone: Timezone of calendar days; must match the cleaning call.

    Returns:
        One series per user, ordered by user id.
    """
    ordered = cleaned.sort_values([USER, TIMESTAMP], kind="mergesort")
    local_day = _local_dates(ordered[TIMESTAMP], timezone)
    ordered = ordered.assign(**{DAY: (local_day - local_day.groupby(ordered[USER]).transform("min")).dt.days + 1})

    series_list = []
    for user_id, group in ordered.groupby(USER, sort=True):
        values: List[Optional[float]] = [None] * design.total_slots
        overflow: List[Tuple[int, float]] = []
        filled: Dict[int, int] = {}
        for day, stamp, severity in zip(group[DAY], group[TIMESTAMP], group[SEVERITY]):
            day = int(day)
            if day > design.n_days:
                raise IngestError(f"user {user_id}: interaction on study day {day} beyond {design.n_days} days")
            if pd.isna(severity):
                raise IngestError(f"user {user_id}: interaction at {stamp} has no severity")
            position = filled.get(day, 0) + 1
            filled[day] = position
            last_slot = day * design.slots_per_day
            if position <= design.slots_per_day:
                values[last_slot - design.slots_per_day + position - 1] = float(severity)
            else:
                overflow.append((last_slot, float(severity)))
        series_list.append(ObservationSeries(str(user_id), tuple(values), design.slots_per_day, tuple(overflow)))
    return series_list


def to_records(cleaned: pd.DataFrame) -> List[RawRecord]:
    """Convert a cleaned frame into records, preserving its row order."""
    return [
        RawRecord(str(user_id), pd.Timestamp(stamp).to_pydatetime(), None if pd.isna(value) else float(value))
        for user_id, stamp, value in zip(cleaned[USER], cleaned[TIMESTAMP], cleaned[SEVERITY])
    ]


def clean_and_slot(
    records: pd.DataFrame,
    design: StudyDesign,
    min_interactions: int = DEFAULT_MIN_INTERACTIONS,
    timezone: str = DEFAULT_TIMEZONE,
    timestamp_mode: str = TIMESTAMP_MERGE,
    timestamp_format: Optional[str] = None,
) -> Tuple[List[ObservationSeries], CleaningReport]:
    """Clean a raw export and produce canonical series.

    See ``clean_records`` for the stages and ``slot_records`` for the slot
    mapping.

    Returns:
        The series of retained users and the cleaning report.
    """
    cleaned, report = clean_records(
        records, design, min_interactions, timezone, timestamp_mode, timestamp_format
    )
    series_list = slot_records(cleaned, design, timezone)
    report.rows_overflow = sum(len(s.overflow) for s in series_list)
    return series_list, report
