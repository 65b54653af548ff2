"""
Stay record ingestion: parsing, validation, city tagging, study-period filtering
and per-user per-day partitioning
"""
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import median
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from tripchain.core.config import StudyConfig
from tripchain.core.error_handling import InputFormatError, RecordValidationError
from tripchain.core.geo import nearest_peer_distances
from tripchain.models.analysis import ObservationDaySummary
from tripchain.models.records import (
    BASE_COLUMNS,
    SECONDS_PER_DAY,
    TOWER_COLUMN,
    CityDefinition,
    FormatSpec,
    StayRecord,
    UserDayTrace,
    format_seconds,
    tower_key,
)

logger = logging.getLogger(__name__)

_MAX_REPORTED_ROWS = 20
_TIME_PATTERN = r"\d{2}:\d{2}:\d{2}"

STAY_COLUMNS = list(BASE_COLUMNS + (TOWER_COLUMN,))
# Order of records inside a user-day trace, users and dates first
SORT_COLUMNS = ["user_id", "date", "start_time", "end_time", "tower_id", "lon", "lat"]


def _read_frame(path: Path, format_spec: FormatSpec) -> pd.DataFrame:
    if not path.is_file():
        raise InputFormatError(f"input file not found: {path}", error_key="INPUT_FILE_MISSING",
                               details={"path": str(path)})
    try:
        frame = pd.read_csv(
            path,
            sep=format_spec.delimiter,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            engine="c",
        )
    except pd.errors.EmptyDataError as e:
        raise InputFormatError(f"input file is empty: {path}", error_key="INPUT_EMPTY",
                               details={"path": str(path)}) from e
    except pd.errors.ParserError as e:
        raise InputFormatError(f"malformed row in {path}: {e}", details={"path": str(path)}) from e

    columns = tuple(c.strip() for c in frame.columns)
    expected = [BASE_COLUMNS + (TOWER_COLUMN,)] if format_spec.tower_id else []
    if format_spec.tower_id is None:
        expected = [BASE_COLUMNS, BASE_COLUMNS + (TOWER_COLUMN,)]
    elif format_spec.tower_id is False:
        expected = [BASE_COLUMNS]
    if columns not in expected:
        raise InputFormatError(
            f"inconsistent header in {path}: {','.join(columns)}",
            error_key="INPUT_HEADER_MISMATCH",
            details={"header": list(columns), "expected": [list(e) for e in expected]}
        )
    frame.columns = list(columns)
    frame = frame.fillna("")
    if frame.empty:
        raise InputFormatError(f"input file has a header but no records: {path}", error_key="INPUT_EMPTY",
                               details={"path": str(path)})
    return frame


def _parse_times(column: pd.Series) -> Tuple[np.ndarray, np.ndarray]:
    """Seconds after midnight plus a validity mask; 24:00:00 is accepted"""
    text = column.str.strip()
    shaped = text.str.fullmatch(_TIME_PATTERN).fillna(False).to_numpy(dtype=bool)
    safe = text.where(shaped, "00:00:00")
    hours = safe.str.slice(0, 2).astype(int).to_numpy()
    minutes = safe.str.slice(3, 5).astype(int).to_numpy()
    seconds = safe.str.slice(6, 8).astype(int).to_numpy()
    total = hours * 3600 + minutes * 60 + seconds
    valid = shaped & (minutes < 60) & (seconds < 60) & (total <= SECONDS_PER_DAY)
    return total, valid


def _row_problems(frame: pd.DataFrame, format_spec: FormatSpec):
    """Vectorized validation; returns parsed columns and per-row reasons"""
    n = len(frame)
    reasons: List[Optional[str]] = [None] * n

    def flag(mask: np.ndarray, reason: str):
        for idx in np.flatnonzero(mask):
            if reasons[idx] is None:
                reasons[idx] = reason

    user = frame["user_id"].str.strip()
    flag((user == "").to_numpy(), "missing user_id")

    dates = pd.to_datetime(frame["date"].str.strip(), format="%Y-%m-%d", errors="coerce")
    flag(dates.isna().to_numpy(), "date '{}' is not YYYY-MM-DD")

    start, start_ok = _parse_times(frame["start_time"])
    end, end_ok = _parse_times(frame["end_time"])
    flag(~start_ok | (start >= SECONDS_PER_DAY), "start_time is not a valid HH:MM:SS")
    flag(~end_ok, "end_time is not a valid HH:MM:SS")

    lon = pd.to_numeric(frame["lon"], errors="coerce").to_numpy(dtype=float)
    lat = pd.to_numeric(frame["lat"], errors="coerce").to_numpy(dtype=float)
    flag(~np.isfinite(lon) | (np.abs(lon) > 180.0), "lon is not a number in [-180, 180]")
    flag(~np.isfinite(lat) | (np.abs(lat) > 90.0), "lat is not a number in [-90, 90]")

    if not format_spec.midnight_wrap:
        flag(end < start, "end_time precedes start_time")

    if TOWER_COLUMN in frame.columns:
        flag((frame[TOWER_COLUMN].str.strip() == "").to_numpy(), "missing tower_id")

    return user, dates, start, end, lon, lat, reasons


def _split_past_midnight(frame: pd.DataFrame) -> pd.DataFrame:
    """Rows with end < start become one row up to 24:00:00 and one from 00:00:00 the next day"""
    start = frame["start_time"].to_numpy()
    end = frame["end_time"].to_numpy()
    wrap = end < start
    if not wrap.any():
        return frame
    head = frame[wrap].assign(end_time=SECONDS_PER_DAY)
    tail = frame[wrap & (end > 0)].assign(date=lambda f: f["date"] + pd.Timedelta(days=1), start_time=0)
    # a stable sort on the source row keeps each tail right after its head
    return pd.concat([frame[~wrap], head, tail]).sort_index(kind="stable").reset_index(drop=True)


def read_stay_frame(path: Union[str, Path], format_spec: Optional[FormatSpec] = None) -> pd.DataFrame:
    """Validated stay records as columns ``STAY_COLUMNS``, ``date`` as datetime64.

    Records running past midnight (end < start with ``midnight_wrap``) are split at
    00:00:00 into one row per calendar day.
    """
    format_spec = format_spec or FormatSpec()
    path = Path(path)
    frame = _read_frame(path, format_spec)
    user, dates, start, end, lon, lat, reasons = _row_problems(frame, format_spec)

    bad_rows = [(i, r) for i, r in enumerate(reasons) if r is not None]
    if bad_rows:
        # Line numbers count the header as line 1
        reported = []
        for idx, reason in bad_rows[:_MAX_REPORTED_ROWS]:
            if "{}" in reason:
                reason = reason.format(frame["date"].iloc[idx])
            reported.append({"row": idx + 2, "reason": reason})
        first = reported[0]
        raise InputFormatError(
            f"malformed row {first['row']} in {path}: {first['reason']}"
            + (f" (+{len(bad_rows) - 1} more)" if len(bad_rows) > 1 else ""),
            details={"path": str(path), "rows": reported, "bad_row_count": len(bad_rows)}
        )

    if TOWER_COLUMN in frame.columns:
        towers = frame[TOWER_COLUMN].str.strip().to_numpy(dtype=object)
    else:
        keys = {pair: tower_key(*pair) for pair in set(zip(lon.tolist(), lat.tolist()))}
        towers = np.array([keys[pair] for pair in zip(lon.tolist(), lat.tolist())], dtype=object)

    parsed = pd.DataFrame({
        "user_id": user.to_numpy(dtype=object),
        "date": dates.to_numpy(),
        "start_time": start.astype(np.int64),
        "end_time": end.astype(np.int64),
        "lon": lon,
        "lat": lat,
        "tower_id": towers,
    })
    parsed = _split_past_midnight(parsed)
    logger.info(
        f"Parsed {len(parsed)} stay records from {path}",
        extra={"stage": "ingest", "path": str(path), "count": len(parsed)}
    )
    return parsed


def records_frame(records: Iterable[StayRecord]) -> pd.DataFrame:
    """Column form of ``records``, the inverse of :func:`frame_records`"""
    rows = [(r.user_id, r.date, r.start_time, r.end_time, r.lon, r.lat, r.tower_id, r.in_city) for r in records]
    frame = pd.DataFrame(rows, columns=STAY_COLUMNS + ["in_city"])
    frame["date"] = pd.to_datetime(frame["date"])
    return frame


def frame_records(frame: pd.DataFrame) -> List[StayRecord]:
    """One StayRecord per row; ``in_city`` stays None when the frame is untagged"""
    codes, uniques = pd.factorize(frame["date"])
    days = [ts.date() for ts in uniques]
    in_city = frame["in_city"].tolist() if "in_city" in frame.columns else [None] * len(frame)
    return [
        StayRecord(user_id, days[code], start, end, lon, lat, tower, inside)
        for user_id, code, start, end, lon, lat, tower, inside in zip(
            frame["user_id"].tolist(), codes.tolist(), frame["start_time"].tolist(), frame["end_time"].tolist(),
            frame["lon"].tolist(), frame["lat"].tolist(), frame["tower_id"].tolist(), in_city,
        )
    ]


def parse_stay_records(path: Union[str, Path], format_spec: Optional[FormatSpec] = None) -> List[StayRecord]:
    """Parse a delimited stay-record file; see :func:`read_stay_frame`"""
    return frame_records(read_stay_frame(path, format_spec))


def serialize_stay_records(
    records: Iterable[StayRecord],
    path: Union[str, Path],
    format_spec: Optional[FormatSpec] = None
) -> None:
    """Write records in the input format, tower_id column included"""
    format_spec = format_spec or FormatSpec()
    rows = [
        (r.user_id, r.date.isoformat(), format_seconds(r.start_time), format_seconds(r.end_time),
         r.lon, r.lat, r.tower_id)
        for r in records
    ]
    frame = pd.DataFrame(rows, columns=STAY_COLUMNS)
    frame.to_csv(path, sep=format_spec.delimiter, index=False, lineterminator="\n")


def load_city_definition(path: Union[str, Path], name: Optional[str] = None) -> CityDefinition:
    """GeoJSON Polygon (bare, Feature or single-feature collection) or a tower-id list"""
    path = Path(path)
    if not path.is_file():
        raise InputFormatError(f"city definition not found: {path}", error_key="INPUT_FILE_MISSING",
                               details={"path": str(path)})
    city_name = name or path.stem
    try:
        if path.suffix.lower() in (".geojson", ".json"):
            geometry = json.loads(path.read_text(encoding="utf-8"))
            if geometry.get("type") == "FeatureCollection":
                features = geometry.get("features") or []
                if len(features) != 1:
                    raise ValueError("feature collection must hold exactly one polygon")
                geometry = features[0]
            if geometry.get("type") == "Feature":
                geometry = geometry.get("geometry") or {}
            if geometry.get("type") != "Polygon":
                raise ValueError(f"expected a Polygon geometry, got {geometry.get('type')}")
            ring = [(float(x), float(y)) for x, y, *_ in geometry["coordinates"][0]]
            return CityDefinition(name=city_name, polygon=ring)

        tower_ids = set()
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                tower_ids.add(line)
        return CityDefinition(name=city_name, tower_ids=frozenset(tower_ids))
    except (ValueError, KeyError, TypeError, ValidationError) as e:
        raise InputFormatError(f"invalid city definition {path}: {e}", error_key="INPUT_CITY_INVALID",
                               details={"path": str(path)}) from e


def city_membership(frame: pd.DataFrame, city: CityDefinition) -> np.ndarray:
    """In-city flag per row, resolved once per distinct tower"""
    if city.tower_ids is not None:
        return frame["tower_id"].isin(list(city.tower_ids)).to_numpy(dtype=bool)
    keys = ["tower_id", "lon", "lat"]
    towers = frame[keys].drop_duplicates()
    inside = [city.contains(lon, lat, tower) for tower, lon, lat in towers.itertuples(index=False, name=None)]
    lookup = towers.assign(in_city=np.array(inside, dtype=bool))
    return frame[keys].merge(lookup, on=keys, how="left")["in_city"].to_numpy(dtype=bool)


def tag_city_membership(records: Iterable[StayRecord], city: CityDefinition) -> List[StayRecord]:
    """Flag each record in-city or out-of-city; membership is resolved once per tower"""
    records = list(records)
    if not records:
        return []
    inside = city_membership(records_frame(records), city).tolist()
    return [replace(record, in_city=flag) for record, flag in zip(records, inside)]


def study_period_mask(days: pd.Series, config: StudyConfig) -> np.ndarray:
    """Rows inside the study window and outside every excluded window.

    Windows are closed intervals and exclusion wins.
    """
    keep = np.ones(len(days), dtype=bool)
    if config.study_window is not None:
        start, end = config.study_window
        keep &= ((days >= pd.Timestamp(start)) & (days <= pd.Timestamp(end))).to_numpy()
    for start, end in config.excluded_windows:
        keep &= ~((days >= pd.Timestamp(start)) & (days <= pd.Timestamp(end))).to_numpy()
    return keep


def filter_study_period(records: Iterable[StayRecord], config: StudyConfig) -> List[StayRecord]:
    """Keep records inside the study period; users left without records disappear with them"""
    records = list(records)
    days = pd.Series(pd.to_datetime([record.date for record in records]), dtype="datetime64[ns]")
    keep = study_period_mask(days, config)
    return [record for record, kept in zip(records, keep) if kept]


def detect_gap_days(user_records: Iterable[StayRecord]) -> bool:
    """True iff the user's in-city observation dates are not one contiguous run"""
    days = {record.date for record in user_records if record.in_city}
    if len(days) <= 1:
        return False
    return (max(days) - min(days)).days + 1 != len(days)


def find_gap_day_users(frame: pd.DataFrame) -> List[str]:
    """Users whose in-city dates in ``frame`` leave a hole, sorted"""
    days = frame.loc[frame["in_city"].astype(bool).to_numpy(), ["user_id", "date"]].drop_duplicates()
    if days.empty:
        return []
    spans = days.groupby("user_id")["date"].agg(["min", "max", "count"])
    gapped = (spans["max"] - spans["min"]).dt.days + 1 != spans["count"]
    return sorted(spans.index[gapped.to_numpy()].tolist())


def _overlap_error(frame: pd.DataFrame, i: int) -> RecordValidationError:
    previous, current = frame.iloc[i], frame.iloc[i + 1]
    user_id, day = previous["user_id"], previous["date"].date()
    first = [format_seconds(previous["start_time"]), format_seconds(previous["end_time"]), previous["tower_id"]]
    second = [format_seconds(current["start_time"]), format_seconds(current["end_time"]), current["tower_id"]]
    return RecordValidationError(
        f"overlapping records for user {user_id} on {day}: "
        f"{first[0]}-{first[1]} at {first[2]} and {second[0]}-{second[1]} at {second[2]}",
        error_key="VALIDATION_OVERLAP",
        details={"user_id": user_id, "date": day.isoformat(), "first": first, "second": second}
    )


def partition_user_days(
    frame: pd.DataFrame,
    stats: Optional[Dict[str, int]] = None
) -> Tuple[List[StayRecord], List[UserDayTrace]]:
    """Sorted, overlap-checked user-day traces ordered by (user_id, date), plus their records.

    Identical duplicate rows are dropped with a warning.
    """
    duplicated = frame.duplicated().to_numpy()
    duplicates = int(duplicated.sum())
    if duplicates:
        logger.warning(
            f"Dropped {duplicates} duplicated stay records",
            extra={"stage": "ingest", "count": duplicates}
        )
    if stats is not None:
        stats["duplicates"] = stats.get("duplicates", 0) + duplicates

    frame = frame[~duplicated].sort_values(SORT_COLUMNS, kind="stable").reset_index(drop=True)
    if frame.empty:
        return [], []
    users = frame["user_id"].to_numpy()
    days = frame["date"].to_numpy()
    same_day = (users[1:] == users[:-1]) & (days[1:] == days[:-1])
    overlaps = np.flatnonzero(same_day & (frame["start_time"].to_numpy()[1:] < frame["end_time"].to_numpy()[:-1]))
    if overlaps.size:
        raise _overlap_error(frame, int(overlaps[0]))

    records = frame_records(frame)
    bounds = (np.flatnonzero(~same_day) + 1).tolist()
    traces = [
        UserDayTrace(records[a].user_id, records[a].date, tuple(records[a:b]))
        for a, b in zip([0] + bounds, bounds + [len(records)])
    ]
    return records, traces


def build_user_days(records: Iterable[StayRecord], stats: Optional[Dict[str, int]] = None) -> List[UserDayTrace]:
    """Group records into user-day traces; see :func:`partition_user_days`"""
    _, traces = partition_user_days(records_frame(records), stats)
    return traces


def tower_spacing_summary(records: Iterable[StayRecord]) -> Dict[str, float]:
    """Mean and median distance from each tower to its nearest neighbour, in meters"""
    towers: Dict[str, Tuple[float, float]] = {}
    for record in records:
        towers.setdefault(record.tower_id, (record.lon, record.lat))
    if len(towers) < 2:
        return {}
    lons, lats = zip(*(towers[t] for t in sorted(towers)))
    distances = nearest_peer_distances(lons, lats)
    return {"mean_m": float(np.mean(distances)), "median_m": float(np.median(distances))}


def observation_day_summary(user_days: Iterable[UserDayTrace], gap_day_users: int = 0) -> ObservationDaySummary:
    """Observed days per user (days with any record)"""
    per_user: Dict[str, int] = defaultdict(int)
    for trace in user_days:
        per_user[trace.user_id] += 1
    counts = list(per_user.values())
    distribution: Dict[int, int] = defaultdict(int)
    for n in counts:
        distribution[n] += 1
    total_users = len(counts) + gap_day_users
    return ObservationDaySummary(
        users=len(counts),
        distribution=dict(sorted(distribution.items())),
        median_days=float(median(counts)) if counts else 0.0,
        mean_days=float(sum(counts) / len(counts)) if counts else 0.0,
        max_days=max(counts) if counts else 0,
        gap_day_users=gap_day_users,
        gap_day_share=gap_day_users / total_users if total_users else 0.0,
    )


@dataclass
class IngestResult:
    records: List[StayRecord]
    user_days: List[UserDayTrace]
    gap_day_users: List[str]
    counts: Dict[str, int] = field(default_factory=dict)
    tower_spacing: Dict[str, float] = field(default_factory=dict)


class IngestService:
    """Runs parse → tag → filter → gap-day exclusion → user-day partitioning on columns"""

    def __init__(self, config: StudyConfig, city: CityDefinition):
        self.config = config
        self.city = city
        self.format_spec = FormatSpec(delimiter=config.delimiter, midnight_wrap=config.midnight_wrap)

    def load(self, path: Union[str, Path]) -> IngestResult:
        return self.prepare(read_stay_frame(path, self.format_spec))

    def prepare(self, frame: pd.DataFrame) -> IngestResult:
        counts: Dict[str, int] = {"records_read": len(frame), "users_read": int(frame["user_id"].nunique())}

        frame = frame.assign(in_city=city_membership(frame, self.city))
        frame = frame[study_period_mask(frame["date"], self.config)]
        counts["records_in_period"] = len(frame)

        gap_users = find_gap_day_users(frame)
        if gap_users:
            action = "kept" if self.config.include_gap_day_users else "excluded"
            logger.warning(
                f"{len(gap_users)} users with gap days {action}",
                extra={"stage": "ingest", "count": len(gap_users)}
            )
        counts["gap_day_users"] = len(gap_users)
        if gap_users and not self.config.include_gap_day_users:
            frame = frame[~frame["user_id"].isin(gap_users).to_numpy()]

        records, user_days = partition_user_days(frame, counts)
        counts["users_kept"] = int(frame["user_id"].nunique())
        counts["user_days"] = len(user_days)
        counts["records_kept"] = len(records)
        counts["towers"] = int(frame["tower_id"].nunique())
        return IngestResult(records=records, user_days=user_days, gap_day_users=gap_users, counts=counts,
                            tower_spacing=tower_spacing_summary(records))
