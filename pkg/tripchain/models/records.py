"""
Stay record data models
"""
from dataclasses import dataclass
from datetime import date
from typing import List, Optional, Tuple, FrozenSet

from pydantic import BaseModel, Field, PrivateAttr, field_validator, model_validator
from shapely.geometry import Point, Polygon
from shapely.prepared import prep

from tripchain.core.error_handling import RecordValidationError

SECONDS_PER_DAY = 86400

BASE_COLUMNS = ("user_id", "date", "start_time", "end_time", "lon", "lat")
TOWER_COLUMN = "tower_id"


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """WGS84 coordinate in degrees"""
    lon: float
    lat: float

    def __post_init__(self):
        if not (-180.0 <= self.lon <= 180.0) or not (-90.0 <= self.lat <= 90.0):
            raise RecordValidationError(
                f"coordinate out of range: lon={self.lon}, lat={self.lat}",
                details={"lon": self.lon, "lat": self.lat}
            )


@dataclass(frozen=True, slots=True)
class StayRecord:
    """One dwell interval at a cellphone tower.

    Times are seconds after midnight; ``end_time`` may equal 86400 for a record
    that runs up to midnight. ``in_city`` stays ``None`` until tagging.
    """
    user_id: str
    date: date
    start_time: int
    end_time: int
    lon: float
    lat: float
    tower_id: str
    in_city: Optional[bool] = None

    @property
    def dwell_s(self) -> int:
        return self.end_time - self.start_time

    @property
    def location(self) -> GeoPoint:
        return GeoPoint(self.lon, self.lat)


@dataclass(frozen=True, slots=True)
class UserDayTrace:
    """Records of one user on one calendar date, sorted by start time"""
    user_id: str
    date: date
    records: Tuple[StayRecord, ...]

    @property
    def fully_in_city(self) -> bool:
        return all(record.in_city for record in self.records)

    @property
    def has_in_city(self) -> bool:
        return any(record.in_city for record in self.records)


class FormatSpec(BaseModel):
    """Layout of a delimited stay-record file"""
    delimiter: str = ","
    tower_id: Optional[bool] = Field(
        default=None, description="Require (True), forbid (False) or auto-detect (None) the tower_id column"
    )
    midnight_wrap: bool = Field(
        default=False, description="Treat end < start as a record running past midnight"
    )

    @field_validator("delimiter")
    @classmethod
    def single_character(cls, v: str) -> str:
        if v == "\\t":
            v = "\t"
        if len(v) != 1:
            raise ValueError("delimiter must be a single character")
        return v


class CityDefinition(BaseModel):
    """City membership: a WGS84 polygon or an explicit set of in-city tower ids"""
    name: str = "city"
    polygon: Optional[List[Tuple[float, float]]] = None
    tower_ids: Optional[FrozenSet[str]] = None

    _prepared = PrivateAttr(default=None)

    @model_validator(mode="after")
    def check_mode(self) -> "CityDefinition":
        if (self.polygon is None) == (self.tower_ids is None):
            raise ValueError("exactly one of polygon or tower_ids must be given")
        if self.tower_ids is not None and not self.tower_ids:
            raise ValueError("tower set must not be empty")
        if self.polygon is not None:
            ring = list(self.polygon)
            if len(ring) > 1 and ring[0] == ring[-1]:
                ring = ring[:-1]
            if len(set(ring)) < 3:
                raise ValueError("polygon needs at least three distinct vertices")
            shape = Polygon(ring)
            if not shape.is_valid:
                raise ValueError("polygon is self-intersecting")
            self.polygon = ring + [ring[0]]
            self._prepared = prep(shape)
        return self

    @property
    def mode(self) -> str:
        return "polygon" if self.polygon is not None else "towers"

    def contains(self, lon: float, lat: float, tower_id: str) -> bool:
        """Boundary points count as inside; unknown towers in set mode are outside"""
        if self.tower_ids is not None:
            return tower_id in self.tower_ids
        return self._prepared.covers(Point(lon, lat))


def format_seconds(seconds: int) -> str:
    """HH:MM:SS, with 86400 rendered as 24:00:00"""
    hours, rest = divmod(int(seconds), 3600)
    minutes, secs = divmod(rest, 60)
    return f"{hours:02d}:{minutes:02d}:{secs:02d}"


def tower_key(lon: float, lat: float) -> str:
    """Tower identity used when the input carries only coordinates"""
    return f"{lon!r},{lat!r}"
