"""
Synthetic population scenario model
"""
from datetime import date
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

_TOLERANCE = 1e-9


def _parse_pairs(text: str, separator: str, cast_key):
    pairs = {}
    for item in text.split(separator):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.rpartition(":")
        if not sep:
            raise ValueError(f"entry '{item}' must be written key:probability")
        pairs[cast_key(key.strip())] = float(value)
    return pairs


class ScenarioSpec(BaseModel):
    """Ground-truth generator parameters.

    Anchor points sit on a ``grid_size`` x ``grid_size`` square grid centered on
    (center_lon, center_lat) with ``ap_spacing_m`` between neighbours; each carries
    ``towers_per_ap`` towers ``tower_offset_m`` from its center. One extra anchor
    point ``out_of_city_offset_m`` north of the center hosts every '*' node.
    Labels need at least one in-city node: a pure '*' day would open a gap in
    the user's in-city dates.
    """
    seed: int = 0
    n_users: int = Field(default=100, ge=1)
    days_per_user: Dict[int, float] = Field(default_factory=lambda: {3: 1.0})
    mixture: Dict[str, float] = Field(default_factory=lambda: {"A": 1.0})
    markov_labels: Optional[List[str]] = None
    markov: Optional[List[List[float]]] = None
    ping_pong_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    roaming_distance_m: float = Field(default=500.0, gt=0)
    grid_size: int = Field(default=4, ge=1)
    ap_spacing_m: Optional[float] = Field(default=None, gt=0)
    tower_offset_m: Optional[float] = Field(default=None, ge=0)
    towers_per_ap: int = Field(default=3, ge=2)
    out_of_city_offset_m: float = Field(default=50_000.0, gt=0)
    center_lon: float = Field(default=127.148, ge=-180, le=180)
    center_lat: float = Field(default=35.824, ge=-90, le=90)
    start_date: date = date(2019, 5, 1)

    @field_validator("days_per_user", mode="before")
    @classmethod
    def parse_days(cls, v):
        if isinstance(v, str):
            return _parse_pairs(v, ",", int)
        return v

    @field_validator("mixture", mode="before")
    @classmethod
    def parse_mixture(cls, v):
        if isinstance(v, str):
            return _parse_pairs(v, ";", str)
        return v

    @field_validator("markov_labels", mode="before")
    @classmethod
    def parse_labels(cls, v):
        if isinstance(v, str):
            return [label.strip() for label in v.split(";") if label.strip()]
        return v

    @field_validator("markov", mode="before")
    @classmethod
    def parse_markov(cls, v):
        if isinstance(v, str):
            return [[float(p) for p in row.split(",")] for row in v.split(";") if row.strip()]
        return v

    @model_validator(mode="after")
    def check_distributions(self) -> "ScenarioSpec":
        if any(n < 1 for n in self.days_per_user):
            raise ValueError("days_per_user values must be at least 1")
        for name, dist in (("days_per_user", self.days_per_user), ("mixture", self.mixture)):
            if not dist:
                raise ValueError(f"{name} must not be empty")
            if any(p < 0 for p in dist.values()):
                raise ValueError(f"{name} probabilities must be non-negative")
            if abs(sum(dist.values()) - 1.0) > _TOLERANCE:
                raise ValueError(f"{name} probabilities must sum to 1")
        if (self.markov is None) != (self.markov_labels is None):
            raise ValueError("markov and markov_labels must be given together")
        if self.markov is not None:
            n = len(self.markov_labels)
            if len(self.markov) != n or any(len(row) != n for row in self.markov):
                raise ValueError(f"markov must be a {n}x{n} matrix")
            for row in self.markov:
                if any(p < 0 for p in row) or abs(sum(row) - 1.0) > _TOLERANCE:
                    raise ValueError("markov rows must be non-negative and sum to 1")
        return self

    @property
    def spacing_m(self) -> float:
        return self.ap_spacing_m if self.ap_spacing_m is not None else 3.0 * self.roaming_distance_m

    @property
    def offset_m(self) -> float:
        return self.tower_offset_m if self.tower_offset_m is not None else 0.4 * self.roaming_distance_m

    @property
    def labels(self) -> List[str]:
        labels = set(self.mixture)
        labels.update(self.markov_labels or [])
        return sorted(labels)


SCENARIO_KEYS = tuple(ScenarioSpec.model_fields)


class GroundTruthDay(BaseModel):
    user_id: str
    date: date
    true_label: str
    true_n: int
