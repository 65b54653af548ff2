"""
Anchor point and trip chain data models
"""
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import FrozenSet, List, Optional, Tuple

from pydantic import BaseModel, Field

from tripchain.models.records import GeoPoint

STAR = "*"


class ChainMode(str, Enum):
    HYBRID = "hybrid"
    INTRA_CITY = "intra"


class ChainCategory(str, Enum):
    """Start/end classification of hybrid chains"""
    STAYING = "C1"
    PASSING = "C2"
    COMING = "C3"
    LEAVING = "C4"


@dataclass(frozen=True, slots=True)
class AnchorPoint:
    """A group of towers within the roaming distance of a seed tower"""
    ap_id: int
    seed_tower: str
    member_towers: FrozenSet[str]
    location: GeoPoint
    total_stay_s: int
    in_city: bool


@dataclass(frozen=True, slots=True)
class APVisit:
    """One dwell interval at an anchor point; ``ap_id`` is None for a collapsed out-of-city run"""
    ap_id: Optional[int]
    start_time: int
    end_time: int
    in_city: bool

    @property
    def is_star(self) -> bool:
        return self.ap_id is None


@dataclass
class UserAnchors:
    """Anchor points of one user (or one user-day when clustering per day); ids run 1..n"""
    user_id: str
    anchors: List[AnchorPoint]
    tower_to_ap: dict = field(default_factory=dict)

    def location_of(self, ap_id: int) -> GeoPoint:
        return self.anchors[ap_id - 1].location


@dataclass(frozen=True, slots=True)
class DailyChain:
    """One user's visit sequence on one calendar date, with topology and effort metrics"""
    user_id: str
    date: date
    mode: ChainMode
    visits: Tuple[APVisit, ...]
    label: str
    category: Optional[ChainCategory]
    n_aps: int
    n_edges: int
    degree: Optional[float]
    avg_distance_km: Optional[float]

    @property
    def is_pass_through(self) -> bool:
        return self.label == STAR


class RankedChainType(BaseModel):
    rank: int
    label: str
    count: int
    share: float
    significant: bool


class ChainTypeRanking(BaseModel):
    """Chain types ordered by frequency (ties by label)"""
    mode: ChainMode
    entries: List[RankedChainType]
    total_chains: int
    total_type_count: int
    significance_share: float
    coverage_share: float = Field(..., ge=0.0, le=1.0, description="Share of chains covered by significant types")
    pass_through_count: int = 0
    category_counts: dict = Field(default_factory=dict)

    @property
    def significant_labels(self) -> List[str]:
        return [entry.label for entry in self.entries if entry.significant]

    def share_of(self, label: str) -> float:
        for entry in self.entries:
            if entry.label == label:
                return entry.share
        return 0.0
