"""
Anchor point extraction: greedy duration-ranked clustering of towers and
conversion of tower traces into anchor-point visit sequences
"""
import logging
from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from tripchain.core.geo import haversine_matrix
from tripchain.models.chains import AnchorPoint, APVisit, UserAnchors
from tripchain.models.records import GeoPoint, StayRecord

logger = logging.getLogger(__name__)


def tower_stay_durations(trace: Iterable[StayRecord]) -> Dict[str, int]:
    """Total dwell seconds per tower"""
    durations: Dict[str, int] = defaultdict(int)
    for record in trace:
        durations[record.tower_id] += record.dwell_s
    return dict(durations)


def _tower_table(trace: Sequence[StayRecord]) -> Dict[str, StayRecord]:
    """First-seen record per tower, used for coordinates and city flag"""
    table: Dict[str, StayRecord] = {}
    for record in trace:
        table.setdefault(record.tower_id, record)
    return table


def extract_anchor_points(
    trace: Sequence[StayRecord],
    roaming_distance_m: float,
    durations: Optional[Mapping[str, int]] = None
) -> List[AnchorPoint]:
    """Greedy clustering: the unassigned tower with the largest total stay seeds an
    anchor point and absorbs every unassigned tower within ``roaming_distance_m``.

    Ties on stay go to the lexicographically smaller tower id. In-city and
    out-of-city towers never share an anchor point. Ids run 1..n in seed order.
    """
    if durations is None:
        durations = tower_stay_durations(trace)
    table = _tower_table(trace)
    towers = sorted(durations, key=lambda t: (-durations[t], t))
    if not towers:
        return []

    lons = [table[t].lon for t in towers]
    lats = [table[t].lat for t in towers]
    city = np.array([bool(table[t].in_city) for t in towers])
    within = haversine_matrix(lons, lats) <= roaming_distance_m
    within &= city[:, None] == city[None, :]

    unassigned = np.ones(len(towers), dtype=bool)
    anchors: List[AnchorPoint] = []
    for seed in range(len(towers)):
        if not unassigned[seed]:
            continue
        members = np.flatnonzero(within[seed] & unassigned)
        unassigned[members] = False
        member_ids = frozenset(towers[i] for i in members)
        anchors.append(AnchorPoint(
            ap_id=len(anchors) + 1,
            seed_tower=towers[seed],
            member_towers=member_ids,
            location=GeoPoint(lons[seed], lats[seed]),
            total_stay_s=int(sum(durations[t] for t in member_ids)),
            in_city=bool(city[seed]),
        ))
    return anchors


def merge_runs(visits: Iterable[APVisit]) -> List[APVisit]:
    merged: List[APVisit] = []
    for visit in visits:
        if merged and merged[-1].ap_id == visit.ap_id:
            last = merged[-1]
            merged[-1] = APVisit(last.ap_id, last.start_time, max(last.end_time, visit.end_time), last.in_city)
        else:
            merged.append(visit)
    return merged


def _visits(
    trace: Sequence[StayRecord],
    tower_to_ap: Mapping[str, int],
    anchor_points: Sequence[AnchorPoint],
    min_ap_stay_s: float
) -> List[APVisit]:
    ordered = sorted(trace, key=lambda r: (r.date, r.start_time, r.end_time))
    kept = []
    for record in ordered:
        ap = anchor_points[tower_to_ap[record.tower_id] - 1]
        if ap.total_stay_s >= min_ap_stay_s:
            kept.append(APVisit(ap.ap_id, record.start_time, record.end_time, ap.in_city))
    return merge_runs(kept)


def ap_sequence(
    trace: Sequence[StayRecord],
    anchor_points: Sequence[AnchorPoint],
    min_ap_stay_s: float = 0.0
) -> List[APVisit]:
    """Map records to anchor points and merge maximal runs of equal ap_id.

    Anchor points whose total stay is below ``min_ap_stay_s`` are dropped and the
    remaining runs re-merged.
    """
    tower_to_ap = {tower: ap.ap_id for ap in anchor_points for tower in ap.member_towers}
    return _visits(trace, tower_to_ap, anchor_points, min_ap_stay_s)


class AnchorService:
    """Per-user anchor extraction with the configured scope"""

    def __init__(self, roaming_distance_m: float, min_ap_stay_s: float = 0.0, scope: str = "user"):
        self.roaming_distance_m = roaming_distance_m
        self.min_ap_stay_s = min_ap_stay_s
        self.scope = scope

    def extract(self, user_id: str, records: Sequence[StayRecord]) -> UserAnchors:
        anchors = extract_anchor_points(records, self.roaming_distance_m)
        tower_to_ap = {tower: ap.ap_id for ap in anchors for tower in ap.member_towers}
        logger.debug(
            f"Extracted {len(anchors)} anchor points for user {user_id}",
            extra={"stage": "anchors", "user_id": user_id, "count": len(anchors)}
        )
        return UserAnchors(user_id=user_id, anchors=anchors, tower_to_ap=tower_to_ap)

    def sequence(self, records: Sequence[StayRecord], anchors: UserAnchors) -> List[APVisit]:
        return _visits(records, anchors.tower_to_ap, anchors.anchors, self.min_ap_stay_s)
