"""
Daily trip chain construction, canonical labelling, category classification and
chain type ranking
"""
import logging
from collections import Counter
from dataclasses import dataclass
from datetime import date
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Union

from tripchain.core.error_handling import AnalysisError
from tripchain.models.chains import (
    STAR,
    APVisit,
    ChainCategory,
    ChainMode,
    ChainTypeRanking,
    DailyChain,
    RankedChainType,
    UserAnchors,
)
from tripchain.services.anchor_service import merge_runs
from tripchain.services.stats_service import chain_avg_distance

logger = logging.getLogger(__name__)

_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class DayVisits:
    """Anchor-point visit sequence of one user-day, before chain construction"""
    user_id: str
    date: date
    visits: Sequence[APVisit]
    fully_in_city: bool


def collapse_out_of_city(visits: Iterable[APVisit]) -> List[APVisit]:
    """Replace every maximal run of out-of-city visits with one star node"""
    collapsed: List[APVisit] = []
    for visit in visits:
        if visit.in_city:
            collapsed.append(visit)
        elif collapsed and collapsed[-1].is_star:
            star = collapsed[-1]
            collapsed[-1] = APVisit(None, star.start_time, max(star.end_time, visit.end_time), False)
        else:
            collapsed.append(APVisit(None, visit.start_time, visit.end_time, False))
    return collapsed


def _letter(index: int) -> str:
    """A..Z, then AA, AB, ... for days with more than 26 anchor points"""
    name = ""
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        name = _LETTERS[rem] + name
    return name


def canonical_label(keys: Sequence[Hashable]) -> str:
    """Relabel arbitrary node keys A, B, C... by first appearance; '*' and None stay '*'"""
    if not keys:
        raise AnalysisError("cannot label an empty visit sequence")
    names: Dict[Hashable, str] = {}
    tokens = []
    for key in keys:
        if key is None or key == STAR:
            tokens.append(STAR)
            continue
        name = names.get(key)
        if name is None:
            name = names[key] = _letter(len(names))
        tokens.append(name)
    return "-".join(tokens)


def canonicalize(visits: Sequence[APVisit]) -> str:
    """Label anchor points A, B, C... by first appearance; stars stay '*'"""
    return canonical_label([visit.ap_id for visit in visits])


def classify_category(chain: Union[DailyChain, str]) -> ChainCategory:
    """C1 no star at either end, C2 stars at both ends, C3 star at start only,
    C4 star at end only. A pass-through day ('*') counts as C2."""
    if isinstance(chain, DailyChain):
        if chain.mode != ChainMode.HYBRID:
            raise AnalysisError(
                "categories are defined for hybrid chains only",
                details={"user_id": chain.user_id, "date": chain.date.isoformat(), "mode": chain.mode.value}
            )
        label = chain.label
    else:
        label = chain
    tokens = label.split("-")
    starts_out = tokens[0] == STAR
    ends_out = tokens[-1] == STAR
    if starts_out and ends_out:
        return ChainCategory.PASSING
    if starts_out:
        return ChainCategory.COMING
    if ends_out:
        return ChainCategory.LEAVING
    return ChainCategory.STAYING


def make_chain(
    user_id: str,
    day: date,
    visits: Sequence[APVisit],
    mode: ChainMode,
    anchors: Optional[UserAnchors] = None
) -> DailyChain:
    """Label and measure one visit sequence"""
    label = canonicalize(visits)
    n_aps = len({v.ap_id for v in visits if not v.is_star})
    n_edges = len(visits) - 1
    degree = n_edges / n_aps if n_aps else None
    avg_distance = None
    if mode == ChainMode.INTRA_CITY and anchors is not None and n_edges > 0:
        avg_distance = chain_avg_distance(visits, anchors)
    category = classify_category(label) if mode == ChainMode.HYBRID else None
    return DailyChain(
        user_id=user_id,
        date=day,
        mode=mode,
        visits=tuple(visits),
        label=label,
        category=category,
        n_aps=n_aps,
        n_edges=n_edges,
        degree=degree,
        avg_distance_km=avg_distance,
    )


def build_daily_chains(
    day_visits: Iterable[DayVisits],
    mode: ChainMode,
    anchors: Optional[UserAnchors] = None
) -> List[DailyChain]:
    """Hybrid chains collapse out-of-city runs into stars. Intra-city chains use only
    days spent entirely in the city."""
    chains = []
    for day in day_visits:
        if not day.visits:
            continue
        if mode == ChainMode.HYBRID:
            visits = collapse_out_of_city(day.visits)
        else:
            if not day.fully_in_city:
                continue
            visits = merge_runs(v for v in day.visits if v.in_city)
            if not visits:
                continue
        chains.append(make_chain(day.user_id, day.date, visits, mode, anchors))
    return chains


def rank_chain_types(
    chains: Sequence[DailyChain],
    significance_share: float,
    mode: Optional[ChainMode] = None
) -> ChainTypeRanking:
    """Count chains per label; types whose share reaches ``significance_share`` are significant"""
    if not chains:
        raise AnalysisError("cannot rank an empty chain set")
    mode = mode or chains[0].mode
    counts = Counter(chain.label for chain in chains)
    total = len(chains)
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    entries = []
    for rank, (label, count) in enumerate(ordered, start=1):
        share = count / total
        entries.append(RankedChainType(
            rank=rank,
            label=label,
            count=count,
            share=share,
            significant=share >= significance_share,
        ))
    coverage = sum(entry.count for entry in entries if entry.significant) / total

    category_counts: Dict[str, int] = {}
    if mode == ChainMode.HYBRID:
        tally = Counter(chain.category.value for chain in chains if chain.category is not None)
        category_counts = {category.value: tally.get(category.value, 0) for category in ChainCategory}

    ranking = ChainTypeRanking(
        mode=mode,
        entries=entries,
        total_chains=total,
        total_type_count=len(entries),
        significance_share=significance_share,
        coverage_share=min(1.0, coverage),
        pass_through_count=counts.get(STAR, 0),
        category_counts=category_counts,
    )
    logger.info(
        f"Ranked {total} {mode.value} chains into {len(entries)} types",
        extra={"stage": "rank", "count": total,
               "details": {"significant": len(ranking.significant_labels), "coverage": round(coverage, 6)}}
    )
    return ranking
