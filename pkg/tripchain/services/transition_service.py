"""
Day-to-day chain type transitions: consecutive-day pairing, label transition
matrices with an "others" bucket and AP-count aggregation
"""
import logging
from collections import defaultdict
from datetime import timedelta
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from tripchain.core.error_handling import AnalysisError
from tripchain.models.analysis import OTHERS, TransitionMatrix
from tripchain.models.chains import ChainMode, DailyChain

logger = logging.getLogger(__name__)

ChainPair = Tuple[DailyChain, DailyChain]

_ONE_DAY = timedelta(days=1)


def consecutive_day_pairs(user_chains: Iterable[DailyChain]) -> List[ChainPair]:
    """(original, transferred) pairs for every two intra-city chains of a user on
    consecutive calendar dates. Hybrid chains are ignored."""
    by_user: Dict[str, List[DailyChain]] = defaultdict(list)
    for chain in user_chains:
        if chain.mode == ChainMode.INTRA_CITY:
            by_user[chain.user_id].append(chain)

    pairs: List[ChainPair] = []
    for user_id in sorted(by_user):
        chains = sorted(by_user[user_id], key=lambda c: c.date)
        for original, transferred in zip(chains, chains[1:]):
            if transferred.date - original.date == _ONE_DAY:
                pairs.append((original, transferred))
    return pairs


def _normalize(frequencies: np.ndarray, labels: Sequence[str]) -> Tuple[np.ndarray, List[str]]:
    totals = frequencies.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        probabilities = np.where(totals > 0, frequencies / np.where(totals > 0, totals, 1), 0.0)
    empty = [label for label, total in zip(labels, totals[:, 0]) if total == 0]
    return probabilities, empty


def _matrix(labels: List[str], frequencies: np.ndarray) -> TransitionMatrix:
    probabilities, empty = _normalize(frequencies, labels)
    return TransitionMatrix(
        row_labels=labels,
        column_labels=labels,
        frequencies=frequencies.astype(int).tolist(),
        probabilities=probabilities.tolist(),
        empty_rows=empty,
    )


def build_transition_matrix(pairs: Sequence[ChainPair], significant_labels: Sequence[str]) -> TransitionMatrix:
    """Frequencies and row-normalized probabilities; rows are the original day.

    Labels outside ``significant_labels`` fall into the trailing "others" row and column.
    """
    if not pairs:
        raise AnalysisError("cannot build a transition matrix from an empty pair list")
    labels = [label for label in significant_labels if label != OTHERS] + [OTHERS]
    index = {label: i for i, label in enumerate(labels)}
    others = index[OTHERS]

    frequencies = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for original, transferred in pairs:
        frequencies[index.get(original.label, others), index.get(transferred.label, others)] += 1

    matrix = _matrix(labels, frequencies)
    if matrix.empty_rows:
        logger.warning(
            f"{len(matrix.empty_rows)} transition rows have no observations",
            extra={"stage": "transitions", "details": {"empty_rows": matrix.empty_rows}}
        )
    logger.info(
        f"Built {len(labels)}x{len(labels)} transition matrix from {len(pairs)} pairs",
        extra={"stage": "transitions", "count": len(pairs)}
    )
    return matrix


def ap_count_bucket(n_aps: int, max_n: int) -> str:
    return str(n_aps) if n_aps <= max_n else f">{max_n}"


def aggregate_by_ap_count(pairs: Sequence[ChainPair], max_n: int = 4) -> TransitionMatrix:
    """Transitions between distinct-AP counts 1..max_n plus one overflow bucket.

    Every row is normalized over all transferred counts, overflow included.
    """
    if max_n < 1:
        raise AnalysisError(f"max_n must be at least 1, got {max_n}")
    labels = [str(n) for n in range(1, max_n + 1)] + [f">{max_n}"]
    index = {label: i for i, label in enumerate(labels)}

    frequencies = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for original, transferred in pairs:
        if original.n_aps < 1 or transferred.n_aps < 1:
            continue
        frequencies[index[ap_count_bucket(original.n_aps, max_n)],
                    index[ap_count_bucket(transferred.n_aps, max_n)]] += 1
    return _matrix(labels, frequencies)
