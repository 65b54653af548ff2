"""
Least-effort metrics (degree and average distance), node-count group summaries,
anchor-count distribution and its log-normal least-squares fit
"""
import logging
from collections import Counter, defaultdict
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize

from tripchain.core.error_handling import AnalysisError
from tripchain.core.geo import haversine_m
from tripchain.models.analysis import GroupSummary, LogNormalFit
from tripchain.models.chains import STAR, APVisit, DailyChain, UserAnchors
from tripchain.models.records import GeoPoint

logger = logging.getLogger(__name__)

_SQRT_2PI = np.sqrt(2.0 * np.pi)

# Coarse grid for the log-normal fit before local refinement
MU_GRID = np.linspace(-2.0, 3.0, 201)
SIGMA_GRID = np.linspace(0.015, 3.0, 200)
FIT_TOLERANCE = 1e-6


def _tokens(chain: Union[DailyChain, str]) -> List[str]:
    label = chain.label if isinstance(chain, DailyChain) else chain
    return label.split("-")


def chain_degree(chain: Union[DailyChain, str]) -> float:
    """K = E / N with E movement segments and N distinct in-city anchor points"""
    tokens = _tokens(chain)
    n_aps = len({t for t in tokens if t != STAR})
    if n_aps == 0:
        raise AnalysisError(
            "degree is undefined for a chain without in-city anchor points",
            error_key="ANALYSIS_UNDEFINED_METRIC",
            details={"label": "-".join(tokens)}
        )
    return (len(tokens) - 1) / n_aps


def chain_avg_distance(
    visits: Sequence[APVisit],
    anchor_points: Union[UserAnchors, Mapping[int, GeoPoint]]
) -> float:
    """Mean great-circle length of the chain's movement segments, in km"""
    if any(visit.is_star for visit in visits):
        raise AnalysisError(
            "average distance is undefined for chains with out-of-city nodes",
            error_key="ANALYSIS_UNDEFINED_METRIC"
        )
    n_edges = len(visits) - 1
    if n_edges < 1:
        raise AnalysisError(
            "average distance is undefined for a chain without movement",
            error_key="ANALYSIS_UNDEFINED_METRIC"
        )
    if isinstance(anchor_points, UserAnchors):
        locate = anchor_points.location_of
    else:
        locate = anchor_points.__getitem__
    total_m = sum(
        haversine_m(locate(a.ap_id), locate(b.ap_id))
        for a, b in zip(visits, visits[1:])
    )
    return total_m / 1000.0 / n_edges


def group_key(n_aps: int, overflow_at: int) -> str:
    return f">={overflow_at}" if n_aps >= overflow_at else str(n_aps)


def _group_sort_key(key: str) -> int:
    return int(key[2:]) if key.startswith(">=") else int(key)


def summarize(group: str, values: Sequence[float]) -> GroupSummary:
    """Five-number summary with linear interpolation between order statistics"""
    data = np.asarray(values, dtype=float)
    q = np.percentile(data, [0, 25, 50, 75, 100])
    return GroupSummary(
        group=group,
        count=int(data.size),
        min=float(q[0]),
        q1=float(q[1]),
        median=float(q[2]),
        q3=float(q[3]),
        max=float(q[4]),
        mean=float(data.mean()),
        values=[float(v) for v in data],
    )


def group_by_node_count(chains: Iterable[DailyChain], overflow_at: int = 7) -> Dict[str, List[GroupSummary]]:
    """Degree and distance summaries per node-count group; N >= overflow_at share one group"""
    degrees: Dict[str, List[float]] = defaultdict(list)
    distances: Dict[str, List[float]] = defaultdict(list)
    for chain in chains:
        if chain.n_aps < 1:
            continue
        key = group_key(chain.n_aps, overflow_at)
        if chain.degree is not None:
            degrees[key].append(chain.degree)
        if chain.avg_distance_km is not None:
            distances[key].append(chain.avg_distance_km)
    return {
        "degree": [summarize(k, degrees[k]) for k in sorted(degrees, key=_group_sort_key)],
        "distance": [summarize(k, distances[k]) for k in sorted(distances, key=_group_sort_key)],
    }


def ap_count_pmf(chains: Iterable[DailyChain]) -> Dict[int, float]:
    """Share of daily chains by number of distinct in-city anchor points (X >= 1)"""
    counts = Counter(chain.n_aps for chain in chains if chain.n_aps >= 1)
    total = sum(counts.values())
    if total == 0:
        raise AnalysisError("no chains with in-city anchor points")
    return {x: counts[x] / total for x in sorted(counts)}


def lognormal_density(x: np.ndarray, mu, sigma) -> np.ndarray:
    """Standard log-normal density"""
    x = np.asarray(x, dtype=float)
    return np.exp(-((np.log(x) - mu) ** 2) / (2.0 * sigma ** 2)) / (x * sigma * _SQRT_2PI)


def discretized_lognormal_pmf(mu: float, sigma: float, support: Sequence[int]) -> Dict[int, float]:
    """Density evaluated at integer support points and renormalized"""
    xs = np.asarray(support, dtype=float)
    values = lognormal_density(xs, mu, sigma)
    values = values / values.sum()
    return {int(x): float(v) for x, v in zip(xs, values)}


def fit_lognormal(pmf: Mapping[int, float]) -> LogNormalFit:
    """Least-squares fit of the log-normal density to an integer pmf.

    A coarse (mu, sigma) grid picks the starting point; Nelder-Mead refines it to
    FIT_TOLERANCE in the parameters.
    """
    support = sorted(x for x in pmf if x >= 1)
    if len(support) < 3:
        raise AnalysisError(
            f"log-normal fit needs at least 3 support points, got {len(support)}",
            details={"support": support}
        )
    x = np.asarray(support, dtype=float)
    y = np.asarray([pmf[s] for s in support], dtype=float)

    grid = lognormal_density(x[None, None, :], MU_GRID[:, None, None], SIGMA_GRID[None, :, None])
    errors = np.sum((grid - y) ** 2, axis=-1)
    i, j = np.unravel_index(np.argmin(errors), errors.shape)

    def objective(params: np.ndarray) -> float:
        mu, sigma = params
        if sigma <= 0:
            return np.inf
        return float(np.sum((lognormal_density(x, mu, sigma) - y) ** 2))

    result = minimize(
        objective,
        x0=np.array([MU_GRID[i], SIGMA_GRID[j]]),
        method="Nelder-Mead",
        options={"xatol": FIT_TOLERANCE, "fatol": 1e-15, "maxiter": 20000, "maxfev": 40000},
    )
    mu, sigma = (float(v) for v in result.x)
    sse = float(result.fun)
    sst = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - sse / sst if sst > 0 else (1.0 if sse == 0 else 0.0)

    fit = LogNormalFit(
        mu=mu,
        sigma=sigma,
        r_squared=float(min(1.0, max(0.0, r_squared))),
        sse=sse,
        support_min=int(support[0]),
        support_max=int(support[-1]),
    )
    logger.info(
        "Log-normal fit completed",
        extra={"stage": "fit", "details": fit.model_dump()}
    )
    return fit


def mean_distance_km(chains: Iterable[DailyChain]) -> Optional[float]:
    values = [chain.avg_distance_km for chain in chains if chain.avg_distance_km is not None]
    return float(np.mean(values)) if values else None
