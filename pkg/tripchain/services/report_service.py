"""
Delimited text and key-value report writers; every float is written with six decimals
"""
import hashlib
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from tripchain.core.config import render_key_value
from tripchain.models.analysis import GroupSummary, LogNormalFit, ObservationDaySummary, RunManifest, TransitionMatrix
from tripchain.models.chains import ChainTypeRanking, DailyChain, UserAnchors

FLOAT_FORMAT = "%.6f"


def _to_csv(frame: pd.DataFrame, path: Path, **kwargs) -> Path:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n", **kwargs)
    return path


def fmt(value: float) -> str:
    return FLOAT_FORMAT % value


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_chains(chains: Sequence[DailyChain], path: Path) -> Path:
    frame = pd.DataFrame(
        {
            "user_id": [c.user_id for c in chains],
            "date": [c.date.isoformat() for c in chains],
            "mode": [c.mode.value for c in chains],
            "label": [c.label for c in chains],
            "category": [c.category.value if c.category else "" for c in chains],
            "n_aps": [c.n_aps for c in chains],
            "n_edges": [c.n_edges for c in chains],
            "degree": np.array([np.nan if c.degree is None else c.degree for c in chains], dtype=float),
            "avg_distance_km": np.array(
                [np.nan if c.avg_distance_km is None else c.avg_distance_km for c in chains], dtype=float
            ),
        }
    )
    return _to_csv(frame, path)


def write_ranking(ranking: ChainTypeRanking, path: Path) -> Path:
    frame = pd.DataFrame(
        {
            "rank": [e.rank for e in ranking.entries],
            "label": [e.label for e in ranking.entries],
            "count": [e.count for e in ranking.entries],
            "share": np.array([e.share for e in ranking.entries], dtype=float),
            "significant": ["true" if e.significant else "false" for e in ranking.entries],
        }
    )
    return _to_csv(frame, path)


def write_matrix(matrix: TransitionMatrix, frequency_path: Path, probability_path: Path) -> Tuple[Path, Path]:
    """First column holds the original label, header row the transferred labels"""
    for values, path, dtype in (
        (matrix.frequencies, frequency_path, np.int64),
        (matrix.probabilities, probability_path, float),
    ):
        frame = pd.DataFrame(np.asarray(values, dtype=dtype), columns=matrix.column_labels)
        frame.insert(0, "original", matrix.row_labels)
        _to_csv(frame, path)
    return frequency_path, probability_path


def write_group_summaries(summaries: Sequence[GroupSummary], path: Path) -> Path:
    columns = ["group", "count", "min", "q1", "median", "q3", "max", "mean"]
    frame = pd.DataFrame([s.model_dump(include=set(columns)) for s in summaries], columns=columns)
    for column in columns[2:]:
        frame[column] = frame[column].astype(float)
    return _to_csv(frame, path)


def write_group_values(groups: Mapping[str, Sequence[GroupSummary]], path: Path) -> Path:
    """Long format metric,group,value rows for violin plots"""
    rows = [
        (metric, summary.group, value)
        for metric in sorted(groups)
        for summary in groups[metric]
        for value in summary.values
    ]
    frame = pd.DataFrame(rows, columns=["metric", "group", "value"])
    frame["value"] = frame["value"].astype(float)
    return _to_csv(frame, path)


def write_pmf(pmf: Mapping[int, float], path: Path) -> Path:
    frame = pd.DataFrame({"x": list(pmf), "probability": np.array(list(pmf.values()), dtype=float)})
    return _to_csv(frame, path)


def read_pmf(path: Path) -> Dict[int, float]:
    frame = pd.read_csv(path)
    return {int(x): float(p) for x, p in zip(frame["x"], frame["probability"])}


def write_fit(fit: LogNormalFit, path: Path) -> Path:
    values = {
        "mu": fmt(fit.mu),
        "sigma": fmt(fit.sigma),
        "r_squared": fmt(fit.r_squared),
        "sse": fmt(fit.sse),
        "support_min": fit.support_min,
        "support_max": fit.support_max,
    }
    path.write_text(render_key_value(values), encoding="utf-8")
    return path


def write_observation_days(summary: ObservationDaySummary, path: Path) -> Path:
    frame = pd.DataFrame({"days": list(summary.distribution), "users": list(summary.distribution.values())})
    return _to_csv(frame, path)


def write_anchors(entries: Iterable[Tuple[Optional[str], UserAnchors]], path: Path) -> Path:
    """One row per anchor point; ``date`` is filled only when clustering per user-day"""
    rows = []
    for day, anchors in entries:
        for ap in anchors.anchors:
            rows.append((
                anchors.user_id, day or "", ap.ap_id, ap.seed_tower, ap.location.lon, ap.location.lat,
                "true" if ap.in_city else "false", ap.total_stay_s, len(ap.member_towers),
            ))
    frame = pd.DataFrame(rows, columns=[
        "user_id", "date", "ap_id", "seed_tower", "lon", "lat", "in_city", "total_stay_s", "member_count",
    ])
    for column in ("lon", "lat"):
        frame[column] = frame[column].astype(float)
    return _to_csv(frame, path)


def write_key_values(values: Mapping[str, object], path: Path) -> Path:
    path.write_text(render_key_value(values), encoding="utf-8")
    return path


def manifest_lines(manifest: RunManifest) -> Dict[str, str]:
    """Flattened manifest: tool_version, config.*, input.*, count.*, output.*, context.*"""
    lines: Dict[str, str] = {"tool_version": manifest.tool_version}
    for prefix, section in (
        ("config", manifest.config),
        ("input", manifest.inputs),
        ("count", manifest.counts),
        ("output", manifest.outputs),
        ("context", manifest.context),
    ):
        for key in sorted(section):
            lines[f"{prefix}.{key}"] = str(section[key])
    return lines


def write_manifest(manifest: RunManifest, path: Path) -> Path:
    return write_key_values(manifest_lines(manifest), path)


def list_outputs(paths: Iterable[Path], root: Path) -> List[Tuple[str, str]]:
    return sorted((str(Path(p).relative_to(root)), sha256_file(Path(p))) for p in paths)
