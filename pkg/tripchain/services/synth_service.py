"""
Synthetic stay-record populations with known chain labels, for end-to-end
verification of the pipeline
"""
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from tripchain.core.config import (
    CONFIG_KEYS,
    StudyConfig,
    build_study_config,
    dump_config,
    load_config_file,
    render_key_value,
)
from tripchain.core.error_handling import AnalysisError, ConfigurationError
from tripchain.core.geo import local_unproject
from tripchain.models.chains import STAR
from tripchain.models.records import GeoPoint, StayRecord
from tripchain.models.scenario import SCENARIO_KEYS, GroundTruthDay, ScenarioSpec
from tripchain.services.chain_service import canonical_label
from tripchain.services.ingest_service import serialize_stay_records

logger = logging.getLogger(__name__)

# Independent streams per user: chain draws and timing, tower choice and ping-pong noise
STREAM_CHAINS = 0
STREAM_NOISE = 1

DAY_START_S = 8 * 3600
DAY_END_S = 22 * 3600
MAX_PING_PONG_SWITCHES = 4


@dataclass(frozen=True)
class Tower:
    tower_id: str
    location: GeoPoint


@dataclass
class Layout:
    """Anchor point towers; index 0..n-1 in-city, ``outside`` hosts star nodes"""
    aps: List[List[Tower]]
    outside: List[Tower]
    polygon: List[Tuple[float, float]]


@dataclass
class SynthResult:
    records: List[StayRecord]
    ground_truth: List[GroundTruthDay]
    layout: Layout
    paths: Dict[str, Path] = field(default_factory=dict)


def derive_seeded_stream(seed: int, user_index: int, purpose: int = STREAM_CHAINS) -> np.random.Generator:
    """Deterministic stream for one user, independent of scheduling"""
    return np.random.default_rng(np.random.SeedSequence([seed, user_index, purpose]))


def validate_scenario(spec: ScenarioSpec) -> None:
    """Reject labels the pipeline cannot reproduce and layouts that break clustering"""
    for label in spec.labels:
        tokens = label.split("-")
        if any(not token for token in tokens) or canonical_label(tokens) != label:
            raise ConfigurationError(
                f"mixture label '{label}' is not in canonical first-appearance form",
                details={"label": label}
            )
        if any(a == b for a, b in zip(tokens, tokens[1:])):
            raise ConfigurationError(
                f"mixture label '{label}' repeats a node on consecutive positions",
                details={"label": label}
            )
        # a day with no in-city stay leaves a calendar gap that ingest excludes
        if all(token == STAR for token in tokens):
            raise ConfigurationError(
                f"mixture label '{label}' has no in-city anchor point",
                details={"label": label}
            )

    delta = spec.roaming_distance_m
    max_letters = max(len({t for t in label.split("-") if t != STAR}) for label in spec.labels)
    problems = []
    if spec.spacing_m <= 2 * delta:
        problems.append(f"anchor spacing {spec.spacing_m} m must exceed twice the roaming distance {delta} m")
    if spec.offset_m >= delta / 2:
        problems.append(f"tower offset {spec.offset_m} m must stay below half the roaming distance")
    if max_letters > spec.grid_size ** 2:
        problems.append(f"labels need {max_letters} anchor points but the grid holds {spec.grid_size ** 2}")
    if problems:
        raise AnalysisError(
            "; ".join(problems),
            error_key="ANALYSIS_INFEASIBLE_LAYOUT",
            details={"problems": problems}
        )


def _towers_around(origin: GeoPoint, x: float, y: float, spec: ScenarioSpec, prefix: str) -> List[Tower]:
    towers = []
    for k in range(spec.towers_per_ap):
        angle = 2 * math.pi * k / spec.towers_per_ap
        location = local_unproject(origin, x + spec.offset_m * math.cos(angle), y + spec.offset_m * math.sin(angle))
        towers.append(Tower(f"{prefix}-{k}", location))
    return towers


def build_layout(spec: ScenarioSpec) -> Layout:
    """Square grid of anchor points around the center and one far outside anchor"""
    validate_scenario(spec)
    origin = GeoPoint(spec.center_lon, spec.center_lat)
    half = (spec.grid_size - 1) / 2.0
    aps = []
    for row in range(spec.grid_size):
        for col in range(spec.grid_size):
            x = (col - half) * spec.spacing_m
            y = (row - half) * spec.spacing_m
            aps.append(_towers_around(origin, x, y, spec, f"T{len(aps) + 1:04d}"))
    outside = _towers_around(origin, 0.0, spec.out_of_city_offset_m, spec, "X0001")

    reach = (half + 1) * spec.spacing_m
    if reach >= spec.out_of_city_offset_m:
        raise AnalysisError(
            "out-of-city anchor lies inside the city polygon",
            error_key="ANALYSIS_INFEASIBLE_LAYOUT",
            details={"reach_m": reach, "out_of_city_offset_m": spec.out_of_city_offset_m}
        )
    corners = [(-reach, -reach), (reach, -reach), (reach, reach), (-reach, reach)]
    polygon = [(p.lon, p.lat) for p in (local_unproject(origin, x, y) for x, y in corners)]
    return Layout(aps=aps, outside=outside, polygon=polygon + [polygon[0]])


def _draw(rng: np.random.Generator, distribution: Dict, keys: Sequence) -> object:
    probabilities = np.array([distribution[k] for k in keys], dtype=float)
    return keys[int(rng.choice(len(keys), p=probabilities / probabilities.sum()))]


def _day_labels(spec: ScenarioSpec, rng: np.random.Generator, n_days: int) -> List[str]:
    mixture_keys = sorted(spec.mixture)
    labels = [_draw(rng, spec.mixture, mixture_keys)]
    for _ in range(n_days - 1):
        previous = labels[-1]
        if spec.markov is not None and previous in spec.markov_labels:
            row = spec.markov[spec.markov_labels.index(previous)]
            labels.append(_draw(rng, dict(zip(spec.markov_labels, row)), spec.markov_labels))
        else:
            labels.append(_draw(rng, spec.mixture, mixture_keys))
    return labels


def _realize_visit(
    user_id: str,
    day,
    start: int,
    end: int,
    towers: List[Tower],
    in_city: bool,
    spec: ScenarioSpec,
    noise: np.random.Generator
) -> List[StayRecord]:
    """One visit as a single tower record, or ping-pong between two towers of the anchor"""
    first, second = noise.choice(len(towers), size=2, replace=False)
    if noise.random() < spec.ping_pong_rate:
        switches = int(noise.integers(2, MAX_PING_PONG_SWITCHES + 1))
        bounds = np.linspace(start, end, switches + 1).astype(int)
        picks = [towers[first] if i % 2 == 0 else towers[second] for i in range(switches)]
    else:
        bounds = np.array([start, end])
        picks = [towers[first]]
    return [
        StayRecord(user_id, day, int(a), int(b), tower.location.lon, tower.location.lat, tower.tower_id, in_city)
        for tower, a, b in zip(picks, bounds, bounds[1:])
        if b > a
    ]


def generate_user(spec: ScenarioSpec, layout: Layout, user_index: int) -> Tuple[List[StayRecord], List[GroundTruthDay]]:
    """Records and ground truth of one user; a pure function of (spec, user_index)"""
    rng = derive_seeded_stream(spec.seed, user_index, STREAM_CHAINS)
    noise = derive_seeded_stream(spec.seed, user_index, STREAM_NOISE)
    user_id = f"u{user_index:06d}"

    day_counts = sorted(spec.days_per_user)
    n_days = int(_draw(rng, spec.days_per_user, day_counts))
    labels = _day_labels(spec, rng, n_days)

    records: List[StayRecord] = []
    truth: List[GroundTruthDay] = []
    for offset, label in enumerate(labels):
        day = spec.start_date + timedelta(days=offset)
        tokens = label.split("-")
        letters = sorted({t for t in tokens if t != STAR})
        chosen = rng.choice(len(layout.aps), size=len(letters), replace=False)
        placement = dict(zip(letters, (int(i) for i in chosen)))

        slot = (DAY_END_S - DAY_START_S) // len(tokens)
        margin = max(1, slot // 4)
        for position, token in enumerate(tokens):
            slot_start = DAY_START_S + position * slot
            start = slot_start + int(rng.integers(0, margin))
            end = slot_start + slot - int(rng.integers(0, margin))
            if token == STAR:
                towers, in_city = layout.outside, False
            else:
                towers, in_city = layout.aps[placement[token]], True
            records.extend(_realize_visit(user_id, day, start, end, towers, in_city, spec, noise))
        truth.append(GroundTruthDay(user_id=user_id, date=day, true_label=label, true_n=len(letters)))
    return records, truth


def _generate_chunk(args) -> Tuple[List[StayRecord], List[GroundTruthDay]]:
    spec, layout, indices = args
    records: List[StayRecord] = []
    truth: List[GroundTruthDay] = []
    for index in indices:
        user_records, user_truth = generate_user(spec, layout, index)
        records.extend(user_records)
        truth.extend(user_truth)
    return records, truth


def _record_sort_key(record: StayRecord):
    return (record.user_id, record.date, record.start_time, record.end_time, record.tower_id)


def generate_population(spec: ScenarioSpec, out_dir: Optional[Union[str, Path]] = None, workers: int = 1) -> SynthResult:
    """Generate every user, canonically sorted; optionally write the corpus files.

    Writes records.csv, ground_truth.csv and city.geojson when ``out_dir`` is given.
    """
    layout = build_layout(spec)
    indices = list(range(spec.n_users))
    if workers > 1 and spec.n_users > 1:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_generate_chunk, [(spec, layout, chunk) for chunk in chunks if chunk]))
    else:
        parts = [_generate_chunk((spec, layout, indices))]

    records = sorted((r for part in parts for r in part[0]), key=_record_sort_key)
    truth = sorted((t for part in parts for t in part[1]), key=lambda t: (t.user_id, t.date))
    result = SynthResult(records=records, ground_truth=truth, layout=layout)
    logger.info(
        f"Generated {len(records)} records for {spec.n_users} users over {len(truth)} user-days",
        extra={"stage": "synth", "count": len(records), "details": {"user_days": len(truth)}}
    )

    if out_dir is not None:
        result.paths = write_population(result, Path(out_dir))
    return result


def write_population(result: SynthResult, out_dir: Path) -> Dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "records": out_dir / "records.csv",
        "ground_truth": out_dir / "ground_truth.csv",
        "city": out_dir / "city.geojson",
    }
    serialize_stay_records(result.records, paths["records"])
    truth = pd.DataFrame(
        [(t.user_id, t.date.isoformat(), t.true_label, t.true_n) for t in result.ground_truth],
        columns=["user_id", "date", "true_label", "true_n"],
    )
    truth.to_csv(paths["ground_truth"], index=False, lineterminator="\n")
    city = {
        "type": "Feature",
        "properties": {"name": "synthetic"},
        "geometry": {"type": "Polygon", "coordinates": [[list(p) for p in result.layout.polygon]]},
    }
    paths["city"].write_text(json.dumps(city, indent=2) + "\n", encoding="utf-8")
    return paths


def load_scenario(path: Union[str, Path]) -> Tuple[ScenarioSpec, StudyConfig]:
    """Scenario file: StudyConfig keys plus generator keys in one key-value file"""
    values = load_config_file(path, allowed_keys=tuple(sorted(set(SCENARIO_KEYS) | set(CONFIG_KEYS))))
    scenario_values = {k: v for k, v in values.items() if k in SCENARIO_KEYS}
    config_values = {k: v for k, v in values.items() if k in CONFIG_KEYS}
    try:
        spec = ScenarioSpec.model_validate(scenario_values)
    except ValidationError as e:
        raise ConfigurationError(
            f"invalid scenario {path}: " + "; ".join(err["msg"] for err in e.errors()),
            details={"path": str(path)}
        ) from e
    return spec, build_study_config(config_values)


def render_scenario(spec: ScenarioSpec, config: Optional[StudyConfig] = None) -> str:
    """Inverse of :func:`load_scenario`, keys sorted"""
    values: Dict[str, str] = dict(dump_config(config)) if config is not None else {}
    data = spec.model_dump()
    for key in SCENARIO_KEYS:
        value = data[key]
        if value is None:
            continue
        if key == "days_per_user":
            value = ",".join(f"{n}:{p}" for n, p in sorted(value.items()))
        elif key == "mixture":
            value = ";".join(f"{label}:{p}" for label, p in sorted(value.items()))
        elif key == "markov_labels":
            value = ";".join(value)
        elif key == "markov":
            value = ";".join(",".join(str(p) for p in row) for row in value)
        elif key == "start_date":
            value = value.isoformat()
        values[key] = str(value)
    return render_key_value({k: values[k] for k in sorted(values)})
