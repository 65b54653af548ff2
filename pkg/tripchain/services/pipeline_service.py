"""
Pipeline orchestration: ingest, per-user anchor and chain analysis on a worker
pool, then ranking, transitions, effort metrics, AP-count fit and hotspot raster
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from tripchain import __version__
from tripchain.core.config import StudyConfig, dump_config
from tripchain.core.error_handling import AnalysisError, StageError, TripChainError
from tripchain.core.logging_config import pipeline_logger
from tripchain.models.analysis import LogNormalFit, RunManifest
from tripchain.models.chains import ChainMode, ChainTypeRanking, DailyChain, UserAnchors
from tripchain.models.records import UserDayTrace
from tripchain.services import report_service as reports
from tripchain.services.anchor_service import AnchorService
from tripchain.services.chain_service import DayVisits, build_daily_chains, rank_chain_types
from tripchain.services.hotspot_service import WeightedPoint, anchor_weights, kde_raster, write_ascii_grid, write_georef
from tripchain.services.ingest_service import IngestResult, IngestService, load_city_definition, observation_day_summary
from tripchain.services.stats_service import ap_count_pmf, fit_lognormal, group_by_node_count, mean_distance_km
from tripchain.services.transition_service import aggregate_by_ap_count, build_transition_matrix, consecutive_day_pairs

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class StageOutcome:
    """Stage result plus the row counts it reports to the manifest"""
    value: object
    counts: Dict[str, int]


@dataclass
class UserAnalysis:
    """Everything derived from one user's records"""
    user_id: str
    anchors: List[Tuple[Optional[str], UserAnchors]]
    hybrid: List[DailyChain]
    intra: List[DailyChain]
    hotspot_points: List[WeightedPoint]


@dataclass
class AnalysisResult:
    users: List[UserAnalysis]
    hybrid: List[DailyChain] = field(default_factory=list)
    intra: List[DailyChain] = field(default_factory=list)

    def chains(self, mode: ChainMode) -> List[DailyChain]:
        return self.hybrid if mode == ChainMode.HYBRID else self.intra

    @property
    def anchors(self) -> List[Tuple[Optional[str], UserAnchors]]:
        return [entry for user in self.users for entry in user.anchors]

    @property
    def hotspot_points(self) -> List[WeightedPoint]:
        return [point for user in self.users for point in user.hotspot_points]


def _visit_counts(anchors: UserAnchors, days: Sequence[DayVisits]) -> Dict[Tuple[str, int], int]:
    counts: Dict[Tuple[str, int], int] = {}
    for day in days:
        for visit in day.visits:
            if visit.in_city:
                key = (anchors.user_id, visit.ap_id)
                counts[key] = counts.get(key, 0) + 1
    return counts


def analyze_user(user_id: str, traces: Sequence[UserDayTrace], config: StudyConfig) -> UserAnalysis:
    """Anchors, visit sequences and both chain modes for one user.

    A pure function of the user's traces and the config, so worker scheduling
    never changes the result.
    """
    service = AnchorService(config.roaming_distance_m, config.min_ap_stay_s, config.ap_scope)
    if config.ap_scope == "user_day":
        groups = [(trace.date.isoformat(), [trace]) for trace in traces]
    else:
        groups = [(None, list(traces))]

    anchors_out: List[Tuple[Optional[str], UserAnchors]] = []
    hybrid: List[DailyChain] = []
    intra: List[DailyChain] = []
    points: List[WeightedPoint] = []
    for day_key, group in groups:
        records = [record for trace in group for record in trace.records]
        anchors = service.extract(user_id, records)
        days = [
            DayVisits(user_id, trace.date, service.sequence(trace.records, anchors), trace.fully_in_city)
            for trace in group
        ]
        anchors_out.append((day_key, anchors))
        hybrid.extend(build_daily_chains(days, ChainMode.HYBRID))
        intra.extend(build_daily_chains(days, ChainMode.INTRA_CITY, anchors))
        points.extend(anchor_weights([anchors], _visit_counts(anchors, days), config.kde_weighted))
    return UserAnalysis(user_id, anchors_out, hybrid, intra, points)


def _analyze_chunk(args) -> List[UserAnalysis]:
    users, config = args
    return [analyze_user(user_id, traces, config) for user_id, traces in users]


def _partition(user_days: Sequence[UserDayTrace]) -> List[Tuple[str, List[UserDayTrace]]]:
    grouped: Dict[str, List[UserDayTrace]] = {}
    for trace in user_days:
        grouped.setdefault(trace.user_id, []).append(trace)
    return [(user_id, sorted(grouped[user_id], key=lambda t: t.date)) for user_id in sorted(grouped)]


class PipelineService:
    """Runs the analysis stages and writes their reports into ``out_dir``"""

    def __init__(self, config: StudyConfig, out_dir: PathLike, workers: Optional[int] = None):
        self.config = config
        self.out_dir = Path(out_dir)
        self.workers = workers or config.workers
        self.counts: Dict[str, int] = {}
        self.outputs: List[Path] = []
        self.context: Dict[str, str] = {}

    def _stage(self, name: str, fn, *args):
        """Run one stage; library errors come back wrapped with the stage name.

        ``fn`` may return a StageOutcome to report row counts for the stage.
        """
        try:
            with pipeline_logger.timed_stage(name) as counts:
                outcome = fn(*args)
                if isinstance(outcome, StageOutcome):
                    counts.update(outcome.counts)
                    self.counts.update(outcome.counts)
                    return outcome.value
                return outcome
        except TripChainError as e:
            raise StageError(name, e) from e

    def _emit(self, path: Path) -> Path:
        self.outputs.append(path)
        return path

    def _path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    # Stages

    def ingest(self, input_path: PathLike, city_path: PathLike) -> IngestResult:
        def run():
            city = load_city_definition(city_path)
            result = IngestService(self.config, city).load(input_path)
            return StageOutcome(result, result.counts)
        return self._stage("ingest", run)

    def analyze(self, ingest: IngestResult) -> AnalysisResult:
        def run():
            users = _partition(ingest.user_days)
            if self.workers > 1 and len(users) > 1:
                chunks = [users[i::self.workers] for i in range(self.workers)]
                with ProcessPoolExecutor(max_workers=self.workers) as pool:
                    parts = list(pool.map(_analyze_chunk, [(chunk, self.config) for chunk in chunks if chunk]))
                analyses = sorted((a for part in parts for a in part), key=lambda a: a.user_id)
            else:
                analyses = _analyze_chunk((users, self.config))

            result = AnalysisResult(
                users=analyses,
                hybrid=[c for a in analyses for c in a.hybrid],
                intra=[c for a in analyses for c in a.intra],
            )
            counts = {
                "anchor_points": sum(len(anchors.anchors) for _, anchors in result.anchors),
                "chains_hybrid": len(result.hybrid),
                "chains_intra": len(result.intra),
            }
            return StageOutcome(result, counts)
        return self._stage("chains", run)

    def rank(self, analysis: AnalysisResult, mode: ChainMode,
             threshold: Optional[float] = None) -> Optional[ChainTypeRanking]:
        chains = analysis.chains(mode)
        if not chains:
            logger.warning(f"No {mode.value} chains to rank", extra={"stage": "rank"})
            return None
        share = threshold if threshold is not None else self.config.significance_share

        def run():
            ranking = rank_chain_types(chains, share, mode)
            return StageOutcome(ranking, {
                f"types_{mode.value}": ranking.total_type_count,
                f"significant_{mode.value}": len(ranking.significant_labels),
                **({"pass_through_days": ranking.pass_through_count} if mode == ChainMode.HYBRID else {}),
            })
        return self._stage("rank", run)

    # Writers

    def write_observation_days(self, ingest: IngestResult) -> None:
        summary = observation_day_summary(ingest.user_days, len(ingest.gap_day_users))
        self._emit(reports.write_observation_days(summary, self._path("observation_days.csv")))
        self.context.update({
            "median_observed_days": reports.fmt(summary.median_days),
            "mean_observed_days": reports.fmt(summary.mean_days),
            "gap_day_share": reports.fmt(summary.gap_day_share),
        })
        for key, value in ingest.tower_spacing.items():
            self.context[f"tower_spacing_{key}"] = reports.fmt(value)

    def write_anchors(self, analysis: AnalysisResult) -> None:
        self._emit(reports.write_anchors(analysis.anchors, self._path("anchors.csv")))

    def write_chains(self, analysis: AnalysisResult) -> None:
        for mode in ChainMode:
            self._emit(reports.write_chains(analysis.chains(mode), self._path(f"chains_{mode.value}.csv")))

    def write_ranking(self, analysis: AnalysisResult, mode: ChainMode,
                      threshold: Optional[float] = None) -> Optional[ChainTypeRanking]:
        ranking = self.rank(analysis, mode, threshold)
        if ranking is not None:
            self._emit(reports.write_ranking(ranking, self._path(f"ranking_{mode.value}.csv")))
            if mode == ChainMode.HYBRID:
                for category, count in ranking.category_counts.items():
                    self.counts[f"category_{category}"] = count
        return ranking

    def write_transitions(self, analysis: AnalysisResult, ranking: Optional[ChainTypeRanking]) -> None:
        pairs = consecutive_day_pairs(analysis.intra)
        self.counts["transition_pairs"] = len(pairs)
        if not pairs or ranking is None:
            logger.warning("No consecutive intra-city days; transition matrices skipped",
                           extra={"stage": "transitions"})
            return

        def run():
            return (build_transition_matrix(pairs, ranking.significant_labels),
                    aggregate_by_ap_count(pairs, self.config.max_n))
        matrix, by_n = self._stage("transitions", run)
        self.outputs.extend(reports.write_matrix(
            matrix, self._path("transitions_frequency.csv"), self._path("transitions_probability.csv")))
        self.outputs.extend(reports.write_matrix(
            by_n, self._path("transitions_by_n_frequency.csv"), self._path("transitions_by_n_probability.csv")))

    def write_metrics(self, analysis: AnalysisResult) -> None:
        if not analysis.intra:
            logger.warning("No intra-city chains; effort metrics skipped", extra={"stage": "metrics"})
            return

        def run():
            return group_by_node_count(analysis.intra, self.config.overflow_at)
        groups = self._stage("metrics", run)
        self._emit(reports.write_group_summaries(groups["degree"], self._path("metrics_degree.csv")))
        self._emit(reports.write_group_summaries(groups["distance"], self._path("metrics_distance.csv")))
        self._emit(reports.write_group_values(groups, self._path("metrics_values.csv")))

        summary = {}
        for mode in ChainMode:
            mean_d = mean_distance_km(analysis.chains(mode))
            summary[f"mean_distance_km_{mode.value}"] = "" if mean_d is None else reports.fmt(mean_d)
        self._emit(reports.write_key_values(summary, self._path("metrics_summary.txt")))

    def write_fit(self, analysis: AnalysisResult) -> Optional[LogNormalFit]:
        if not analysis.intra:
            return None
        pmf = self._stage("fit", ap_count_pmf, analysis.intra)
        self._emit(reports.write_pmf(pmf, self._path("ap_count_pmf.csv")))
        try:
            fit = self._stage("fit", fit_lognormal, pmf)
        except StageError as e:
            if not isinstance(e.cause, AnalysisError):
                raise
            logger.warning(f"Log-normal fit skipped: {e.cause}", extra={"stage": "fit"})
            return None
        self._emit(reports.write_fit(fit, self._path("lognormal_fit.txt")))
        return fit

    def write_hotspot(self, analysis: AnalysisResult) -> None:
        points = analysis.hotspot_points
        if not points:
            logger.warning("No in-city anchor points; hotspot raster skipped", extra={"stage": "hotspot"})
            return
        raster = self._stage("hotspot", kde_raster, points, self.config.kde_radius_m, self.config.cell_size_m)
        path = self._path("hotspot.asc")
        write_ascii_grid(raster, path)
        self._emit(path)
        georef = self._path("hotspot.georef")
        write_georef(raster, georef, self.config.kde_radius_m, self.config.kde_weighted)
        self._emit(georef)

    def write_manifest(self, inputs: Dict[str, PathLike]) -> RunManifest:
        manifest = RunManifest(
            tool_version=__version__,
            config=dump_config(self.config),
            inputs={name: reports.sha256_file(Path(path)) for name, path in sorted(inputs.items())},
            counts=dict(sorted(self.counts.items())),
            outputs=dict(reports.list_outputs(self.outputs, self.out_dir)),
            context=dict(sorted(self.context.items())),
        )
        reports.write_manifest(manifest, self._path("manifest.txt"))
        return manifest

    def run(self, input_path: PathLike, city_path: PathLike) -> RunManifest:
        """ingest → anchors → chains → ranking, transitions, metrics, fit, hotspot → manifest"""
        ingest = self.ingest(input_path, city_path)
        self.write_observation_days(ingest)
        analysis = self.analyze(ingest)
        self.write_anchors(analysis)
        self.write_chains(analysis)
        self.write_ranking(analysis, ChainMode.HYBRID)
        intra_ranking = self.write_ranking(analysis, ChainMode.INTRA_CITY)
        self.write_transitions(analysis, intra_ranking)
        self.write_metrics(analysis)
        self.write_fit(analysis)
        self.write_hotspot(analysis)
        manifest = self.write_manifest({"records": input_path, "city": city_path})
        logger.info(
            f"Pipeline finished with {len(manifest.outputs)} outputs in {self.out_dir}",
            extra={"stage": "run", "count": len(manifest.outputs)}
        )
        return manifest


def run_pipeline(config: StudyConfig, input_path: PathLike, city_path: PathLike,
                 out_dir: PathLike, workers: Optional[int] = None) -> RunManifest:
    return PipelineService(config, out_dir, workers).run(input_path, city_path)
