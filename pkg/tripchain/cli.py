"""
Command line interface: ``python -m tripchain <subcommand>``
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from tripchain import __version__
from tripchain.core.config import StudyConfig, build_study_config, load_config_file, render_key_value, settings
from tripchain.core.error_handling import (
    EXIT_OK,
    InputFormatError,
    TripChainError,
    UsageError,
    error_handler,
    exit_code_for,
)
from tripchain.core.logging_config import setup_logging
from tripchain.models.chains import ChainMode
from tripchain.services import report_service as reports
from tripchain.services.pipeline_service import PipelineService
from tripchain.services.stats_service import fit_lognormal
from tripchain.services.synth_service import generate_population, load_scenario, render_scenario

logger = logging.getLogger("tripchain.cli")


def _common_flags(parser: argparse.ArgumentParser, needs_input: bool = True) -> None:
    parser.add_argument("--config", type=Path, help="key-value study configuration file")
    if needs_input:
        parser.add_argument("--input", type=Path, help="stay-record file")
        parser.add_argument("--city", type=Path, help="city polygon (.geojson) or in-city tower list")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    parser.add_argument("--workers", type=int, help="worker processes for per-user analysis")
    parser.add_argument("--threshold", type=float, help="significance share of a chain type (default 0.01)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripchain",
        description="Reconstruct and analyze tourist daily trip chains from cellphone stay records.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="logging level (default: %(default)s)")
    parser.add_argument("--log-format", choices=("json", "standard"), default=settings.LOG_FORMAT,
                        help="stderr log format (default: %(default)s)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    commands = {
        "ingest": "validate input and write observation-day statistics",
        "anchors": "extract anchor points (anchors.csv)",
        "chains": "build hybrid and intra-city daily chains",
        "rank": "rank chain types of one mode",
        "transitions": "day-to-day transition matrices of intra-city chain types",
        "metrics": "degree and average distance summaries by node count",
        "hotspot": "kernel density raster of anchor point visits",
        "run": "full pipeline with manifest",
    }
    for name, help_text in commands.items():
        command = sub.add_parser(name, help=help_text, description=help_text)
        _common_flags(command)
        if name == "rank":
            command.add_argument("--mode", choices=[m.value for m in ChainMode], default=ChainMode.INTRA_CITY.value,
                                 help="chain mode (default: %(default)s)")

    fit = sub.add_parser("fit", help="log-normal fit of the anchor-count distribution",
                         description="Fit a log-normal density to an ap_count_pmf.csv file, or to the "
                                     "intra-city chains of --input when no --pmf is given.")
    _common_flags(fit)
    fit.add_argument("--pmf", type=Path, help="x,probability file")

    synth = sub.add_parser("synth", help="generate a synthetic population with ground truth",
                           description="Generate records.csv, ground_truth.csv and city.geojson from a scenario.")
    _common_flags(synth, needs_input=False)
    synth.add_argument("--scenario", type=Path, help="scenario key-value file")
    synth.add_argument("--seed", type=int, help="override the scenario seed")

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _study_config(args: argparse.Namespace) -> StudyConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides: Dict[str, Any] = {
        "workers": getattr(args, "workers", None),
        "significance_share": getattr(args, "threshold", None),
    }
    return build_study_config(file_values, overrides)


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{name}" for name in names if getattr(args, name, None) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required flag(s) {', '.join(missing)}",
                         details={"missing": missing})


def _print(values: Dict[str, Any]) -> None:
    sys.stdout.write(render_key_value(values))


def _pipeline(args: argparse.Namespace):
    _require(args, "input", "city")
    config = _study_config(args)
    service = PipelineService(config, args.out, config.workers)
    ingest = service.ingest(args.input, args.city)
    return service, ingest


def cmd_ingest(args: argparse.Namespace) -> int:
    service, ingest = _pipeline(args)
    service.write_observation_days(ingest)
    _print({**ingest.counts, **service.context})
    return EXIT_OK


def cmd_anchors(args: argparse.Namespace) -> int:
    service, ingest = _pipeline(args)
    analysis = service.analyze(ingest)
    service.write_anchors(analysis)
    _print({"anchor_points": service.counts["anchor_points"]})
    return EXIT_OK


def cmd_chains(args: argparse.Namespace) -> int:
    service, ingest = _pipeline(args)
    analysis = service.analyze(ingest)
    service.write_chains(analysis)
    _print({"chains_hybrid": len(analysis.hybrid), "chains_intra": len(analysis.intra)})
    return EXIT_OK


def cmd_rank(args: argparse.Namespace) -> int:
    service, ingest = _pipeline(args)
    analysis = service.analyze(ingest)
    ranking = service.write_ranking(analysis, ChainMode(args.mode), args.threshold)
    if ranking is None:
        _print({"chains": 0})
        return EXIT_OK
    _print({
        "chains": ranking.total_chains,
        "types": ranking.total_type_count,
        "significant": ",".join(ranking.significant_labels),
        "coverage": reports.fmt(ranking.coverage_share),
    })
    return EXIT_OK


def cmd_transitions(args: argparse.Namespace) -> int:
    service, ingest = _pipeline(args)
    analysis = service.analyze(ingest)
    ranking = service.rank(analysis, ChainMode.INTRA_CITY)
    service.write_transitions(analysis, ranking)
    _print({"transition_pairs": service.counts.get("transition_pairs", 0)})
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    service, ingest = _pipeline(args)
    analysis = service.analyze(ingest)
    service.write_metrics(analysis)
    service.write_fit(analysis)
    _print({"chains_intra": len(analysis.intra)})
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    if args.pmf is not None:
        if not args.pmf.is_file():
            raise InputFormatError(f"pmf file not found: {args.pmf}", error_key="INPUT_FILE_MISSING",
                                   details={"path": str(args.pmf)})
        fit = fit_lognormal(reports.read_pmf(args.pmf))
        args.out.mkdir(parents=True, exist_ok=True)
        reports.write_fit(fit, args.out / "lognormal_fit.txt")
    else:
        service, ingest = _pipeline(args)
        fit = service.write_fit(service.analyze(ingest))
        if fit is None:
            _print({"fit": "skipped"})
            return EXIT_OK
    _print({
        "mu": reports.fmt(fit.mu),
        "sigma": reports.fmt(fit.sigma),
        "r_squared": reports.fmt(fit.r_squared),
        "support_min": fit.support_min,
        "support_max": fit.support_max,
    })
    return EXIT_OK


def cmd_hotspot(args: argparse.Namespace) -> int:
    service, ingest = _pipeline(args)
    service.write_hotspot(service.analyze(ingest))
    _print({"outputs": ",".join(p.name for p in service.outputs)})
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    _require(args, "scenario")
    spec, config = load_scenario(args.scenario)
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    workers = args.workers or config.workers
    result = generate_population(spec, args.out, workers)
    (args.out / "scenario.cfg").write_text(render_scenario(spec, config), encoding="utf-8")
    _print({
        "records": len(result.records),
        "user_days": len(result.ground_truth),
        "users": spec.n_users,
        "out": str(args.out),
    })
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    _require(args, "input", "city")
    config = _study_config(args)
    manifest = PipelineService(config, args.out, config.workers).run(args.input, args.city)
    _print({"manifest": str(args.out / "manifest.txt"), "outputs": len(manifest.outputs)})
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("tripchain.main:app", host=args.host, port=args.port, log_level=args.log_level.lower())
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "ingest": cmd_ingest,
    "anchors": cmd_anchors,
    "chains": cmd_chains,
    "rank": cmd_rank,
    "transitions": cmd_transitions,
    "metrics": cmd_metrics,
    "fit": cmd_fit,
    "hotspot": cmd_hotspot,
    "synth": cmd_synth,
    "run": cmd_run,
    "serve": cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments and dispatch; returns the process exit status.

    argparse itself exits with status 2 on unknown flags or subcommands.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level, args.log_format, settings.LOG_DIR)
    try:
        return COMMANDS[args.command](args)
    except TripChainError as e:
        error_handler.log_error(e, stage=getattr(e, "stage", None))
        sys.stderr.write(f"tripchain: error [{e.code}]: {e.message}\n")
        return exit_code_for(e)
