"""Command-line front end: simulate, ingest, replay, compare and design-grid."""

import argparse
import logging
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from .config import RunConfig, load_config_file, resolve_settings, write_manifest
from .constants import (
    ALL_POLICIES, POLICY_ALG1, TIMESTAMP_MODES, UTILITY_SIGN_NEGATED, UTILITY_SIGN_RAW,
    EXIT_OK, EXIT_DOMAIN_ERROR, EXIT_USAGE_ERROR
)
from .core import read_series_csv, write_series_csv, write_trigger_logs_csv
from .design import design_grid, write_design_grid
from .errors import ConfigError, TriggeringError
from .evaluate import compare_algorithms, compute_ground_truth
from .ingest import clean_and_slot, read_raw_export
from .schedulers import create_scheduler, mean_present_count, subject_seed
from .simulate import (
    estimate_cohort_adherence, generate_cohort, present_count_histogram, write_histogram_csv
)

logger = logging.getLogger(__name__)


class Command(Enum):
    """Subcommands of the CLI."""
    SIMULATE = "simulate"
    INGEST = "ingest"
    REPLAY = "replay"
    COMPARE = "compare"
    DESIGN_GRID = "design-grid"


def configure_logging(level: str = "INFO") -> None:
    """Send log records to stderr at the given level."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _param_range(text: str) -> List[float]:
    try:
        lo, hi = (float(part) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}")
    return [lo, hi]


def _add_design_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("study design")
    group.add_argument("--N", dest="total_slots", type=int, help="Study length in slots (multiple of --slots-per-day)")
    group.add_argument("--days", dest="n_days", type=int, help="Study days (default 30)")
    group.add_argument("--slots-per-day", type=int, help="Prompts per day (default 6)")
    group.add_argument("--start-point", type=int, help="Triggering starting point S* (default 6)")
    group.add_argument("--v", dest="target_triggers", type=int, help="Desired triggers per subject (default 4)")
    group.add_argument("--cap", dest="trigger_cap", type=int, help="Stopping rule R (default 10)")
    group.add_argument("--no-cap", action="store_true", help="Disable the stopping rule")
    group.add_argument("--static-lo", type=float, help="Lower static threshold (default 0.15)")
    group.add_argument("--static-hi", type=float, help="Upper static threshold (default 0.85)")
    group.add_argument("--static-no-cap", dest="static_uses_cap", action="store_const", const=False,
                       help="Let the static policy ignore the stopping rule")
    group.add_argument("--static-no-start-point", dest="static_uses_start_point", action="store_const", const=False,
                       help="Let the static policy trigger before S*")
    group.add_argument("--random-triggers", dest="random_trigger_count", type=int,
                       help="Slots preselected by the random policy (default 10)")
    group.add_argument("--random-full-window", action="store_const", const=True,
                       help="Draw random slots from the whole study instead of S*..N")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Flat YAML file of setting overrides")
    parser.add_argument("--output-dir", default=".", help="Directory for artifacts and manifest.json")
    parser.add_argument("--seed", type=int, help="Root random seed (default 7)")
    parser.add_argument("--workers", type=int, help="Worker processes (default: available processors)")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _add_simulation_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("simulation")
    group.add_argument("--subjects", type=int, help="Simulated subjects (default 1000)")
    group.add_argument("--chi", type=float, help="Adherence rate (default 0.19)")
    group.add_argument("--param-range", type=_param_range, help="Uniform range of both Beta shapes as lo:hi")


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with every subcommand."""
    parser = argparse.ArgumentParser(
        prog="ema-trigger",
        description="Adaptive control-chart triggering of secondary tasks in EMA studies",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    simulate = subparsers.add_parser(Command.SIMULATE.value, help="Generate a synthetic cohort")
    _add_common_flags(simulate)
    _add_design_flags(simulate)
    _add_simulation_flags(simulate)
    simulate.add_argument("--chi-from", help="Estimate the adherence rate from a series CSV")

    ingest = subparsers.add_parser(Command.INGEST.value, help="Clean a raw export into series")
    _add_common_flags(ingest)
    _add_design_flags(ingest)
    ingest.add_argument("--input", required=True, help="Raw export CSV")
    ingest.add_argument("--min-interactions", type=int, help="Minimum retained interactions (default 6)")
    ingest.add_argument("--timezone", help="Timezone of calendar days (default UTC)")
    ingest.add_argument("--timestamp-mode", choices=TIMESTAMP_MODES, help="How save/save_date form a timestamp")
    ingest.add_argument("--timestamp-format", help="strptime format of the assembled timestamp")
    ingest.add_argument("--delimiter", help="Field delimiter of the export")

    replay = subparsers.add_parser(Command.REPLAY.value, help="Replay one policy over a series file")
    _add_common_flags(replay)
    _add_design_flags(replay)
    replay.add_argument("--series", required=True, help="Series CSV")
    replay.add_argument("--algorithm", required=True, choices=ALL_POLICIES)
    replay.add_argument("--subject", help="Replay only this subject")
    replay.add_argument("--n-bar-prime", type=float, help="Prior sample count of alg1 (default: file mean)")

    compare = subparsers.add_parser(Command.COMPARE.value, help="Score all policies and compare them")
    _add_common_flags(compare)
    _add_design_flags(compare)
    _add_simulation_flags(compare)
    source = compare.add_mutually_exclusive_group(required=True)
    source.add_argument("--simulate", action="store_true", help="Compare on a simulated cohort")
    source.add_argument("--series", help="Compare on a series CSV")
    compare.add_argument("--n-bar-prime", type=float, help="Prior sample count of alg1 (default: cohort mean)")
    compare.add_argument("--utility-sign", choices=[UTILITY_SIGN_NEGATED, UTILITY_SIGN_RAW],
                         help="Test -u1 (negated, default) or u1 as defined (raw)")

    grid = subparsers.add_parser(Command.DESIGN_GRID.value, help="Emit the U1/U2 design grid")
    _add_common_flags(grid)
    _add_design_flags(grid)
    grid.add_argument("--grid-start-points", type=int, help="Grid resolution along S (default 180)")
    grid.add_argument("--grid-alpha-points", type=int, help="Grid resolution along alpha (default 101)")
    return parser


def _flag_values(args: argparse.Namespace) -> Dict[str, Any]:
    names = [
        "total_slots", "n_days", "slots_per_day", "start_point", "target_triggers", "trigger_cap",
        "static_lo", "static_hi", "static_uses_cap", "static_uses_start_point", "random_trigger_count",
        "random_full_window", "seed", "workers",
        "subjects", "chi", "n_bar_prime", "utility_sign", "min_interactions", "timezone",
        "timestamp_mode", "timestamp_format", "delimiter", "grid_start_points", "grid_alpha_points",
    ]
    values = {name: getattr(args, name, None) for name in names}
    param_range = getattr(args, "param_range", None)
    if param_range is not None:
        values["param_lo"], values["param_hi"] = param_range
    return values


def build_config(args: argparse.Namespace) -> RunConfig:
    """Resolve defaults, the config file and flags into a RunConfig."""
    file_values = load_config_file(args.config) if args.config else {}
    settings = resolve_settings(file_values, _flag_values(args))
    if args.no_cap:
        settings["trigger_cap"] = None

    inputs = {
        name: getattr(args, name)
        for name in ("input", "series", "algorithm", "subject", "chi_from", "simulate")
        if getattr(args, name, None) is not None
    }
    return RunConfig(args.command, settings, Path(args.output_dir), inputs, args.config)


def _simulate(config: RunConfig) -> List[Path]:
    design = config.design
    rate = None
    chi_from = config.inputs.get("chi_from")
    if chi_from:
        observed = read_series_csv(chi_from, design.slots_per_day, design.total_slots)
        rate = estimate_cohort_adherence(observed, design)
        config.settings["chi"] = rate
        logger.info("Estimated adherence rate %.4f from %s", rate, chi_from)

    cohort = generate_cohort(config.sim_config(rate), config.workers)
    paths = [config.output_dir / "series.csv", config.output_dir / "adherence_hist.csv"]
    write_series_csv(cohort, paths[0])
    write_histogram_csv(present_count_histogram(cohort), paths[1])
    return paths


def _ingest(config: RunConfig) -> List[Path]:
    settings = config.settings
    raw = read_raw_export(config.inputs["input"], settings["delimiter"])
    series_list, report = clean_and_slot(
        raw,
        config.design,
        min_interactions=int(settings["min_interactions"]),
        timezone=settings["timezone"],
        timestamp_mode=settings["timestamp_mode"],
        timestamp_format=settings["timestamp_format"],
    )
    paths = [
        config.output_dir / "series.csv",
        config.output_dir / "cleaning_report.json",
        config.output_dir / "adherence_hist.csv",
    ]
    write_series_csv(series_list, paths[0])
    report.save(paths[1])
    write_histogram_csv(present_count_histogram(series_list), paths[2])
    return paths


def _replay(config: RunConfig) -> List[Path]:
    design = config.design
    series_list = read_series_csv(config.inputs["series"], design.slots_per_day, design.total_slots)
    policy = config.inputs["algorithm"]
    n_bar_prime = config.settings["n_bar_prime"]
    if policy == POLICY_ALG1 and n_bar_prime is None:
        n_bar_prime = mean_present_count(series_list, design)
        config.settings["n_bar_prime"] = n_bar_prime

    subject = config.inputs.get("subject")
    if subject is not None:
        series_list = [s for s in series_list if s.subject_id == subject]
        if not series_list:
            raise TriggeringError(f"subject {subject} not found in {config.inputs['series']}")

    logs = []
    truth_rows = []
    for series in series_list:
        scheduler = create_scheduler(policy, design, n_bar_prime, subject_seed(config.seed, series.subject_id))
        logs.append(scheduler.run(series))
        if series.present_count >= 2:
            truth = compute_ground_truth(series, design)
            truth_rows.extend(
                (series.subject_id, point.slot, point.value, label, truth.lower, truth.upper)
                for point, label in zip(series.timeline, truth.labels)
            )
        else:
            logger.warning("Subject %s has fewer than two reported values; no ground truth", series.subject_id)

    paths = [config.output_dir / "triggers.csv", config.output_dir / "ground_truth.csv"]
    write_trigger_logs_csv(logs, paths[0])
    pd.DataFrame(
        [
            (sid, slot, value, "" if label is None else ("extreme" if label else "normal"), lower, upper)
            for sid, slot, value, label, lower, upper in truth_rows
        ],
        columns=["subject_id", "slot", "value", "label", "lower", "upper"],
    ).to_csv(paths[1], index=False, float_format="%.17g")
    return paths


def _compare(config: RunConfig) -> List[Path]:
    design = config.design
    if config.inputs.get("series"):
        cohort = read_series_csv(config.inputs["series"], design.slots_per_day, design.total_slots)
    else:
        cohort = generate_cohort(config.sim_config(), config.workers)
    report = compare_algorithms(
        cohort,
        design,
        config.seed,
        n_bar_prime=config.settings["n_bar_prime"],
        utility_sign=config.settings["utility_sign"],
        workers=config.workers,
    )
    config.settings["n_bar_prime"] = report.n_bar_prime
    return report.save(config.output_dir)


def _design_grid(config: RunConfig) -> List[Path]:
    design = config.design
    points = design_grid(
        design.total_slots,
        design.target_triggers,
        int(config.settings["grid_start_points"]),
        int(config.settings["grid_alpha_points"]),
    )
    path = config.output_dir / "design_grid.csv"
    write_design_grid(points, path)
    return [path]


HANDLERS = {
    Command.SIMULATE: _simulate,
    Command.INGEST: _ingest,
    Command.REPLAY: _replay,
    Command.COMPARE: _compare,
    Command.DESIGN_GRID: _design_grid,
}


def run_pipeline(config: RunConfig) -> int:
    """Execute the configured subcommand and always write a manifest.

    Args:
        config: Resolved run configuration.

    Returns:
        The exit status: 0 on success, 1 on domain or I/O errors, 2 on
        configuration errors.
    """
    outputs: List[Path] = []
    status = EXIT_OK
    error: Optional[str] = None
    try:
        config.output_dir.mkdir(parents=True, exist_ok=True)
        outputs = HANDLERS[Command(config.command)](config)
    except ConfigError as err:
        status, error = EXIT_USAGE_ERROR, str(err)
        logger.error("Configuration error: %s", err)
    except (TriggeringError, OSError) as err:
        status, error = EXIT_DOMAIN_ERROR, str(err)
        logger.error("%s failed: %s", config.command, err)
    try:
        write_manifest(config, status, outputs, error)
    except OSError as err:
        logger.error("Cannot write manifest: %s", err)
        status = status or EXIT_DOMAIN_ERROR
    return status


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point of the command-line interface.

    Args:
        argv: Arguments without the program name; defaults to ``sys.argv[1:]``.

    Returns:
        The process exit status.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or EXIT_OK)

    configure_logging(args.log_level)
    try:
        config = build_config(args)
    except ConfigError as err:
        logger.error("Configuration error: %s", err)
        return EXIT_USAGE_ERROR
    return run_pipeline(config)


if __name__ == "__main__":
    sys.exit(main())
