"""Command-line front end: batch runs, front metrics and low-thrust diagnostics."""

import argparse
import hashlib
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from app import __version__
from app.core.config import load_run_config
from app.core.errors import ConfigurationError, DomainError, OptimizerError
from app.models.engine_models import SelectionMode
from app.models.problem_models import BenchmarkId, ExtremumMethodName, LowThrustConfig, SolutionSpace
from app.models.run_models import ProblemId, RunManifest
from app.services import lowthrust, macs
from app.services.benchmarks import reference_front
from app.services.log_service import configure_logging
from app.services.pareto import distance_metric
from app.services.problem_registry import VALID_IDS, parse_problem_id
from app.services.report_service import ReportService, read_front
from app.services.run_service import RunService

logger = logging.getLogger(__name__)

BUILTIN_FRONTS = tuple(item.value for item in BenchmarkId)


def _parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="macs",
        description="Robust multiobjective design under epistemic uncertainty.",
    )
    parser.add_argument("--log-level", default=None, help="Override MACS_LOG_LEVEL (DEBUG, INFO, WARNING).")
    parser.add_argument("--version", action="version", version=f"%(prog)s v{__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Execute the seeded repeats of a run manifest.")
    run.add_argument("--problem", help=f"Problem id ({VALID_IDS}); overrides the manifest.")
    run.add_argument("--config", help="Run manifest (JSON).")
    run.add_argument("--seed", type=int, help="Base seed; repeat i uses seed + i.")
    run.add_argument("--repeats", type=int, help="Number of seeded repeats.")
    run.add_argument("--out", help="Output directory for archives and summary.")
    run.add_argument("--budget", type=int, help="Evaluation budget per repeat.")
    run.add_argument("--agents", type=int, help="Population size.")
    run.add_argument("--nf", type=int, help="Agents kept by the filter.")
    run.add_argument(
        "--space",
        choices=[item.value for item in SolutionSpace],
        help="Aerocapture solution space.",
    )
    run.add_argument("--mode", choices=[item.value for item in SelectionMode], help="Subdomain selection mode.")
    run.add_argument("--nu", type=float, help="Front-guided selection weight.")
    run.add_argument(
        "--method",
        choices=[item.value for item in ExtremumMethodName],
        help="Focal-element extremum method for robust problems.",
    )

    metric = commands.add_parser("metric", help="Distance of a front to a reference front.")
    metric.add_argument("front", help="Front CSV (objective_* columns, or all numeric columns).")
    metric.add_argument("reference", help=f"Builtin reference ({', '.join(BUILTIN_FRONTS)}) or a CSV path.")
    metric.add_argument("--points", type=int, default=500, help="Points on a builtin reference front.")

    front = commands.add_parser("front", help="Export a builtin true Pareto front to CSV.")
    front.add_argument("problem", choices=BUILTIN_FRONTS)
    front.add_argument("--points", type=int, default=500)
    front.add_argument("--out", default="runs", help="Output directory.")

    diagnose = commands.add_parser(
        "diagnose-lowthrust",
        help="Compare shaped elements with elements propagated under the shaped control.",
    )
    diagnose.add_argument("design", help="CSV with one design row (N, t0, tf, w, A, alpha21..23[, m_max]).")
    diagnose.add_argument("--out", default="runs", help="Output directory.")
    diagnose.add_argument("--points", type=int, default=400, help="Samples along the transfer.")
    diagnose.add_argument("--row", type=int, default=0, help="Row of the design CSV to use.")
    return parser.parse_args(argv)


def _manifest_from_args(args: argparse.Namespace) -> RunManifest:
    if args.config:
        manifest = load_run_config(args.config)
        base: Dict[str, Any] = manifest.model_dump()
    elif args.problem:
        base = {"problem": parse_problem_id(args.problem).value}
    else:
        raise ConfigurationError(f"Either --config or --problem is required; valid problems: {VALID_IDS}")

    if args.problem:
        base["problem"] = parse_problem_id(args.problem).value
    base["engine_config"] = None
    for flag, key in (("seed", "seed"), ("repeats", "repeats"), ("out", "output_dir")):
        value = getattr(args, flag)
        if value is not None:
            base[key] = value

    engine = dict(base.get("engine") or {})
    for flag, key in (("budget", "max_evaluations"), ("agents", "population_size"), ("nf", "n_f"), ("mode", "selection_mode"), ("nu", "nu")):
        value = getattr(args, flag)
        if value is not None:
            engine[key] = value
    base["engine"] = macs.validate_engine_config(engine).model_dump()

    problem_config = dict(base.get("problem_config") or {})
    if args.space is not None:
        if base["problem"] != ProblemId.AEROCAPTURE.value:
            raise ConfigurationError("--space applies to the aerocapture problem only")
        problem_config["space"] = args.space
    if args.method is not None:
        evidence = dict(problem_config.get("evidence") or {})
        evidence["method"] = args.method
        problem_config["evidence"] = evidence
    base["problem_config"] = problem_config

    try:
        return RunManifest.model_validate(base)
    except ValueError as e:
        raise ConfigurationError(f"Invalid run manifest: {e}")


def cmd_run(args: argparse.Namespace) -> int:
    manifest = _manifest_from_args(args)

    def progress(index: int, generation: macs.GenerationProgress) -> None:
        logger.info(
            f"repeat={index} gen={generation.generation} evals={generation.evaluations} "
            f"archive={generation.archive_size} nondominated={generation.nondominated_agents} "
            f"best_f0={generation.best_first_objective:.6g}"
        )

    summary, _ = RunService().execute(manifest, on_generation=progress)
    print(summary.model_dump_json(indent=2))
    return 0


def _reference(value: str, points: int) -> np.ndarray:
    if value in BUILTIN_FRONTS:
        return reference_front(BenchmarkId(value), points)
    return read_front(value)


def cmd_metric(args: argparse.Namespace) -> int:
    front = read_front(args.front)
    reference = _reference(args.reference, args.points)
    print(f"{distance_metric(front, reference):.6f}")
    return 0


def cmd_front(args: argparse.Namespace) -> int:
    values = reference_front(BenchmarkId(args.problem), args.points)
    frame = pd.DataFrame({f"objective_{j}": values[:, j] for j in range(values.shape[1])})
    digest = hashlib.sha256(f"{args.problem}:{args.points}".encode("utf-8")).hexdigest()
    path = ReportService(args.out).write_csv(frame, f"{args.problem}_front.csv", 0, digest)
    print(path)
    return 0


def _design_row(path: str, row: int) -> lowthrust.LowThrustDesign:
    if not os.path.exists(path):
        raise ConfigurationError(f"Design file not found: {path}")
    frame = pd.read_csv(path, comment="#")
    named = [name for name in lowthrust.DECISION_NAMES if name in frame.columns]
    if len(named) >= 8:
        frame = frame[named]
    elif any(str(c).startswith("decision_") for c in frame.columns):
        frame = frame[[c for c in frame.columns if str(c).startswith("decision_")]]
    if not 0 <= row < len(frame):
        raise ConfigurationError(f"Design file {path} has no row {row}")
    return lowthrust.LowThrustDesign.from_vector(frame.iloc[row].to_numpy(dtype=float))


def cmd_diagnose_lowthrust(args: argparse.Namespace) -> int:
    design = _design_row(args.design, args.row)
    config = LowThrustConfig()
    try:
        comparison = lowthrust.compare_shaped_and_propagated(design, config, points=args.points)
    except DomainError as e:
        # an out-of-bounds design is a runtime failure here, not a usage error
        print(f"error: {e}", file=sys.stderr)
        return 3

    digest = hashlib.sha256(json.dumps(design.to_vector().tolist()).encode("utf-8")).hexdigest()
    reports = ReportService(args.out)
    reports.write_csv(comparison.table, "lowthrust_elements.csv", 0, digest)
    reports.write_csv(lowthrust.trajectory_table(design, config), "lowthrust_trajectory.csv", 0, digest)
    reports.write_json({"max_deviation": comparison.max_deviation}, "lowthrust_deviation.json", 0, digest)
    for name, value in comparison.max_deviation.items():
        print(f"{name}: {value:.6e}")
    return 0


COMMANDS = {
    "run": cmd_run,
    "metric": cmd_metric,
    "front": cmd_front,
    "diagnose-lowthrust": cmd_diagnose_lowthrust,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _parse_args(argv)
    try:
        configure_logging(args.log_level)
        return COMMANDS[args.command](args)
    except OptimizerError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Command {args.command} failed")
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
