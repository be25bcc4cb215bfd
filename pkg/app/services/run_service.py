import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from app.core.config import get_settings
from app.models.run_models import RepeatResult, RunManifest, RunSummary
from app.services import macs
from app.services.pareto import ParetoArchive, distance_metric
from app.services.problem_registry import ResolvedProblem, resolve_problem
from app.services.report_service import VERSION_TAG, ReportService

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, macs.GenerationProgress], None]


def manifest_hash(manifest: RunManifest) -> str:
    return hashlib.sha256(manifest.model_dump_json().encode("utf-8")).hexdigest()


@dataclass
class RepeatOutcome:
    index: int
    seed: int
    archive: ParetoArchive
    stats: macs.RunStats
    generations: List[Dict[str, Any]] = field(default_factory=list)
    distance: Optional[float] = None


class RunService:
    """Runs a manifest's seeded repeats and writes their artifacts."""

    def __init__(self, threads: Optional[int] = None):
        self.threads = threads or get_settings().threads

    def _repeat(
        self,
        resolved: ResolvedProblem,
        manifest: RunManifest,
        index: int,
        on_generation: Optional[ProgressCallback],
    ) -> RepeatOutcome:
        seed = manifest.seed + index
        config = manifest.engine.model_copy(update={"seed": seed})
        generations: List[Dict[str, Any]] = []

        def record(progress: macs.GenerationProgress) -> None:
            generations.append(progress.to_dict())
            if on_generation is not None:
                on_generation(index, progress)

        logger.info(f"Repeat {index} of {manifest.problem.value} started with seed {seed}")
        archive, stats = macs.run(resolved.problem, config, on_generation=record)
        outcome = RepeatOutcome(index, seed, archive, stats, generations)
        feasible = [entry.objectives for entry in archive.feasible_entries()]
        if resolved.reference is not None and feasible:
            outcome.distance = distance_metric(np.asarray(feasible), resolved.reference)
        logger.info(
            f"Repeat {index} finished: {stats.evaluations} evaluations, {len(archive)} archive entries, "
            f"distance={outcome.distance}"
        )
        return outcome

    def execute(
        self,
        manifest: RunManifest,
        on_generation: Optional[ProgressCallback] = None,
        output_dir: Optional[str] = None,
    ) -> Tuple[RunSummary, List[RepeatOutcome]]:
        resolved = resolve_problem(manifest)
        digest = manifest_hash(manifest)
        workers = max(1, min(self.threads, manifest.repeats))
        logger.info(f"Running {manifest.repeats} repeat(s) of {manifest.problem.value} on {workers} thread(s)")
        try:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(self._repeat, resolved, manifest, index, on_generation)
                    for index in range(manifest.repeats)
                ]
                outcomes = [future.result() for future in futures]
        except Exception:
            logger.exception(f"Run of {manifest.problem.value} failed")
            raise

        target = output_dir or manifest.output_dir
        reports = ReportService(target)
        for outcome in outcomes:
            reports.write_archive(outcome.index, outcome.archive, outcome.seed, digest)
            reports.write_generation_log(outcome.index, outcome.generations, outcome.seed, digest)
            if outcome.stats.partition is not None:
                reports.write_partition(outcome.index, outcome.stats.partition.to_dict(), outcome.seed, digest)

        summary = self.summarize(manifest, outcomes, digest, target)
        reports.write_summary(summary)
        return summary, outcomes

    @staticmethod
    def summarize(manifest: RunManifest, outcomes: List[RepeatOutcome], digest: str, output_dir: str) -> RunSummary:
        repeats = [
            RepeatResult(
                index=o.index,
                seed=o.seed,
                evaluations=o.stats.evaluations,
                generations=o.stats.generations,
                archive_size=len(o.archive),
                feasible_entries=len(o.archive.feasible_entries()),
                distance_metric=o.distance,
                partial=o.stats.partial,
                wall_time=o.stats.wall_time,
                warnings=list(o.stats.warnings),
            )
            for o in outcomes
        ]
        distances = [r.distance_metric for r in repeats if r.distance_metric is not None]
        return RunSummary(
            problem=manifest.problem,
            repeats=repeats,
            distance_mean=float(np.mean(distances)) if distances else None,
            distance_std=float(np.std(distances)) if distances else None,
            feasible_total=sum(r.feasible_entries for r in repeats),
            wall_time=sum(r.wall_time for r in repeats),
            manifest_hash=digest,
            version=VERSION_TAG,
            output_dir=os.path.abspath(output_dir),
        )
