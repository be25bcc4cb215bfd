"""Builds ProblemDefinitions from run manifests."""

import importlib
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from app.core.config import validate_config
from app.core.errors import ConfigurationError
from app.models.problem_models import AerocaptureConfig, BenchmarkId, DebConfig, LowThrustConfig, Zdt4Config
from app.models.run_models import ProblemId, RunManifest
from app.services.aerocapture import robust_aerocapture_problem
from app.services.benchmarks import benchmark_objectives, benchmark_spec, reference_front
from app.services.lowthrust import robust_lowthrust_problem
from app.services.macs import ProblemDefinition

logger = logging.getLogger(__name__)

VALID_IDS = ", ".join(item.value for item in ProblemId)


@dataclass
class ResolvedProblem:
    problem: ProblemDefinition
    reference: Optional[np.ndarray] = None


def _benchmark(id: BenchmarkId, overrides: Dict[str, Any], points: int) -> ResolvedProblem:
    model = Zdt4Config if id is BenchmarkId.ZDT4 else DebConfig
    config = validate_config(model, overrides, source=f"{id.value} problem config")
    spec = benchmark_spec(id, config)
    problem = ProblemDefinition(
        name=id.value,
        lower=spec.lower,
        upper=spec.upper,
        evaluate=benchmark_objectives(id, config),
        n_objectives=spec.n_objectives,
        n_constraints=spec.n_constraints,
    )
    return ResolvedProblem(problem, reference_front(id, points, config))


def load_custom_problem(target: Optional[str], overrides: Dict[str, Any]) -> ProblemDefinition:
    """Imports `package.module:factory` and calls it with the problem overrides."""
    if not target or ":" not in target:
        raise ConfigurationError("Custom problems need custom_problem = 'package.module:factory'")
    module_name, _, attribute = target.partition(":")
    try:
        factory = getattr(importlib.import_module(module_name), attribute)
    except (ImportError, AttributeError) as e:
        raise ConfigurationError(f"Cannot load custom problem {target}: {e}")
    problem = factory(**overrides)
    if not isinstance(problem, ProblemDefinition):
        raise ConfigurationError(f"Custom problem factory {target} did not return a ProblemDefinition")
    return problem


def resolve_problem(manifest: RunManifest) -> ResolvedProblem:
    problem_id = ProblemId(manifest.problem)
    overrides = dict(manifest.problem_config)
    if problem_id is ProblemId.ZDT4:
        return _benchmark(BenchmarkId.ZDT4, overrides, manifest.reference_points)
    if problem_id is ProblemId.DEB:
        return _benchmark(BenchmarkId.DEB, overrides, manifest.reference_points)
    if problem_id is ProblemId.LOWTHRUST:
        config = validate_config(LowThrustConfig, overrides, source="lowthrust problem config")
        problem, _ = robust_lowthrust_problem(config)
        return ResolvedProblem(problem)
    if problem_id is ProblemId.AEROCAPTURE:
        config = validate_config(AerocaptureConfig, overrides, source="aerocapture problem config")
        problem, _ = robust_aerocapture_problem(config)
        return ResolvedProblem(problem)
    logger.info(f"Loading custom problem {manifest.custom_problem}")
    return ResolvedProblem(load_custom_problem(manifest.custom_problem, overrides))


def parse_problem_id(value: str) -> ProblemId:
    try:
        return ProblemId(value)
    except ValueError:
        raise ConfigurationError(f"Unknown problem '{value}'; valid problems: {VALID_IDS}")
