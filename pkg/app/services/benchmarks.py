"""Analytic test problems: ZDT4 and the constrained DEB problem, plus reference fronts."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from app.core.errors import DomainError
from app.models.problem_models import BenchmarkId, DebConfig, Zdt4Config
from app.services.pareto import nondominated

logger = logging.getLogger(__name__)

DEFAULT_REFERENCE_COUNT = 500


@dataclass(frozen=True)
class BenchmarkSpec:
    id: BenchmarkId
    n: int
    lower: np.ndarray
    upper: np.ndarray
    constants: Dict[str, float] = field(default_factory=dict)
    n_objectives: int = 2
    n_constraints: int = 0


def zdt4_spec(config: Optional[Zdt4Config] = None) -> BenchmarkSpec:
    config = config or Zdt4Config()
    lower = np.full(config.n, -5.0)
    upper = np.full(config.n, 5.0)
    lower[0], upper[0] = 0.0, 1.0
    return BenchmarkSpec(BenchmarkId.ZDT4, config.n, lower, upper)


def deb_spec(config: Optional[DebConfig] = None) -> BenchmarkSpec:
    config = config or DebConfig()
    return BenchmarkSpec(
        BenchmarkId.DEB,
        config.n,
        np.zeros(config.n),
        np.ones(config.n),
        constants=config.model_dump(exclude={"n"}),
        n_constraints=1,
    )


def _check_bounds(x: np.ndarray, spec: BenchmarkSpec) -> None:
    if x.shape != (spec.n,):
        raise DomainError(f"{spec.id.value} expects {spec.n} variables", {"received": x.size})
    outside = np.flatnonzero((x < spec.lower) | (x > spec.upper))
    if outside.size:
        i = int(outside[0])
        raise DomainError(
            f"{spec.id.value} variable x{i} outside its bounds",
            {"value": float(x[i]), "lo": float(spec.lower[i]), "hi": float(spec.upper[i])},
        )


def zdt4(x, config: Optional[Zdt4Config] = None) -> np.ndarray:
    """f1 = x1, f2 = g(1 - sqrt(f1/g)), g = 1 + 10(n-1) + Σ (x_i² - 10 cos 4πx_i)."""
    x = np.asarray(x, dtype=float)
    spec = zdt4_spec(config or Zdt4Config(n=max(x.size, 2)))
    _check_bounds(x, spec)
    tail = x[1:]
    g = 1.0 + 10.0 * (spec.n - 1) + float(np.sum(tail * tail - 10.0 * np.cos(4.0 * np.pi * tail)))
    f1 = float(x[0])
    return np.array([f1, g * (1.0 - math.sqrt(f1 / g))])


def deb_constraint(f1, f2, config: Optional[DebConfig] = None):
    """Constraint value C; C >= 0 is feasible. Accepts scalars or arrays."""
    config = config or DebConfig()
    s, c = math.sin(config.theta), math.cos(config.theta)
    inner = s * (np.asarray(f2, dtype=float) - config.e) + np.asarray(f1, dtype=float) * c
    ripple = np.abs(np.sin(config.b * np.pi * np.power(inner, config.c))) ** config.d
    value = c * (np.asarray(f2, dtype=float) - config.e) - np.asarray(f1, dtype=float) * s - config.a * ripple
    return float(value) if np.ndim(value) == 0 else value


def deb(x, config: Optional[DebConfig] = None) -> np.ndarray:
    """Returns (f1, f2, C)."""
    x = np.asarray(x, dtype=float)
    config = config or DebConfig(n=max(x.size, 2))
    _check_bounds(x, deb_spec(config))
    f1 = float(x[0])
    g = 1.0 + 9.0 / (config.n - 1) * float(np.sum(x[1:]))
    f2 = g * (1.0 - math.sqrt(f1 / g))
    return np.array([f1, f2, deb_constraint(f1, f2, config)])


def _least_feasible_f2(f1: float, config: DebConfig, scan: int = 4000, iterations: int = 60) -> Optional[float]:
    # attainable f2 for a given f1 runs from g = 1 up to g = 10
    lo = 1.0 - math.sqrt(f1)
    hi = 10.0 - math.sqrt(10.0 * f1)
    grid = np.linspace(lo, hi, scan)
    feasible_mask = deb_constraint(f1, grid, config) >= 0.0
    if not feasible_mask.any():
        return None
    first = int(np.argmax(feasible_mask))
    if first == 0:
        return float(grid[0])
    infeasible, feasible = float(grid[first - 1]), float(grid[first])
    for _ in range(iterations):
        mid = 0.5 * (infeasible + feasible)
        if deb_constraint(f1, mid, config) >= 0.0:
            feasible = mid
        else:
            infeasible = mid
    return feasible


def reference_front(id: BenchmarkId, count: int = DEFAULT_REFERENCE_COUNT, config=None) -> np.ndarray:
    """Sampled true Pareto front, one row per point."""
    if count < 2:
        raise DomainError("Reference front needs at least two points", {"count": count})
    id = BenchmarkId(id)
    t = np.linspace(0.0, 1.0, count)
    if id is BenchmarkId.ZDT4:
        return np.column_stack([t, 1.0 - np.sqrt(t)])

    config = config or DebConfig()
    points = []
    for f1 in t:
        f2 = _least_feasible_f2(float(f1), config)
        if f2 is not None:
            points.append((float(f1), f2))
    front = np.array(points, dtype=float)
    front = front[nondominated(front)]
    logger.debug(f"DEB reference front: {len(front)} of {count} sampled points survive")
    return front


def benchmark_spec(id: BenchmarkId, config=None) -> BenchmarkSpec:
    id = BenchmarkId(id)
    return zdt4_spec(config) if id is BenchmarkId.ZDT4 else deb_spec(config)


def benchmark_objectives(id: BenchmarkId, config=None):
    """Objective/constraint handle in the engine's (objectives, constraints) form."""
    id = BenchmarkId(id)
    if id is BenchmarkId.ZDT4:
        config = config or Zdt4Config()

        def evaluate(x) -> Tuple[np.ndarray, np.ndarray]:
            return zdt4(x, config), np.zeros(0)

        return evaluate

    config = config or DebConfig()

    def evaluate(x) -> Tuple[np.ndarray, np.ndarray]:
        f1, f2, c = deb(x, config)
        return np.array([f1, f2]), np.array([-c])

    return evaluate
