"""Interval-valued evidence: basic probability assignments, joint focal
elements, and Belief / Plausibility of threshold events on response functions.
"""

import itertools
import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import qmc

from app.core.config import read_json_file
from app.core.errors import ConfigurationError, DomainError, EvaluationError, ResourceError
from app.models.evidence_models import UncertainSpaceModel

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-12
DEFAULT_MAX_CORNER_DIMENSION = 12
DEFAULT_GRID_RESOLUTION = 21
SAMPLES_PER_DIMENSION = 50

Response = Callable[[np.ndarray], Union[float, Sequence[float], np.ndarray]]


class Direction(str, Enum):
    LEQ = "leq"
    GEQ = "geq"
    LT = "lt"
    GT = "gt"


class ExtremumMethod(str, Enum):
    CORNERS = "corners"
    CORNERS_PLUS_SAMPLING = "corners_plus_sampling"
    GRID_ORACLE = "grid_oracle"


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise DomainError("Interval bounds must be finite", {"lo": self.lo, "hi": self.hi})
        if self.lo > self.hi:
            raise DomainError("Interval lower bound exceeds upper bound", {"lo": self.lo, "hi": self.hi})

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def scaled(self, factor: float) -> "Interval":
        """Rescales the width about the midpoint."""
        if factor == 1.0:
            return self
        mid = self.midpoint
        half = self.half_width * factor
        return Interval(mid - half, mid + half)

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class FocalElement:
    interval: Interval
    mass: float


@dataclass(frozen=True)
class BpaStructure:
    parameter_name: str
    elements: Tuple[FocalElement, ...]

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not self.elements:
            raise ConfigurationError(f"BPA structure '{self.parameter_name}' has no focal elements")
        for element in self.elements:
            if not (0.0 < element.mass <= 1.0):
                raise ConfigurationError(
                    f"Focal element mass outside (0, 1] for '{self.parameter_name}'",
                    {"mass": element.mass},
                )
        total = math.fsum(element.mass for element in self.elements)
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise ConfigurationError(
                f"BPA masses of '{self.parameter_name}' do not sum to 1",
                {"sum": total, "defect": total - 1.0},
            )

    def __len__(self) -> int:
        return len(self.elements)

    @classmethod
    def from_triples(cls, name: str, triples: Sequence[Tuple[float, float, float]]) -> "BpaStructure":
        """Builds a structure from (lo, hi, mass) triples."""
        return cls(name, tuple(FocalElement(Interval(lo, hi), mass) for lo, hi, mass in triples))

    @classmethod
    def with_complement(
        cls,
        name: str,
        triples: Sequence[Tuple[float, float, float]],
        widening: float = 10.0,
    ) -> "BpaStructure":
        """Adds a catch-all element carrying the mass the stated elements leave
        unassigned. It spans the hull of the stated intervals widened `widening`
        times about its midpoint."""
        elements = [FocalElement(Interval(lo, hi), mass) for lo, hi, mass in triples]
        if not elements:
            raise ConfigurationError(f"BPA structure '{name}' has no focal elements")
        residual = 1.0 - math.fsum(element.mass for element in elements)
        if residual < -MASS_TOLERANCE:
            raise ConfigurationError(f"BPA masses of '{name}' exceed 1", {"defect": -residual})
        if residual > MASS_TOLERANCE:
            hull = Interval(
                min(element.interval.lo for element in elements),
                max(element.interval.hi for element in elements),
            )
            elements.append(FocalElement(hull.scaled(widening), residual))
        return cls(name, tuple(elements))


@dataclass(frozen=True)
class JointFocalElement:
    box: Tuple[Interval, ...]
    mass: float

    @property
    def lower(self) -> np.ndarray:
        return np.array([interval.lo for interval in self.box], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([interval.hi for interval in self.box], dtype=float)


@dataclass(frozen=True)
class UncertainSpace:
    dims: Tuple[BpaStructure, ...]
    # dimension index -> margin-variable index
    margin_indices: Mapping[int, int] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        object.__setattr__(self, "margin_indices", dict(self.margin_indices))
        for dim_index, margin_index in self.margin_indices.items():
            if not 0 <= dim_index < len(self.dims):
                raise ConfigurationError("Margin index refers to a missing dimension", {"dimension": dim_index})
            if margin_index < 0:
                raise ConfigurationError("Margin variable index must be non-negative", {"margin": margin_index})

    @property
    def dimension(self) -> int:
        return len(self.dims)

    @property
    def element_count(self) -> int:
        return math.prod(len(dim) for dim in self.dims)

    @property
    def margin_count(self) -> int:
        return max(self.margin_indices.values(), default=-1) + 1

    @property
    def names(self) -> List[str]:
        return [dim.parameter_name for dim in self.dims]

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigurationError(f"Unknown uncertain parameter '{name}'")


@dataclass(frozen=True)
class ThresholdEvent:
    response_index: int
    threshold: float
    direction: Direction = Direction.LEQ

    def box_inside(self, min_value: float, max_value: float) -> bool:
        """E_j ⊂ g^-1(event), judged on the element's response range."""
        if self.direction is Direction.LEQ:
            return max_value <= self.threshold
        if self.direction is Direction.LT:
            return max_value < self.threshold
        if self.direction is Direction.GEQ:
            return min_value >= self.threshold
        return min_value > self.threshold

    def box_intersects(self, min_value: float, max_value: float) -> bool:
        if self.direction is Direction.LEQ:
            return min_value <= self.threshold
        if self.direction is Direction.LT:
            return min_value < self.threshold
        if self.direction is Direction.GEQ:
            return max_value >= self.threshold
        return max_value > self.threshold

    def complement(self) -> "ThresholdEvent":
        flipped = {
            Direction.LEQ: Direction.GT,
            Direction.GT: Direction.LEQ,
            Direction.LT: Direction.GEQ,
            Direction.GEQ: Direction.LT,
        }[self.direction]
        return ThresholdEvent(self.response_index, self.threshold, flipped)


@dataclass(frozen=True)
class BoxExtremum:
    min_value: float
    max_value: float
    method: ExtremumMethod


def _margin_factors(space: UncertainSpace, margin_values: Sequence[float]) -> List[float]:
    margins = [float(value) for value in margin_values]
    for value in margins:
        if not 0.0 <= value <= 1.0:
            raise DomainError("Margin value outside [0, 1]", {"margin": value})
    factors = [1.0] * space.dimension
    for dim_index, margin_index in space.margin_indices.items():
        if margin_index >= len(margins):
            raise ConfigurationError(
                "Missing margin value for scaled dimension",
                {"dimension": space.dims[dim_index].parameter_name, "margin_index": margin_index},
            )
        factors[dim_index] = margins[margin_index]
    return factors


def iter_joint_elements(space: UncertainSpace, margin_values: Sequence[float] = ()) -> Iterator[JointFocalElement]:
    """Cartesian-product elements in lexicographic dimension order."""
    if space.dimension == 0:
        raise ConfigurationError("Uncertain space has no dimensions")
    factors = _margin_factors(space, margin_values)
    per_dim = [
        [(element.interval.scaled(factors[i]), element.mass) for element in dim.elements]
        for i, dim in enumerate(space.dims)
    ]
    for combo in itertools.product(*per_dim):
        yield JointFocalElement(
            box=tuple(interval for interval, _ in combo),
            mass=math.prod(mass for _, mass in combo),
        )


def joint_elements(space: UncertainSpace, margin_values: Sequence[float] = ()) -> List[JointFocalElement]:
    return list(iter_joint_elements(space, margin_values))


def _axis_values(interval: Interval, count: int) -> np.ndarray:
    if interval.lo == interval.hi:
        return np.array([interval.lo])
    return np.linspace(interval.lo, interval.hi, count)


def _corner_points(box: Sequence[Interval]) -> np.ndarray:
    axes = [(iv.lo,) if iv.lo == iv.hi else (iv.lo, iv.hi) for iv in box]
    return np.array(list(itertools.product(*axes)), dtype=float)


def box_points(
    box: Sequence[Interval],
    method: ExtremumMethod = ExtremumMethod.CORNERS,
    *,
    n_samples: Optional[int] = None,
    resolution: int = DEFAULT_GRID_RESOLUTION,
    max_corner_dimension: int = DEFAULT_MAX_CORNER_DIMENSION,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Points at which a response is probed to bound it on `box`."""
    d = len(box)
    if method is ExtremumMethod.CORNERS:
        if d > max_corner_dimension:
            raise ResourceError(
                f"Corner enumeration needs 2^{d} evaluations; use {ExtremumMethod.CORNERS_PLUS_SAMPLING.value}",
                {"dimension": d, "d_max": max_corner_dimension},
            )
        return _corner_points(box)

    if method is ExtremumMethod.GRID_ORACLE:
        axes = [_axis_values(iv, resolution) for iv in box]
        return np.array(list(itertools.product(*axes)), dtype=float)

    lower = np.array([iv.lo for iv in box], dtype=float)
    upper = np.array([iv.hi for iv in box], dtype=float)
    if d <= max_corner_dimension:
        anchors = _corner_points(box)
    else:
        anchors = (0.5 * (lower + upper))[None, :]
    count = SAMPLES_PER_DIMENSION * d if n_samples is None else n_samples
    if count <= 0:
        return anchors
    sampler = qmc.LatinHypercube(d=d, seed=rng if rng is not None else np.random.default_rng(0))
    unit = sampler.random(count)
    interior = lower + unit * (upper - lower)
    return np.vstack([anchors, interior])


class _ResponseCache:
    """Memoises response values per uncertain point within one sweep."""

    def __init__(self, response: Response, vectorized: bool = False):
        self.response = response
        self.vectorized = vectorized
        self.values: Dict[Tuple[float, ...], np.ndarray] = {}
        self.calls = 0

    def evaluate(self, points: np.ndarray, box: Sequence[Interval]) -> np.ndarray:
        try:
            if self.vectorized:
                self.calls += len(points)
                out = np.asarray(self.response(points), dtype=float)
                rows = out.reshape(len(points), -1)
            else:
                rows = []
                for point in points:
                    key = tuple(point.tolist())
                    cached = self.values.get(key)
                    if cached is None:
                        self.calls += 1
                        cached = np.atleast_1d(np.asarray(self.response(point), dtype=float))
                        self.values[key] = cached
                    rows.append(cached)
                rows = np.vstack(rows)
        except EvaluationError:
            raise
        except Exception as e:
            raise EvaluationError(
                f"Response evaluation failed: {e}",
                {"box": [(iv.lo, iv.hi) for iv in box]},
            ) from e
        if np.isnan(rows).any():
            raise EvaluationError("Response returned NaN", {"box": [(iv.lo, iv.hi) for iv in box]})
        return rows


def box_extremum(
    response: Response,
    box: Sequence[Interval],
    method: ExtremumMethod = ExtremumMethod.CORNERS,
    *,
    response_index: int = 0,
    n_samples: Optional[int] = None,
    resolution: int = DEFAULT_GRID_RESOLUTION,
    max_corner_dimension: int = DEFAULT_MAX_CORNER_DIMENSION,
    seed: int = 0,
    vectorized: bool = False,
) -> BoxExtremum:
    points = box_points(
        box,
        method,
        n_samples=n_samples,
        resolution=resolution,
        max_corner_dimension=max_corner_dimension,
        rng=np.random.default_rng(seed),
    )
    values = _ResponseCache(response, vectorized).evaluate(points, box)[:, response_index]
    return BoxExtremum(float(values.min()), float(values.max()), method)


@dataclass(frozen=True)
class ElementExtrema:
    element: JointFocalElement
    minima: np.ndarray
    maxima: np.ndarray


@dataclass(frozen=True)
class BeliefSweep:
    """Response ranges of every joint focal element for one design."""

    elements: Tuple[ElementExtrema, ...]
    method: ExtremumMethod
    evaluations: int = 0

    def belief(self, event: ThresholdEvent) -> float:
        masses = [
            item.element.mass
            for item in self.elements
            if event.box_inside(item.minima[event.response_index], item.maxima[event.response_index])
        ]
        return min(1.0, math.fsum(masses))

    def plausibility(self, event: ThresholdEvent) -> float:
        masses = [
            item.element.mass
            for item in self.elements
            if event.box_intersects(item.minima[event.response_index], item.maxima[event.response_index])
        ]
        return min(1.0, math.fsum(masses))

    def worst_case(self, response_index: int) -> float:
        return max(float(item.maxima[response_index]) for item in self.elements)

    def best_case(self, response_index: int) -> float:
        return min(float(item.minima[response_index]) for item in self.elements)


def sweep(
    space: UncertainSpace,
    margin_values: Sequence[float],
    response: Response,
    method: ExtremumMethod = ExtremumMethod.CORNERS,
    *,
    n_samples: Optional[int] = None,
    resolution: int = DEFAULT_GRID_RESOLUTION,
    max_corner_dimension: int = DEFAULT_MAX_CORNER_DIMENSION,
    seed: int = 0,
    padding: float = 0.0,
    vectorized: bool = False,
    executor: Optional[Executor] = None,
) -> BeliefSweep:
    """Bounds `response` on every joint focal element.

    `padding` widens each sampled range by that fraction of its extent, which
    makes Belief conservative for responses that are not monotone on a box.
    """
    cache = _ResponseCache(response, vectorized)
    elements = list(iter_joint_elements(space, margin_values))

    def bound(indexed: Tuple[int, JointFocalElement]) -> ElementExtrema:
        index, element = indexed
        points = box_points(
            element.box,
            method,
            n_samples=n_samples,
            resolution=resolution,
            max_corner_dimension=max_corner_dimension,
            rng=np.random.default_rng([seed, index]),
        )
        values = cache.evaluate(points, element.box)
        minima = values.min(axis=0)
        maxima = values.max(axis=0)
        if padding > 0.0:
            spread = np.where(np.isfinite(maxima - minima), maxima - minima, 0.0)
            minima = minima - padding * spread
            maxima = maxima + padding * spread
        return ElementExtrema(element, minima, maxima)

    mapper = executor.map if executor is not None else map
    results = tuple(mapper(bound, enumerate(elements)))
    return BeliefSweep(results, method, cache.calls)


def belief(
    space: UncertainSpace,
    margin_values: Sequence[float],
    response: Response,
    event: ThresholdEvent,
    method: ExtremumMethod = ExtremumMethod.CORNERS,
    **options: Any,
) -> float:
    return sweep(space, margin_values, response, method, **options).belief(event)


def plausibility(
    space: UncertainSpace,
    margin_values: Sequence[float],
    response: Response,
    event: ThresholdEvent,
    method: ExtremumMethod = ExtremumMethod.CORNERS,
    **options: Any,
) -> float:
    return sweep(space, margin_values, response, method, **options).plausibility(event)


@dataclass(frozen=True)
class EvidenceBinding:
    """How a robust problem sweeps its uncertain space for each design."""

    space: UncertainSpace
    method: ExtremumMethod = ExtremumMethod.CORNERS
    n_samples: Optional[int] = None
    seed: int = 0
    padding: float = 0.0

    def sweep(self, response: Response, margin_values: Sequence[float] = ()) -> BeliefSweep:
        return sweep(
            self.space,
            margin_values,
            response,
            self.method,
            n_samples=self.n_samples,
            seed=self.seed,
            padding=self.padding,
        )


@dataclass(frozen=True)
class RobustProblem:
    """A deterministic model lifted to Belief-valued objectives and constraints.

    `response_for(x)` returns the response over uncertain points for design x,
    `margins_for(x)` the margin values (σ) carried by the design, and the two
    rules turn one sweep into objective and constraint vectors (c ≤ 0 feasible).
    """

    binding: EvidenceBinding
    response_for: Callable[[np.ndarray], Response]
    objectives: Callable[[np.ndarray, BeliefSweep], Sequence[float]]
    constraints: Callable[[np.ndarray, BeliefSweep], Sequence[float]]
    margins_for: Callable[[np.ndarray], Sequence[float]] = lambda x: ()

    def sweep(self, x: np.ndarray) -> BeliefSweep:
        return self.binding.sweep(self.response_for(x), self.margins_for(x))

    def evaluate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        result = self.sweep(x)
        return (
            np.asarray(self.objectives(x, result), dtype=float),
            np.asarray(self.constraints(x, result), dtype=float),
        )


def belief_shortfall(result: BeliefSweep, event: ThresholdEvent, confidence: float) -> float:
    """Constraint value for Bel(event) ≥ confidence, feasible when ≤ 0."""
    return confidence - result.belief(event)


def space_from_model(model: UncertainSpaceModel) -> UncertainSpace:
    dims = []
    for parameter in model.parameters:
        triples = [(element.lo, element.hi, element.mass) for element in parameter.elements]
        if parameter.complement_widening is not None:
            dims.append(BpaStructure.with_complement(parameter.name, triples, parameter.complement_widening))
        else:
            dims.append(BpaStructure.from_triples(parameter.name, triples))
    names = [dim.parameter_name for dim in dims]
    margin_indices = {}
    for name, margin_index in model.margin_indices.items():
        if name not in names:
            raise ConfigurationError(f"Margin binding refers to unknown parameter '{name}'")
        margin_indices[names.index(name)] = margin_index
    return UncertainSpace(tuple(dims), margin_indices)


def load_uncertain_space(path: str) -> UncertainSpace:
    """Loads a BPA definition file and validates mass normalization."""
    raw = read_json_file(path)
    try:
        model = UncertainSpaceModel.model_validate(raw)
    except Exception as e:
        raise ConfigurationError(f"Invalid BPA definition file {path}: {e}")
    space = space_from_model(model)
    logger.info(f"Loaded uncertain space from {path}: {space.dimension} parameters, {space.element_count} joint elements")
    return space
