"""Multiagent collaborative search.

A population of agents explores the decision box. Each agent samples a
hypercube around itself with a nonuniform random walk refined by linear and
quadratic one-dimensional models, adapts the size of that hypercube and its
sampling budget, and receives moving directions from the global archive and
from improving peers. The search alternates with the adaptive domain
decomposition.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from app.core.config import load_config_file, validate_config
from app.core.errors import ConfigurationError, DomainError
from app.models.engine_models import EngineConfig
from app.models.problem_models import DomainTableModel
from app.services.decomposition import (
    BranchingScheme,
    Partition,
    Subdomain,
    adapt_scheme,
    lowest_density_subdomain,
    select_and_branch,
)
from app.services.evidence import Interval, RobustProblem
from app.services.pareto import (
    ArchiveEntry,
    OperationCounter,
    Origin,
    ParetoArchive,
    constrained_dominates,
    crowding_factors,
    dominance_index,
    update_archive,
)

logger = logging.getLogger(__name__)

MUTATION_PROBABILITY_RANGE = (0.1, 0.9)

Objectives = Callable[[np.ndarray], Tuple[Sequence[float], Sequence[float]]]


class Subpopulation(str, Enum):
    FEASIBLE_TASK = "feasible"
    CONSTRAINT_TASK = "constraint"


@dataclass(frozen=True)
class ProblemDefinition:
    """Box-bounded problem; `evaluate(x)` returns (objectives, constraints), c <= 0 feasible."""

    name: str
    lower: np.ndarray
    upper: np.ndarray
    evaluate: Objectives
    n_objectives: int
    n_constraints: int = 0
    n_integer: int = 0
    variable_names: Tuple[str, ...] = ()

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != upper.shape or lower.ndim != 1 or lower.size == 0:
            raise ConfigurationError(f"Problem '{self.name}' has malformed bounds")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ConfigurationError(f"Problem '{self.name}' bounds must be finite")
        if np.any(lower > upper):
            raise ConfigurationError(f"Problem '{self.name}' has a lower bound above its upper bound")
        if not 0 <= self.n_integer <= lower.size:
            raise ConfigurationError(
                f"Problem '{self.name}' declares more integer variables than variables",
                {"n_integer": self.n_integer, "n": lower.size},
            )
        if self.n_objectives < 1:
            raise ConfigurationError(f"Problem '{self.name}' needs at least one objective")

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def bounds(self) -> Tuple[Interval, ...]:
        return tuple(Interval(float(lo), float(hi)) for lo, hi in zip(self.lower, self.upper))

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def repair(self, x: np.ndarray) -> np.ndarray:
        """Clips into the box and rounds the leading integer components."""
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        if self.n_integer:
            k = self.n_integer
            x[:k] = np.clip(np.rint(x[:k]), np.ceil(self.lower[:k]), np.floor(self.upper[:k]))
        return x

    @classmethod
    def from_robust(cls, name: str, lower, upper, robust: RobustProblem, **kwargs) -> "ProblemDefinition":
        return cls(name=name, lower=lower, upper=upper, evaluate=robust.evaluate, **kwargs)


@dataclass(frozen=True)
class Evaluation:
    objectives: np.ndarray
    constraints: np.ndarray

    @property
    def violation(self) -> float:
        """Σ max(0, c_j)."""
        return residual_objective(self.constraints)

    @property
    def feasible(self) -> bool:
        return self.violation <= 0.0

    @property
    def max_residual(self) -> float:
        return float(np.max(self.constraints)) if self.constraints.size else -math.inf


def residual_objective(constraints: Sequence[float]) -> float:
    """Constraint-task objective: Σ max(0, R_j)."""
    values = np.asarray(constraints, dtype=float)
    return float(np.sum(np.maximum(values, 0.0))) if values.size else 0.0


def augmented_objective(value: float, constraints: Sequence[float]) -> float:
    """Feasible-task objective: unchanged when every R_j <= 0, else value + max R_j."""
    values = np.asarray(constraints, dtype=float)
    if values.size == 0 or np.all(values <= 0.0):
        return float(value)
    return float(value) + float(values.max())


@dataclass
class Agent:
    position: np.ndarray
    previous_position: np.ndarray
    weights: np.ndarray
    rho: float = 1.0
    resources: int = 1
    evaluation: Optional[Evaluation] = None
    best_position: Optional[np.ndarray] = None
    best_evaluation: Optional[Evaluation] = None
    best_direction: Optional[np.ndarray] = None
    pending_target: Optional[np.ndarray] = None
    improved_last_gen: bool = False
    subpopulation: Subpopulation = Subpopulation.FEASIBLE_TASK
    may_violate: bool = False
    converged: bool = False

    def region(self, problem: ProblemDefinition, config: EngineConfig) -> Tuple[np.ndarray, np.ndarray]:
        """Hypercube S around the agent, clipped to the box."""
        half = self.rho * config.region_fraction * problem.span
        return (
            np.maximum(self.position - half, problem.lower),
            np.minimum(self.position + half, problem.upper),
        )

    def record(self, position: np.ndarray, evaluation: Evaluation) -> None:
        self.previous_position = self.position
        self.position = position
        self.evaluation = evaluation


@dataclass(frozen=True)
class Sample:
    position: np.ndarray
    evaluation: Evaluation
    score: float


@dataclass
class BehaviorOutcome:
    samples: List[Sample] = field(default_factory=list)
    accepted: List[int] = field(default_factory=list)
    region: Tuple[np.ndarray, np.ndarray] = (np.zeros(0), np.zeros(0))

    @property
    def improved(self) -> bool:
        return bool(self.accepted)

    def best_accepted(self) -> Optional[Sample]:
        if not self.accepted:
            return None
        return min((self.samples[i] for i in self.accepted), key=lambda s: s.score)

    def least_bad(self) -> Optional[Sample]:
        if not self.samples:
            return None
        return min(self.samples, key=lambda s: s.score)


@dataclass(frozen=True)
class Assignment:
    agent_index: int
    target: np.ndarray
    direction: np.ndarray
    source: str  # "archive" or "peer"


@dataclass
class GenerationProgress:
    generation: int
    evaluations: int
    archive_size: int
    nondominated_agents: int
    best_first_objective: float
    feasible_archive_entries: int
    dominance_checks: int
    perception_samples: int

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class RunStats:
    evaluations: int = 0
    generations: int = 0
    regenerations: int = 0
    mutations: int = 0
    collisions: int = 0
    converged: int = 0
    branchings: int = 0
    perception_samples: int = 0
    dominance_checks: int = 0
    distance_evaluations: int = 0
    partial: bool = False
    wall_time: float = 0.0
    subdomain_densities: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    partition: Optional[Partition] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in self.__dict__.items() if k != "partition"}


class Evaluator:
    """Counts objective-handle calls against the evaluation budget."""

    def __init__(self, problem: ProblemDefinition, budget: int, workers: int = 1):
        self.problem = problem
        self.budget = budget
        self.workers = workers
        self.count = 0
        self.history: List[Tuple[np.ndarray, Evaluation]] = []

    @property
    def exhausted(self) -> bool:
        return self.count >= self.budget

    @property
    def remaining(self) -> int:
        return max(0, self.budget - self.count)

    def _call(self, x: np.ndarray) -> Evaluation:
        objectives, constraints = self.problem.evaluate(x)
        return Evaluation(
            np.asarray(objectives, dtype=float).reshape(-1),
            np.asarray(constraints, dtype=float).reshape(-1),
        )

    def evaluate(self, x: np.ndarray) -> Optional[Evaluation]:
        if self.exhausted:
            return None
        self.count += 1
        evaluation = self._call(x)
        self.history.append((x.copy(), evaluation))
        return evaluation

    def evaluate_batch(self, points: Sequence[np.ndarray]) -> List[Optional[Evaluation]]:
        """Evaluates as many points as the budget allows, results in submission order."""
        take = min(len(points), self.remaining)
        batch = list(points[:take])
        self.count += take
        if self.workers > 1 and take > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(self._call, batch))
        else:
            results = [self._call(x) for x in batch]
        self.history.extend((x.copy(), evaluation) for x, evaluation in zip(batch, results))
        return results + [None] * (len(points) - take)

    def drain_history(self) -> List[Tuple[np.ndarray, Evaluation]]:
        history, self.history = self.history, []
        return history


@dataclass
class ScoreContext:
    """Objective normalization frozen for one generation."""

    lower: np.ndarray
    span: np.ndarray

    @classmethod
    def from_archive(cls, archive: ParetoArchive, n_objectives: int) -> "ScoreContext":
        if not archive.entries:
            return cls(np.zeros(n_objectives), np.ones(n_objectives))
        points = archive.objective_matrix()
        lower = points.min(axis=0)
        span = points.max(axis=0) - lower
        span[span <= 0.0] = 1.0
        return cls(lower, span)

    def scalar(self, agent: Agent, evaluation: Evaluation) -> float:
        """Weighted sum of normalized objectives, or the residual for the constraint task."""
        if agent.subpopulation is Subpopulation.CONSTRAINT_TASK:
            return residual_objective(evaluation.constraints)
        value = float(np.dot(agent.weights, (evaluation.objectives - self.lower) / self.span))
        if agent.may_violate:
            return value
        return augmented_objective(value, evaluation.constraints)


def _draw_weights(n_objectives: int, rng: np.random.Generator) -> np.ndarray:
    if n_objectives == 1:
        return np.ones(1)
    return rng.dirichlet(np.ones(n_objectives))


def _is_improvement(new: float, old: float, epsilon: float) -> bool:
    if epsilon == 0.0:
        return new < old
    return new <= old + epsilon


def initialize_population(problem: ProblemDefinition, config: EngineConfig, rng: np.random.Generator) -> List[Agent]:
    """Latin-hypercube positions over the box; integer components rounded."""
    if config.population_size <= 0:
        raise ConfigurationError("population_size must be at least 1")
    sampler = qmc.LatinHypercube(d=problem.n, seed=rng)
    unit = sampler.random(config.population_size)
    positions = problem.lower + unit * problem.span
    agents = []
    for x in positions:
        x = problem.repair(x)
        agents.append(
            Agent(
                position=x,
                previous_position=x.copy(),
                weights=_draw_weights(problem.n_objectives, rng),
                rho=1.0,
                resources=problem.n,
            )
        )
    return agents


def social_displacement(
    position: np.ndarray,
    previous_position: np.ndarray,
    local_best: np.ndarray,
    global_best: np.ndarray,
    weights: Tuple[float, float, float],
    rng: np.random.Generator,
    lower: np.ndarray,
    upper: np.ndarray,
    r: Optional[Tuple[float, float]] = None,
) -> np.ndarray:
    """w0(x - x_prev) - w1 r1 (x - x_local) - w2 r2 (x - x_global), kept inside the box."""
    w0, w1, w2 = weights
    r1, r2 = r if r is not None else (rng.uniform(), rng.uniform())
    step = w0 * (position - previous_position) - w1 * r1 * (position - local_best) - w2 * r2 * (position - global_best)
    return np.clip(position + step, lower, upper) - position


def _round_in_region(x: np.ndarray, lo: np.ndarray, hi: np.ndarray, n_integer: int, anchor: np.ndarray) -> np.ndarray:
    x = np.clip(x, lo, hi)
    if n_integer:
        k = n_integer
        first, last = np.ceil(lo[:k]), np.floor(hi[:k])
        rounded = np.clip(np.rint(x[:k]), first, last)
        # an integer-free slab keeps the agent's own integer value
        x[:k] = np.where(first <= last, rounded, anchor[:k])
    return x


def _segment_limits(x: np.ndarray, d: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> Tuple[float, float]:
    """Range of t with x + t·d inside [lo, hi]."""
    t_min, t_max = -math.inf, math.inf
    for xi, di, li, ui in zip(x, d, lo, hi):
        if di > 0:
            t_min = max(t_min, (li - xi) / di)
            t_max = min(t_max, (ui - xi) / di)
        elif di < 0:
            t_min = max(t_min, (ui - xi) / di)
            t_max = min(t_max, (li - xi) / di)
    return t_min, t_max


def nonuniform_step(half_width: np.ndarray, progress: float, shape: float, rng: np.random.Generator) -> np.ndarray:
    """Per-component sign·radius·(1 - u^((1 - progress)^shape))."""
    u = rng.uniform(size=half_width.size)
    sign = np.where(rng.uniform(size=half_width.size) < 0.5, -1.0, 1.0)
    exponent = (1.0 - min(max(progress, 0.0), 1.0)) ** shape
    return sign * half_width * (1.0 - u ** exponent)


def perception_step(
    agent: Agent,
    problem: ProblemDefinition,
    config: EngineConfig,
    evaluator: Evaluator,
    scores: ScoreContext,
    rng: np.random.Generator,
) -> BehaviorOutcome:
    """Random walk plus linear and quadratic line models inside the agent's hypercube."""
    lo, hi = agent.region(problem, config)
    outcome = BehaviorOutcome(region=(lo, hi))
    if agent.evaluation is None:
        return outcome
    x = agent.position
    phi0 = scores.scalar(agent, agent.evaluation)
    half = agent.rho * config.region_fraction * problem.span
    progress = evaluator.count / max(evaluator.budget, 1)

    def probe(point: np.ndarray) -> Optional[Sample]:
        point = _round_in_region(point, lo, hi, problem.n_integer, x)
        if np.array_equal(point, x):
            return None
        evaluation = evaluator.evaluate(point)
        if evaluation is None:
            return None
        sample = Sample(point, evaluation, scores.scalar(agent, evaluation))
        outcome.samples.append(sample)
        if _is_improvement(sample.score, phi0, config.epsilon_accept):
            outcome.accepted.append(len(outcome.samples) - 1)
        return sample

    for _ in range(agent.resources):
        if evaluator.exhausted:
            break
        walk = probe(x + nonuniform_step(half, progress, config.mutation_shape, rng))
        if walk is None:
            continue
        if outcome.improved or evaluator.exhausted:
            break

        d = walk.position - x
        t_min, t_max = _segment_limits(x, d, lo, hi)
        t_line = t_max if walk.score < phi0 else t_min
        if not math.isfinite(t_line) or t_line in (0.0, 1.0):
            continue
        line = probe(x + t_line * d)
        if line is None:
            continue
        if outcome.improved or evaluator.exhausted:
            break

        # parabola through t = 0, 1, t_line
        t = np.array([0.0, 1.0, t_line])
        phi = np.array([phi0, walk.score, line.score])
        try:
            a, b, _ = np.polyfit(t, phi, 2)
        except (np.linalg.LinAlgError, ValueError):
            continue
        if not a > 0.0:
            continue
        vertex = -b / (2.0 * a)
        if not t_min <= vertex <= t_max or vertex in (0.0, 1.0, t_line):
            continue
        probe(x + vertex * d)
        if outcome.improved:
            break

    if not evaluator.exhausted:
        if agent.pending_target is not None:
            local = agent.best_position if agent.best_position is not None else x
            step = social_displacement(
                x, agent.previous_position, local, agent.pending_target,
                (config.w0, config.w1, config.w2), rng, problem.lower, problem.upper,
            )
            probe(x + step)
        elif agent.best_direction is not None:
            probe(x + agent.best_direction)
    return outcome


def apply_outcome(agent: Agent, outcome: BehaviorOutcome) -> Agent:
    best = outcome.best_accepted()
    agent.improved_last_gen = best is not None
    agent.pending_target = None
    if best is None:
        return agent
    agent.best_direction = best.position - agent.position
    agent.record(best.position, best.evaluation)
    agent.best_position = best.position
    agent.best_evaluation = best.evaluation
    return agent


def update_region(agent: Agent, outcome: BehaviorOutcome, problem: ProblemDefinition, config: EngineConfig) -> Agent:
    """Doubles rho on improvement; otherwise shrinks it to the distance of the best sample."""
    if outcome.improved:
        agent.rho = min(1.0, 2.0 * agent.rho)
    else:
        reference = outcome.least_bad()
        if reference is None:
            agent.rho *= 0.5
        else:
            scale = config.region_fraction * problem.span
            moving = scale > 0
            distance = np.abs(reference.position - agent.position)[moving] / scale[moving]
            reached = float(distance.max()) if distance.size else 0.0
            agent.rho = min(agent.rho, reached)
    agent.converged = agent.rho < config.rho_min
    return agent


def update_resources(agent: Agent, improved: bool, n: int) -> Agent:
    agent.resources = int(min(max(agent.resources + (1 if improved else -1), 1), n))
    return agent


def _agent_matrix(agents: Sequence[Agent]) -> Tuple[np.ndarray, np.ndarray]:
    objectives = np.vstack([a.evaluation.objectives for a in agents])
    violations = np.array([a.evaluation.violation for a in agents])
    return objectives, violations


def rank_agents(agents: Sequence[Agent], counter: Optional[OperationCounter] = None) -> List[int]:
    """Best first: dominance index, then less crowded."""
    objectives, violations = _agent_matrix(agents)
    index = dominance_index(objectives, violations, counter)
    crowding = crowding_factors(objectives, counter)
    return sorted(range(len(agents)), key=lambda i: (index[i], crowding[i], i))


def mutation_probability(position: int, n_f: int, size: int) -> float:
    """Linear ramp over the ranks past the filter: 0.1 at the first, 0.9 at the worst."""
    low, high = MUTATION_PROBABILITY_RANGE
    remaining = size - n_f
    if remaining <= 1:
        return high
    return low + (high - low) * (position - n_f) / (remaining - 1)


def filter_population(
    agents: Sequence[Agent],
    n_f: int,
    rng: np.random.Generator,
    counter: Optional[OperationCounter] = None,
) -> Tuple[List[int], List[int], List[int]]:
    """Splits agent indices into perceivers, hibernated and mutated."""
    if n_f > len(agents):
        raise ConfigurationError("Filter size exceeds the population", {"n_f": n_f, "agents": len(agents)})
    order = rank_agents(agents, counter)
    perceivers = order[:n_f]
    hibernated, mutated = [], []
    for position, index in enumerate(order[n_f:], start=n_f):
        if rng.uniform() < mutation_probability(position, n_f, len(agents)):
            mutated.append(index)
        else:
            hibernated.append(index)
    return perceivers, hibernated, mutated


def communicate(archive: ParetoArchive, agents: Sequence[Agent], rng: np.random.Generator) -> List[Assignment]:
    """Archive entries, most isolated first, send directions to dominated or stagnant agents
    in round-robin; each improving agent also sends its position to one random peer."""
    assignments: List[Assignment] = []
    if not archive.entries:
        return assignments
    entries = archive.by_isolation()
    as_entries = [
        ArchiveEntry(a.position, a.evaluation.objectives, violation=a.evaluation.violation)
        if a.evaluation is not None else None
        for a in agents
    ]
    recipients = []
    for i, agent in enumerate(agents):
        if as_entries[i] is None:
            continue
        dominated = any(constrained_dominates(entry, as_entries[i]) for entry in archive.entries)
        if dominated or not agent.improved_last_gen:
            recipients.append(i)
    for k, i in enumerate(recipients):
        entry = entries[k % len(entries)]
        assignments.append(Assignment(i, entry.decision, entry.decision - agents[i].position, "archive"))

    served = set(recipients)
    improvers = [i for i, agent in enumerate(agents) if agent.improved_last_gen]
    for i in improvers:
        others = [j for j in range(len(agents)) if j != i]
        if not others:
            continue
        j = int(others[rng.integers(len(others))])
        if j in served:
            continue
        served.add(j)
        assignments.append(Assignment(j, agents[i].position, agents[i].position - agents[j].position, "peer"))
    return assignments


def _sample_in(subdomain: Subdomain, problem: ProblemDefinition, rng: np.random.Generator) -> np.ndarray:
    x = rng.uniform(subdomain.lower, subdomain.upper)
    return _round_in_region(x, subdomain.lower, subdomain.upper, problem.n_integer, problem.repair(x))


def regenerate(agent: Agent, subdomain: Subdomain, problem: ProblemDefinition, rng: np.random.Generator) -> Agent:
    """Fresh agent placed uniformly inside `subdomain`; needs a new evaluation."""
    x = _sample_in(subdomain, problem, rng)
    return Agent(
        position=x,
        previous_position=x.copy(),
        weights=_draw_weights(problem.n_objectives, rng),
        rho=1.0,
        resources=problem.n,
    )


@dataclass
class CollisionResult:
    agents: List[Agent]
    candidates: List[ArchiveEntry]
    regenerated: List[int]
    collisions: int = 0
    converged: int = 0


def _worse(a: Agent, b: Agent) -> bool:
    """True when a should give way to b."""
    ea = ArchiveEntry(a.position, a.evaluation.objectives, violation=a.evaluation.violation)
    eb = ArchiveEntry(b.position, b.evaluation.objectives, violation=b.evaluation.violation)
    return constrained_dominates(eb, ea)


def handle_collisions_and_convergence(
    agents: List[Agent],
    partition: Partition,
    problem: ProblemDefinition,
    config: EngineConfig,
    rng: np.random.Generator,
) -> CollisionResult:
    candidates: List[ArchiveEntry] = []
    regenerated: List[int] = []
    converged = 0
    for i, agent in enumerate(agents):
        if agent.converged and agent.evaluation is not None:
            best_x = agent.best_position if agent.best_position is not None else agent.position
            best_e = agent.best_evaluation if agent.best_evaluation is not None else agent.evaluation
            candidates.append(ArchiveEntry(best_x, best_e.objectives, origin=Origin.CONVERGED, violation=best_e.violation))
            regenerated.append(i)
            converged += 1

    collisions = 0
    scale = np.where(problem.span > 0, problem.span, 1.0)
    for i in range(len(agents)):
        if i in regenerated or agents[i].evaluation is None:
            continue
        for j in range(i + 1, len(agents)):
            if j in regenerated or agents[j].evaluation is None:
                continue
            distance = float(np.linalg.norm((agents[i].position - agents[j].position) / scale))
            if distance >= config.collision_distance:
                continue
            lo_i, hi_i = agents[i].region(problem, config)
            lo_j, hi_j = agents[j].region(problem, config)
            if np.any(hi_i < lo_j) or np.any(hi_j < lo_i):
                continue
            collisions += 1
            loser = i if _worse(agents[i], agents[j]) else j
            regenerated.append(loser)
            if loser == i:
                break

    for i in regenerated:
        target = lowest_density_subdomain(partition)
        agents[i] = regenerate(agents[i], target, problem, rng)
    return CollisionResult(agents, candidates, regenerated, collisions, converged)


def constraint_split_step(
    agents: Sequence[Agent],
    problem: ProblemDefinition,
    config: EngineConfig,
    rng: np.random.Generator,
    order: Optional[List[int]] = None,
) -> Sequence[Agent]:
    """Assigns each agent to the feasible or the constraint task and picks the boundary explorers."""
    for agent in agents:
        agent.may_violate = False
        if problem.n_constraints == 0 or agent.evaluation is None:
            agent.subpopulation = Subpopulation.FEASIBLE_TASK
            continue
        agent.subpopulation = (
            Subpopulation.FEASIBLE_TASK if agent.evaluation.feasible else Subpopulation.CONSTRAINT_TASK
        )
    if problem.n_constraints == 0:
        return agents

    feasible = [i for i, a in enumerate(agents) if a.evaluation is not None and a.subpopulation is Subpopulation.FEASIBLE_TASK]
    if len(feasible) < 2:
        return agents
    ranking = order if order is not None else rank_agents(agents)
    best = next(i for i in ranking if i in feasible)
    pool = [i for i in feasible if i != best]
    count = int(round(config.boundary_fraction * len(feasible)))
    count = min(count, len(pool))
    if count:
        for i in rng.choice(pool, size=count, replace=False):
            agents[int(i)].may_violate = True
    return agents


def _entry(agent: Agent, origin: Origin) -> ArchiveEntry:
    return ArchiveEntry(agent.position.copy(), agent.evaluation.objectives, origin=origin, violation=agent.evaluation.violation)


def _fitness(evaluation: Evaluation) -> float:
    # first objective, with infeasible samples ranked after feasible ones
    return float(evaluation.objectives[0]) + evaluation.violation


def run(
    problem: ProblemDefinition,
    config: EngineConfig,
    evidence_binding: Optional[RobustProblem] = None,
    on_generation: Optional[Callable[[GenerationProgress], None]] = None,
) -> Tuple[ParetoArchive, RunStats]:
    """Runs the search until the evaluation budget is spent."""
    started = time.perf_counter()
    if evidence_binding is not None:
        problem = replace(problem, evaluate=evidence_binding.evaluate)
    if config.n_f > config.population_size:
        raise ConfigurationError("n_f exceeds population_size", {"n_f": config.n_f, "population": config.population_size})

    rng = np.random.default_rng(config.seed)
    stats = RunStats()
    counter = OperationCounter()
    evaluator = Evaluator(problem, config.max_evaluations, config.workers)
    partition = Partition(problem.lower, problem.upper, config.max_depth)
    scheme = BranchingScheme()
    archive = ParetoArchive((), config.archive_capacity)

    agents = initialize_population(problem, config, rng)
    results = evaluator.evaluate_batch([a.position for a in agents])
    for agent, evaluation in zip(agents, results):
        agent.evaluation = evaluation
        agent.best_position = agent.position.copy()
        agent.best_evaluation = evaluation
    if any(e is None for e in results):
        agents = [a for a in agents if a.evaluation is not None]
        stats.partial = True
        message = (
            f"Evaluation budget {config.max_evaluations} exhausted before the first generation "
            f"({len(agents)} of {config.population_size} agents evaluated)"
        )
        stats.warnings.append(message)
        logger.warning(message)
    if agents:
        archive = update_archive(archive, [_entry(a, Origin.AGENT_BEST) for a in agents], counter)
    _record_history(partition, evaluator)

    n_f = min(config.n_f, len(agents))
    while agents and not evaluator.exhausted:
        stats.generations += 1
        generation_start = evaluator.count
        scores = ScoreContext.from_archive(archive, problem.n_objectives)

        order = rank_agents(agents, counter)
        constraint_split_step(agents, problem, config, rng, order)
        perceivers, hibernated, mutated = filter_population(agents, n_f, rng, counter)

        candidates: List[ArchiveEntry] = []
        for i in mutated:
            target = lowest_density_subdomain(partition)
            agents[i] = regenerate(agents[i], target, problem, rng)
            stats.mutations += 1
        _evaluate_fresh(agents, mutated, evaluator)

        for i in perceivers:
            agent = agents[i]
            if agent.evaluation is None:
                continue
            outcome = perception_step(agent, problem, config, evaluator, scores, rng)
            stats.perception_samples += len(outcome.samples)
            for k in outcome.accepted:
                sample = outcome.samples[k]
                candidates.append(
                    ArchiveEntry(sample.position, sample.evaluation.objectives, origin=Origin.PERCEIVED, violation=sample.evaluation.violation)
                )
            apply_outcome(agent, outcome)
            update_region(agent, outcome, problem, config)
            update_resources(agent, outcome.improved, problem.n)
        for i in hibernated:
            agents[i].improved_last_gen = False

        candidates.extend(_entry(a, Origin.AGENT_BEST) for a in agents if a.evaluation is not None)
        archive = update_archive(archive, candidates, counter)

        for assignment in communicate(archive, agents, rng):
            agents[assignment.agent_index].pending_target = np.asarray(assignment.target, dtype=float)

        collision = handle_collisions_and_convergence(agents, partition, problem, config, rng)
        agents = collision.agents
        stats.collisions += collision.collisions
        stats.converged += collision.converged
        stats.regenerations += len(collision.regenerated)
        _evaluate_fresh(agents, collision.regenerated, evaluator)
        if collision.candidates:
            archive = update_archive(archive, collision.candidates, counter)
        agents = [a for a in agents if a.evaluation is not None]
        n_f = min(config.n_f, len(agents))

        _record_history(partition, evaluator)
        if config.branch_period and stats.generations % config.branch_period == 0 and len(archive):
            _branch(partition, scheme, archive, problem, config, stats, counter)

        progress = GenerationProgress(
            generation=stats.generations,
            evaluations=evaluator.count,
            archive_size=len(archive),
            nondominated_agents=int(np.sum(dominance_index(*_agent_matrix(agents)) == 0)) if agents else 0,
            best_first_objective=float(archive.objective_matrix()[:, 0].min()) if len(archive) else math.nan,
            feasible_archive_entries=len(archive.feasible_entries()),
            dominance_checks=counter.dominance_checks,
            perception_samples=stats.perception_samples,
        )
        logger.debug(
            f"Generation {progress.generation}: {progress.evaluations} evaluations, "
            f"archive {progress.archive_size}, nondominated agents {progress.nondominated_agents}"
        )
        if on_generation is not None:
            on_generation(progress)
        if evaluator.count == generation_start:
            # budget left but nothing could be sampled (degenerate box)
            logger.warning("No evaluations were spent in a generation; stopping")
            stats.warnings.append("stalled")
            break

    stats.evaluations = evaluator.count
    stats.dominance_checks = counter.dominance_checks
    stats.distance_evaluations = counter.distance_evaluations
    stats.subdomain_densities = partition.densities()
    stats.wall_time = time.perf_counter() - started
    stats.partition = partition
    return archive, stats


def _evaluate_fresh(agents: List[Agent], indices: Sequence[int], evaluator: Evaluator) -> None:
    if not indices:
        return
    results = evaluator.evaluate_batch([agents[i].position for i in indices])
    for i, evaluation in zip(indices, results):
        agents[i].evaluation = evaluation
        agents[i].best_position = agents[i].position.copy()
        agents[i].best_evaluation = evaluation


def _record_history(partition: Partition, evaluator: Evaluator) -> None:
    history = evaluator.drain_history()
    if history:
        partition.record_samples([x for x, _ in history], [_fitness(e) for _, e in history])


def _branch(
    partition: Partition,
    scheme: BranchingScheme,
    archive: ParetoArchive,
    problem: ProblemDefinition,
    config: EngineConfig,
    stats: RunStats,
    counter: OperationCounter,
) -> None:
    decisions = archive.decision_matrix()
    objectives = archive.objective_matrix()
    violations = [entry.violation for entry in archive.entries]
    index = dominance_index(objectives, violations, counter)
    # dominance index first, first objective as tie-break
    first = objectives[:, 0] - objectives[:, 0].min()
    fitness = index * (first.max() + 1.0) + first
    updated = adapt_scheme(scheme, decisions, fitness, problem.lower, problem.upper, config.max_split_coordinates)
    scheme.split_indices = updated.split_indices
    scheme.cut_points = updated.cut_points
    if select_and_branch(partition, scheme, decisions, config.selection_mode, config.nu, config.no_improve_threshold):
        stats.branchings += 1


def validate_engine_config(raw: Dict[str, Any]) -> EngineConfig:
    return validate_config(EngineConfig, raw, source="engine config")


def check_point(problem: ProblemDefinition, x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise DomainError(f"Decision vector for '{problem.name}' needs {problem.n} components", {"received": x.size})
    if not problem.contains(x):
        i = int(np.flatnonzero((x < problem.lower) | (x > problem.upper))[0])
        name = problem.variable_names[i] if i < len(problem.variable_names) else f"x{i}"
        raise DomainError(
            f"Decision variable {name} outside its bounds",
            {"value": float(x[i]), "lo": float(problem.lower[i]), "hi": float(problem.upper[i])},
        )
    return x


def load_domain_table(path: str, expected: Sequence[str] = ()) -> Tuple[Tuple[str, ...], np.ndarray, np.ndarray]:
    """Reads tabulated bounds; each (upper, lower) pair is sorted, so reversed rows are accepted."""
    table = load_config_file(DomainTableModel, path)
    if expected and tuple(table.variables) != tuple(expected):
        raise ConfigurationError(
            f"Domain table {path} lists unexpected variables",
            {"expected": ",".join(expected), "found": ",".join(table.variables)},
        )
    pairs = np.array([table.lower, table.upper], dtype=float)
    return tuple(table.variables), pairs.min(axis=0), pairs.max(axis=0)
