import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from app.core.errors import DomainError

logger = logging.getLogger(__name__)

DISTANCE_FLOOR = 1e-12
DEFAULT_ARCHIVE_CAPACITY = 200


class Origin(str, Enum):
    AGENT_BEST = "agent_best"
    PERCEIVED = "perceived"
    CONVERGED = "converged"


@dataclass(frozen=True)
class ArchiveEntry:
    decision: np.ndarray
    objectives: np.ndarray
    crowding: float = 0.0
    origin: Origin = Origin.AGENT_BEST
    # Σ max(0, c_j); zero for feasible entries
    violation: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.violation <= 0.0

    def decision_key(self) -> Tuple[float, ...]:
        return tuple(np.asarray(self.decision, dtype=float).tolist())


@dataclass(frozen=True)
class ParetoArchive:
    entries: Tuple[ArchiveEntry, ...] = ()
    capacity: int = DEFAULT_ARCHIVE_CAPACITY

    def __len__(self) -> int:
        return len(self.entries)

    def objective_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.empty((0, 0))
        return np.vstack([entry.objectives for entry in self.entries])

    def decision_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.empty((0, 0))
        return np.vstack([entry.decision for entry in self.entries])

    def feasible_entries(self) -> List[ArchiveEntry]:
        return [entry for entry in self.entries if entry.feasible]

    def by_isolation(self) -> List[ArchiveEntry]:
        """Most isolated first (ascending crowding)."""
        order = sorted(range(len(self.entries)), key=lambda i: (self.entries[i].crowding, i))
        return [self.entries[i] for i in order]


@dataclass
class OperationCounter:
    """Counts pairwise comparisons, used for complexity sanity checks."""

    dominance_checks: int = 0
    distance_evaluations: int = 0

    def reset(self) -> None:
        self.dominance_checks = 0
        self.distance_evaluations = 0


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError("Objective vectors have different lengths", {"a": a.size, "b": b.size})
    return bool(np.all(a <= b) and np.any(a < b))


def constrained_dominates(a: ArchiveEntry, b: ArchiveEntry) -> bool:
    """Feasible beats infeasible, lower violation beats higher, then Pareto."""
    if a.feasible and not b.feasible:
        return True
    if not a.feasible and not b.feasible:
        if a.violation != b.violation:
            return a.violation < b.violation
    elif not a.feasible:
        return False
    return dominates(a.objectives, b.objectives)


def _dominance_matrix(points: np.ndarray, violations: Optional[np.ndarray] = None) -> np.ndarray:
    """dom[i, j] is True when member i dominates member j."""
    le = np.all(points[:, None, :] <= points[None, :, :], axis=2)
    lt = np.any(points[:, None, :] < points[None, :, :], axis=2)
    dom = le & lt
    if violations is not None:
        v = np.asarray(violations, dtype=float)
        feasible = v <= 0.0
        both_feasible = feasible[:, None] & feasible[None, :]
        equal_violation = v[:, None] == v[None, :]
        by_violation = v[:, None] < v[None, :]
        dom = np.where(both_feasible | (equal_violation & ~feasible[:, None]), dom, by_violation)
    return dom


def dominance_index(
    population: Sequence[Sequence[float]],
    violations: Optional[Sequence[float]] = None,
    counter: Optional[OperationCounter] = None,
) -> np.ndarray:
    """For each member, how many members dominate it. Zero marks the nondominated set."""
    points = np.atleast_2d(np.asarray(population, dtype=float))
    if points.size == 0:
        raise DomainError("Dominance index needs a nonempty population")
    if counter is not None:
        counter.dominance_checks += len(points) * len(points)
    dom = _dominance_matrix(points, None if violations is None else np.asarray(violations, dtype=float))
    return dom.sum(axis=0).astype(int)


def update_dominance_index(
    index: Sequence[int],
    population: Sequence[Sequence[float]],
    newcomer: Sequence[float],
) -> Tuple[np.ndarray, int]:
    """Index of `population + [newcomer]` from the index of `population`.

    Returns the updated indices of the existing members and the newcomer's own index.
    """
    points = np.atleast_2d(np.asarray(population, dtype=float))
    new = np.asarray(newcomer, dtype=float)
    if points.size and points.shape[1] != new.size:
        raise DomainError("Objective vectors have different lengths", {"a": points.shape[1], "b": new.size})
    if points.size == 0:
        return np.zeros(0, dtype=int), 0
    new_beats = np.all(new <= points, axis=1) & np.any(new < points, axis=1)
    beats_new = np.all(points <= new, axis=1) & np.any(points < new, axis=1)
    return np.asarray(index, dtype=int) + new_beats.astype(int), int(beats_new.sum())


def normalized_objectives(points: np.ndarray) -> np.ndarray:
    lo = points.min(axis=0)
    span = points.max(axis=0) - lo
    span[span <= 0.0] = 1.0
    return (points - lo) / span


def crowding_factors(
    entries: Sequence[Sequence[float]],
    counter: Optional[OperationCounter] = None,
) -> np.ndarray:
    """(1/N) Σ_{j≠i} 1/d_ij over objectives normalized to the archive's box."""
    if isinstance(entries, ParetoArchive):
        points = entries.objective_matrix()
    elif len(entries) and isinstance(entries[0], ArchiveEntry):
        points = np.vstack([entry.objectives for entry in entries])
    else:
        points = np.atleast_2d(np.asarray(entries, dtype=float))
    n = len(points)
    if n == 0:
        return np.zeros(0)
    if n == 1:
        return np.zeros(1)
    if counter is not None:
        counter.distance_evaluations += n * (n - 1)
    scaled = normalized_objectives(points)
    diff = scaled[:, None, :] - scaled[None, :, :]
    dist = np.maximum(np.sqrt((diff * diff).sum(axis=2)), DISTANCE_FLOOR)
    inverse = 1.0 / dist
    np.fill_diagonal(inverse, 0.0)
    return inverse.sum(axis=1) / n


def _with_crowding(entries: List[ArchiveEntry], counter: Optional[OperationCounter]) -> List[ArchiveEntry]:
    if not entries:
        return entries
    crowding = crowding_factors([entry.objectives for entry in entries], counter)
    return [replace(entry, crowding=float(value)) for entry, value in zip(entries, crowding)]


def _protected_extremes(entries: List[ArchiveEntry]) -> set:
    points = np.vstack([entry.objectives for entry in entries])
    return {int(np.argmin(points[:, k])) for k in range(points.shape[1])}


def update_archive(
    archive: ParetoArchive,
    candidates: Iterable[ArchiveEntry],
    counter: Optional[OperationCounter] = None,
) -> ParetoArchive:
    """Nondominated union of incumbents and candidates, pruned to capacity."""
    pool: List[ArchiveEntry] = []
    seen = set()
    for entry in list(archive.entries) + list(candidates):
        key = entry.decision_key()
        if key in seen:
            continue
        if not np.all(np.isfinite(entry.objectives)):
            logger.debug(f"Skipping archive candidate with non-finite objectives: {entry.objectives}")
            continue
        seen.add(key)
        pool.append(entry)

    if not pool:
        return ParetoArchive((), archive.capacity)

    points = np.vstack([entry.objectives for entry in pool])
    violations = np.array([entry.violation for entry in pool], dtype=float)
    if counter is not None:
        counter.dominance_checks += len(pool) * len(pool)
    dominated = _dominance_matrix(points, violations).any(axis=0)
    survivors = [entry for entry, lost in zip(pool, dominated) if not lost]

    survivors = _with_crowding(survivors, counter)
    while len(survivors) > archive.capacity:
        keep = _protected_extremes(survivors)
        candidates_to_drop = [i for i in range(len(survivors)) if i not in keep]
        if not candidates_to_drop:
            break
        worst = max(candidates_to_drop, key=lambda i: (survivors[i].crowding, -i))
        del survivors[worst]
        survivors = _with_crowding(survivors, counter)
    return ParetoArchive(tuple(survivors), archive.capacity)


def nondominated(points: Sequence[Sequence[float]]) -> np.ndarray:
    """Boolean mask of the nondominated rows."""
    return dominance_index(points) == 0


def distance_metric(front: Sequence[Sequence[float]], reference: Sequence[Sequence[float]]) -> float:
    """Mean Euclidean distance from each reference point to its nearest front point."""
    front = np.atleast_2d(np.asarray(front, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    if front.size == 0 or reference.size == 0:
        raise DomainError("Distance metric needs nonempty front and reference")
    if front.shape[1] != reference.shape[1]:
        raise DomainError(
            "Front and reference have different objective counts",
            {"front": front.shape[1], "reference": reference.shape[1]},
        )
    distances, _ = cKDTree(front).query(reference)
    return float(np.mean(distances))
