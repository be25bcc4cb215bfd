"""Adaptive partition of the search box into subdomains.

The partition is a tree whose leaves tile the box. Children of one split
share the cut value bitwise, so leaves never leave gaps or overlap.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import DomainError
from app.models.engine_models import SelectionMode

logger = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 10
CLUSTER_GAP = 0.1


@dataclass
class Subdomain:
    lower: np.ndarray
    upper: np.ndarray
    depth: int = 0
    parent_no_improve: int = 0
    count: int = 0
    density: float = 0.0
    contains_front_member: bool = False
    best_fitness: float = np.inf
    # best fitness of the parent when this subdomain was created
    parent_best: Optional[float] = None
    assessed: bool = True
    children: List["Subdomain"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all((points >= self.lower) & (points <= self.upper), axis=-1)

    def sort_key(self) -> Tuple[float, ...]:
        return tuple(self.lower.tolist()) + tuple(self.upper.tolist())

    def to_dict(self) -> Dict[str, Any]:
        node = {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "depth": self.depth,
            "count": self.count,
            "density": self.density,
            "parent_no_improve": self.parent_no_improve,
            "contains_front_member": self.contains_front_member,
        }
        if self.children:
            node["children"] = [child.to_dict() for child in self.children]
        return node


@dataclass
class BranchingScheme:
    split_indices: Tuple[int, ...] = ()
    cut_points: Dict[int, float] = field(default_factory=dict)
    # how many times each coordinate has been cut so far
    cut_counts: Dict[int, int] = field(default_factory=dict)


class Partition:
    def __init__(self, lower: Sequence[float], upper: Sequence[float], max_depth: int = DEFAULT_MAX_DEPTH):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if lower.shape != upper.shape or np.any(lower > upper):
            raise DomainError("Partition bounds are inconsistent")
        self.lower = lower
        self.upper = upper
        self.max_depth = max_depth
        self.root = Subdomain(lower.copy(), upper.copy())
        self._span = np.where(upper > lower, upper - lower, 1.0)
        self.samples = np.empty((0, lower.size))
        self.fitness = np.empty(0)
        self._recount()

    @property
    def dimension(self) -> int:
        return self.lower.size

    def leaves(self) -> List[Subdomain]:
        found = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                found.append(node)
            else:
                stack.extend(node.children)
        return sorted(found, key=Subdomain.sort_key)

    def normalized_volume(self, subdomain: Subdomain) -> float:
        widths = np.where(self.upper > self.lower, (subdomain.upper - subdomain.lower) / self._span, 1.0)
        return float(np.prod(widths))

    def record_samples(self, samples: Sequence[Sequence[float]], fitness: Optional[Sequence[float]] = None) -> None:
        """Adds samples and recomputes counts and densities of every leaf."""
        points = np.asarray(samples, dtype=float).reshape(-1, self.dimension)
        if len(points) == 0:
            return
        values = np.full(len(points), np.inf) if fitness is None else np.asarray(fitness, dtype=float)
        self.samples = np.vstack([self.samples, points])
        self.fitness = np.concatenate([self.fitness, values])
        self._recount()

    def _recount(self) -> None:
        unassigned = np.ones(len(self.samples), dtype=bool)
        for leaf in self.leaves():
            inside = leaf.contains(self.samples) & unassigned if len(self.samples) else np.zeros(0, dtype=bool)
            unassigned &= ~inside
            leaf.count = int(inside.sum())
            leaf.density = leaf.count / self.normalized_volume(leaf)
            leaf.best_fitness = float(self.fitness[inside].min()) if leaf.count else np.inf
        if unassigned.any():
            logger.warning(f"{int(unassigned.sum())} samples fall outside the partition box")

    def total_count(self) -> int:
        return sum(leaf.count for leaf in self.leaves())

    def mark_front(self, members: Sequence[Sequence[float]]) -> None:
        points = np.asarray(members, dtype=float).reshape(-1, self.dimension)
        for leaf in self.leaves():
            leaf.contains_front_member = bool(len(points)) and bool(leaf.contains(points).any())

    def densities(self) -> List[float]:
        return [leaf.density for leaf in self.leaves()]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "max_depth": self.max_depth,
            "samples": int(len(self.samples)),
            "root": self.root.to_dict(),
        }


def record_samples(partition: Partition, samples, fitness=None) -> Partition:
    partition.record_samples(samples, fitness)
    return partition


def lowest_density_subdomain(partition: Partition) -> Subdomain:
    """Minimum density; ties go to the larger volume, then the lexicographically lowest box."""
    return min(
        partition.leaves(),
        key=lambda leaf: (leaf.density, -partition.normalized_volume(leaf), leaf.sort_key()),
    )


def _clusters_1d(values: np.ndarray, gap: float) -> List[np.ndarray]:
    order = np.sort(values)
    breaks = np.flatnonzero(np.diff(order) > gap) + 1
    return np.split(order, breaks)


def adapt_scheme(
    scheme: BranchingScheme,
    decisions: Sequence[Sequence[float]],
    fitness: Sequence[float],
    lower: Sequence[float],
    upper: Sequence[float],
    max_split_coordinates: Optional[int] = None,
) -> BranchingScheme:
    """Chooses split coordinates and cut points from where the archive members cluster.

    `fitness` ranks the members (lower is better). A coordinate qualifies when it
    has more clusters than past cuts; its cut is halfway between the centroid of
    the cluster holding the best member and the one holding the worst member.
    """
    points = np.asarray(decisions, dtype=float)
    if points.size == 0:
        return scheme
    points = points.reshape(len(points), -1)
    fitness = np.asarray(fitness, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    best, worst = int(np.argmin(fitness)), int(np.argmax(fitness))

    excess: Dict[int, int] = {}
    cuts: Dict[int, float] = {}
    for i in range(points.shape[1]):
        span = upper[i] - lower[i]
        if span <= 0.0:
            continue
        column = points[:, i]
        clusters = _clusters_1d(column, CLUSTER_GAP * span)
        past = scheme.cut_counts.get(i, 0)
        if len(clusters) <= past:
            continue

        def holding(value: float) -> np.ndarray:
            return next(c for c in clusters if c[0] <= value <= c[-1])

        best_cluster = holding(column[best])
        best_centroid = float(best_cluster.mean())
        if len(clusters) == 1:
            far = lower[i] if best_centroid - lower[i] >= upper[i] - best_centroid else upper[i]
            other = float(far)
        else:
            worst_cluster = holding(column[worst])
            if worst_cluster is best_cluster:
                worst_cluster = max(clusters, key=lambda c: abs(float(c.mean()) - best_centroid))
            other = float(worst_cluster.mean())
        cut = 0.5 * (best_centroid + other)
        if not lower[i] < cut < upper[i]:
            continue
        excess[i] = len(clusters) - past
        cuts[i] = cut

    if not excess:
        return scheme
    chosen = sorted(excess, key=lambda i: (-excess[i], i))
    if max_split_coordinates is not None:
        chosen = chosen[:max_split_coordinates]
    cut_points = dict(scheme.cut_points)
    cut_points.update({i: cuts[i] for i in chosen})
    return BranchingScheme(tuple(sorted(chosen)), cut_points, dict(scheme.cut_counts))


def _refresh_improvement(partition: Partition) -> None:
    for leaf in partition.leaves():
        if leaf.assessed or leaf.parent_best is None:
            continue
        if leaf.best_fitness < leaf.parent_best:
            leaf.parent_no_improve = 0
        else:
            leaf.parent_no_improve += 1
        leaf.assessed = True


def _merit_scores(leaves: List[Subdomain], nu: float) -> np.ndarray:
    density = np.array([leaf.density for leaf in leaves])
    top = density.max()
    varpi = density / top if top > 0 else np.zeros_like(density)
    best = np.array([leaf.best_fitness for leaf in leaves])
    finite = np.isfinite(best)
    phi = np.ones_like(best)
    if finite.any():
        lo, hi = best[finite].min(), best[finite].max()
        phi[finite] = (best[finite] - lo) / (hi - lo) if hi > lo else 0.0
    return (1.0 - nu) * varpi + nu * phi


def split(partition: Partition, subdomain: Subdomain, scheme: BranchingScheme) -> List[Subdomain]:
    """Splits one leaf at the scheme's cut points; returns the new children."""
    if not subdomain.is_leaf:
        raise DomainError("Only leaves can be split")
    if subdomain.depth + 1 > partition.max_depth:
        raise DomainError("Branching beyond the maximum depth", {"depth": subdomain.depth})
    indices = [i for i in scheme.split_indices if subdomain.upper[i] > subdomain.lower[i]]
    if not indices:
        return []
    cuts = {}
    for i in indices:
        cut = scheme.cut_points.get(i)
        if cut is None or not subdomain.lower[i] < cut < subdomain.upper[i]:
            cut = 0.5 * (subdomain.lower[i] + subdomain.upper[i])
        cuts[i] = cut

    children = []
    for halves in itertools.product((0, 1), repeat=len(indices)):
        lo = subdomain.lower.copy()
        hi = subdomain.upper.copy()
        for i, half in zip(indices, halves):
            if half == 0:
                hi[i] = cuts[i]
            else:
                lo[i] = cuts[i]
        children.append(
            Subdomain(
                lo,
                hi,
                depth=subdomain.depth + 1,
                parent_no_improve=subdomain.parent_no_improve,
                parent_best=subdomain.best_fitness,
                assessed=False,
            )
        )
    subdomain.children = children
    for i in indices:
        scheme.cut_counts[i] = scheme.cut_counts.get(i, 0) + 1
    partition._recount()
    return children


def select_and_branch(
    partition: Partition,
    scheme: BranchingScheme,
    front_members: Sequence[Sequence[float]] = (),
    mode: SelectionMode = SelectionMode.FRONT_GUIDED,
    nu: float = 0.5,
    no_improve_threshold: int = 3,
) -> Optional[Subdomain]:
    """Picks one leaf and splits it. Returns the split leaf, or None when nothing qualifies."""
    _refresh_improvement(partition)
    partition.mark_front(front_members)
    leaves = [leaf for leaf in partition.leaves() if leaf.depth < partition.max_depth]
    if not scheme.split_indices:
        logger.info("Branching skipped: no coordinates selected for splitting")
        return None

    if SelectionMode(mode) is SelectionMode.FRONT_GUIDED:
        candidates = [
            leaf
            for leaf in leaves
            if leaf.contains_front_member and leaf.parent_no_improve <= no_improve_threshold
        ]
        if not candidates:
            logger.info("Branching skipped: no subdomain with front members is eligible")
            return None
        chosen = min(candidates, key=lambda leaf: (leaf.count, leaf.sort_key()))
    else:
        if not leaves:
            logger.info("Branching skipped: every subdomain is at the maximum depth")
            return None
        scores = _merit_scores(leaves, nu)
        chosen = min(
            zip(scores, leaves),
            key=lambda pair: (pair[0], -partition.normalized_volume(pair[1]), pair[1].sort_key()),
        )[1]

    children = split(partition, chosen, scheme)
    if not children:
        logger.info("Branching skipped: selected subdomain is degenerate along the split coordinates")
        return None
    logger.debug(f"Branched subdomain at depth {chosen.depth} into {len(children)} children")
    return chosen
