import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.errors import DomainError
from app.models.engine_models import SelectionMode
from app.services.decomposition import (
    BranchingScheme,
    Partition,
    adapt_scheme,
    lowest_density_subdomain,
    select_and_branch,
    split,
)


def halves(cut: float = 0.5) -> Partition:
    partition = Partition([0.0, 0.0], [1.0, 1.0])
    split(partition, partition.root, BranchingScheme((0,), {0: cut}))
    return partition


class TestRecordSamples:
    def test_no_samples(self):
        assert halves().densities() == [0.0, 0.0]

    def test_left_half_only(self):
        partition = halves()
        partition.record_samples(np.random.default_rng(1).uniform([0, 0], [0.4, 1.0], (50, 2)))
        left, right = partition.leaves()
        assert left.count == 50
        assert right.density == 0.0

    def test_boundary_point_goes_to_lowest_box(self):
        partition = halves()
        partition.record_samples([[0.5, 0.5]])
        assert [leaf.count for leaf in partition.leaves()] == [1, 0]

    def test_uniform_samples_balance(self):
        partition = halves()
        partition.record_samples(np.random.default_rng(7).random((10_000, 2)))
        left, right = partition.densities()
        assert abs(left - right) / max(left, right) < 0.05
        assert partition.total_count() == 10_000


class TestLowestDensity:
    def test_single(self):
        partition = Partition([0.0], [1.0])
        assert lowest_density_subdomain(partition) is partition.root

    def test_minimum(self):
        partition = Partition([0.0], [3.0])
        scheme = BranchingScheme((0,), {0: 1.0})
        split(partition, partition.root, scheme)
        right = partition.leaves()[1]
        split(partition, right, BranchingScheme((0,), {0: 2.0}))
        partition.record_samples([[0.5], [0.6], [2.5], [2.6], [2.7], [2.8], [2.9]])
        chosen = lowest_density_subdomain(partition)
        assert chosen.lower.tolist() == [1.0] and chosen.upper.tolist() == [2.0]

    def test_tie_goes_to_larger_volume(self):
        partition = halves(cut=0.3)
        chosen = lowest_density_subdomain(partition)
        assert chosen.lower[0] == 0.3


class TestAdaptScheme:
    def test_two_clusters(self):
        decisions = [[0.18], [0.2], [0.22], [0.78], [0.8], [0.82]]
        fitness = [1.0, 0.0, 1.0, 5.0, 9.0, 5.0]
        scheme = adapt_scheme(BranchingScheme(), decisions, fitness, [0.0], [1.0])
        assert scheme.split_indices == (0,)
        assert scheme.cut_points[0] == pytest.approx(0.5)

    def test_single_cluster_uses_far_boundary(self):
        scheme = adapt_scheme(BranchingScheme(), [[0.88], [0.9], [0.92]], [1.0, 0.0, 2.0], [0.0], [1.0])
        assert scheme.cut_points[0] == pytest.approx(0.45)

    def test_enough_cuts_keeps_scheme(self):
        before = BranchingScheme((), {}, {0: 2})
        after = adapt_scheme(before, [[0.1], [0.9]], [0.0, 1.0], [0.0], [1.0])
        assert after is before

    def test_empty_archive(self):
        before = BranchingScheme()
        assert adapt_scheme(before, [], [], [0.0], [1.0]) is before

    def test_coordinate_cap(self):
        decisions = [[0.1, 0.1, 0.1], [0.9, 0.9, 0.9]]
        scheme = adapt_scheme(BranchingScheme(), decisions, [0.0, 1.0], [0, 0, 0], [1, 1, 1], max_split_coordinates=2)
        assert scheme.split_indices == (0, 1)


class TestSelectAndBranch:
    def test_single_split_tiles_parent(self):
        partition = Partition([0.0, 0.0], [1.0, 1.0])
        chosen = select_and_branch(partition, BranchingScheme((0,), {0: 0.5}), [[0.2, 0.2]])
        assert chosen is partition.root
        left, right = partition.leaves()
        assert left.upper[0] == right.lower[0] == 0.5
        assert left.depth == right.depth == 1

    def test_front_guided_branches_front_subdomain(self):
        partition = halves()
        partition.record_samples(np.random.default_rng(2).random((40, 2)))
        chosen = select_and_branch(partition, BranchingScheme((1,), {1: 0.5}), [[0.9, 0.9]])
        assert chosen.lower[0] == 0.5
        assert len(partition.leaves()) == 3

    def test_front_guided_without_front_members(self):
        partition = halves()
        assert select_and_branch(partition, BranchingScheme((1,), {1: 0.5}), []) is None

    def test_merit_with_zero_nu_uses_density(self):
        partition = halves()
        partition.record_samples([[0.1, 0.1], [0.2, 0.2]], fitness=[5.0, 6.0])
        chosen = select_and_branch(partition, BranchingScheme((1,), {1: 0.5}), mode=SelectionMode.MERIT, nu=0.0)
        assert chosen.lower[0] == 0.5

    def test_depth_limit(self):
        partition = Partition([0.0], [1.0], max_depth=1)
        split(partition, partition.root, BranchingScheme((0,), {0: 0.5}))
        with pytest.raises(DomainError):
            split(partition, partition.leaves()[0], BranchingScheme((0,), {0: 0.25}))

    def test_partition_dump(self):
        partition = halves()
        dump = partition.to_dict()
        assert len(dump["root"]["children"]) == 2


class TestTilingProperties:
    @settings(max_examples=40, deadline=None)
    @given(
        operations=st.lists(
            st.tuples(st.integers(0, 50), st.integers(0, 1), st.floats(0.05, 0.95)),
            min_size=1,
            max_size=12,
        )
    )
    def test_leaves_tile_the_box(self, operations):
        partition = Partition([0.0, -2.0], [1.0, 3.0], max_depth=6)
        for pick, coordinate, fraction in operations:
            leaves = [leaf for leaf in partition.leaves() if leaf.depth < partition.max_depth]
            if not leaves:
                break
            leaf = leaves[pick % len(leaves)]
            cut = leaf.lower[coordinate] + fraction * (leaf.upper[coordinate] - leaf.lower[coordinate])
            split(partition, leaf, BranchingScheme((coordinate,), {coordinate: cut}))

        leaves = partition.leaves()
        assert all(leaf.depth <= partition.max_depth for leaf in leaves)
        assert sum(partition.normalized_volume(leaf) for leaf in leaves) == pytest.approx(1.0, abs=1e-12)
        for i, a in enumerate(leaves):
            for b in leaves[i + 1 :]:
                separated = np.any((a.upper <= b.lower) | (b.upper <= a.lower))
                assert separated

        samples = np.random.default_rng(0).uniform([0.0, -2.0], [1.0, 3.0], (200, 2))
        partition.record_samples(samples)
        assert partition.total_count() == 200
