import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.errors import ConfigurationError, DomainError, EvaluationError, ResourceError
from app.services.evidence import (
    BpaStructure,
    Direction,
    EvidenceBinding,
    ExtremumMethod,
    Interval,
    RobustProblem,
    ThresholdEvent,
    UncertainSpace,
    belief,
    belief_shortfall,
    box_extremum,
    joint_elements,
    plausibility,
    sweep,
)


def two_dim_space() -> UncertainSpace:
    return UncertainSpace(
        (
            BpaStructure.from_triples("x1", [(0.0, 1.0, 0.6), (1.0, 2.0, 0.4)]),
            BpaStructure.from_triples("x2", [(0.0, 1.0, 1.0)]),
        )
    )


def total(x: np.ndarray) -> float:
    return float(np.sum(x))


def identity(x: np.ndarray) -> float:
    return float(x[0])


class TestJointElements:
    def test_product_masses(self):
        elements = joint_elements(two_dim_space())
        assert [e.mass for e in elements] == pytest.approx([0.6, 0.4])
        assert elements[1].box == (Interval(1.0, 2.0), Interval(0.0, 1.0))

    def test_unit_margin_keeps_boxes(self):
        space = UncertainSpace(two_dim_space().dims, {0: 0})
        assert [e.box for e in joint_elements(space, [1.0])] == [e.box for e in joint_elements(two_dim_space())]

    def test_margin_scales_about_midpoint(self):
        space = UncertainSpace((BpaStructure.from_triples("x", [(2.0, 6.0, 1.0)]),), {0: 0})
        (element,) = joint_elements(space, [0.5])
        assert element.box == (Interval(3.0, 5.0),)
        assert element.mass == 1.0

    def test_margin_outside_unit_interval(self):
        space = UncertainSpace((BpaStructure.from_triples("x", [(2.0, 6.0, 1.0)]),), {0: 0})
        with pytest.raises(DomainError):
            joint_elements(space, [1.5])

    def test_empty_structure_rejected(self):
        with pytest.raises(ConfigurationError):
            BpaStructure("x", ())

    def test_unnormalized_masses_report_defect(self):
        with pytest.raises(ConfigurationError) as error:
            BpaStructure.from_triples("x", [(0.0, 1.0, 0.5), (1.0, 2.0, 0.4)])
        assert error.value.context["defect"] == pytest.approx(-0.1)

    def test_complement_element_carries_residual(self):
        structure = BpaStructure.with_complement("dv", [(-1.0, 1.0, 0.99)], widening=10.0)
        assert len(structure) == 2
        catch_all = structure.elements[-1]
        assert catch_all.mass == pytest.approx(0.01)
        assert catch_all.interval == Interval(-10.0, 10.0)

    def test_inverted_interval(self):
        with pytest.raises(DomainError):
            Interval(2.0, 1.0)


class TestBoxExtremum:
    def test_sum_on_unit_square(self):
        result = box_extremum(total, (Interval(0, 1), Interval(0, 1)), ExtremumMethod.CORNERS)
        assert (result.min_value, result.max_value) == (0.0, 2.0)

    def test_constant_response(self):
        result = box_extremum(lambda x: 3.5, (Interval(-4, 7), Interval(1, 2)), ExtremumMethod.CORNERS_PLUS_SAMPLING)
        assert result.min_value == result.max_value == 3.5

    def test_corners_miss_interior_minimum(self):
        box = (Interval(-1.0, 1.0),)
        corners = box_extremum(lambda x: x[0] ** 2, box, ExtremumMethod.CORNERS)
        oracle = box_extremum(lambda x: x[0] ** 2, box, ExtremumMethod.GRID_ORACLE, resolution=101)
        assert corners.min_value == 1.0
        assert oracle.min_value == pytest.approx(0.0, abs=1e-12)

    def test_corner_enumeration_limit(self):
        box = tuple(Interval(0, 1) for _ in range(13))
        with pytest.raises(ResourceError):
            box_extremum(total, box, ExtremumMethod.CORNERS)

    def test_sampling_handles_large_dimension(self):
        box = tuple(Interval(0, 1) for _ in range(13))
        result = box_extremum(total, box, ExtremumMethod.CORNERS_PLUS_SAMPLING, n_samples=20)
        assert 0.0 <= result.min_value <= result.max_value <= 13.0

    def test_nan_response_names_box(self):
        with pytest.raises(EvaluationError) as error:
            box_extremum(lambda x: float("nan"), (Interval(0, 1),))
        assert error.value.context["box"] == [(0.0, 1.0)]

    def test_raising_response_is_wrapped(self):
        def broken(x):
            raise ZeroDivisionError("boom")

        with pytest.raises(EvaluationError):
            box_extremum(broken, (Interval(0, 1),))


class TestBeliefAndPlausibility:
    def test_whole_support_inside(self):
        space = UncertainSpace((BpaStructure.from_triples("x", [(0.0, 1.0, 1.0)]),))
        assert belief(space, [], identity, ThresholdEvent(0, 2.0)) == 1.0
        assert plausibility(space, [], identity, ThresholdEvent(0, 2.0)) == 1.0

    def test_empty_intersection(self):
        space = UncertainSpace((BpaStructure.from_triples("x", [(0.0, 1.0, 1.0)]),))
        assert belief(space, [], identity, ThresholdEvent(0, -1.0)) == 0.0
        assert plausibility(space, [], identity, ThresholdEvent(0, -1.0)) == 0.0

    def test_two_dimensional_example(self):
        space = two_dim_space()
        event = ThresholdEvent(0, 2.0, Direction.LEQ)
        assert belief(space, [], total, event) == pytest.approx(0.6)
        assert plausibility(space, [], total, event) == pytest.approx(1.0)

    def test_strict_direction_excludes_boundary(self):
        space = two_dim_space()
        assert belief(space, [], total, ThresholdEvent(0, 2.0, Direction.LT)) == 0.0

    def test_one_sweep_serves_several_events(self):
        calls = []

        def response(x):
            calls.append(1)
            return [x[0] + x[1], x[0] - x[1]]

        result = sweep(two_dim_space(), [], response)
        assert result.belief(ThresholdEvent(0, 2.0)) == pytest.approx(0.6)
        assert result.belief(ThresholdEvent(1, 0.0, Direction.GEQ)) == pytest.approx(0.4)
        # corners (1, 0) and (1, 1) are shared by both elements
        assert len(calls) == result.evaluations == 6

    def test_worst_and_best_case(self):
        result = sweep(two_dim_space(), [], total)
        assert result.worst_case(0) == 3.0
        assert result.best_case(0) == 0.0

    def test_margin_shrink_raises_belief(self):
        space = UncertainSpace((BpaStructure.from_triples("x", [(0.0, 4.0, 1.0)]),), {0: 0})
        event = ThresholdEvent(0, 3.0)
        wide = belief(space, [1.0], identity, event, ExtremumMethod.GRID_ORACLE)
        narrow = belief(space, [0.25], identity, event, ExtremumMethod.GRID_ORACLE)
        assert wide == 0.0
        assert narrow == 1.0

    def test_robust_problem_and_shortfall(self):
        binding = EvidenceBinding(two_dim_space())
        problem = RobustProblem(
            binding=binding,
            response_for=lambda x: (lambda u: float(x[0] * (u[0] + u[1]))),
            objectives=lambda x, result: [1.0 - result.belief(ThresholdEvent(0, 2.0))],
            constraints=lambda x, result: [belief_shortfall(result, ThresholdEvent(0, 2.0), 0.5)],
        )
        objectives, constraints = problem.evaluate(np.array([1.0]))
        assert objectives == pytest.approx([0.4])
        assert constraints == pytest.approx([-0.1])


@st.composite
def bpa_structures(draw, name: str):
    count = draw(st.integers(1, 4))
    weights = draw(st.lists(st.integers(1, 20), min_size=count, max_size=count))
    scale = sum(weights)
    triples = []
    for weight in weights:
        lo = draw(st.floats(-10.0, 10.0, allow_nan=False))
        width = draw(st.floats(0.0, 5.0, allow_nan=False))
        triples.append((lo, lo + width, weight / scale))
    return BpaStructure.from_triples(name, triples)


@st.composite
def uncertain_spaces(draw):
    dimension = draw(st.integers(1, 3))
    return UncertainSpace(tuple(draw(bpa_structures(f"u{i}")) for i in range(dimension)))


@st.composite
def monotone_responses(draw, dimension: int):
    coefficients = np.array(draw(st.lists(st.floats(0.1, 3.0), min_size=dimension, max_size=dimension)))
    return lambda points: (np.atleast_2d(points) * coefficients).sum(axis=1)


class TestEvidenceProperties:
    @settings(max_examples=50, deadline=None)
    @given(space=uncertain_spaces())
    def test_joint_masses_sum_to_one(self, space):
        assert math.fsum(e.mass for e in joint_elements(space)) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(space=uncertain_spaces(), threshold=st.floats(-40.0, 40.0))
    def test_belief_below_plausibility_and_duality(self, space, threshold):
        response = lambda x: float(np.sum(np.asarray(x) ** 2)) - 5.0
        result = sweep(space, [], response, ExtremumMethod.CORNERS_PLUS_SAMPLING, n_samples=5)
        event = ThresholdEvent(0, threshold, Direction.LEQ)
        assert result.belief(event) <= result.plausibility(event) + 1e-12
        assert result.belief(event) + result.plausibility(event.complement()) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(space=uncertain_spaces(), v1=st.floats(-40.0, 40.0), v2=st.floats(-40.0, 40.0))
    def test_monotone_in_threshold(self, space, v1, v2):
        low, high = sorted((v1, v2))
        result = sweep(space, [], total)
        assert result.belief(ThresholdEvent(0, low)) <= result.belief(ThresholdEvent(0, high))
        assert result.plausibility(ThresholdEvent(0, low)) <= result.plausibility(ThresholdEvent(0, high))

    @settings(max_examples=200, deadline=None)
    @given(data=st.data())
    def test_corners_match_grid_oracle_for_monotone_responses(self, data):
        space = data.draw(uncertain_spaces())
        response = data.draw(monotone_responses(space.dimension))
        threshold = data.draw(st.floats(-60.0, 60.0))
        corners = sweep(space, [], response, ExtremumMethod.CORNERS, vectorized=True)
        oracle = sweep(space, [], response, ExtremumMethod.GRID_ORACLE, vectorized=True)
        for direction in Direction:
            event = ThresholdEvent(0, threshold, direction)
            assert corners.belief(event) == oracle.belief(event)
            assert corners.plausibility(event) == oracle.plausibility(event)
