import math

import numpy as np
import pytest

from app.core.config import data_file
from app.models.problem_models import SolutionSpace
from app.services import aerocapture, lowthrust
from app.services.evidence import joint_elements, load_uncertain_space


@pytest.mark.parametrize("name", ["lowthrust_uncertainty.json", "aerocapture_uncertainty.json"])
def test_joint_masses_sum_to_one(name):
    space = load_uncertain_space(data_file(name))
    margins = [1.0] * space.margin_count
    assert math.fsum(e.mass for e in joint_elements(space, margins)) == pytest.approx(1.0, abs=1e-12)


def test_lowthrust_uncertainty_rows():
    space = load_uncertain_space(data_file("lowthrust_uncertainty.json"))
    assert space.names == ["eta_p", "p0", "eta_e"]
    assert [len(dim) for dim in space.dims] == [1, 2, 2]


def test_entry_errors_carry_residual_mass():
    space = load_uncertain_space(data_file("aerocapture_uncertainty.json"))
    for name in ("dv", "dbeta", "dchi"):
        structure = space.dims[space.index_of(name)]
        assert structure.elements[-1].mass == pytest.approx(0.01)


def test_lowthrust_domain():
    lower, upper = lowthrust.decision_bounds()
    assert lower.size == upper.size == len(lowthrust.DECISION_NAMES)
    assert np.all(lower <= upper)


@pytest.mark.parametrize("space", list(SolutionSpace))
def test_aerocapture_domains(space):
    lower, upper = aerocapture.decision_bounds(space)
    assert lower.size == len(aerocapture.DECISION_NAMES)
    assert np.all(lower <= upper)
    assert upper[aerocapture.DECISION_NAMES.index("m_max")] == 1.0
