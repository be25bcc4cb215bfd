import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy.integrate import simpson

from app.core.errors import DomainError, ModelError
from app.models.engine_models import EngineConfig
from app.models.problem_models import EvidenceOptions, ExtremumMethodName, LowThrustConfig
from app.models.run_models import ProblemId, RunManifest
from app.services import lowthrust, macs
from app.services.lowthrust import (
    ELEMENT_NAMES,
    ControlProfile,
    EquinoctialState,
    LowThrustDesign,
    ShapedTrajectory,
    boundary_states,
    compare_shaped_and_propagated,
    control_profile,
    decision_bounds,
    delta_v,
    mass_and_time,
    max_thrust,
    propellant_fraction,
    robust_lowthrust_problem,
    shape_trajectory,
    specific_impulse,
    summarize_transfer,
    trajectory_table,
)
from app.services.run_service import RunService

MU_SUN = LowThrustConfig().mu_sun
AU = 1.495978707e8


def design(**overrides) -> LowThrustDesign:
    values = dict(N=1, t0=4000.0, tf=800.0, w=30.0, A=10.0, alpha2=(0.1, 0.05, -0.1), m_max=0.5)
    values.update(overrides)
    return LowThrustDesign(**values)


class TestDesign:
    def test_vector_round_trip(self):
        x = [1, 4000.0, 800.0, 30.0, 10.0, 0.1, 0.05, -0.1, 0.5]
        assert LowThrustDesign.from_vector(x).to_vector().tolist() == x

    def test_missing_mass_defaults_to_one(self):
        assert LowThrustDesign.from_vector([2, 4000, 800, 30, 10, 0, 0, 0]).m_max == 1.0

    def test_wrong_length(self):
        with pytest.raises(DomainError):
            LowThrustDesign.from_vector([1.0, 2.0])

    def test_out_of_bounds_names_variable(self):
        with pytest.raises(DomainError) as error:
            design(w=50.0).check_bounds()
        assert "w" in str(error.value)

    def test_bounds_are_sorted(self):
        lower, upper = decision_bounds()
        assert np.all(lower <= upper)
        assert (lower[5], upper[5]) == (-1.0, 1.0)

    def test_negative_radius_rejected(self):
        with pytest.raises(ModelError):
            EquinoctialState(p=1.0, f=2.0, g=0.0, h=0.0, k=0.0, L=math.pi)


class TestShaping:
    @pytest.mark.parametrize("alpha2", [(0.1, 0.05, -0.1), (-0.8, 0.9, 0.3), (0.0, 0.0, 0.0)])
    def test_boundaries_are_matched(self, alpha2):
        states = boundary_states(design(alpha2=alpha2), LowThrustConfig())
        _, trajectory = shape_trajectory(design(alpha2=alpha2), states)
        assert trajectory.elements(trajectory.L0) == pytest.approx(states[0].elements(), rel=1e-12, abs=1e-15)
        assert trajectory.elements(trajectory.Lf) == pytest.approx(states[1].elements(), rel=1e-12, abs=1e-15)

    def test_revolutions_extend_arrival_longitude(self):
        one = boundary_states(design(N=1), LowThrustConfig())[1]
        two = boundary_states(design(N=2), LowThrustConfig())[1]
        assert two.L - one.L == pytest.approx(2.0 * math.pi)

    def test_small_exponent_tends_to_mean(self):
        start = EquinoctialState(1.0e8, 0.1, 0.0, 0.0, 0.0, 0.0)
        end = EquinoctialState(2.0e8, 0.0, 0.1, 0.02, 0.0, 2.0)
        trajectory = ShapedTrajectory(start, end, (1e-7, 1e-7, 1e-7))
        mean = (start.elements() + end.elements()) / 2.0
        assert trajectory.elements(1.0) == pytest.approx(mean, rel=1e-6, abs=1e-9)

    def test_degenerate_exponent_uses_linear_limit(self):
        start = EquinoctialState(1.0e8, 0.0, 0.0, 0.0, 0.0, 0.0)
        end = EquinoctialState(2.0e8, 0.0, 0.0, 0.0, 0.0, 2.0)
        trajectory = ShapedTrajectory(start, end, (0.0, 0.5, 0.0))
        assert trajectory.linear == (True, False, True)
        assert trajectory.parameters.alpha1[0] == pytest.approx(0.5e8)
        assert trajectory.elements(1.0)[0] == pytest.approx(1.5e8)

    def test_arrival_before_departure(self):
        state = EquinoctialState(1.0e8, 0.0, 0.0, 0.0, 0.0, 1.0)
        with pytest.raises(DomainError):
            ShapedTrajectory(state, state, (0.1, 0.1, 0.1))


class TestControl:
    def test_keplerian_orbit_needs_no_thrust(self):
        orbit = dict(p=1.2 * AU, f=0.05, g=0.02, h=0.01, k=-0.02)
        trajectory = ShapedTrajectory(EquinoctialState(L=0.0, **orbit), EquinoctialState(L=3.0, **orbit), (0.0, 0.0, 0.0))
        magnitude = control_profile(trajectory, MU_SUN).magnitude(np.linspace(0.1, 2.9, 50))
        assert np.all(magnitude < 1e-8)

    def test_halved_step_agrees(self):
        _, trajectory = shape_trajectory(design(), boundary_states(design(), LowThrustConfig()))
        grid = np.linspace(trajectory.L0 + 0.01, trajectory.Lf - 0.01, 40)
        coarse = ControlProfile(trajectory, MU_SUN, 2e-3).magnitude(grid)
        fine = ControlProfile(trajectory, MU_SUN, 1e-3).magnitude(grid)
        assert fine == pytest.approx(coarse, rel=1e-6, abs=1e-10)

    def test_rtn_matches_magnitude(self):
        _, trajectory = shape_trajectory(design(), boundary_states(design(), LowThrustConfig()))
        profile = control_profile(trajectory, MU_SUN)
        grid = np.linspace(trajectory.L0 + 0.1, trajectory.Lf - 0.1, 10)
        rtn = profile.rtn(grid)
        assert np.linalg.norm(rtn, axis=0) * 1000.0 == pytest.approx(profile.magnitude(grid), rel=1e-9)


class TestMassAndTime:
    def test_zero_acceleration_spends_no_propellant(self):
        dv = delta_v(lambda L: 0.0, lambda L: 1e-7, 0.0, 3.0)
        assert propellant_fraction(dv, 3000.0, 9.80665) == 0.0

    def test_constant_acceleration_closed_form(self):
        a, rate, span, isp, g0 = 2e-4, 2e-7, 4.0, 3000.0, 9.80665
        dv = delta_v(lambda L: a, lambda L: rate, 0.0, span)
        duration = span / rate
        expected = 1.0 - math.exp(-a * duration / (isp * g0))
        assert propellant_fraction(dv, isp, g0) == pytest.approx(expected, rel=1e-10)

    def test_specific_impulse_formula(self):
        assert specific_impulse(0.65, 30.0, 9.80665) == pytest.approx(3.97689, rel=1e-5)
        assert specific_impulse(0.65, 30.0, 9.80665, scale=1000.0) == pytest.approx(3976.89, rel=1e-5)

    def test_max_thrust_falls_with_square_of_distance(self):
        assert max_thrust(0.9, 30.0, 10.0, 300.0, 2.0) == pytest.approx(20250.0)
        assert max_thrust(0.9, 30.0, 10.0, 300.0, 1.0) == pytest.approx(81000.0)

    def test_transfer_summary(self):
        summary = summarize_transfer(design(), LowThrustConfig())
        assert summary.delta_v > 0.0 and math.isfinite(summary.delta_v)
        assert summary.time_of_flight > 0.0
        result = mass_and_time(design(), {"eta_p": 0.9, "p0": 300.0, "eta_e": 0.65}, LowThrustConfig(), summary)
        assert 0.0 <= result.propellant < 1.0
        assert result.array_mass == pytest.approx(1.1 * 10.0 / 1000.0)
        assert result.time_residual == pytest.approx(abs(800.0 - summary.time_of_flight))


class TestRobustProblem:
    def test_zero_budget_has_no_belief(self):
        problem, _ = robust_lowthrust_problem(LowThrustConfig(isp_scale=1e4))
        objectives, constraints = problem.evaluate(design(m_max=0.0).to_vector())
        assert objectives[0] == 1.0
        assert objectives[1] == 0.0
        assert len(constraints) == 2

    def test_full_budget_is_certain(self):
        problem, _ = robust_lowthrust_problem(LowThrustConfig(isp_scale=1e4))
        objectives, _ = problem.evaluate(design(m_max=1.0).to_vector())
        assert objectives[0] == pytest.approx(0.0, abs=1e-12)
        assert objectives[1] == -1.0

    def test_problem_shape(self):
        problem, _ = robust_lowthrust_problem()
        assert problem.n == 9
        assert problem.n_integer == 1
        assert problem.variable_names[0] == "N"


class TestDiagnostics:
    def test_element_comparison_columns(self):
        comparison = compare_shaped_and_propagated(design(), points=20, rtol=1e-8, atol=1e-10)
        expected = ["L"] + [f"{name}_{kind}" for name in ELEMENT_NAMES for kind in ("shaped", "prop")]
        assert list(comparison.table.columns) == expected
        assert len(comparison.table) == 20
        assert set(comparison.max_deviation) == set(ELEMENT_NAMES)
        first = comparison.table.iloc[0]
        assert first["p_prop"] == pytest.approx(first["p_shaped"], rel=1e-12)

    def test_out_of_bounds_design(self):
        with pytest.raises(DomainError):
            compare_shaped_and_propagated(design(tf=5000.0), points=10)

    def test_trajectory_table(self):
        frame = trajectory_table(design(), points=25)
        assert len(frame) == 25
        assert {"L", "p", "a_d", "phi_max"} <= set(frame.columns)
        assert (frame["phi_max"] > 0.0).all()


class TestQuadrature:
    def test_step_halving(self):
        summary = summarize_transfer(design(), LowThrustConfig())
        trajectory, profile = summary.trajectory, summary.profile

        def totals(points: int):
            L = np.linspace(trajectory.L0, trajectory.Lf, points)
            rate = trajectory.longitude_rate(L, MU_SUN)
            return simpson(profile.magnitude(L) / rate, x=L), simpson(1.0 / rate, x=L)

        coarse_dv, coarse_seconds = totals(2001)
        fine_dv, fine_seconds = totals(4001)
        assert fine_dv == pytest.approx(coarse_dv, rel=1e-8)
        assert fine_seconds == pytest.approx(coarse_seconds, rel=1e-8)
        assert summary.delta_v == pytest.approx(fine_dv, rel=1e-7)
        assert summary.time_of_flight * lowthrust.SECONDS_PER_DAY == pytest.approx(fine_seconds, rel=1e-8)


class TestEvidenceMethods:
    def test_grid_oracle_confirms_corner_sweep(self):
        config = LowThrustConfig(isp_scale=1e4)
        corners, _ = robust_lowthrust_problem(config)
        oracle, _ = robust_lowthrust_problem(
            config.model_copy(update={"evidence": EvidenceOptions(method=ExtremumMethodName.GRID_ORACLE)})
        )
        x = design(m_max=0.6).to_vector()
        expected_objectives, expected_constraints = corners.evaluate(x)
        objectives, constraints = oracle.evaluate(x)
        assert objectives == pytest.approx(expected_objectives, abs=1e-12)
        assert constraints == pytest.approx(expected_constraints, abs=1e-12)


class TestConcurrency:
    def test_threads_share_transfer_summaries(self, monkeypatch):
        # every store evicts, so concurrent lookups race against clears
        monkeypatch.setattr(lowthrust, "SUMMARY_CACHE_SIZE", 0)
        problem, _ = robust_lowthrust_problem(LowThrustConfig(isp_scale=1e4))
        designs = [design(t0=4000.0 + 60.0 * i).to_vector() for i in range(4)]
        expected = [problem.evaluate(x) for x in designs]
        with ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(problem.evaluate, designs * 3))
        for (objectives, constraints), (want_objectives, want_constraints) in zip(results, expected * 3):
            np.testing.assert_array_equal(objectives, want_objectives)
            np.testing.assert_array_equal(constraints, want_constraints)

    def test_parallel_repeats_match_sequential(self, tmp_path):
        manifest = RunManifest(
            problem=ProblemId.LOWTHRUST,
            engine=EngineConfig(population_size=4, n_f=2, max_evaluations=8),
            seed=3,
            repeats=3,
            problem_config={"isp_scale": 1e4},
        )
        _, sequential = RunService(threads=1).execute(manifest, output_dir=str(tmp_path / "sequential"))
        _, parallel = RunService(threads=3).execute(manifest, output_dir=str(tmp_path / "parallel"))
        assert [outcome.seed for outcome in parallel] == [3, 4, 5]
        for one, other in zip(sequential, parallel):
            np.testing.assert_array_equal(one.archive.objective_matrix(), other.archive.objective_matrix())
            np.testing.assert_array_equal(one.archive.decision_matrix(), other.archive.decision_matrix())


@pytest.mark.slow
class TestLowThrustAcceptance:
    def test_archive_survives_grid_oracle(self):
        config = LowThrustConfig(isp_scale=1e4)
        problem, _ = robust_lowthrust_problem(config)
        oracle, _ = robust_lowthrust_problem(
            config.model_copy(update={"evidence": EvidenceOptions(method=ExtremumMethodName.GRID_ORACLE)})
        )
        archive, _ = macs.run(problem, EngineConfig(population_size=8, n_f=4, max_evaluations=400, seed=0))
        for x in archive.decision_matrix():
            _, constraints = problem.evaluate(x)
            _, verified = oracle.evaluate(x)
            assert verified[0] == pytest.approx(constraints[0], abs=1e-12)
        for entry in archive.feasible_entries():
            _, verified = oracle.evaluate(entry.decision)
            assert verified[0] <= 1e-12

    def test_launch_windows_separate(self):
        problem, _ = robust_lowthrust_problem(LowThrustConfig(isp_scale=1e4))
        separated = 0
        for seed in range(5):
            archive, _ = macs.run(problem, EngineConfig(population_size=10, n_f=5, max_evaluations=600, seed=seed))
            t0 = np.sort(archive.decision_matrix()[:, 1])
            if np.any(np.diff(t0) > 200.0):
                separated += 1
        assert separated >= 1
