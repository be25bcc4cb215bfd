"""Atmospheric entry model for aerocapture and its robust formulation.

State is [r, θ, ψ, v, χ, β]: radius (km), longitude, latitude, speed (km/s),
heading from north and flight-path angle (rad). Aerodynamic forces are
computed in SI and converted to km/s².
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from app.core.config import data_file, read_json_file
from app.core.errors import DomainError, IntegrationError
from app.models.evidence_models import UncertainSpaceModel
from app.models.problem_models import AerocaptureConfig, SolutionSpace, TargetOrbit
from app.services.evidence import (
    Direction,
    EvidenceBinding,
    ExtremumMethod,
    RobustProblem,
    ThresholdEvent,
    space_from_model,
)
from app.services.macs import ProblemDefinition, load_domain_table

logger = logging.getLogger(__name__)

HEAT_FLUX_CONSTANT = 1.89e-8
DENSE_SAMPLES = 2000

DECISION_NAMES = ("v", "beta", "nu", "lift_fraction", "theta", "S", "rn_over_rb", "m_max", "sigma1", "sigma2")
DOMAIN_FILES = {
    SolutionSpace.RESTRICTED: "aerocapture_domain_restricted.json",
    SolutionSpace.EXTENDED: "aerocapture_domain_extended.json",
}
UNCERTAIN_NAMES = ("H", "rho0", "gamma", "n", "dv", "dbeta", "dchi")


def decision_bounds(space: SolutionSpace = SolutionSpace.RESTRICTED) -> Tuple[np.ndarray, np.ndarray]:
    _, lower, upper = load_domain_table(data_file(DOMAIN_FILES[SolutionSpace(space)]), DECISION_NAMES)
    return lower, upper


class EntryStatus(str, Enum):
    EXIT = "exit"
    CRASHED = "crashed"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class EntryState:
    r: float
    theta: float
    psi: float
    v: float
    chi: float
    beta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.theta, self.psi, self.v, self.chi, self.beta])

    @classmethod
    def from_array(cls, y: Sequence[float]) -> "EntryState":
        return cls(*(float(value) for value in y))


@dataclass(frozen=True)
class VehicleGeometry:
    S: float  # m^2
    theta: float  # half-cone angle, rad
    rn_over_rb: float
    mass: float  # kg
    lift_coefficient: float = 0.0
    bank: float = 0.0  # rad

    @property
    def base_radius(self) -> float:
        return math.sqrt(self.S / math.pi)

    @property
    def nose_radius(self) -> float:
        return self.rn_over_rb * self.base_radius


@dataclass(frozen=True)
class AtmosphereModel:
    rho0: float  # kg/m^3
    H: float  # km
    planet_radius: float = 3389.5
    mu: float = 42828.0
    gamma: float = 1.3

    def __post_init__(self):
        if not self.H > 0.0:
            raise DomainError("Scale height must be positive", {"H": self.H})

    def density(self, altitude):
        return self.rho0 * np.exp(-np.asarray(altitude) / self.H)


@dataclass(frozen=True)
class AeroCoefficients:
    cd0: float
    cpt2: float
    cl_max: float
    n: float

    def drag(self, cl: float) -> float:
        """Power-law drag polar."""
        if self.cd0 == 0.0:
            return 0.0
        return self.cd0 + self.cd0 / ((self.n - 1.0) * self.cl_max**self.n) * abs(cl) ** self.n


def stagnation_pressure_coefficient(gamma: float, mach: float) -> float:
    if not gamma > 1.0:
        raise DomainError("Specific-heat ratio must exceed 1", {"gamma": gamma})
    g = gamma
    inner = (g + 1.0) / (2.0 * g - (g - 1.0) / mach**2)
    return 2.0 / g * ((g + 1.0) / 2.0) ** (g / (g - 1.0)) * inner ** (1.0 / (g - 1.0)) - 2.0 / (g * mach**2)


def aero_coefficients(
    theta: float,
    rn_over_rb: float,
    gamma: float,
    mach: float,
    n: float,
    a: float = 1.0,
    b: float = 1.0,
) -> AeroCoefficients:
    """Zero-lift drag of a blunted cone, its critical lift and the polar exponent."""
    if n == 1.0:
        raise DomainError("Drag polar exponent n = 1 is singular")
    cpt2 = stagnation_pressure_coefficient(gamma, mach)
    s2 = math.sin(theta) ** 2
    c2 = math.cos(theta) ** 2
    ratio2 = rn_over_rb**2
    cd0 = cpt2 * (s2 * (1.0 - ratio2 * c2) + 0.5 * ratio2 * (1.0 - s2 * s2))
    cl_max = (n - b) * n * cd0 / (a * (n - 1.0))
    return AeroCoefficients(cd0, cpt2, cl_max, n)


def heat_flux(rho, nose_radius: float, v):
    """Stagnation heat flux in W/cm² with v in m/s."""
    return HEAT_FLUX_CONSTANT * np.sqrt(np.asarray(rho) / nose_radius) * np.asarray(v) ** 3


class EntryModel:
    def __init__(
        self,
        vehicle: VehicleGeometry,
        atmosphere: AtmosphereModel,
        coefficients: AeroCoefficients,
        g0: float = 9.80665,
    ):
        self.vehicle = vehicle
        self.atmosphere = atmosphere
        self.coefficients = coefficients
        self.g0 = g0
        self.cd = coefficients.drag(vehicle.lift_coefficient)

    def forces(self, r, v) -> Tuple[np.ndarray, np.ndarray]:
        """Lift and drag in newtons."""
        rho = self.atmosphere.density(np.asarray(r) - self.atmosphere.planet_radius)
        pressure = 0.5 * rho * self.vehicle.S * (np.asarray(v) * 1000.0) ** 2
        return pressure * self.vehicle.lift_coefficient, pressure * self.cd

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        r, _, psi, v, chi, beta = y
        g = self.atmosphere.mu / r**2
        lift, drag = self.forces(r, v)
        lift_acc = lift / self.vehicle.mass / 1000.0
        drag_acc = drag / self.vehicle.mass / 1000.0
        cos_b, sin_b = math.cos(beta), math.sin(beta)
        bank = self.vehicle.bank
        return np.array([
            v * sin_b,
            v * cos_b * math.sin(chi) / (r * math.cos(psi)),
            v * cos_b * math.cos(chi) / r,
            -g * sin_b - drag_acc,
            v * cos_b * math.sin(chi) / r * math.tan(psi) + lift_acc * math.sin(bank) / (v * cos_b),
            -g * cos_b / v + lift_acc * math.cos(bank) / v + v * cos_b / r,
        ])

    def heat_flux(self, r, v):
        rho = self.atmosphere.density(np.asarray(r) - self.atmosphere.planet_radius)
        return heat_flux(rho, self.vehicle.nose_radius, np.asarray(v) * 1000.0)

    def load_factor(self, r, v):
        lift, drag = self.forces(r, v)
        return np.hypot(lift, drag) / (self.vehicle.mass * self.g0)


@dataclass
class EntryTrajectory:
    status: EntryStatus
    t: np.ndarray
    states: np.ndarray  # (6, m)
    heat_flux: np.ndarray
    load_factor: np.ndarray
    planet_radius: float

    @property
    def q_max(self) -> float:
        return float(self.heat_flux.max())

    @property
    def n_g_max(self) -> float:
        return float(self.load_factor.max())

    @property
    def final_state(self) -> EntryState:
        return EntryState.from_array(self.states[:, -1])

    def table(self) -> pd.DataFrame:
        r, _, psi, v, chi, beta = self.states
        return pd.DataFrame({
            "t": self.t,
            "h": r - self.planet_radius,
            "v": v,
            "beta": beta,
            "chi": chi,
            "psi": psi,
            "q": self.heat_flux,
            "n_g": self.load_factor,
        })


def propagate_entry(
    state0: EntryState,
    vehicle: VehicleGeometry,
    atmosphere: AtmosphereModel,
    coefficients: AeroCoefficients,
    interface_altitude: float = 120.0,
    rtol: float = 1e-9,
    atol: float = 1e-9,
    max_time: float = 4000.0,
    g0: float = 9.80665,
) -> EntryTrajectory:
    """Integrates until atmospheric exit, surface impact or the time horizon."""
    if not state0.v > 0.0:
        raise DomainError("Entry speed must be positive", {"v": state0.v})
    model = EntryModel(vehicle, atmosphere, coefficients, g0)
    radius = atmosphere.planet_radius

    def exit_event(t, y):
        return y[0] - radius - interface_altitude

    exit_event.terminal = True
    exit_event.direction = 1.0

    def impact_event(t, y):
        return y[0] - radius

    impact_event.terminal = True
    impact_event.direction = -1.0

    solution = solve_ivp(
        model.rhs,
        (0.0, max_time),
        state0.as_array(),
        method="DOP853",
        rtol=rtol,
        atol=atol,
        events=(exit_event, impact_event),
        dense_output=True,
    )
    if solution.status == -1:
        raise IntegrationError(
            f"Entry propagation failed: {solution.message}",
            {"t": float(solution.t[-1]), "v0": state0.v, "beta0": state0.beta},
        )
    if solution.t_events[1].size:
        status = EntryStatus.CRASHED
    elif solution.t_events[0].size:
        status = EntryStatus.EXIT
    else:
        status = EntryStatus.TIMEOUT

    t_end = float(solution.t[-1])
    dense = np.linspace(0.0, t_end, DENSE_SAMPLES) if t_end > 0.0 else np.zeros(1)
    t = np.union1d(solution.t, dense)
    states = solution.sol(t) if t_end > 0.0 else solution.y
    states[:, -1] = solution.y[:, -1]
    r, v = states[0], states[3]
    return EntryTrajectory(
        status=status,
        t=t if t_end > 0.0 else solution.t,
        states=states,
        heat_flux=model.heat_flux(r, v),
        load_factor=model.load_factor(r, v),
        planet_radius=radius,
    )


@dataclass(frozen=True)
class ExitOrbit:
    energy: float  # km^2/s^2
    angular_momentum: float  # km^2/s
    eccentricity: float
    pericentre: float  # km
    apocentre: float  # km, inf when unbound
    inclination: float  # rad

    @property
    def hyperbolic(self) -> bool:
        return self.energy >= 0.0


def exit_orbit(state: EntryState, mu: float) -> ExitOrbit:
    energy = 0.5 * state.v**2 - mu / state.r
    momentum = state.r * state.v * math.cos(state.beta)
    eccentricity = math.sqrt(max(0.0, 1.0 + 2.0 * energy * momentum**2 / mu**2))
    pericentre = momentum**2 / mu / (1.0 + eccentricity)
    if energy < 0.0:
        apocentre = momentum**2 / mu / (1.0 - eccentricity) if eccentricity < 1.0 else math.inf
    else:
        apocentre = math.inf
    cos_i = max(-1.0, min(1.0, math.cos(state.psi) * math.sin(state.chi)))
    return ExitOrbit(energy, momentum, eccentricity, pericentre, apocentre, math.acos(cos_i))


def _speed_on(r: float, r_other: float, mu: float) -> float:
    """Speed at radius r on the ellipse whose apsides are r and r_other."""
    return math.sqrt(2.0 * mu * r_other / (r * (r + r_other)))


@dataclass(frozen=True)
class ManeuverBudget:
    dv1: float
    dv2: float
    dv3: float
    dvi: float
    propellant_fraction: float

    @property
    def total(self) -> float:
        return self.dv1 + self.dv2 + self.dv3 + self.dvi

    @classmethod
    def failed(cls) -> "ManeuverBudget":
        return cls(math.inf, math.inf, math.inf, math.inf, 1.0)


def propellant_mass_fraction(total_dv: float, isp: float, g0: float = 9.80665) -> float:
    """Rocket-equation fraction of the vehicle mass; dv in km/s."""
    if math.isinf(total_dv):
        return 1.0
    return float(-math.expm1(-total_dv * 1000.0 / (isp * g0)))


def corrective_dv_budget(
    orbit: Optional[ExitOrbit],
    target: TargetOrbit,
    planet_radius: float,
    mu: float,
    isp: float = 350.0,
    g0: float = 9.80665,
) -> ManeuverBudget:
    """Impulsive corrections from the post-pass orbit to the target orbit.

    An unbound orbit is captured at pericentre into the target apocentre (dv1);
    the pericentre is then set at apocentre (dv2) together with the plane change
    (dvi), and the apocentre trimmed at the new pericentre (dv3). `orbit` None
    marks a failed pass.
    """
    if orbit is None:
        return ManeuverBudget.failed()
    r_pt = planet_radius + target.pericentre_altitude
    r_at = planet_radius + target.apocentre_altitude
    r_p = orbit.pericentre
    if orbit.hyperbolic or not math.isfinite(orbit.apocentre):
        v_hyperbolic = math.sqrt(2.0 * orbit.energy + 2.0 * mu / r_p)
        dv1 = abs(v_hyperbolic - _speed_on(r_p, r_at, mu))
        r_a = r_at
    else:
        dv1 = 0.0
        r_a = orbit.apocentre
    dv2 = abs(_speed_on(r_a, r_pt, mu) - _speed_on(r_a, r_p, mu))
    delta_i = abs(orbit.inclination - math.radians(target.inclination_deg))
    dvi = 2.0 * _speed_on(r_a, r_pt, mu) * math.sin(delta_i / 2.0)
    dv3 = abs(_speed_on(r_pt, r_at, mu) - _speed_on(r_pt, r_a, mu))
    total = dv1 + dv2 + dv3 + dvi
    return ManeuverBudget(dv1, dv2, dv3, dvi, propellant_mass_fraction(total, isp, g0))


@dataclass(frozen=True)
class AerocaptureDesign:
    v: float  # km/s
    beta: float  # deg
    nu: float  # rad
    lift_fraction: float  # C_l / C_Lmax
    theta: float  # deg
    S: float
    rn_over_rb: float
    m_max: float = 1.0
    sigma1: float = 0.0
    sigma2: float = 0.0

    @classmethod
    def from_vector(cls, x: Sequence[float]) -> "AerocaptureDesign":
        x = [float(value) for value in x]
        if len(x) != len(DECISION_NAMES):
            raise DomainError("Aerocapture design needs 10 components", {"received": len(x)})
        return cls(*x)


@dataclass(frozen=True)
class PassOutcome:
    trajectory: Optional[EntryTrajectory]
    budget: ManeuverBudget

    @property
    def response(self) -> List[float]:
        if self.trajectory is None:
            return [1.0, math.inf, math.inf]
        return [self.budget.propellant_fraction, self.trajectory.q_max, self.trajectory.n_g_max]


def simulate_pass(design: AerocaptureDesign, uncertain: Dict[str, float], config: AerocaptureConfig) -> PassOutcome:
    """One entry with the uncertain parameters fixed; δ-terms are already margin-scaled."""
    atmosphere = AtmosphereModel(
        rho0=uncertain["rho0"],
        H=uncertain["H"],
        planet_radius=config.planet_radius,
        mu=config.mu,
        gamma=uncertain["gamma"],
    )
    coefficients = aero_coefficients(
        math.radians(design.theta),
        design.rn_over_rb,
        atmosphere.gamma,
        config.mach,
        uncertain["n"],
        config.polar_a,
        config.polar_b,
    )
    vehicle = VehicleGeometry(
        S=design.S,
        theta=math.radians(design.theta),
        rn_over_rb=design.rn_over_rb,
        mass=config.vehicle_mass,
        lift_coefficient=design.lift_fraction * coefficients.cl_max,
        bank=design.nu,
    )
    speed = design.v + uncertain.get("dv", 0.0)
    if speed <= 0.0:
        return PassOutcome(None, ManeuverBudget.failed())
    state0 = EntryState(
        r=config.planet_radius + config.interface_altitude,
        theta=0.0,
        psi=0.0,
        v=speed,
        chi=math.radians(config.heading_deg + uncertain.get("dchi", 0.0)),
        beta=math.radians(design.beta + uncertain.get("dbeta", 0.0)),
    )
    trajectory = propagate_entry(
        state0,
        vehicle,
        atmosphere,
        coefficients,
        config.interface_altitude,
        config.rtol,
        config.atol,
        config.max_time,
        config.g0,
    )
    if trajectory.status is EntryStatus.EXIT:
        orbit = exit_orbit(trajectory.final_state, config.mu)
    else:
        orbit = None
    budget = corrective_dv_budget(orbit, config.target, config.planet_radius, config.mu, config.isp, config.g0)
    return PassOutcome(trajectory, budget)


def aerocapture_space_model(config: AerocaptureConfig) -> UncertainSpaceModel:
    if config.uncertainty is not None:
        model = config.uncertainty
    else:
        model = UncertainSpaceModel.model_validate(read_json_file(data_file("aerocapture_uncertainty.json")))
    margins = dict(model.margin_indices)
    if config.heading_margin is not None:
        margins["dchi"] = 0 if config.heading_margin == "sigma1" else 1
    return model.model_copy(update={"margin_indices": margins})


def robust_aerocapture_problem(config: Optional[AerocaptureConfig] = None) -> Tuple[ProblemDefinition, RobustProblem]:
    """Decision [v, β, ν, C_l/C_Lmax, Θ, S, Rn/Rb, m_max, σ1, σ2]."""
    config = config or AerocaptureConfig()
    space = space_from_model(aerocapture_space_model(config))
    missing = [name for name in UNCERTAIN_NAMES if name not in space.names]
    if missing:
        raise DomainError(f"Aerocapture uncertain space lacks parameters: {missing}")
    positions = {name: space.index_of(name) for name in UNCERTAIN_NAMES}
    binding = EvidenceBinding(
        space,
        ExtremumMethod(config.evidence.method.value),
        config.evidence.n_samples,
        config.evidence.seed,
        config.evidence.padding,
    )

    def response_for(x: np.ndarray):
        design = AerocaptureDesign.from_vector(x)

        def response(u: np.ndarray) -> List[float]:
            values = {name: float(u[i]) for name, i in positions.items()}
            return simulate_pass(design, values, config).response

        return response

    def objectives(x: np.ndarray, result) -> List[float]:
        design = AerocaptureDesign.from_vector(x)
        return [
            1.0 - result.belief(ThresholdEvent(0, design.m_max, Direction.LT)),
            -(design.sigma1 + design.sigma2),
            design.m_max,
        ]

    def constraints(x: np.ndarray, result) -> List[float]:
        return [
            config.confidence - result.belief(ThresholdEvent(1, config.heat_flux_max, Direction.LEQ)),
            config.confidence - result.belief(ThresholdEvent(2, config.load_factor_max, Direction.LEQ)),
        ]

    robust = RobustProblem(
        binding,
        response_for,
        objectives,
        constraints,
        margins_for=lambda x: (float(x[8]), float(x[9])),
    )
    lower, upper = decision_bounds(config.space)
    problem = ProblemDefinition(
        name=f"aerocapture-{SolutionSpace(config.space).value}",
        lower=lower,
        upper=upper,
        evaluate=robust.evaluate,
        n_objectives=3,
        n_constraints=2,
        variable_names=DECISION_NAMES,
    )
    return problem, robust
