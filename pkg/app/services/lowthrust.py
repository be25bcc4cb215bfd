"""Shape-based low-thrust transfer model and its robust formulation.

Equinoctial elements follow an exponential shape in true longitude between
the departure and arrival states; the control acceleration comes from
inverting the two-body dynamics along the shaped path. Lengths are in km,
times in seconds internally, epochs and durations in days.
"""

import logging
import math
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import quad, solve_ivp
from scipy.optimize import newton

from app.core.config import data_file
from app.core.errors import DomainError, EvaluationError, IntegrationError, ModelError
from app.models.problem_models import LowThrustConfig, PlanetEphemeris
from app.services.evidence import (
    Direction,
    EvidenceBinding,
    ExtremumMethod,
    RobustProblem,
    ThresholdEvent,
    load_uncertain_space,
    space_from_model,
)
from app.services.macs import ProblemDefinition, load_domain_table

logger = logging.getLogger(__name__)

AU = 1.495978707e8  # km
SECONDS_PER_DAY = 86400.0
MAX_EXPONENT = 50.0
LINEAR_LIMIT = 1e-8
QUAD_EPSREL = 1e-10
# finite-difference noise floor on the control magnitude
QUAD_ACCEPT = 1e-7
SUMMARY_CACHE_SIZE = 256
ELEMENT_NAMES = ("p", "f", "g", "h", "k")
# shaping exponent index for p, f, g, h, k
ELEMENT_GROUP = (0, 1, 1, 2, 2)

DECISION_NAMES = ("N", "t0", "tf", "w", "A", "alpha21", "alpha22", "alpha23", "m_max")
UNCERTAIN_NAMES = ("eta_p", "p0", "eta_e")


@dataclass(frozen=True)
class EquinoctialState:
    p: float
    f: float
    g: float
    h: float
    k: float
    L: float

    def __post_init__(self):
        if not self.p > 0.0:
            raise ModelError("Semi-latus rectum must be positive", {"p": self.p})
        if not 1.0 + self.f * math.cos(self.L) + self.g * math.sin(self.L) > 0.0:
            raise ModelError("Equinoctial state has a non-positive radius", {"L": self.L})

    def elements(self) -> np.ndarray:
        return np.array([self.p, self.f, self.g, self.h, self.k])


@dataclass(frozen=True)
class ShapeParameters:
    """Per-element α0, α1 and the three shared exponents α2.

    Elements whose group is in `linear` follow the straight-line limit instead
    of the exponential, and their α0/α1 are the intercept and slope in L - L0.
    """

    alpha0: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    linear: Tuple[bool, bool, bool]


@dataclass(frozen=True)
class LowThrustDesign:
    N: int
    t0: float
    tf: float
    w: float
    A: float
    alpha2: Tuple[float, float, float]
    m_max: float = 1.0

    @classmethod
    def from_vector(cls, x: Sequence[float]) -> "LowThrustDesign":
        x = np.asarray(x, dtype=float)
        if x.size not in (8, 9):
            raise DomainError("Low-thrust design needs 8 or 9 components", {"received": x.size})
        m_max = float(x[8]) if x.size == 9 else 1.0
        return cls(int(round(x[0])), float(x[1]), float(x[2]), float(x[3]), float(x[4]), tuple(float(v) for v in x[5:8]), m_max)

    def to_vector(self) -> np.ndarray:
        return np.array([self.N, self.t0, self.tf, self.w, self.A, *self.alpha2, self.m_max], dtype=float)

    def check_bounds(self) -> None:
        x = self.to_vector()
        lower, upper = decision_bounds()
        for name, value, lo, hi in zip(DECISION_NAMES, x, lower, upper):
            if not lo <= value <= hi:
                raise DomainError(f"Design variable {name} outside its bounds", {"value": value, "lo": lo, "hi": hi})


def decision_bounds() -> Tuple[np.ndarray, np.ndarray]:
    _, lower, upper = load_domain_table(data_file("lowthrust_domain.json"), DECISION_NAMES)
    return lower, upper


def _wrap(angle: float) -> float:
    return angle % (2.0 * math.pi)


def planet_state(planet: PlanetEphemeris, epoch: float, mu: float) -> EquinoctialState:
    """Equinoctial elements of a Keplerian planet at an MJD2000 epoch."""
    a = planet.semi_major_axis_au * AU
    e = planet.eccentricity
    varpi = math.radians(planet.longitude_perihelion_deg)
    mean_motion = math.sqrt(mu / a**3) * SECONDS_PER_DAY
    mean_longitude = math.radians(planet.mean_longitude_deg) + mean_motion * epoch
    if e == 0.0:
        true_longitude = mean_longitude
    else:
        M = _wrap(mean_longitude - varpi)
        E = newton(lambda E: E - e * math.sin(E) - M, M, fprime=lambda E: 1.0 - e * math.cos(E))
        nu = 2.0 * math.atan2(math.sqrt(1.0 + e) * math.sin(E / 2.0), math.sqrt(1.0 - e) * math.cos(E / 2.0))
        true_longitude = varpi + nu
    half_tan = math.tan(math.radians(planet.inclination_deg) / 2.0)
    raan = math.radians(planet.raan_deg)
    return EquinoctialState(
        p=a * (1.0 - e * e),
        f=e * math.cos(varpi),
        g=e * math.sin(varpi),
        h=half_tan * math.cos(raan),
        k=half_tan * math.sin(raan),
        L=_wrap(true_longitude),
    )


def boundary_states(design: LowThrustDesign, config: LowThrustConfig) -> Tuple[EquinoctialState, EquinoctialState]:
    """Departure at t0 and arrival at t0 + tf, with N extra revolutions on the arrival longitude."""
    departure = planet_state(config.departure, design.t0, config.mu_sun)
    arrival = planet_state(config.arrival, design.t0 + design.tf, config.mu_sun)
    Lf = departure.L + _wrap(arrival.L - departure.L) + 2.0 * math.pi * design.N
    return departure, EquinoctialState(arrival.p, arrival.f, arrival.g, arrival.h, arrival.k, Lf)


def equinoctial_to_position(elements: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Cartesian position (km) from elements of shape (5, m) at longitudes L; returns (3, m)."""
    p, f, g, h, k = elements
    w = 1.0 + f * np.cos(L) + g * np.sin(L)
    if np.any(p <= 0.0) or np.any(w <= 0.0):
        raise ModelError("Shaped trajectory reaches a non-positive radius")
    r = p / w
    s2 = 1.0 + h * h + k * k
    a2 = h * h - k * k
    cos_l, sin_l = np.cos(L), np.sin(L)
    return np.array([
        r / s2 * (cos_l + a2 * cos_l + 2.0 * h * k * sin_l),
        r / s2 * (sin_l - a2 * sin_l + 2.0 * h * k * cos_l),
        2.0 * r / s2 * (h * sin_l - k * cos_l),
    ])


def longitude_rate(elements: np.ndarray, L: np.ndarray, mu: float) -> np.ndarray:
    """dL/dt = sqrt(μp) (w/p)² in rad/s."""
    p, f, g = elements[0], elements[1], elements[2]
    w = 1.0 + f * np.cos(L) + g * np.sin(L)
    return np.sqrt(mu * p) * (w / p) ** 2


class ShapedTrajectory:
    """Sampler of the shaped elements on [L0, Lf]."""

    def __init__(self, departure: EquinoctialState, arrival: EquinoctialState, alpha2: Sequence[float]):
        self.departure = departure
        self.arrival = arrival
        self.L0 = departure.L
        self.Lf = arrival.L
        self.span = self.Lf - self.L0
        if not self.span > 0.0:
            raise DomainError("Arrival longitude must follow departure", {"L0": self.L0, "Lf": self.Lf})
        start, end = departure.elements(), arrival.elements()
        self._start = start
        self._delta = end - start
        limit = MAX_EXPONENT / self.span
        alpha2 = np.clip(np.asarray(alpha2, dtype=float), -limit, limit)
        self.alpha2 = alpha2
        linear = tuple(bool(abs(a * self.span) < LINEAR_LIMIT) for a in alpha2)
        for group, is_linear in enumerate(linear):
            if is_linear:
                logger.info(f"Shaping exponent {group + 1} is degenerate; using the linear limit")
        self.linear = linear
        self._exponent = np.array([alpha2[ELEMENT_GROUP[i]] for i in range(5)])
        self._linear = np.array([linear[ELEMENT_GROUP[i]] for i in range(5)])
        self._denominator = np.where(self._linear, self.span, np.expm1(self._exponent * self.span))

    @property
    def parameters(self) -> ShapeParameters:
        alpha1 = np.where(self._linear, self._delta / self.span, self._delta / self._denominator)
        alpha0 = np.where(self._linear, self._start, self._start - alpha1)
        return ShapeParameters(alpha0, alpha1, self.alpha2.copy(), self.linear)

    def _fraction(self, L: np.ndarray) -> np.ndarray:
        offset = np.asarray(L, dtype=float) - self.L0
        x = np.multiply.outer(self._exponent, offset)
        exponential = np.expm1(x) / self._denominator[:, None]
        linear = np.broadcast_to(offset / self.span, x.shape)
        return np.where(self._linear[:, None], linear, exponential)

    def elements(self, L) -> np.ndarray:
        """Elements (5, m) at longitudes L (array or scalar)."""
        scalar = np.ndim(L) == 0
        values = self._start[:, None] + self._delta[:, None] * self._fraction(np.atleast_1d(L))
        return values[:, 0] if scalar else values

    def position(self, L) -> np.ndarray:
        L = np.atleast_1d(np.asarray(L, dtype=float))
        return equinoctial_to_position(self.elements(L), L)

    def longitude_rate(self, L, mu: float) -> np.ndarray:
        L = np.atleast_1d(np.asarray(L, dtype=float))
        return longitude_rate(self.elements(L), L, mu)


def shape_trajectory(design: LowThrustDesign, states: Tuple[EquinoctialState, EquinoctialState]) -> Tuple[ShapeParameters, ShapedTrajectory]:
    trajectory = ShapedTrajectory(states[0], states[1], design.alpha2)
    return trajectory.parameters, trajectory


def _first_derivative(fn: Callable[[np.ndarray], np.ndarray], L: np.ndarray, h: float) -> np.ndarray:
    return (-fn(L + 2 * h) + 8 * fn(L + h) - 8 * fn(L - h) + fn(L - 2 * h)) / (12 * h)


def _second_derivative(fn: Callable[[np.ndarray], np.ndarray], L: np.ndarray, h: float) -> np.ndarray:
    return (-fn(L + 2 * h) + 16 * fn(L + h) - 30 * fn(L) + 16 * fn(L - h) - fn(L - 2 * h)) / (12 * h * h)


class ControlProfile:
    """Control acceleration a_d = r'' + μ r/r³ along a shaped trajectory (km/s²)."""

    def __init__(self, trajectory: ShapedTrajectory, mu: float, step: float = 2e-3):
        self.trajectory = trajectory
        self.mu = mu
        self.step = step

    def acceleration(self, L) -> np.ndarray:
        """Vectors (3, m); time derivatives via the chain rule in L."""
        L = np.atleast_1d(np.asarray(L, dtype=float))
        h = self.step
        position = self.trajectory.position
        rate = lambda angle: self.trajectory.longitude_rate(angle, self.mu)
        r = position(L)
        l_dot = rate(L)
        d_r = _first_derivative(position, L, h)
        dd_r = _second_derivative(position, L, h)
        d_rate = _first_derivative(rate, L, h)
        radius = np.linalg.norm(r, axis=0)
        return dd_r * l_dot**2 + d_r * d_rate * l_dot + self.mu * r / radius**3

    def velocity(self, L) -> np.ndarray:
        L = np.atleast_1d(np.asarray(L, dtype=float))
        return _first_derivative(self.trajectory.position, L, self.step) * self.trajectory.longitude_rate(L, self.mu)

    def magnitude(self, L) -> np.ndarray:
        """|a_d| in m/s²."""
        return np.linalg.norm(self.acceleration(L), axis=0) * 1000.0

    def rtn(self, L) -> np.ndarray:
        """Radial, transverse and normal components (3, m) in km/s²."""
        L = np.atleast_1d(np.asarray(L, dtype=float))
        r = self.trajectory.position(L)
        v = self.velocity(L)
        a = self.acceleration(L)
        r_hat = r / np.linalg.norm(r, axis=0)
        n = np.cross(r, v, axis=0)
        n_hat = n / np.linalg.norm(n, axis=0)
        t_hat = np.cross(n_hat, r_hat, axis=0)
        return np.array([
            np.sum(a * r_hat, axis=0),
            np.sum(a * t_hat, axis=0),
            np.sum(a * n_hat, axis=0),
        ])


def control_profile(trajectory: ShapedTrajectory, mu: float, step: float = 2e-3) -> ControlProfile:
    return ControlProfile(trajectory, mu, step)


def integrate_over_longitude(integrand: Callable[[float], float], L0: float, Lf: float, limit: int = 200) -> float:
    """Adaptive quadrature in L; a non-converged result raises EvaluationError."""
    result = quad(integrand, L0, Lf, full_output=1, limit=limit, epsabs=0.0, epsrel=QUAD_EPSREL)
    value, error, info = result[0], result[1], result[2]
    if len(result) > 3:
        message = result[3]
        if not error <= QUAD_ACCEPT * abs(value):
            raise EvaluationError(
                "Quadrature did not converge",
                {"L0": L0, "Lf": Lf, "estimate": value, "abserr": error, "intervals": info.get("last")},
            )
        logger.debug(f"Quadrature stopped early ({message}): {value} ± {error}")
    return float(value)


def delta_v(magnitude: Callable[[float], float], rate: Callable[[float], float], L0: float, Lf: float, limit: int = 200) -> float:
    """∫ |a_d| dt = ∫ |a_d| / L̇ dL, in the magnitude's units times seconds."""
    return integrate_over_longitude(lambda L: float(magnitude(L)) / float(rate(L)), L0, Lf, limit)


def propellant_fraction(dv: float, isp: float, g0: float) -> float:
    """1 - exp(-Δv/(I_sp g0)); dv in m/s."""
    return float(-math.expm1(-dv / (isp * g0)))


def specific_impulse(eta_e: float, w: float, g0: float, scale: float = 1.0) -> float:
    return 2.0 * eta_e * w / g0 * scale


def max_thrust(eta_p: float, w: float, A: float, p0: float, r_au, scale: float = 1.0):
    return eta_p * w * A * p0 / np.asarray(r_au) ** 2 * scale


@dataclass
class TransferSummary:
    """Uncertainty-free quantities of one design."""

    design: LowThrustDesign
    trajectory: ShapedTrajectory
    profile: ControlProfile
    delta_v: float  # m/s
    time_of_flight: float  # days
    grid: np.ndarray
    grid_radius_au: np.ndarray
    grid_acceleration: np.ndarray  # m/s²


def summarize_transfer(design: LowThrustDesign, config: LowThrustConfig) -> TransferSummary:
    states = boundary_states(design, config)
    _, trajectory = shape_trajectory(design, states)
    profile = control_profile(trajectory, config.mu_sun, config.derivative_step)
    rate = lambda L: trajectory.longitude_rate(L, config.mu_sun)[0]
    dv = delta_v(lambda L: profile.magnitude(L)[0], rate, trajectory.L0, trajectory.Lf, config.quad_limit)
    seconds = integrate_over_longitude(lambda L: 1.0 / rate(L), trajectory.L0, trajectory.Lf, config.quad_limit)
    grid = np.linspace(trajectory.L0, trajectory.Lf, config.margin_grid)
    radius = np.linalg.norm(trajectory.position(grid), axis=0) / AU
    return TransferSummary(
        design=design,
        trajectory=trajectory,
        profile=profile,
        delta_v=dv,
        time_of_flight=seconds / SECONDS_PER_DAY,
        grid=grid,
        grid_radius_au=radius,
        grid_acceleration=profile.magnitude(grid),
    )


@dataclass(frozen=True)
class MassAndTime:
    propellant: float  # m_p fraction
    array_mass: float  # m_SA fraction
    time_of_flight: float  # days
    thrust_margin: float
    time_residual: float  # |tf - T| in days


def mass_and_time(
    design: LowThrustDesign,
    uncertain_values: Dict[str, float],
    config: Optional[LowThrustConfig] = None,
    summary: Optional[TransferSummary] = None,
) -> MassAndTime:
    config = config or LowThrustConfig()
    summary = summary or summarize_transfer(design, config)
    isp = specific_impulse(uncertain_values["eta_e"], design.w, config.g0, config.isp_scale)
    m_p = propellant_fraction(summary.delta_v, isp, config.g0)
    m_sa = 1.1 * design.A * config.array_density / config.reference_mass
    mass = (m_p + m_sa + config.structure_mass) * config.reference_mass
    thrust = max_thrust(uncertain_values["eta_p"], design.w, design.A, uncertain_values["p0"], summary.grid_radius_au, config.thrust_scale)
    margin = float(np.min(thrust - mass * summary.grid_acceleration))
    return MassAndTime(m_p, m_sa, summary.time_of_flight, margin, abs(design.tf - summary.time_of_flight))


def lowthrust_space(config: LowThrustConfig):
    if config.uncertainty is not None:
        space = space_from_model(config.uncertainty)
    else:
        space = load_uncertain_space(data_file("lowthrust_uncertainty.json"))
    missing = [name for name in UNCERTAIN_NAMES if name not in space.names]
    if missing:
        raise DomainError(f"Low-thrust uncertain space lacks parameters: {missing}")
    return space


def robust_lowthrust_problem(config: Optional[LowThrustConfig] = None) -> Tuple[ProblemDefinition, RobustProblem]:
    """Decision [N, t0, tf, w, A, α21, α22, α23, m_max]; N is the integer revolution count."""
    config = config or LowThrustConfig()
    space = lowthrust_space(config)
    positions = [space.index_of(name) for name in UNCERTAIN_NAMES]
    binding = EvidenceBinding(
        space,
        ExtremumMethod(config.evidence.method.value),
        config.evidence.n_samples,
        config.evidence.seed,
        config.evidence.padding,
    )
    cache: Dict[Tuple[float, ...], TransferSummary] = {}
    # shared by parallel repeats and batch workers
    cache_lock = threading.Lock()

    def summary_for(x: np.ndarray) -> TransferSummary:
        key = tuple(np.asarray(x[:8], dtype=float).tolist())
        with cache_lock:
            summary = cache.get(key)
        if summary is not None:
            return summary
        summary = summarize_transfer(LowThrustDesign.from_vector(x), config)
        with cache_lock:
            if len(cache) > SUMMARY_CACHE_SIZE:
                cache.clear()
            cache[key] = summary
        return summary

    def response_for(x: np.ndarray):
        summary = summary_for(x)
        design = summary.design

        def response(u: np.ndarray) -> List[float]:
            values = {name: float(u[i]) for name, i in zip(UNCERTAIN_NAMES, positions)}
            result = mass_and_time(design, values, config, summary)
            return [result.propellant + result.array_mass, result.thrust_margin]

        return response

    def objectives(x: np.ndarray, result) -> List[float]:
        m_max = float(x[8])
        return [1.0 - result.belief(ThresholdEvent(0, m_max, Direction.LT)), config.m_max_sign * m_max]

    def constraints(x: np.ndarray, result) -> List[float]:
        residual = abs(float(x[2]) - summary_for(x).time_of_flight)
        return [
            config.confidence - result.belief(ThresholdEvent(1, 0.0, Direction.GEQ)),
            residual - config.time_tolerance,
        ]

    robust = RobustProblem(binding, response_for, objectives, constraints)
    lower, upper = decision_bounds()
    problem = ProblemDefinition(
        name="lowthrust",
        lower=lower,
        upper=upper,
        evaluate=robust.evaluate,
        n_objectives=2,
        n_constraints=2,
        n_integer=1,
        variable_names=DECISION_NAMES,
    )
    return problem, robust


def gauss_rates(elements: np.ndarray, L: float, control_rtn: np.ndarray, mu: float) -> np.ndarray:
    """Equinoctial element derivatives with respect to L under an RTN acceleration (km/s²)."""
    p, f, g, h, k = elements
    a_r, a_t, a_n = control_rtn
    cos_l, sin_l = math.cos(L), math.sin(L)
    w = 1.0 + f * cos_l + g * sin_l
    s2 = 1.0 + h * h + k * k
    root = math.sqrt(p / mu)
    plane = h * sin_l - k * cos_l
    rates = root * np.array([
        2.0 * p / w * a_t,
        a_r * sin_l + ((w + 1.0) * cos_l + f) * a_t / w - plane * g * a_n / w,
        -a_r * cos_l + ((w + 1.0) * sin_l + g) * a_t / w + plane * f * a_n / w,
        s2 * a_n * cos_l / (2.0 * w),
        s2 * a_n * sin_l / (2.0 * w),
    ])
    l_dot = math.sqrt(mu * p) * (w / p) ** 2 + root * plane * a_n / w
    return rates / l_dot


@dataclass
class ElementComparison:
    table: pd.DataFrame
    max_deviation: Dict[str, float]


def compare_shaped_and_propagated(
    design: LowThrustDesign,
    config: Optional[LowThrustConfig] = None,
    points: int = 400,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> ElementComparison:
    """Propagates the element equations under the shaped control and samples both sets."""
    config = config or LowThrustConfig()
    design.check_bounds()
    _, trajectory = shape_trajectory(design, boundary_states(design, config))
    profile = control_profile(trajectory, config.mu_sun, config.derivative_step)
    grid = np.linspace(trajectory.L0, trajectory.Lf, points)

    def rhs(L: float, y: np.ndarray) -> np.ndarray:
        return gauss_rates(y, L, profile.rtn(L)[:, 0], config.mu_sun)

    solution = solve_ivp(
        rhs,
        (trajectory.L0, trajectory.Lf),
        trajectory.departure.elements(),
        method="DOP853",
        t_eval=grid,
        rtol=rtol,
        atol=atol,
    )
    if not solution.success:
        raise IntegrationError(f"Element propagation failed: {solution.message}", {"L": float(solution.t[-1]) if solution.t.size else None})
    shaped = trajectory.elements(grid)
    propagated = solution.y
    columns = {"L": grid}
    deviation = {}
    for i, name in enumerate(ELEMENT_NAMES):
        columns[f"{name}_shaped"] = shaped[i]
        columns[f"{name}_prop"] = propagated[i]
        deviation[name] = float(np.max(np.abs(shaped[i] - propagated[i])))
    return ElementComparison(pd.DataFrame(columns), deviation)


def trajectory_table(
    design: LowThrustDesign,
    config: Optional[LowThrustConfig] = None,
    uncertain_values: Optional[Dict[str, float]] = None,
    points: int = 200,
) -> pd.DataFrame:
    """Shaped elements, |a_d| (m/s²) and Φ_max along the transfer."""
    config = config or LowThrustConfig()
    uncertain_values = uncertain_values or {"eta_p": 0.875, "p0": 300.0, "eta_e": 0.65}
    _, trajectory = shape_trajectory(design, boundary_states(design, config))
    profile = control_profile(trajectory, config.mu_sun, config.derivative_step)
    grid = np.linspace(trajectory.L0, trajectory.Lf, points)
    elements = trajectory.elements(grid)
    position = trajectory.position(grid)
    frame = pd.DataFrame({"L": grid})
    for i, name in enumerate(ELEMENT_NAMES):
        frame[name] = elements[i]
    frame["x"], frame["y"], frame["z"] = position
    frame["a_d"] = profile.magnitude(grid)
    frame["phi_max"] = max_thrust(
        uncertain_values["eta_p"],
        design.w,
        design.A,
        uncertain_values["p0"],
        np.linalg.norm(position, axis=0) / AU,
        config.thrust_scale,
    )
    return frame
