import math
from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from app.models.evidence_models import UncertainSpaceModel


class BenchmarkId(str, Enum):
    DEB = "deb"
    ZDT4 = "zdt4"


class SolutionSpace(str, Enum):
    RESTRICTED = "restricted"
    EXTENDED = "extended"


class ExtremumMethodName(str, Enum):
    CORNERS = "corners"
    CORNERS_PLUS_SAMPLING = "corners_plus_sampling"
    GRID_ORACLE = "grid_oracle"


class Zdt4Config(BaseModel):
    n: int = Field(10, ge=2)


class DebConfig(BaseModel):
    n: int = Field(10, ge=2)
    theta: float = -0.2 * math.pi
    a: float = 0.2
    b: float = 10.0
    c: float = 1.0
    d: float = 6.0
    e: float = 1.0


class EvidenceOptions(BaseModel):
    method: ExtremumMethodName = ExtremumMethodName.CORNERS
    # interior Latin-hypercube samples per joint element; None means 50 per dimension
    n_samples: Optional[int] = Field(None, ge=0)
    max_corner_dimension: int = Field(12, ge=0)
    seed: int = Field(0, ge=0)
    padding: float = Field(0.0, ge=0.0)


class PlanetEphemeris(BaseModel):
    """Keplerian heliocentric orbit with elements at MJD2000."""

    name: str
    semi_major_axis_au: float = Field(gt=0.0)
    eccentricity: float = Field(0.0, ge=0.0, lt=1.0)
    inclination_deg: float = 0.0
    raan_deg: float = 0.0
    longitude_perihelion_deg: float = 0.0
    mean_longitude_deg: float = 0.0


EARTH = PlanetEphemeris(name="earth", semi_major_axis_au=1.0, mean_longitude_deg=100.46)
MARS = PlanetEphemeris(
    name="mars",
    semi_major_axis_au=1.524,
    inclination_deg=1.85,
    raan_deg=49.56,
    longitude_perihelion_deg=336.04,
    mean_longitude_deg=355.45,
)


class LowThrustConfig(BaseModel):
    mu_sun: float = 1.32712440018e11  # km^3/s^2
    g0: float = 9.80665  # m/s^2
    isp_scale: float = Field(1.0, gt=0.0)
    thrust_scale: float = Field(1.0, gt=0.0)
    structure_mass: float = Field(0.7, ge=0.0)  # m_s, fraction of reference mass
    array_density: float = Field(1.0, gt=0.0)  # rho_SA, kg/m^2
    reference_mass: float = Field(1000.0, gt=0.0)  # kg
    confidence: float = Field(0.99, gt=0.0, le=1.0)
    time_tolerance: float = Field(0.5, ge=0.0)  # days
    m_max_sign: Literal[-1, 1] = -1
    departure: PlanetEphemeris = EARTH
    arrival: PlanetEphemeris = MARS
    margin_grid: int = Field(200, ge=2)
    derivative_step: float = Field(2e-3, gt=0.0)
    quad_limit: int = Field(200, ge=10)
    uncertainty: Optional[UncertainSpaceModel] = None
    evidence: EvidenceOptions = EvidenceOptions()


class TargetOrbit(BaseModel):
    pericentre_altitude: float = Field(400.0, gt=0.0)  # km
    apocentre_altitude: float = Field(2000.0, gt=0.0)  # km
    inclination_deg: float = Field(0.0, ge=0.0, le=180.0)


class AerocaptureConfig(BaseModel):
    space: SolutionSpace = SolutionSpace.RESTRICTED
    mu: float = 42828.0  # km^3/s^2
    planet_radius: float = 3389.5  # km
    g0: float = 9.80665  # m/s^2
    interface_altitude: float = Field(120.0, gt=0.0)  # km
    mach: float = Field(25.0, gt=1.0)
    polar_a: float = 1.0
    polar_b: float = 1.0
    vehicle_mass: float = Field(1000.0, gt=0.0)  # kg
    isp: float = Field(350.0, gt=0.0)  # s
    heat_flux_max: float = 50.0  # W/cm^2
    load_factor_max: float = 5.0  # g
    confidence: float = Field(0.99, gt=0.0, le=1.0)
    heading_deg: float = 90.0  # chi0, measured from north
    # which margin scales the heading error: "sigma1", "sigma2" or None
    heading_margin: Optional[Literal["sigma1", "sigma2"]] = None
    target: TargetOrbit = TargetOrbit()
    rtol: float = Field(1e-9, gt=0.0)
    atol: float = Field(1e-9, gt=0.0)
    max_time: float = Field(4000.0, gt=0.0)  # s
    uncertainty: Optional[UncertainSpaceModel] = None
    evidence: EvidenceOptions = EvidenceOptions(
        method=ExtremumMethodName.CORNERS_PLUS_SAMPLING, n_samples=16
    )


class DomainTableModel(BaseModel):
    """Box bounds of a decision vector as tabulated (upper and lower rows)."""

    variables: List[str]
    units: Optional[List[str]] = None
    upper: List[float]
    lower: List[float]
    source: Optional[str] = None

    @model_validator(mode="after")
    def check_lengths(self):
        if not len(self.variables) == len(self.upper) == len(self.lower):
            raise ValueError("variables, upper and lower must have the same length")
        return self
