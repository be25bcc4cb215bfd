from enum import Enum

from pydantic import BaseModel, Field, model_validator


class SelectionMode(str, Enum):
    FRONT_GUIDED = "front"
    MERIT = "merit"


class EngineConfig(BaseModel):
    """Multiagent search settings. Defaults follow common inertia/attraction values."""

    population_size: int = Field(10, ge=0)
    n_f: int = Field(5, ge=1)
    max_evaluations: int = Field(10000, ge=0)
    rho_min: float = Field(1e-4, gt=0.0, lt=1.0)
    collision_distance: float = Field(1e-3, ge=0.0)
    seed: int = Field(0, ge=0, le=2**64 - 1)
    w0: float = 0.7
    w1: float = 1.4
    w2: float = 1.4
    epsilon_accept: float = Field(0.0, ge=0.0)
    region_fraction: float = Field(0.25, gt=0.0, le=1.0)
    mutation_shape: float = Field(5.0, gt=0.0)
    boundary_fraction: float = Field(0.3, ge=0.0, le=1.0)
    archive_capacity: int = Field(200, ge=1)
    # generations between decomposition updates; 0 disables branching
    branch_period: int = Field(10, ge=0)
    max_depth: int = Field(10, ge=0)
    max_split_coordinates: int = Field(2, ge=1)
    selection_mode: SelectionMode = SelectionMode.FRONT_GUIDED
    nu: float = Field(0.5, ge=0.0, le=1.0)
    no_improve_threshold: int = Field(3, ge=0)
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_filter_size(self):
        if self.population_size and self.n_f > self.population_size:
            raise ValueError(f"n_f ({self.n_f}) exceeds population_size ({self.population_size})")
        return self
