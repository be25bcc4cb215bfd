from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from app.models.engine_models import EngineConfig


class ProblemId(str, Enum):
    DEB = "deb"
    ZDT4 = "zdt4"
    LOWTHRUST = "lowthrust"
    AEROCAPTURE = "aerocapture"
    CUSTOM = "custom"


class RunManifest(BaseModel):
    """One batch of seeded runs on one problem."""

    problem: ProblemId
    engine: EngineConfig = EngineConfig()
    # optional path to a separate EngineConfig file, relative to the manifest
    engine_config: Optional[str] = None
    output_dir: str = "runs"
    seed: int = Field(0, ge=0)
    repeats: int = Field(1, ge=1)
    # overrides for DebConfig / Zdt4Config / LowThrustConfig / AerocaptureConfig
    problem_config: Dict[str, Any] = Field(default_factory=dict)
    # "package.module:factory" returning a ProblemDefinition, for problem = custom
    custom_problem: Optional[str] = None
    reference_points: int = Field(500, ge=2)


class RunTaskStatus(str, Enum):
    PENDING = "pending"
    PROCESSING = "processing"
    COMPLETED = "completed"
    FAILED = "failed"


class RunTaskCreate(BaseModel):
    problem: ProblemId
    engine: Dict[str, Any] = Field(default_factory=dict)
    problem_config: Dict[str, Any] = Field(default_factory=dict)
    custom_problem: Optional[str] = None
    seed: int = Field(0, ge=0)
    repeats: int = Field(1, ge=1)


class RunTaskResponse(BaseModel):
    task_id: str
    status: RunTaskStatus
    message: Optional[str] = None
    created_at: Optional[str] = None
    updated_at: Optional[str] = None


class RepeatResult(BaseModel):
    index: int
    seed: int
    evaluations: int
    generations: int
    archive_size: int
    feasible_entries: int
    distance_metric: Optional[float] = None
    partial: bool = False
    wall_time: float
    warnings: List[str] = Field(default_factory=list)


class RunSummary(BaseModel):
    problem: ProblemId
    repeats: List[RepeatResult]
    distance_mean: Optional[float] = None
    distance_std: Optional[float] = None
    feasible_total: int = 0
    wall_time: float = 0.0
    manifest_hash: str
    version: str
    output_dir: str


class RunReportResponse(RunTaskResponse):
    summary: Optional[RunSummary] = None
    archives: Optional[List[List[Dict[str, Any]]]] = None
