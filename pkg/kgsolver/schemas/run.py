from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from kgsolver.schemas.grid import GridSpec
from kgsolver.schemas.minimize import MinimizeOptions
from kgsolver.schemas.model import ModelSpec


class StudyParams(BaseModel):
    """Parameters of the sweep/probe commands; each command reads the ones it needs"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    g_list: List[float] = [0.05, 0.1, 0.2, 0.4]
    lambda_list: List[float] = [2.0, 4.0, 8.0, 16.0]
    kappa_list: List[float] = [0.0, 0.5]
    box_doublings: int = Field(2, ge=1)
    n_eigenbasis: int = Field(40, ge=2)
    n_trials: int = Field(200, gt=0)
    refine_n_per_axis: Optional[int] = None
    # solve extras
    phi_check: bool = False
    uniqueness_starts: Optional[int] = Field(None, ge=2)
    # diagnose
    boost_C: float = Field(0.0, ge=0)
    boost_R: Optional[float] = Field(None, gt=0)
    form_bound_a: List[float] = [0.0, 0.5]
    # fock-check
    coherent_trials: int = Field(50, gt=0)
    coherent_n_max: int = Field(12, ge=1)
    coherent_max_norm: float = Field(0.5, gt=0)
    fock_modes: List[Tuple[int, int, int]] = [(1, 0, 0)]
    fock_n_max: int = Field(6, ge=1)
    fock_ratio_tol: float = Field(0.25, gt=0)
    # scan-gstar
    gstar_list: List[float] = [0.1, 0.2, 0.3, 0.4, 0.6]
    collapse_fraction: float = Field(0.1, gt=0, lt=1)

    @field_validator("g_list", "lambda_list", "kappa_list", "form_bound_a", "gstar_list")
    @classmethod
    def validate_non_empty(cls, v):
        if not v:
            raise ValueError("list must not be empty")
        return v

    @field_validator("g_list", "lambda_list", "gstar_list")
    @classmethod
    def validate_ascending(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("values must be strictly ascending")
        if v[0] <= 0:
            raise ValueError("values must be positive")
        return v


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ModelSpec = ModelSpec()
    grid: GridSpec
    minimize: MinimizeOptions = MinimizeOptions()
    study: StudyParams = StudyParams()
    output_dir: Optional[str] = None
    seed: int = 0

    def options(self) -> MinimizeOptions:
        """Minimizer options with the run seed applied"""
        return self.minimize.model_copy(update={"seed": self.seed})


class StageSummary(BaseModel):
    name: str
    converged: bool
    iterations: Optional[int] = None
    residual: Optional[float] = None
    detail: str = ""


class RunManifest(BaseModel):
    command: str
    artifact_version: str
    config: Dict[str, Any]
    started_at: str
    wall_time_s: float
    exit_code: int
    stages: List[StageSummary] = []
    files: List[str] = []
