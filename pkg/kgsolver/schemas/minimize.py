from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from kgsolver.schemas.field import RealField, SpectralField


class MinimizeMethod(str, Enum):
    PROJECTED_GRADIENT = "projected_gradient"
    SCF = "scf"
    BOTH_CROSSCHECK = "both_crosscheck"


class StartKind(str, Enum):
    ELECTRONIC_GROUND = "electronic_ground"
    RANDOM = "random"
    PROVIDED = "provided"


class MinimizeOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    method: MinimizeMethod = MinimizeMethod.PROJECTED_GRADIENT
    max_iter: int = Field(2000, gt=0)
    energy_tol: float = Field(1e-12, gt=0)
    residual_tol: float = Field(1e-8, gt=0)
    mixing: float = Field(0.5, gt=0, le=1)
    seed: int = 0
    start: StartKind = StartKind.ELECTRONIC_GROUND
    # electronic eigen-solve tolerance (u_V, mu_V, delta_V)
    eigen_tol: float = Field(1e-9, gt=0)
    # Armijo line search; momentum = Polak-Ribiere(+) conjugation of the projected gradient
    momentum: bool = True
    armijo: float = Field(1e-4, gt=0, lt=1)
    shrink: float = Field(0.5, gt=0, lt=1)
    optimism: float = Field(2.0, ge=1)
    max_backtracks: int = Field(40, gt=0)


class CrossCheck(BaseModel):
    energy_difference: float
    state_distance: float
    agree: bool


class GroundStateResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    u_gs: RealField
    f_gs: SpectralField
    energy: float
    lambda_v: float
    residual: float
    iterations: int
    energy_trace: List[float]
    converged: bool
    method: MinimizeMethod
    mixing_halvings: int = 0
    crosscheck: Optional[CrossCheck] = None
    message: str = ""


class PhiCheck(BaseModel):
    lhs_rhs_gap: float
    tail_estimate: float
    phi_norm: float
    n_eigenbasis: int


class UniquenessReport(BaseModel):
    max_pairwise_l2: float
    energy_spread: float
    energies: List[float]
    excluded: List[int] = []  # seeds whose run did not converge


class ExistenceReport(BaseModel):
    w1_l1: float
    w2_weak3: float
    gap_mu: float
    smallness_ratio: float
    mu_v: float
    mu_v1: float
