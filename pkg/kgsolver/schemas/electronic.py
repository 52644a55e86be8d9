from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict

from kgsolver.schemas.field import RealField
from kgsolver.schemas.grid import GridSpec


class ElectronicOperator(BaseModel):
    """H_V = -Laplacian + V on the periodic grid (V real)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: GridSpec
    potential_samples: RealField

    @property
    def potential(self) -> np.ndarray:
        return self.potential_samples.samples.real


class Eigenpairs(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: GridSpec
    values: np.ndarray  # ascending
    states: np.ndarray  # (count, N, N, N), L^2-orthonormal
    residuals: np.ndarray

    @property
    def count(self) -> int:
        return int(self.values.size)

    def state(self, index: int) -> RealField:
        return RealField(grid=self.grid, samples=self.states[index])

    def multiplicity(self, index: int, rel_tol: float = 1e-6) -> int:
        level = self.values[index]
        close = np.abs(self.values - level) <= rel_tol * max(1.0, abs(level))
        return int(np.count_nonzero(close))


class ElectronicGround(BaseModel):
    """u_V, mu_V and the spectral gap delta_V, plus the eigenpairs they came from"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    u_v: RealField
    mu_v: float
    delta_v: float
    eigenpairs: Eigenpairs


class CoercivityReport(BaseModel):
    lhs: float
    rhs: float
    holds: bool


class FormBound(BaseModel):
    a: float
    b: float


class GapProbe(BaseModel):
    mu_v: float
    mu_v1c: float
    gap_ok: bool


class FormBoundSearch(BaseModel):
    bounds: List[FormBound]
    n_states: int
