from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class FockSpec(BaseModel):
    """Truncated bosonic Fock space over `n_modes` modes, occupations 0..n_max each"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_modes: int = Field(ge=1, le=3)
    n_max: int = Field(ge=0)
    omegas: List[float]

    @field_validator("omegas")
    @classmethod
    def validate_omegas(cls, v):
        if any(not np.isfinite(w) or w <= 0 for w in v):
            raise ValueError("every mode frequency must be positive")
        return v

    @model_validator(mode="after")
    def validate_mode_count(self):
        if len(self.omegas) != self.n_modes:
            raise ValueError(f"expected {self.n_modes} mode frequencies, got {len(self.omegas)}")
        return self

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n_max + 1,) * self.n_modes

    @property
    def dimension(self) -> int:
        return (self.n_max + 1) ** self.n_modes


class FockVector(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: FockSpec
    amplitudes: np.ndarray  # indexed by the occupation multi-index

    @model_validator(mode="after")
    def validate_amplitudes(self):
        if self.amplitudes.shape != self.spec.shape:
            raise ValueError(f"amplitudes shape {self.amplitudes.shape} != {self.spec.shape}")
        if not np.all(np.isfinite(self.amplitudes)):
            raise ValueError("amplitudes must be finite")
        return self

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


class MiniPauliFierzResult(BaseModel):
    e_full: float
    e_quasi: float
    mu_v: float
    t_nc: float  # discrete non-coherent second-order term
    i2: float  # coherent second-order term at unit coupling
    dimension: int
    coherent_tail: float  # truncation tail of the quasi-classical coherent state
