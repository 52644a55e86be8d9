from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator


class StudyRecord(BaseModel):
    """One sweep point; quantities a study does not produce stay None"""

    sweep_parameter: float  # g, Λ, κ or box length
    energy: float
    mu_v: float
    residual: float
    converged: bool = True
    i2_coherent: Optional[float] = None
    t_nc: Optional[float] = None
    remainder: Optional[float] = None  # E - mu_V + g^2 I_2
    f_l2_norm: Optional[float] = None  # squared
    f_zomega_norm: Optional[float] = None  # squared
    u_qv_distance: Optional[float] = None
    f_zomega_distance: Optional[float] = None
    kappa: Optional[float] = None
    fitted_exponent: Optional[float] = None


class SmallGSweep(BaseModel):
    records: List[StudyRecord]
    mu_v: float
    i2: float
    fitted_exponent: Optional[float] = None  # slope of log|r| against log g
    remainder_constant: Optional[float] = None  # max |r| / g^4
    complete: bool = True


class UVSweep(BaseModel):
    records: List[StudyRecord]
    reference_cutoff: float  # largest lattice |k|, standing in for Λ = ∞
    mu_v: float


class IRSeries(BaseModel):
    kappa: float
    records: List[StudyRecord]  # ordered by box length
    increments: List[float]  # change of ||f||^2 per box doubling
    last_relative_change: Optional[float] = None


class IRStudy(BaseModel):
    series: List[IRSeries]
    spacing: float


class SecondOrderSplit(BaseModel):
    mu_v: float
    g: float
    i2: float
    t_nc: float  # resolvent shift ω(k)
    t_nc_abs_k: float  # resolvent shift |k|
    predicted_full_shift: float
    predicted_full_shift_abs_k: float
    n_eigenbasis: int


class InequalityStats(BaseModel):
    name: str
    max_ratio: float
    p95_ratio: float
    n_trials: int = Field(gt=0)


class InequalityProbe(BaseModel):
    n_per_axis: int
    stats: List[InequalityStats]
    refined_n_per_axis: Optional[int] = None
    refined_stats: List[InequalityStats] = []

    @field_validator("stats")
    @classmethod
    def validate_stats(cls, v):
        if not v:
            raise ValueError("at least one inequality must be probed")
        return v

    def max_ratios(self) -> Dict[str, float]:
        return {s.name: s.max_ratio for s in self.stats}

    def refined_max_ratios(self) -> Dict[str, float]:
        return {s.name: s.max_ratio for s in self.refined_stats}


class CriticalScanPoint(BaseModel):
    g: float
    energy: float
    kinetic: float  # ||grad u||^2
    interaction_unit: float  # Δk^3 Σ W|ρ̂|^2 at g = 1
    coupling_bound: float  # sqrt(kinetic / interaction_unit) >= g*
    kinetic_fraction: float  # kinetic / max |k|^2 on the lattice
    collapsed: bool
    residual: float
    converged: bool


class CriticalCouplingScan(BaseModel):
    """Minimizers of the scale-critical kernel W = 1/|k| across g"""

    points: List[CriticalScanPoint]
    mu_v: float
    gstar_upper: Optional[float] = None  # smallest bound over the resolved minimizers
    first_collapse: Optional[float] = None
    collapse_fraction: float
