from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class PotentialKind(str, Enum):
    HARMONIC = "harmonic"
    GAUSSIAN_WELL = "gaussian_well"
    SOFT_COULOMB = "soft_coulomb"


class DispersionKind(str, Enum):
    RELATIVISTIC = "relativistic"
    CONSTANT_ONE = "constant_one"
    ACOUSTIC = "acoustic"


class CouplingKind(str, Enum):
    NELSON = "nelson"
    POLARON = "polaron"
    PHONON = "phonon"
    CRITICAL = "critical"  # v = |k|^(-1/2); with omega = 1, W = 1/|k|


class IRProfile(str, Enum):
    SMOOTH = "smooth"  # chi(k) = |k| / sqrt(k^2 + kappa^2)
    SHARP = "sharp"  # chi(k) = 1_{|k| >= kappa}


class KZeroPolicy(str, Enum):
    CELL_AVERAGE = "cell_average"  # average of W over the k = 0 cell
    LATTICE_SUM = "lattice_sum"  # value that makes the lattice sum of the singular part of W exact


class PotentialSpec(BaseModel):
    """External potential V; only the parameters of the selected variant are read.

    harmonic:      V(x) = omega0^2 |x|^2
    gaussian_well: V(x) = -depth * exp(-|x|^2 / (2 width^2))
    soft_coulomb:  V(x) = -charge / sqrt(|x|^2 + softening^2)
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    variant: PotentialKind = PotentialKind.HARMONIC
    omega0: float = Field(1.0, gt=0)
    depth: float = Field(10.0, gt=0)
    width: float = Field(1.0, gt=0)
    charge: float = Field(1.0, gt=0)
    softening: float = Field(0.1, gt=0)

    def is_confining(self) -> bool:
        return self.variant == PotentialKind.HARMONIC


class DispersionSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    variant: DispersionKind = DispersionKind.CONSTANT_ONE
    mass: float = Field(0.0, ge=0)
    slope: float = Field(1.0, gt=0)
    # acoustic branch: omega = slope * min(|k|, cap); None -> the grid's axis limit
    cap: Optional[float] = Field(None, gt=0)


class CouplingSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    variant: CouplingKind = CouplingKind.POLARON
    ir_param: float = Field(0.0, ge=0)  # kappa; 0 means chi == 1
    ir_profile: IRProfile = IRProfile.SMOOTH


class ModelSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    potential: PotentialSpec = PotentialSpec()
    dispersion: DispersionSpec = DispersionSpec()
    coupling: CouplingSpec = CouplingSpec()
    g: float = 0.0
    uv_cutoff: Optional[float] = Field(None, gt=0)  # None means Lambda = infinity
    split_radius: float = Field(1.0, gt=0)
    k_zero_policy: KZeroPolicy = KZeroPolicy.CELL_AVERAGE

    @field_validator("g")
    @classmethod
    def validate_coupling(cls, v):
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError("g must be finite")
        return v

    def with_coupling(self, g: float) -> "ModelSpec":
        return self.model_copy(update={"g": g})

    def with_cutoff(self, uv_cutoff: Optional[float]) -> "ModelSpec":
        return self.model_copy(update={"uv_cutoff": uv_cutoff})

    def with_ir_param(self, kappa: float) -> "ModelSpec":
        return self.model_copy(update={"coupling": self.coupling.model_copy(update={"ir_param": kappa})})
