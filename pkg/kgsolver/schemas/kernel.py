from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from kgsolver.schemas.field import SpectralField
from kgsolver.schemas.grid import GridSpec


class KernelW(BaseModel):
    """Sampled W = g^2 v^2 / omega together with the omega and v it came from.

    `coupling` holds v at unit g (UV cutoff applied). At k=0 the entries are
    cell averages; v there is chosen so that W = g^2 v^2 / omega holds exactly.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    samples: SpectralField
    omega: SpectralField
    coupling: SpectralField
    g: float
    k0_value: float
    split_radius: float = Field(1.0, gt=0)
    uv_cutoff: Optional[float] = None

    @property
    def grid(self) -> GridSpec:
        return self.samples.grid

    @property
    def values(self):
        return self.samples.samples.real

    @property
    def omega_values(self):
        return self.omega.samples.real

    @property
    def coupling_values(self):
        return self.coupling.samples.real


class KernelDecomposition(BaseModel):
    w1_l1_norm: float
    w2_weak3_norm: float
    split_radius: float


class OriginBehavior(BaseModel):
    """Leading powers at k=0: quantity ~ |k|^power; +inf when it vanishes near 0"""

    kernel_power: float
    field_power: float

    @property
    def kernel_integrable(self) -> bool:
        return self.kernel_power > -3.0

    @property
    def field_integrable(self) -> bool:
        return self.field_power > -3.0


class IRCriterion(BaseModel):
    low_band: float
    high_band: float
    origin_excluded: bool = False  # (v/omega)^2 not locally integrable at k=0
