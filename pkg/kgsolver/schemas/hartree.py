from pydantic import BaseModel, ConfigDict, Field

from kgsolver.schemas.field import SpectralField


class EnergyBreakdown(BaseModel):
    kinetic: float
    potential: float
    field: float = 0.0  # Δk^3 Σ ω|f|^2
    interaction: float  # -∫W|ρ̂|^2 for J, 2g Re∫ v f conj(ρ̂) for E
    total: float


class EulerLagrangeReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lambda_v: float = Field(alias="lambda")
    residual_l2: float = Field(ge=0)
    interaction_value: float


class FieldReconstruction(BaseModel):
    """f_u = -g v ρ̂ / ω and its norms"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    field: SpectralField
    zomega_norm_sq: float
    l2_norm_sq: float
    flagged_modes: int = 0  # modes with v != 0 but ω <= 0, set to zero
