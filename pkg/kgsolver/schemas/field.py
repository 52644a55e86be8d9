import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from kgsolver.errors import GridError
from kgsolver.schemas.grid import GridSpec


class _SampledField(BaseModel):
    """Complex samples on the N x N x N lattice of `grid` (read-only array)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: GridSpec
    samples: np.ndarray

    @field_validator("samples", mode="before")
    @classmethod
    def coerce_samples(cls, v):
        arr = np.array(v, dtype=np.complex128)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def validate_samples(self):
        if self.samples.shape != self.grid.shape:
            raise ValueError(
                f"samples have shape {self.samples.shape}, grid expects {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")
        return self

    def with_samples(self, samples):
        return type(self)(grid=self.grid, samples=samples)

    def __add__(self, other):
        check_same_grid(self, other)
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other):
        check_same_grid(self, other)
        return self.with_samples(self.samples - other.samples)

    def __mul__(self, scalar):
        return self.with_samples(self.samples * scalar)

    __rmul__ = __mul__


class RealField(_SampledField):
    """Position-space field: u, u_V, densities, potentials"""


class SpectralField(_SampledField):
    """Frequency-space field: f, rho_hat, W, v, omega"""


def check_same_grid(a: _SampledField, b: _SampledField):
    if type(a) is not type(b):
        raise TypeError(f"cannot combine {type(a).__name__} with {type(b).__name__}")
    if a.grid != b.grid:
        raise GridError("fields live on different grids")
