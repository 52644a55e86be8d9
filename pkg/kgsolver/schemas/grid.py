from functools import cached_property
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class GridSpec(BaseModel):
    """Periodic cube of side box_length sampled with n_per_axis points per axis.

    Position lattice x_j = spacing * {-N/2 .. N/2-1}, frequency lattice
    k_j = freq_spacing * {-N/2 .. N/2-1}; both contain 0.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_per_axis: int
    box_length: float = Field(..., gt=0)

    @field_validator("n_per_axis")
    @classmethod
    def validate_even(cls, v):
        if v % 2 != 0:
            raise ValueError("n_per_axis must be even")
        if v < 8:
            raise ValueError("n_per_axis must be at least 8")
        return v

    @field_validator("box_length")
    @classmethod
    def validate_finite(cls, v):
        if not math.isfinite(v):
            raise ValueError("box_length must be finite")
        return v

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_per_axis

    @property
    def freq_spacing(self) -> float:
        return 2.0 * math.pi / self.box_length

    @property
    def shape(self) -> tuple:
        return (self.n_per_axis,) * 3

    @property
    def size(self) -> int:
        return self.n_per_axis ** 3

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @property
    def freq_cell_volume(self) -> float:
        return self.freq_spacing ** 3

    @property
    def max_frequency(self) -> float:
        """Largest |k| on the lattice (corner of the frequency cube)"""
        return math.sqrt(3.0) * (self.n_per_axis // 2) * self.freq_spacing

    @property
    def axis_frequency_limit(self) -> float:
        return (self.n_per_axis // 2) * self.freq_spacing

    @cached_property
    def centered_indices(self) -> np.ndarray:
        half = self.n_per_axis // 2
        return np.arange(-half, half)

    @cached_property
    def axis_positions(self) -> np.ndarray:
        return self.spacing * self.centered_indices

    @cached_property
    def axis_frequencies(self) -> np.ndarray:
        return self.freq_spacing * self.centered_indices

    @cached_property
    def positions(self) -> tuple:
        return tuple(np.meshgrid(self.axis_positions, self.axis_positions, self.axis_positions, indexing="ij"))

    @cached_property
    def frequencies(self) -> tuple:
        return tuple(np.meshgrid(self.axis_frequencies, self.axis_frequencies, self.axis_frequencies, indexing="ij"))

    @cached_property
    def radius_squared(self) -> np.ndarray:
        x, y, z = self.positions
        return x ** 2 + y ** 2 + z ** 2

    @cached_property
    def k_squared(self) -> np.ndarray:
        kx, ky, kz = self.frequencies
        return kx ** 2 + ky ** 2 + kz ** 2

    @cached_property
    def k_norm(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @cached_property
    def origin_index(self) -> tuple:
        half = self.n_per_axis // 2
        return (half, half, half)

    def doubled_box(self) -> "GridSpec":
        """Same spacing, twice the box (k_min halves)"""
        return GridSpec(n_per_axis=2 * self.n_per_axis, box_length=2.0 * self.box_length)

    # equality on the defining fields only; cached lattice arrays live in __dict__
    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (self.n_per_axis, self.box_length) == (other.n_per_axis, other.box_length)

    def __hash__(self):
        return hash((self.n_per_axis, self.box_length))
