# kgsolver/numerics/spectral_grid.py - Periodic spectral discretization of R^3
#
# Continuum conventions:
#   F(f)(k)    = int e^{-ik.x} f(x) dx   ~  h^3  sum_n e^{-ik.x_n} f(x_n)
#   Fbar(g)(x) = int e^{+ik.x} g(k) dk   ~  dk^3 sum_j e^{+ik_j.x} g(k_j)
# so that Fbar(F(f)) = (2 pi)^3 f on the lattice.
import logging
import math
from typing import Tuple

import numpy as np
from pydantic import ValidationError
from scipy import fft as sp_fft

from kgsolver.config import settings
from kgsolver.errors import GridError
from kgsolver.schemas.field import RealField, SpectralField, check_same_grid
from kgsolver.schemas.grid import GridSpec

logger = logging.getLogger(__name__)

TWO_PI_CUBED = (2.0 * math.pi) ** 3


def make_grid(n_per_axis: int, box_length: float) -> GridSpec:
    try:
        return GridSpec(n_per_axis=n_per_axis, box_length=box_length)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        message = first["msg"].removeprefix("Value error, ")
        raise GridError(f"{field}: {message}") from exc


# === Array-level kernels (centered layout in and out) ===

def forward_array(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    shifted = sp_fft.ifftshift(samples)
    return grid.cell_volume * sp_fft.fftshift(sp_fft.fftn(shifted, workers=settings.fft_workers))


def bar_array(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    shifted = sp_fft.ifftshift(samples)
    scale = grid.freq_cell_volume * grid.size
    return scale * sp_fft.fftshift(sp_fft.ifftn(shifted, workers=settings.fft_workers))


def fourier_multiply(samples: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """Apply a Fourier multiplier given in FFT (unshifted) order to a position array.

    The centering shifts cancel for a multiplier, so the samples are transformed
    as stored.
    """
    spectrum = sp_fft.fftn(samples, workers=settings.fft_workers)
    return sp_fft.ifftn(spectrum * multiplier, workers=settings.fft_workers)


def fft_order(grid_values: np.ndarray) -> np.ndarray:
    """Centered frequency array -> FFT order, for use with fourier_multiply"""
    return sp_fft.ifftshift(grid_values)


def inner_array(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> complex:
    return grid.cell_volume * np.vdot(a, b)


def norm_array(a: np.ndarray, grid: GridSpec) -> float:
    return math.sqrt(grid.cell_volume * float(np.vdot(a, a).real))


def h1dot_array(samples: np.ndarray, grid: GridSpec) -> float:
    spectrum = forward_array(samples, grid)
    total = np.sum(grid.k_squared * (spectrum.real ** 2 + spectrum.imag ** 2))
    return float(grid.freq_cell_volume * total / TWO_PI_CUBED)


# === Field-level operations ===

def real_field(grid: GridSpec, samples) -> RealField:
    return RealField(grid=grid, samples=samples)


def spectral_field(grid: GridSpec, samples) -> SpectralField:
    return SpectralField(grid=grid, samples=samples)


def forward_transform(f: RealField) -> SpectralField:
    return SpectralField(grid=f.grid, samples=forward_array(f.samples, f.grid))


def bar_transform(g: SpectralField) -> RealField:
    return RealField(grid=g.grid, samples=bar_array(g.samples, g.grid))


def inner_product(f: RealField, g: RealField) -> complex:
    check_same_grid(f, g)
    return complex(inner_array(f.samples, g.samples, f.grid))


def l2_norm(f: RealField) -> float:
    return norm_array(f.samples, f.grid)


def normalize(f: RealField) -> RealField:
    norm = l2_norm(f)
    if norm == 0.0:
        raise GridError("cannot normalize the zero field")
    return f.with_samples(f.samples / norm)


def h1dot_seminorm(u: RealField) -> float:
    """Squared homogeneous H^1 seminorm, computed spectrally"""
    return h1dot_array(u.samples, u.grid)


def spectral_integral(g: SpectralField) -> complex:
    return complex(g.grid.freq_cell_volume * np.sum(g.samples))


def gradient(u: RealField) -> Tuple[RealField, RealField, RealField]:
    grid = u.grid
    spectrum = sp_fft.fftn(u.samples, workers=settings.fft_workers)
    components = []
    for axis_k in grid.frequencies:
        derivative = sp_fft.ifftn(1j * fft_order(axis_k) * spectrum, workers=settings.fft_workers)
        components.append(RealField(grid=grid, samples=derivative))
    return tuple(components)


# === Random test functions ===

def draw_gaussian_mixture(rng: np.random.Generator, box_length: float, max_bumps: int = 5) -> dict:
    """Parameters of 1..max_bumps Gaussian bumps, independent of the sampling grid.

    Widths are log-uniform in [0.3, 2], centers uniform in the inner half-box.
    """
    n_bumps = int(rng.integers(1, max_bumps + 1))
    quarter = box_length / 4.0
    return {
        "centers": rng.uniform(-quarter, quarter, size=(n_bumps, 3)),
        "widths": np.exp(rng.uniform(math.log(0.3), math.log(2.0), size=n_bumps)),
        "weights": rng.uniform(0.2, 1.0, size=n_bumps),
        "phases": rng.uniform(0.0, 2.0 * math.pi, size=n_bumps),
    }


def sample_gaussian_mixture(grid: GridSpec, params: dict, normalized: bool = True) -> RealField:
    x, y, z = grid.positions
    samples = np.zeros(grid.shape, dtype=np.complex128)
    for center, width, weight, phase in zip(
        params["centers"], params["widths"], params["weights"], params["phases"]
    ):
        r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2
        samples += weight * np.exp(1j * phase) * np.exp(-r2 / (2.0 * width ** 2))
    if normalized:
        samples /= norm_array(samples, grid)
    return RealField(grid=grid, samples=samples)


def gaussian_mixture_field(
    grid: GridSpec,
    rng: np.random.Generator,
    max_bumps: int = 5,
    normalized: bool = True,
    real: bool = False,
) -> RealField:
    params = draw_gaussian_mixture(rng, grid.box_length, max_bumps)
    if real:
        params["phases"] = np.where(params["phases"] < math.pi, 0.0, math.pi)
    return sample_gaussian_mixture(grid, params, normalized=normalized)
