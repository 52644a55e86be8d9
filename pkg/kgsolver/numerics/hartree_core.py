# kgsolver/numerics/hartree_core.py - Hartree and KGS energies in the spectral form
#
#   J(u)   = <u, H_V u> - Δk^3 Σ W |ρ̂|^2,                 ρ̂ = F(|u|^2)
#   E(u,f) = <u, H_V u> + Δk^3 Σ ω|f|^2 + 2g Re Δk^3 Σ v f conj(ρ̂)
#   V_H    = Re Fbar(W ρ̂),  so <u, V_H u> = Δk^3 Σ W |ρ̂|^2 exactly
import logging
import math
from typing import NamedTuple

import numpy as np

from kgsolver.errors import ModelError
from kgsolver.numerics.electronic_solver import apply_hv_array
from kgsolver.numerics.spectral_grid import (
    bar_array,
    forward_array,
    h1dot_array,
    inner_array,
    norm_array,
)
from kgsolver.schemas.electronic import ElectronicOperator
from kgsolver.schemas.field import RealField, SpectralField, check_same_grid
from kgsolver.schemas.hartree import EnergyBreakdown, EulerLagrangeReport, FieldReconstruction
from kgsolver.schemas.kernel import KernelW

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-8


class HartreeState(NamedTuple):
    """Everything one evaluation of J at u produces; arrays in centered layout"""

    hu: np.ndarray  # H_V u
    vh: np.ndarray  # Hartree potential
    rho_hat: np.ndarray
    quadratic: float  # <u, H_V u>
    interaction: float  # Δk^3 Σ W|ρ̂|^2
    energy: float  # J(u)
    lambda_v: float  # <u, (H_V - 2 V_H) u>
    residual: np.ndarray  # (H_V - 2 V_H) u - λ u


def _check_grid(u: RealField, kernel: KernelW):
    if u.grid != kernel.grid:
        raise ModelError("state and kernel live on different grids")


def _check_normalized(u: RealField):
    norm = norm_array(u.samples, u.grid)
    if abs(norm - 1.0) > NORMALIZATION_TOL:
        raise ModelError(f"state must be L^2-normalized (norm {norm:.12g})")


def density_hat_array(samples: np.ndarray, grid) -> np.ndarray:
    return forward_array(samples.real ** 2 + samples.imag ** 2, grid)


def interaction_array(rho_hat: np.ndarray, kernel: KernelW) -> float:
    weighted = kernel.values * (rho_hat.real ** 2 + rho_hat.imag ** 2)
    return float(kernel.grid.freq_cell_volume * np.sum(weighted))


def hartree_potential_array(rho_hat: np.ndarray, kernel: KernelW) -> np.ndarray:
    return bar_array(kernel.values * rho_hat, kernel.grid).real


def evaluate_state(samples: np.ndarray, op: ElectronicOperator, kernel: KernelW) -> HartreeState:
    grid = op.grid
    hu = apply_hv_array(op, samples)
    rho_hat = density_hat_array(samples, grid)
    vh = hartree_potential_array(rho_hat, kernel)
    quadratic = float(inner_array(samples, hu, grid).real)
    interaction = interaction_array(rho_hat, kernel)
    lambda_v = quadratic - 2.0 * interaction
    residual = hu - 2.0 * vh * samples - lambda_v * samples
    return HartreeState(
        hu=hu,
        vh=vh,
        rho_hat=rho_hat,
        quadratic=quadratic,
        interaction=interaction,
        energy=quadratic - interaction,
        lambda_v=lambda_v,
        residual=residual,
    )


def hartree_energy_array(samples: np.ndarray, op: ElectronicOperator, kernel: KernelW) -> float:
    """J on a normalized array, without the Hartree potential"""
    grid = op.grid
    quadratic = float(inner_array(samples, apply_hv_array(op, samples), grid).real)
    return quadratic - interaction_array(density_hat_array(samples, grid), kernel)


# === Field-level operations ===

def density_hat(u: RealField) -> SpectralField:
    return SpectralField(grid=u.grid, samples=density_hat_array(u.samples, u.grid))


def interaction_term(u: RealField, kernel: KernelW) -> float:
    """Δk^3 Σ W |F(|u|^2)|^2"""
    _check_grid(u, kernel)
    return interaction_array(density_hat_array(u.samples, u.grid), kernel)


def _quadratic_parts(u: RealField, op: ElectronicOperator):
    grid = u.grid
    kinetic = h1dot_array(u.samples, grid)
    potential = grid.cell_volume * float(np.sum(op.potential * np.abs(u.samples) ** 2))
    return kinetic, potential


def hartree_energy(u: RealField, op: ElectronicOperator, kernel: KernelW) -> EnergyBreakdown:
    check_same_grid(op.potential_samples, u)
    _check_grid(u, kernel)
    _check_normalized(u)
    kinetic, potential = _quadratic_parts(u, op)
    interaction = -interaction_term(u, kernel)
    return EnergyBreakdown(
        kinetic=kinetic,
        potential=potential,
        field=0.0,
        interaction=interaction,
        total=kinetic + potential + interaction,
    )


def hartree_potential(u: RealField, kernel: KernelW) -> RealField:
    _check_grid(u, kernel)
    rho_hat = density_hat_array(u.samples, u.grid)
    return RealField(grid=u.grid, samples=hartree_potential_array(rho_hat, kernel))


def convolution_potential(sigma: RealField, kernel: KernelW) -> RealField:
    """Fbar(W F(sigma)) for a general complex sigma; hartree_potential is its real part at sigma=|u|^2"""
    _check_grid(sigma, kernel)
    spectrum = forward_array(sigma.samples, sigma.grid)
    return RealField(grid=sigma.grid, samples=bar_array(kernel.values * spectrum, sigma.grid))


def euler_lagrange(u: RealField, op: ElectronicOperator, kernel: KernelW) -> EulerLagrangeReport:
    check_same_grid(op.potential_samples, u)
    _check_grid(u, kernel)
    _check_normalized(u)
    state = evaluate_state(u.samples, op, kernel)
    return EulerLagrangeReport(
        lambda_v=state.lambda_v,
        residual_l2=norm_array(state.residual, u.grid),
        interaction_value=state.interaction,
    )


def sphere_gradient(u: RealField, op: ElectronicOperator, kernel: KernelW) -> RealField:
    """G = 2[(H_V - 2V_H)u - λu]; tangent to the unit sphere at u"""
    check_same_grid(op.potential_samples, u)
    _check_grid(u, kernel)
    _check_normalized(u)
    state = evaluate_state(u.samples, op, kernel)
    return u.with_samples(2.0 * state.residual)


def field_from_state(u: RealField, kernel: KernelW) -> FieldReconstruction:
    """f_u = -g ω^{-1} v F(|u|^2); modes with ω <= 0 but v != 0 are zeroed and counted"""
    _check_grid(u, kernel)
    grid = u.grid
    rho_hat = density_hat_array(u.samples, grid)
    omega = kernel.omega_values
    v = kernel.coupling_values
    positive = omega > 0
    flagged = int(np.count_nonzero(~positive & (v != 0)))
    if flagged:
        logger.warning("field_from_state: %d modes with nonpositive omega set to zero", flagged)
    safe_omega = np.where(positive, omega, 1.0)
    f = np.where(positive, -kernel.g * v * rho_hat / safe_omega, 0.0)
    abs_sq = f.real ** 2 + f.imag ** 2
    cell = grid.freq_cell_volume
    return FieldReconstruction(
        field=SpectralField(grid=grid, samples=f),
        zomega_norm_sq=float(cell * np.sum(omega * abs_sq)),
        l2_norm_sq=float(cell * np.sum(abs_sq)),
        flagged_modes=flagged,
    )


def kgs_energy(u: RealField, f: SpectralField, op: ElectronicOperator, kernel: KernelW) -> EnergyBreakdown:
    check_same_grid(op.potential_samples, u)
    _check_grid(u, kernel)
    if f.grid != u.grid:
        raise ModelError("field and state live on different grids")
    _check_normalized(u)
    grid = u.grid
    kinetic, potential = _quadratic_parts(u, op)
    rho_hat = density_hat_array(u.samples, grid)
    cell = grid.freq_cell_volume
    fs = f.samples
    field = float(cell * np.sum(kernel.omega_values * (fs.real ** 2 + fs.imag ** 2)))
    cross = 2.0 * kernel.g * float(cell * np.sum(kernel.coupling_values * fs * np.conj(rho_hat)).real)
    return EnergyBreakdown(
        kinetic=kinetic,
        potential=potential,
        field=field,
        interaction=cross,
        total=kinetic + potential + field + cross,
    )


def zomega_distance(f: SpectralField, g: SpectralField, kernel: KernelW) -> float:
    """||sqrt(ω)(f - g)||_{L^2}"""
    diff = f.samples - g.samples
    cell = kernel.grid.freq_cell_volume
    return math.sqrt(cell * float(np.sum(kernel.omega_values * np.abs(diff) ** 2)))
