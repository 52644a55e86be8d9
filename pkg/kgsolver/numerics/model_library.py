# kgsolver/numerics/model_library.py - Potentials, dispersions, couplings and the kernel W
import logging
import math
from functools import lru_cache
from typing import Callable, Iterable, Optional, Tuple

import numpy as np
from scipy.special import gamma

from kgsolver.errors import ModelError
from kgsolver.schemas.field import RealField, SpectralField
from kgsolver.schemas.grid import GridSpec
from kgsolver.schemas.kernel import IRCriterion, KernelDecomposition, KernelW, OriginBehavior
from kgsolver.schemas.model import (
    CouplingKind,
    DispersionKind,
    DispersionSpec,
    IRProfile,
    KZeroPolicy,
    ModelSpec,
    PotentialKind,
    PotentialSpec,
)

logger = logging.getLogger(__name__)
convergence_logger = logging.getLogger("convergence")

Radial = Callable[[np.ndarray], np.ndarray]

QUADRATURE_ORDER = 24


# === Potentials ===

def sample_potential(spec: PotentialSpec, grid: GridSpec) -> RealField:
    r2 = grid.radius_squared
    if spec.variant == PotentialKind.HARMONIC:
        values = spec.omega0 ** 2 * r2
    elif spec.variant == PotentialKind.GAUSSIAN_WELL:
        values = -spec.depth * np.exp(-r2 / (2.0 * spec.width ** 2))
    elif spec.variant == PotentialKind.SOFT_COULOMB:
        if spec.softening <= 0:
            raise ModelError("soft_coulomb needs a positive softening (the origin is a grid point)")
        values = -spec.charge / np.sqrt(r2 + spec.softening ** 2)
    else:
        raise ModelError(f"Unknown potential variant {spec.variant!r}")
    return RealField(grid=grid, samples=values)


# === Radial ingredients ===

def ir_regularizer(k: np.ndarray, kappa: float, profile: IRProfile = IRProfile.SMOOTH) -> np.ndarray:
    """chi_kappa(|k|); identically 1 when kappa == 0"""
    k = np.asarray(k, dtype=float)
    if kappa == 0:
        return np.ones_like(k)
    if profile == IRProfile.SHARP:
        return (k >= kappa).astype(float)
    return k / np.sqrt(k ** 2 + kappa ** 2)


def _dispersion_cap(spec: DispersionSpec, grid: GridSpec) -> float:
    return spec.cap if spec.cap is not None else grid.axis_frequency_limit


def dispersion_function(spec: DispersionSpec, grid: GridSpec) -> Radial:
    if spec.variant == DispersionKind.RELATIVISTIC:
        return lambda k: np.sqrt(k ** 2 + spec.mass ** 2)
    if spec.variant == DispersionKind.CONSTANT_ONE:
        return lambda k: np.ones_like(k)
    if spec.variant == DispersionKind.ACOUSTIC:
        cap = _dispersion_cap(spec, grid)
        return lambda k: spec.slope * np.minimum(k, cap)
    raise ModelError(f"Unknown dispersion variant {spec.variant!r}")


def coupling_function(model: ModelSpec, grid: GridSpec) -> Radial:
    """v(|k|) at unit coupling, IR regularizer applied, no UV cutoff"""
    omega = dispersion_function(model.dispersion, grid)
    kappa = model.coupling.ir_param
    profile = model.coupling.ir_profile
    variant = model.coupling.variant

    def v(k):
        chi = ir_regularizer(k, kappa, profile)
        if variant == CouplingKind.NELSON:
            return chi / np.sqrt(omega(k))
        if variant == CouplingKind.POLARON:
            return chi / k
        if variant == CouplingKind.PHONON:
            return chi * np.sqrt(k)
        if variant == CouplingKind.CRITICAL:
            return chi / np.sqrt(k)
        raise ModelError(f"Unknown coupling variant {variant!r}")

    return v


def origin_exponent(model: ModelSpec) -> OriginBehavior:
    """Leading powers of W and (v/omega)^2 at k = 0, decided from the variants"""
    dispersion = model.dispersion
    if dispersion.variant == DispersionKind.CONSTANT_ONE:
        omega_power = 0.0
    elif dispersion.variant == DispersionKind.RELATIVISTIC:
        omega_power = 0.0 if dispersion.mass > 0 else 1.0
    else:
        omega_power = 1.0

    if model.coupling.ir_param == 0:
        chi_power = 0.0
    elif model.coupling.ir_profile == IRProfile.SHARP:
        chi_power = math.inf
    else:
        chi_power = 1.0

    base = {
        CouplingKind.NELSON: -omega_power / 2.0,
        CouplingKind.POLARON: -1.0,
        CouplingKind.PHONON: 0.5,
        CouplingKind.CRITICAL: -0.5,
    }[model.coupling.variant]
    v_power = base + chi_power
    return OriginBehavior(
        kernel_power=2.0 * v_power - omega_power,
        field_power=2.0 * v_power - 2.0 * omega_power,
    )


def _is_pure_power_law(model: ModelSpec, grid: GridSpec) -> bool:
    """True when omega and v are exact power laws throughout the k=0 cell"""
    if model.coupling.ir_param != 0:
        return False
    dispersion = model.dispersion
    if dispersion.variant == DispersionKind.RELATIVISTIC:
        return dispersion.mass == 0
    if dispersion.variant == DispersionKind.ACOUSTIC:
        return _dispersion_cap(dispersion, grid) >= math.sqrt(3.0) * grid.freq_spacing / 2.0
    return True


# === k = 0 cell ===

@lru_cache(maxsize=64)
def _square_power_integral(power: float, order: int = 64) -> float:
    """int over [-1,1]^2 of (1 + s^2 + t^2)^(power/2)"""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    s, t = np.meshgrid(nodes, nodes, indexing="ij")
    return float(np.sum(np.outer(weights, weights) * (1.0 + s ** 2 + t ** 2) ** (power / 2.0)))


def power_law_cell_average(power: float, spacing: float) -> float:
    """Average of |k|^power over the cube of side `spacing` centred at 0 (power > -3)"""
    if power <= -3.0:
        raise ModelError(f"|k|^{power} is not integrable at the origin")
    half = spacing / 2.0
    radial = half ** (3.0 + power) / (3.0 + power)
    return 6.0 * radial * _square_power_integral(power) / spacing ** 3


def pyramid_cell_average(radial: Radial, spacing: float, order: int = QUADRATURE_ORDER) -> float:
    """Average of a radial function over the cube of side `spacing` centred at 0.

    The cube splits into six pyramids k = x (e_a + s e_b + t e_c), x in (0, spacing/2),
    s, t in (-1, 1), with Jacobian x^2; Gauss-Legendre in (x, s, t) never samples k = 0.
    """
    half = spacing / 2.0
    nodes, weights = np.polynomial.legendre.leggauss(order)
    x = half * (nodes + 1.0) / 2.0
    wx = half * weights / 2.0
    xx, ss, tt = np.meshgrid(x, nodes, nodes, indexing="ij")
    ww = wx[:, None, None] * weights[None, :, None] * weights[None, None, :]
    r = xx * np.sqrt(1.0 + ss ** 2 + tt ** 2)
    integral = 6.0 * np.sum(ww * radial(r) * xx ** 2)
    return float(integral / spacing ** 3)


def k_zero_cell_average(
    w_formula: Radial,
    grid: GridSpec,
    exponent: Optional[float] = None,
    order: int = QUADRATURE_ORDER,
) -> float:
    """Cell average of a radial W around k = 0.

    With `exponent` given, W is taken to be c |k|^exponent inside the cell and the
    closed radial form is used; otherwise tensor-product quadrature.
    """
    if exponent is not None:
        quarter = grid.freq_spacing / 4.0
        coefficient = float(w_formula(np.array(quarter))) / quarter ** exponent
        return coefficient * power_law_cell_average(exponent, grid.freq_spacing)
    return pyramid_cell_average(w_formula, grid.freq_spacing, order)


def lattice_sum_origin_value(
    w_formula: Radial, grid: GridSpec, exponent: float, order: int = QUADRATURE_ORDER
) -> float:
    """k = 0 value of a radial W ~ c |k|^exponent that makes the lattice sum of its
    singular part exact.

    The singular part is the Gaussian-damped a(k) = c |k|^exponent exp(-|k|^2 / s^2),
    s a quarter of the axis frequency limit, whose integral is closed form; the
    origin carries (integral - off-origin lattice sum) / dk^3 plus the cell average
    of W - a.
    """
    if not -3.0 < exponent < 0.0:
        raise ModelError(f"lattice-sum origin value needs -3 < exponent < 0, got {exponent:g}")
    spacing = grid.freq_spacing
    near = 1e-6 * spacing
    coefficient = float(w_formula(np.array(near))) / near ** exponent
    width = grid.axis_frequency_limit / 4.0

    def damped(k):
        return coefficient * k ** exponent * np.exp(-(k / width) ** 2)

    integral = 2.0 * math.pi * coefficient * width ** (exponent + 3.0) * gamma((exponent + 3.0) / 2.0)
    k = grid.k_norm[grid.k_norm > 0]
    lattice = grid.freq_cell_volume * float(np.sum(damped(k)))
    remainder = pyramid_cell_average(lambda r: w_formula(r) - damped(r), spacing, order)
    logger.debug("lattice-sum origin: c=%.6g, integral %.10g, lattice %.10g, remainder %.6g",
                 coefficient, integral, lattice, remainder)
    return (integral - lattice) / grid.freq_cell_volume + remainder


# === Kernel ===

def _nonzero_k(grid: GridSpec) -> np.ndarray:
    k = grid.k_norm.copy()
    k[grid.origin_index] = 1.0  # placeholder, overwritten by the cell averages
    return k


def build_kernel(model: ModelSpec, grid: GridSpec) -> KernelW:
    omega_of = dispersion_function(model.dispersion, grid)
    v_of = coupling_function(model, grid)
    behavior = origin_exponent(model)
    pure = _is_pure_power_law(model, grid)
    origin = grid.origin_index

    k = _nonzero_k(grid)
    omega = omega_of(k)
    v = v_of(k)
    nonzero = grid.k_norm > 0
    if np.any(omega[nonzero] <= 0):
        raise ModelError("dispersion vanishes at nonzero lattice frequencies; W is undefined")

    if not behavior.kernel_integrable:
        raise ModelError(
            f"W ~ |k|^{behavior.kernel_power:g} near k=0 is not locally integrable"
        )
    kernel_radial = lambda r: v_of(r) ** 2 / omega_of(r)
    omega_power = 0.0 if model.dispersion.variant == DispersionKind.CONSTANT_ONE else 1.0
    if model.k_zero_policy == KZeroPolicy.LATTICE_SUM and -3.0 < behavior.kernel_power < 0.0:
        w0_unit = lattice_sum_origin_value(kernel_radial, grid, behavior.kernel_power)
    else:
        w0_unit = k_zero_cell_average(kernel_radial, grid, behavior.kernel_power if pure else None)
    omega0 = k_zero_cell_average(omega_of, grid, omega_power if pure else None)
    omega[origin] = omega0
    v[origin] = math.sqrt(max(w0_unit, 0.0) * omega0)

    if model.uv_cutoff is not None:
        v[grid.k_norm > model.uv_cutoff] = 0.0

    w = model.g ** 2 * v ** 2 / omega
    logger.debug(
        "kernel %s/%s g=%g cutoff=%s: W(0)=%.6g, max W=%.6g",
        model.coupling.variant.value, model.dispersion.variant.value,
        model.g, model.uv_cutoff, w[origin], float(np.max(w)),
    )
    return KernelW(
        samples=SpectralField(grid=grid, samples=w),
        omega=SpectralField(grid=grid, samples=omega),
        coupling=SpectralField(grid=grid, samples=v),
        g=model.g,
        k0_value=float(w[origin]),
        split_radius=model.split_radius,
        uv_cutoff=model.uv_cutoff,
    )


def mode_mask(grid: GridSpec, modes: Iterable[Tuple[int, int, int]]) -> np.ndarray:
    """Boolean mask of the lattice frequencies Δk·(i, j, l) listed in `modes`"""
    half = grid.n_per_axis // 2
    mask = np.zeros(grid.shape, dtype=bool)
    for mode in modes:
        index = tuple(int(m) + half for m in mode)
        if any(i < 0 or i >= grid.n_per_axis for i in index):
            raise ModelError(f"mode {tuple(mode)} lies outside the frequency lattice")
        mask[index] = True
    return mask


def restrict_to_modes(kernel: KernelW, modes: Iterable[Tuple[int, int, int]]) -> KernelW:
    """Kernel whose coupling is switched off outside the listed lattice modes"""
    grid = kernel.grid
    mask = mode_mask(grid, modes)
    v = np.where(mask, kernel.coupling_values, 0.0)
    w = np.where(mask, kernel.values, 0.0)
    return kernel.model_copy(update={
        "samples": SpectralField(grid=grid, samples=w),
        "coupling": SpectralField(grid=grid, samples=v),
        "k0_value": float(w[grid.origin_index]),
    })


# === Hypothesis diagnostics ===

def weak_lorentz_norm(g: SpectralField, p: float, skip_ranks: int = 0) -> float:
    """Rearrangement estimator of the weak-L^p quasi-norm: max_j g*_j (j dk^3)^(1/p).

    `skip_ranks` leaves the largest values out of the supremum while still
    counting their cells in the measure.

    On a lattice k = dk n the plain estimator of 1/|k| equals max_j j^(1/3) / |n_j|
    for p = 3: it does not depend on dk and its supremum sits on the first few
    lattice shells, so it never approaches the continuum value (4 pi / 3)^(1/3).
    Convergence to that value needs `skip_ranks` covering the cells within a few
    dk of the origin.
    """
    if p < 1:
        raise ModelError("weak_lorentz_norm needs p >= 1")
    values = np.sort(np.abs(g.samples).ravel())[::-1]
    if skip_ranks >= values.size:
        return 0.0
    ranks = np.arange(1, values.size + 1, dtype=float)
    estimates = values * (ranks * g.grid.freq_cell_volume) ** (1.0 / p)
    return float(np.max(estimates[skip_ranks:]))


def split_kernel(kernel: KernelW) -> Tuple[np.ndarray, np.ndarray]:
    inner = kernel.grid.k_norm <= kernel.split_radius
    w = kernel.values
    return np.where(inner, w, 0.0), np.where(inner, 0.0, w)


def decompose_W(kernel: KernelW) -> KernelDecomposition:
    grid = kernel.grid
    w1, w2 = split_kernel(kernel)
    return KernelDecomposition(
        w1_l1_norm=float(grid.freq_cell_volume * np.sum(w1)),
        w2_weak3_norm=weak_lorentz_norm(SpectralField(grid=grid, samples=w2), 3.0),
        split_radius=kernel.split_radius,
    )


def ir_l2_criterion(model: ModelSpec, grid: GridSpec) -> IRCriterion:
    """Discrete L^2 norms of (v/omega) 1_{|k|<=1} and v/(|k| omega) 1_{|k|>=1}"""
    omega_of = dispersion_function(model.dispersion, grid)
    v_of = coupling_function(model, grid)
    behavior = origin_exponent(model)

    k = _nonzero_k(grid)
    ratio_sq = (v_of(k) / omega_of(k)) ** 2
    if model.uv_cutoff is not None:
        ratio_sq[grid.k_norm > model.uv_cutoff] = 0.0

    origin_excluded = not behavior.field_integrable
    if origin_excluded:
        ratio_sq[grid.origin_index] = 0.0
        convergence_logger.warning(
            "(v/omega)^2 ~ |k|^%g is not integrable at k=0; origin cell left out of the IR norm",
            behavior.field_power,
        )
    else:
        pure = _is_pure_power_law(model, grid)
        field_radial = lambda r: (v_of(r) / omega_of(r)) ** 2
        ratio_sq[grid.origin_index] = k_zero_cell_average(
            field_radial, grid, behavior.field_power if pure else None
        )

    cell = grid.freq_cell_volume
    low = grid.k_norm <= 1.0
    high = grid.k_norm >= 1.0
    high_sq = np.where(high, ratio_sq / np.where(high, k ** 2, 1.0), 0.0)
    return IRCriterion(
        low_band=math.sqrt(cell * float(np.sum(ratio_sq[low]))),
        high_band=math.sqrt(cell * float(np.sum(high_sq))),
        origin_excluded=origin_excluded,
    )
