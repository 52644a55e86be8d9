# kgsolver/numerics/electronic_solver.py - H_V = -Laplacian + V and its lowest eigenpairs
import logging
import math
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np
from scipy import fft as sp_fft
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, lobpcg

from kgsolver.config import settings
from kgsolver.errors import ConvergenceError, ModelError
from kgsolver.numerics.model_library import sample_potential
from kgsolver.numerics.spectral_grid import (
    fft_order,
    fourier_multiply,
    gaussian_mixture_field,
    h1dot_array,
    inner_array,
    norm_array,
)
from kgsolver.schemas.electronic import (
    CoercivityReport,
    ElectronicGround,
    ElectronicOperator,
    Eigenpairs,
    FormBound,
    FormBoundSearch,
    GapProbe,
)
from kgsolver.schemas.field import RealField, check_same_grid
from kgsolver.schemas.grid import GridSpec
from kgsolver.schemas.model import PotentialSpec

logger = logging.getLogger(__name__)
convergence_logger = logging.getLogger("convergence")

DEGENERACY_REL_TOL = 1e-8


def make_operator(potential: RealField) -> ElectronicOperator:
    return ElectronicOperator(grid=potential.grid, potential_samples=potential.with_samples(potential.samples.real))


def operator_for(spec: PotentialSpec, grid: GridSpec) -> ElectronicOperator:
    return make_operator(sample_potential(spec, grid))


@lru_cache(maxsize=8)
def laplacian_multiplier(grid: GridSpec) -> np.ndarray:
    """|k|^2 in FFT order"""
    return fft_order(grid.k_squared)


@lru_cache(maxsize=8)
def kinetic_preconditioner(grid: GridSpec) -> np.ndarray:
    """(|k|^2 + 1)^-1 in FFT order"""
    return 1.0 / (laplacian_multiplier(grid) + 1.0)


def apply_hv_array(op: ElectronicOperator, samples: np.ndarray) -> np.ndarray:
    kinetic = fourier_multiply(samples, laplacian_multiplier(op.grid))
    return kinetic + op.potential * samples


def apply_hv(op: ElectronicOperator, u: RealField) -> RealField:
    check_same_grid(op.potential_samples, u)
    return u.with_samples(apply_hv_array(op, u.samples))


# === Eigenpairs ===

def _batched_multiplier(block: np.ndarray, grid: GridSpec, multiplier: np.ndarray) -> np.ndarray:
    """Apply a real Fourier multiplier to the columns of a real (N^3, m) block"""
    n = grid.n_per_axis
    cubes = block.T.reshape((-1, n, n, n))
    spectrum = sp_fft.fftn(cubes, axes=(1, 2, 3), workers=settings.fft_workers)
    result = sp_fft.ifftn(spectrum * multiplier, axes=(1, 2, 3), workers=settings.fft_workers).real
    return result.reshape((-1, grid.size)).T


def _linear_operators(op: ElectronicOperator):
    grid = op.grid
    potential = op.potential.ravel()
    laplacian = laplacian_multiplier(grid)
    preconditioner = kinetic_preconditioner(grid)

    def apply_h(block):
        block = np.asarray(block, dtype=float)
        squeeze = block.ndim == 1
        block = block.reshape((grid.size, -1))
        result = _batched_multiplier(block, grid, laplacian) + potential[:, None] * block
        return result[:, 0] if squeeze else result

    def apply_m(block):
        block = np.asarray(block, dtype=float)
        squeeze = block.ndim == 1
        block = block.reshape((grid.size, -1))
        result = _batched_multiplier(block, grid, preconditioner)
        return result[:, 0] if squeeze else result

    shape = (grid.size, grid.size)
    return (
        LinearOperator(shape, matvec=apply_h, matmat=apply_h, dtype=float),
        LinearOperator(shape, matvec=apply_m, matmat=apply_m, dtype=float),
    )


def _second_derivative_matrix(grid: GridSpec) -> np.ndarray:
    """1D spectral -d^2/dx^2 on the periodic axis (real symmetric)"""
    n = grid.n_per_axis
    k2 = sp_fft.ifftshift(grid.axis_frequencies ** 2)
    identity = np.eye(n)
    return sp_fft.ifft(k2[:, None] * sp_fft.fft(identity, axis=0), axis=0).real


def _dense_hamiltonian(op: ElectronicOperator) -> np.ndarray:
    grid = op.grid
    d2 = _second_derivative_matrix(grid)
    eye = np.eye(grid.n_per_axis)
    h = (
        np.kron(np.kron(d2, eye), eye)
        + np.kron(np.kron(eye, d2), eye)
        + np.kron(np.kron(eye, eye), d2)
    )
    h[np.diag_indices_from(h)] += op.potential.ravel()
    return h


def _residual_norms(apply_h, vectors: np.ndarray, values: np.ndarray) -> np.ndarray:
    hx = apply_h(vectors)
    return np.linalg.norm(hx - vectors * values[None, :], axis=0)


def _package(op: ElectronicOperator, values, vectors, residuals) -> Eigenpairs:
    grid = op.grid
    order = np.argsort(values)
    values, vectors, residuals = values[order], vectors[:, order], residuals[order]
    # Euclidean-normalized columns -> L^2-normalized fields
    states = (vectors.T / grid.cell_volume ** 0.5).reshape((-1,) + grid.shape)
    if states[0].sum() < 0:
        states[0] *= -1.0
    return Eigenpairs(grid=grid, values=values, states=states, residuals=residuals)


def lowest_eigenpairs(
    op: ElectronicOperator,
    count: int,
    tol: float = 1e-9,
    seed: int = 0,
    max_iter: Optional[int] = None,
    initial: Optional[np.ndarray] = None,
) -> Eigenpairs:
    """First `count` eigenpairs of H_V, ascending; residuals <= tol.

    Small grids are diagonalised densely; otherwise preconditioned LOBPCG from a
    seeded random block (with `initial` as its first column when given).
    """
    if count < 1:
        raise ModelError("count must be at least 1")
    if tol <= 0:
        raise ModelError("tol must be positive")
    grid = op.grid
    max_iter = min(max_iter or settings.eigensolver_max_iter, 10000)

    if grid.size <= settings.dense_eigensolver_limit:
        count = min(count, grid.size)
        values, vectors = eigh(_dense_hamiltonian(op), subset_by_index=[0, count - 1])
        apply_h, _ = _linear_operators(op)
        residuals = _residual_norms(apply_h, vectors, values)
        return _package(op, values, vectors, residuals)

    apply_h, apply_m = _linear_operators(op)
    guards = count // 2 + 3
    rng = np.random.default_rng(seed)
    block = rng.standard_normal((grid.size, count + guards))
    if initial is not None:
        block[:, 0] = np.asarray(initial).real.ravel()

    values, vectors = lobpcg(apply_h, block, M=apply_m, tol=tol, maxiter=max_iter, largest=False)
    order = np.argsort(values)
    values, vectors = values[order][:count], vectors[:, order][:, :count]
    residuals = _residual_norms(apply_h, vectors, values)
    best = float(np.max(residuals))
    logger.debug("lobpcg: worst residual %.3e over %d pairs", best, count)
    if best <= tol:
        return _package(op, values, vectors, residuals)

    # LOBPCG stalled above tol: polish with implicitly restarted Lanczos from its answer
    try:
        values, vectors = eigsh(
            apply_h, k=min(count + 2, grid.size - 1), which="SA",
            v0=vectors.sum(axis=1), tol=0, maxiter=max_iter,
        )
    except ArpackNoConvergence as exc:
        values, vectors = exc.eigenvalues, exc.eigenvectors
    if values.size >= count:
        order = np.argsort(values)
        values, vectors = values[order][:count], vectors[:, order][:, :count]
        residuals = _residual_norms(apply_h, vectors, values)
        worst = float(np.max(residuals))
        logger.debug("lanczos polish: worst residual %.3e", worst)
        if worst <= tol:
            return _package(op, values, vectors, residuals)
        best = min(best, worst)

    convergence_logger.warning(
        "eigensolver stopped after %d iterations with residual %.3e (tol %.1e)", max_iter, best, tol
    )
    raise ConvergenceError(
        f"lowest_eigenpairs did not reach tol {tol:g}; best residual {best:.3e}",
        best_residual=best,
        iterations=max_iter,
    )


def spectral_gap(eigs: Eigenpairs) -> float:
    """delta_V: distance from E0 to the smallest eigenvalue strictly above it"""
    e0 = eigs.values[0]
    above = eigs.values[eigs.values > e0 + DEGENERACY_REL_TOL * abs(e0)]
    if above.size == 0:
        raise ModelError("all computed eigenvalues coincide with E0; request more eigenpairs")
    return float(above[0] - e0)


def electronic_ground(
    op: ElectronicOperator, tol: float = 1e-9, seed: int = 0, count: int = 4
) -> ElectronicGround:
    """u_V, mu_V and delta_V; grows the eigen-block until an excited level is resolved"""
    while True:
        eigs = lowest_eigenpairs(op, count, tol=tol, seed=seed)
        try:
            delta = spectral_gap(eigs)
            break
        except ModelError:
            if count >= op.grid.size:
                raise
            count *= 2
    logger.info("electronic ground: mu_V=%.12g delta_V=%.6g", eigs.values[0], delta)
    return ElectronicGround(u_v=eigs.state(0), mu_v=float(eigs.values[0]), delta_v=delta, eigenpairs=eigs)


# === Norms and diagnostics ===

def qv_norm(u: RealField, potential: RealField) -> float:
    check_same_grid(u, potential)
    grid = u.grid
    v_plus = np.maximum(potential.samples.real, 0.0)
    l2_sq = norm_array(u.samples, grid) ** 2
    weighted = grid.cell_volume * float(np.sum(v_plus * np.abs(u.samples) ** 2))
    return math.sqrt(l2_sq + h1dot_array(u.samples, grid) + weighted)


def coercivity_check(op: ElectronicOperator, u: RealField, a: float, b: float) -> CoercivityReport:
    """||u||^2_H1dot <= (<u, H_V u> + b ||u||^2) / (1 - a)"""
    if not 0 <= a < 1:
        raise ModelError("coercivity_check needs 0 <= a < 1")
    grid = op.grid
    lhs = h1dot_array(u.samples, grid)
    energy = inner_array(u.samples, apply_hv_array(op, u.samples), grid).real
    rhs = (energy + b * norm_array(u.samples, grid) ** 2) / (1.0 - a)
    return CoercivityReport(lhs=lhs, rhs=rhs, holds=lhs <= rhs * (1.0 + 1e-10))


def form_bound_search(
    op: ElectronicOperator, a_grid: Iterable[float], n_states: int = 100, seed: int = 0
) -> FormBoundSearch:
    """Smallest b for each a that makes coercivity_check hold on seeded random states"""
    rng = np.random.default_rng(seed)
    grid = op.grid
    kinetic, energy = [], []
    for _ in range(n_states):
        u = gaussian_mixture_field(grid, rng)
        kinetic.append(h1dot_array(u.samples, grid))
        energy.append(inner_array(u.samples, apply_hv_array(op, u.samples), grid).real)
    kinetic, energy = np.array(kinetic), np.array(energy)

    bounds = []
    for a in a_grid:
        if not 0 <= a < 1:
            raise ModelError("form_bound_search needs every a in [0, 1)")
        b = float(np.max((1.0 - a) * kinetic - energy))
        bounds.append(FormBound(a=float(a), b=max(b, 0.0)))
    return FormBoundSearch(bounds=bounds, n_states=n_states)


def eta_profile(r: np.ndarray) -> np.ndarray:
    """1 on r <= 1, cos^2(pi (r - 1) / 2) on 1 < r < 2, 0 beyond"""
    r = np.asarray(r, dtype=float)
    ramp = np.cos(0.5 * math.pi * (r - 1.0)) ** 2
    return np.where(r <= 1.0, 1.0, np.where(r < 2.0, ramp, 0.0))


def localized_boost(grid: GridSpec, C: float, R: float) -> RealField:
    """2 C eta(|x| / R)^2"""
    eta = eta_profile(np.sqrt(grid.radius_squared) / R)
    return RealField(grid=grid, samples=2.0 * C * eta ** 2)


def confining_gap_probe(
    potential: PotentialSpec, C: float, R: float, grid: GridSpec, tol: float = 1e-9, seed: int = 0
) -> GapProbe:
    """Ground energies of H_V and of H_{V_1,C} with V_1,C = V_+ + 2C eta_R^2"""
    if not potential.is_confining():
        raise ModelError(f"{potential.variant.value} is not a confining potential")
    if C < 0 or R <= 0:
        raise ModelError("confining_gap_probe needs C >= 0 and R > 0")
    if 2.0 * R >= grid.box_length / 2.0:
        raise ModelError(f"R={R:g} too large for box_length={grid.box_length:g} (need 2R < L/2)")

    op = operator_for(potential, grid)
    boosted = np.maximum(op.potential, 0.0) + localized_boost(grid, C, R).samples.real
    op_boosted = make_operator(RealField(grid=grid, samples=boosted))

    mu_v = float(lowest_eigenpairs(op, 1, tol=tol, seed=seed).values[0])
    mu_v1c = float(lowest_eigenpairs(op_boosted, 1, tol=tol, seed=seed).values[0])
    gap_ok = mu_v1c - mu_v >= C
    if not gap_ok:
        logger.info("confining gap %.6g below C=%g (R=%g)", mu_v1c - mu_v, C, R)
    return GapProbe(mu_v=mu_v, mu_v1c=mu_v1c, gap_ok=gap_ok)
