# kgsolver/numerics/fock_oracle.py - Truncated Fock space: coherent states and a miniature Pauli-Fierz model
#
# Field operator convention: Φ(h) = (a(h) + a*(h)) / √2 with a(h) = Σ_m conj(h_m) a_m,
# so <Ψ_f, Φ(h) Ψ_f> = √2 Re<h, f>; the interaction is g √2 Φ(h_x) = g (a(h_x) + a*(h_x)).
import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh
from scipy.special import gammainc

from kgsolver.config import settings
from kgsolver.errors import ConvergenceError, DimensionCapError, ModelError, TruncationError
from kgsolver.numerics.electronic_solver import electronic_ground, laplacian_multiplier, lowest_eigenpairs, operator_for
from kgsolver.numerics.hartree_core import interaction_term
from kgsolver.numerics.minimizers import minimize
from kgsolver.numerics.model_library import build_kernel, restrict_to_modes
from kgsolver.numerics.studies import noncoherent_term
from kgsolver.schemas.fock import FockSpec, FockVector, MiniPauliFierzResult
from kgsolver.schemas.grid import GridSpec
from kgsolver.schemas.minimize import MinimizeOptions
from kgsolver.schemas.model import ModelSpec

logger = logging.getLogger(__name__)
convergence_logger = logging.getLogger("convergence")

TAIL_TOL = 1e-12
MAX_ELECTRON_AXIS = 8


def truncation_tail(norm_sq: float, n_max: int) -> float:
    """e^{-x} Σ_{n > n_max} x^n / n!  at x = ||f||^2 (regularized lower incomplete gamma)"""
    if norm_sq == 0.0:
        return 0.0
    return float(gammainc(n_max + 1, norm_sq))


def required_n_max(norm_sq: float, tol: float = TAIL_TOL) -> int:
    n_max = 0
    while truncation_tail(norm_sq, n_max) > tol:
        n_max += 1
    return n_max


def check_dimension(dimension: int):
    cap = settings.fock_dimension_cap
    if dimension > cap:
        raise DimensionCapError(f"tensor dimension {dimension} exceeds the cap {cap}")


def _mode_amplitudes(f: Sequence[complex], spec: FockSpec) -> np.ndarray:
    f = np.asarray(f, dtype=complex).ravel()
    if f.size != spec.n_modes:
        raise ModelError(f"expected {spec.n_modes} mode amplitudes, got {f.size}")
    if not np.all(np.isfinite(f)):
        raise ModelError("mode amplitudes must be finite")
    return f


def coherent_vector(f: Sequence[complex], spec: FockSpec) -> FockVector:
    """Ψ_f = e^{-||f||^2/2} Σ f^{⊗n}/√(n!), truncated at n_max per mode"""
    f = _mode_amplitudes(f, spec)
    check_dimension(spec.dimension)
    norm_sq = float(np.sum(np.abs(f) ** 2))
    tail = truncation_tail(norm_sq, spec.n_max)
    if tail > TAIL_TOL:
        needed = required_n_max(norm_sq)
        convergence_logger.warning(
            "coherent vector with ||f||^2=%.6g truncated at n_max=%d (tail %.3e); needs n_max=%d",
            norm_sq, spec.n_max, tail, needed,
        )
        raise TruncationError(
            f"truncation tail {tail:.3e} above {TAIL_TOL:g}; use n_max >= {needed}",
            required_n_max=needed,
        )

    amplitudes = np.ones((), dtype=complex)
    for fm in f:
        column = np.empty(spec.n_max + 1, dtype=complex)
        column[0] = math.exp(-0.5 * abs(fm) ** 2)
        for n in range(1, spec.n_max + 1):
            column[n] = column[n - 1] * fm / math.sqrt(n)
        amplitudes = np.multiply.outer(amplitudes, column)
    return FockVector(spec=spec, amplitudes=amplitudes)


def _ladder(amplitudes: np.ndarray, axis: int, lower: bool) -> np.ndarray:
    moved = np.moveaxis(amplitudes, axis, 0)
    n_max = moved.shape[0] - 1
    factors = np.sqrt(np.arange(1, n_max + 1, dtype=float)).reshape((-1,) + (1,) * (moved.ndim - 1))
    out = np.zeros_like(moved)
    if lower:
        out[:-1] = factors * moved[1:]
    else:
        out[1:] = factors * moved[:-1]
    return np.moveaxis(out, 0, axis)


def annihilate(vector: FockVector, mode: int) -> FockVector:
    """a_mode; a|n> = √n |n-1>"""
    if not 0 <= mode < vector.spec.n_modes:
        raise ModelError(f"mode {mode} out of range")
    return vector.model_copy(update={"amplitudes": _ladder(vector.amplitudes, mode, lower=True)})


def create(vector: FockVector, mode: int) -> FockVector:
    """a*_mode truncated at n_max; a*|n> = √(n+1) |n+1>"""
    if not 0 <= mode < vector.spec.n_modes:
        raise ModelError(f"mode {mode} out of range")
    return vector.model_copy(update={"amplitudes": _ladder(vector.amplitudes, mode, lower=False)})


def _occupations(spec: FockSpec, mode: int) -> np.ndarray:
    shape = [1] * spec.n_modes
    shape[mode] = spec.n_max + 1
    return np.arange(spec.n_max + 1, dtype=float).reshape(shape)


def expect_number(f: Sequence[complex], spec: FockSpec) -> float:
    """<Ψ_f, dΓ(ω) Ψ_f> = Σ_m ω_m <N_m>"""
    psi = coherent_vector(f, spec).amplitudes
    density = np.abs(psi) ** 2
    return float(sum(
        omega * np.sum(_occupations(spec, m) * density) for m, omega in enumerate(spec.omegas)
    ))


def expect_field(h: Sequence[complex], f: Sequence[complex], spec: FockSpec) -> float:
    """<Ψ_f, Φ(h) Ψ_f> = √2 Re <Ψ_f, a(h) Ψ_f>"""
    h = _mode_amplitudes(h, spec)
    vector = coherent_vector(f, spec)
    lowered = sum(np.conj(hm) * annihilate(vector, m).amplitudes for m, hm in enumerate(h))
    return math.sqrt(2.0) * float(np.vdot(vector.amplitudes, lowered).real)


# === Miniature Pauli-Fierz model ===

def _mode_indices(grid: GridSpec, modes: Iterable[Tuple[int, int, int]]) -> List[Tuple[int, int, int]]:
    half = grid.n_per_axis // 2
    indices = []
    for mode in modes:
        index = tuple(int(m) + half for m in mode)
        if len(index) != 3 or any(i < 0 or i >= grid.n_per_axis for i in index):
            raise ModelError(f"mode {tuple(mode)} lies outside the frequency lattice")
        indices.append(index)
    if len(set(indices)) != len(indices):
        raise ModelError("mode_subset lists a mode twice")
    return indices


def fock_spec_for_modes(
    model: ModelSpec, grid: GridSpec, modes: Sequence[Tuple[int, int, int]], n_max: int
) -> FockSpec:
    """FockSpec whose mode frequencies are the lattice values of ω at `modes`"""
    omega = build_kernel(model, grid).omega_values
    return FockSpec(
        n_modes=len(modes), n_max=n_max,
        omegas=[float(omega[i]) for i in _mode_indices(grid, modes)],
    )


def _pauli_fierz_operator(op, spec: FockSpec, omegas, couplings, phases, g: float) -> LinearOperator:
    """H_V ⊗ 1 + Σ ω_m a*_m a_m + g Σ c_m (e^{ik_m x} a_m + e^{-ik_m x} a*_m) on (x, n_1..n_M)"""
    grid = op.grid
    electron_shape = grid.shape
    fock_shape = spec.shape
    full_shape = electron_shape + fock_shape
    dimension = grid.size * spec.dimension
    laplacian = laplacian_multiplier(grid).reshape(electron_shape + (1,) * spec.n_modes)
    potential = op.potential.reshape(electron_shape + (1,) * spec.n_modes)
    extra = (1,) * spec.n_modes
    number = [_occupations(spec, m).reshape((1, 1, 1) + _occupations(spec, m).shape) for m in range(spec.n_modes)]

    def matvec(x):
        psi = np.asarray(x, dtype=complex).reshape(full_shape)
        spectrum = sp_fft.fftn(psi, axes=(0, 1, 2), workers=settings.fft_workers)
        out = sp_fft.ifftn(laplacian * spectrum, axes=(0, 1, 2), workers=settings.fft_workers)
        out += potential * psi
        for m in range(spec.n_modes):
            axis = 3 + m
            phase = phases[m].reshape(electron_shape + extra)
            out += omegas[m] * number[m] * psi
            out += g * couplings[m] * (
                phase * _ladder(psi, axis, lower=True) + np.conj(phase) * _ladder(psi, axis, lower=False)
            )
        return out.ravel()

    return LinearOperator((dimension, dimension), matvec=matvec, dtype=complex)


def mini_pauli_fierz(
    model: ModelSpec,
    grid: GridSpec,
    mode_subset: Sequence[Tuple[int, int, int]],
    spec: FockSpec,
    opts: Optional[MinimizeOptions] = None,
) -> MiniPauliFierzResult:
    """Lowest eigenvalue of the discretized Pauli-Fierz operator on a few field modes,
    against the quasi-classical minimum of the same discrete model.

    Mode j couples with amplitude √(Δk^3) v(k_j); `spec.omegas` must be ω(k_j).
    """
    if grid.n_per_axis > MAX_ELECTRON_AXIS:
        raise ModelError(f"mini_pauli_fierz needs n_per_axis <= {MAX_ELECTRON_AXIS}")
    modes = list(mode_subset)
    indices = _mode_indices(grid, modes)
    if len(indices) != spec.n_modes:
        raise ModelError(f"FockSpec has {spec.n_modes} modes but mode_subset lists {len(indices)}")
    dimension = grid.size * spec.dimension
    check_dimension(dimension)
    opts = opts or MinimizeOptions()

    op = operator_for(model.potential, grid)
    kernel = build_kernel(model, grid)
    omegas = np.array([kernel.omega_values[i] for i in indices])
    if not np.allclose(omegas, spec.omegas, rtol=1e-9, atol=0.0):
        raise ModelError("FockSpec omegas must equal the lattice dispersion at the selected modes")
    couplings = math.sqrt(grid.freq_cell_volume) * np.array([kernel.coupling_values[i] for i in indices])

    # quasi-classical minimum over u ⊗ Ψ_α: J with the kernel switched off outside the modes
    ground = electronic_ground(op, tol=opts.eigen_tol, seed=opts.seed)
    restricted = restrict_to_modes(kernel, modes)
    quasi = minimize(model, grid, opts, kernel=restricted, ground=ground, op=op)
    if not quasi.converged:
        raise ConvergenceError(
            f"quasi-classical minimization did not converge: {quasi.message}",
            best_residual=quasi.residual, iterations=quasi.iterations,
        )
    alpha = math.sqrt(grid.freq_cell_volume) * np.array([quasi.f_gs.samples[i] for i in indices])
    coherent_tail = truncation_tail(float(np.sum(np.abs(alpha) ** 2)), spec.n_max)
    if coherent_tail > TAIL_TOL:
        needed = required_n_max(float(np.sum(np.abs(alpha) ** 2)))
        raise TruncationError(
            f"coherent field amplitudes need n_max >= {needed} (tail {coherent_tail:.3e})",
            required_n_max=needed,
        )

    x, y, z = grid.positions
    phases = []
    for index in indices:
        kx, ky, kz = (grid.axis_frequencies[i] for i in index)
        phases.append(np.exp(1j * (kx * x + ky * y + kz * z)))

    hamiltonian = _pauli_fierz_operator(op, spec, omegas, couplings, phases, model.g)
    start = np.multiply.outer(quasi.u_gs.samples, coherent_vector(alpha, spec).amplitudes).ravel()
    try:
        values = eigsh(hamiltonian, k=1, which="SA", v0=start, tol=1e-12,
                       maxiter=settings.eigensolver_max_iter, return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise ConvergenceError(f"full Pauli-Fierz eigen-solve did not converge: {exc}") from exc
    e_full = float(np.min(values.real))

    unit_restricted = restrict_to_modes(build_kernel(model.with_coupling(1.0), grid), modes)
    eigs = lowest_eigenpairs(op, grid.size, tol=opts.eigen_tol, seed=opts.seed)
    t_nc = noncoherent_term(eigs, unit_restricted.coupling_values ** 2, unit_restricted.omega_values)
    i2 = interaction_term(ground.u_v, unit_restricted)

    logger.info(
        "mini Pauli-Fierz (%d modes, n_max=%d, dim %d): e_full=%.12g e_quasi=%.12g",
        spec.n_modes, spec.n_max, dimension, e_full, quasi.energy,
    )
    return MiniPauliFierzResult(
        e_full=e_full,
        e_quasi=quasi.energy,
        mu_v=ground.mu_v,
        t_nc=t_nc,
        i2=i2,
        dimension=dimension,
        coherent_tail=coherent_tail,
    )


def second_order_ratio(result: MiniPauliFierzResult, g: float) -> float:
    """(e_quasi - e_full) / (g^2 T_nc); tends to 1 as g -> 0"""
    predicted = g ** 2 * result.t_nc
    if predicted <= 0.0:
        raise ModelError("second-order ratio needs g != 0 and a positive non-coherent term")
    return (result.e_quasi - result.e_full) / predicted
