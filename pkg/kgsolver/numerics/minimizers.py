# kgsolver/numerics/minimizers.py - Minimizers of the Hartree energy J on the unit sphere
import logging
import math
from itertools import combinations
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed

from kgsolver.config import settings
from kgsolver.errors import ConvergenceError, FixedPointRefused, ModelError
from kgsolver.numerics.electronic_solver import (
    apply_hv_array,
    electronic_ground,
    kinetic_preconditioner,
    localized_boost,
    lowest_eigenpairs,
    make_operator,
    operator_for,
)
from kgsolver.numerics.hartree_core import (
    HartreeState,
    density_hat_array,
    evaluate_state,
    field_from_state,
    hartree_energy_array,
)
from kgsolver.numerics.model_library import build_kernel, decompose_W, sample_potential
from kgsolver.numerics.spectral_grid import (
    fourier_multiply,
    forward_array,
    gaussian_mixture_field,
    inner_array,
    norm_array,
)
from kgsolver.schemas.electronic import ElectronicGround, ElectronicOperator
from kgsolver.schemas.field import RealField
from kgsolver.schemas.grid import GridSpec
from kgsolver.schemas.kernel import KernelW
from kgsolver.schemas.minimize import (
    CrossCheck,
    ExistenceReport,
    GroundStateResult,
    MinimizeMethod,
    MinimizeOptions,
    PhiCheck,
    StartKind,
    UniquenessReport,
)
from kgsolver.schemas.model import ModelSpec

logger = logging.getLogger(__name__)
convergence_logger = logging.getLogger("convergence")

MIN_MIXING = 1e-6
CROSSCHECK_STATE_TOL = 1e-5
RESONANCE_REL_TOL = 1e-6


def _roundoff(state: HartreeState) -> float:
    """Size of the rounding noise in one evaluation of J"""
    return 16.0 * np.finfo(float).eps * (abs(state.quadratic) + abs(state.interaction) + 1.0)


def _align_phase(samples: np.ndarray, reference: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Multiply by the unit phase that makes <samples, reference> real and positive"""
    overlap = inner_array(samples, reference, grid)
    if abs(overlap) == 0.0:
        return samples
    return samples * (overlap / abs(overlap))


def _normalized(samples: np.ndarray, grid: GridSpec) -> np.ndarray:
    return samples / norm_array(samples, grid)


def _start_samples(
    opts: MinimizeOptions, grid: GridSpec, ground: ElectronicGround, start_state: Optional[RealField]
) -> np.ndarray:
    if opts.start == StartKind.ELECTRONIC_GROUND:
        return np.array(ground.u_v.samples)
    if opts.start == StartKind.RANDOM:
        rng = np.random.default_rng(opts.seed)
        return np.array(gaussian_mixture_field(grid, rng).samples)
    if start_state is None:
        raise ModelError("start=provided needs a start_state")
    if start_state.grid != grid:
        raise ModelError("start_state lives on a different grid")
    norm = norm_array(start_state.samples, grid)
    if norm == 0.0:
        raise ModelError("start_state is the zero field")
    return np.array(start_state.samples) / norm


class BacktrackingLineSearcher:
    """Armijo backtracking along the normalization curve t -> (u + t d)/||u + t d||.

    The trial step comes from the second-order model of J along the curve when
    it has positive curvature, otherwise from the previous decrease scaled by
    `optimism`; the very first trial is `initial_step`.
    """

    def __init__(self, op: ElectronicOperator, kernel: KernelW, opts: MinimizeOptions):
        self.op = op
        self.kernel = kernel
        self.sufficient_decrease = opts.armijo
        self.contraction_factor = opts.shrink
        self.optimism = opts.optimism
        self.max_iterations = opts.max_backtracks
        self._last_decrease: Optional[float] = None

    def _model_curvature(self, state: HartreeState, u: np.ndarray, d: np.ndarray) -> float:
        """Second-order coefficient of t -> J((u + t d)/||u + t d||), d tangent at u"""
        grid = self.op.grid
        s = norm_array(d, grid) ** 2
        q2 = float(inner_array(d, apply_hv_array(self.op, d), grid).real)
        b = forward_array(2.0 * (np.conj(u) * d).real, grid)
        c = density_hat_array(d, grid)
        a = state.rho_hat
        w = self.kernel.values
        i2 = float(self.kernel.grid.freq_cell_volume * np.sum(
            w * (b.real ** 2 + b.imag ** 2 + 2.0 * (a * np.conj(c)).real)
        ))
        return (q2 - state.quadratic * s) - (i2 - 2.0 * state.interaction * s)

    def trial_step(self, state: HartreeState, u: np.ndarray, d: np.ndarray, slope: float) -> float:
        initial_step = 1.0 / (2.0 * max(1.0, abs(state.lambda_v)))
        if self._last_decrease is None:
            return initial_step
        curvature = self._model_curvature(state, u, d)
        if curvature > 0:
            return -slope / (2.0 * curvature)
        if self._last_decrease > _roundoff(state):
            return self.optimism * 2.0 * self._last_decrease / -slope
        return initial_step

    def search(self, state: HartreeState, u: np.ndarray, d: np.ndarray, slope: float):
        """(step, new samples, new energy); step 0 when no trial passed the Armijo test.

        The Armijo bound is widened by the round-off of J, so an accepted step may raise
        the energy by at most that much; `minimize` reports any such rise in its message.
        """
        grid = self.op.grid
        f0 = state.energy
        noise = _roundoff(state)
        alpha = self.trial_step(state, u, d, slope)
        if not math.isfinite(alpha) or alpha <= 0:
            alpha = 1.0 / (2.0 * max(1.0, abs(state.lambda_v)))

        for _ in range(self.max_iterations):
            trial = _normalized(u + alpha * d, grid)
            new_f = hartree_energy_array(trial, self.op, self.kernel)
            if new_f <= f0 + self.sufficient_decrease * alpha * slope + noise:
                self._last_decrease = f0 - new_f
                return alpha, trial, new_f
            alpha *= self.contraction_factor
        return 0.0, u, f0


def _converged(state: HartreeState, trace: List[float], grid: GridSpec, opts: MinimizeOptions) -> bool:
    residual = norm_array(state.residual, grid)
    delta_e = abs(trace[-1] - trace[-2]) if len(trace) > 1 else 0.0
    return residual <= opts.residual_tol and delta_e <= opts.energy_tol


def _stall_converged(state: HartreeState, grid: GridSpec, opts: MinimizeOptions) -> bool:
    """Whether a stalled line search still meets both stopping criteria.

    No trial beat the rounding noise, so the next energy change is bounded by it.
    """
    residual = norm_array(state.residual, grid)
    return residual <= opts.residual_tol and _roundoff(state) <= opts.energy_tol


def _projected_gradient(op, kernel, u0, opts: MinimizeOptions):
    grid = op.grid
    preconditioner = kinetic_preconditioner(grid)
    searcher = BacktrackingLineSearcher(op, kernel, opts)

    u = _normalized(u0, grid)
    state = evaluate_state(u, op, kernel)
    trace = [state.energy]
    direction = precond_grad = residual_prev = None
    message = ""
    iterations = 0

    while not _converged(state, trace, grid, opts):
        if iterations >= opts.max_iter:
            message = f"max_iter={opts.max_iter} reached"
            break
        r = state.residual
        z = fourier_multiply(r, preconditioner)
        z = z - inner_array(u, z, grid) * u

        d = -z
        if opts.momentum and direction is not None:
            transported_z = precond_grad - inner_array(u, precond_grad, grid) * u
            transported_d = direction - inner_array(u, direction, grid) * u
            denominator = float(inner_array(residual_prev, precond_grad, grid).real)
            if denominator > 0:
                beta = max(0.0, float(inner_array(r, z - transported_z, grid).real) / denominator)
                d = -z + beta * transported_d
        slope = 2.0 * float(inner_array(r, d, grid).real)
        if slope >= 0:
            d = -z
            slope = 2.0 * float(inner_array(r, d, grid).real)
        if slope >= 0:
            message = "no descent direction left"
            break

        step, u_new, _ = searcher.search(state, u, d, slope)
        if step == 0.0:
            if not _stall_converged(state, grid, opts):
                message = "line search stalled"
            break
        direction, precond_grad, residual_prev = d, z, r
        u = u_new
        state = evaluate_state(u, op, kernel)
        trace.append(state.energy)
        iterations += 1
        logger.debug("pg %d: J=%.15g residual=%.3e step=%.3e", iterations, state.energy,
                     norm_array(state.residual, grid), step)

    return u, state, trace, iterations, message, 0


def _scf(op, kernel, u0, opts: MinimizeOptions):
    grid = op.grid
    inner_tol = min(opts.eigen_tol, 0.1 * opts.residual_tol)
    theta = opts.mixing
    halvings = 0

    u = _normalized(u0, grid)
    state = evaluate_state(u, op, kernel)
    trace = [state.energy]
    message = ""
    iterations = 0

    while not _converged(state, trace, grid, opts):
        if iterations >= opts.max_iter:
            message = f"max_iter={opts.max_iter} reached"
            break
        effective = RealField(grid=grid, samples=op.potential - 2.0 * state.vh)
        seed_column = (u * np.exp(-1j * np.angle(np.sum(u)))).real
        try:
            eigs = lowest_eigenpairs(make_operator(effective), 1, tol=inner_tol, seed=opts.seed,
                                     initial=seed_column)
        except ConvergenceError as exc:
            message = f"linearized eigen-solve failed: {exc.detail}"
            break
        u_lin = _align_phase(eigs.states[0].astype(complex), u, grid)

        while True:
            candidate = _normalized((1.0 - theta) * u + theta * u_lin, grid)
            new_state = evaluate_state(candidate, op, kernel)
            if new_state.energy <= state.energy + _roundoff(state) or theta < MIN_MIXING:
                break
            theta *= 0.5
            halvings += 1
            convergence_logger.warning(
                "scf energy rose at iteration %d (%.15g > %.15g); mixing halved to %g",
                iterations, new_state.energy, state.energy, theta,
            )
        if new_state.energy > state.energy + _roundoff(state):
            message = "scf stalled with mixing below its floor"
            break
        u, state = candidate, new_state
        trace.append(state.energy)
        iterations += 1
        logger.debug("scf %d: J=%.15g residual=%.3e theta=%g", iterations, state.energy,
                     norm_array(state.residual, grid), theta)

    return u, state, trace, iterations, message, halvings


def _package(op, kernel, ground, u, state, trace, iterations, message, halvings, method, converged):
    grid = op.grid
    u = _align_phase(u, ground.u_v.samples, grid)
    u_field = RealField(grid=grid, samples=u)
    residual = norm_array(state.residual, grid)
    if not converged:
        convergence_logger.warning(
            "%s stopped after %d iterations: residual %.3e, J=%.15g (%s)",
            method.value, iterations, residual, state.energy, message or "not converged",
        )
    return GroundStateResult(
        u_gs=u_field,
        f_gs=field_from_state(u_field, kernel).field,
        energy=state.energy,
        lambda_v=state.lambda_v,
        residual=residual,
        iterations=iterations,
        energy_trace=trace,
        converged=converged,
        method=method,
        mixing_halvings=halvings,
        message=message,
    )


def _trace_rise_note(trace: List[float]) -> str:
    """Largest energy rise along the trace; empty when the trace never increased"""
    rises = np.diff(np.asarray(trace, dtype=float))
    worst = float(rises.max()) if rises.size else 0.0
    if worst <= 0.0:
        return ""
    return f"energy trace rose by up to {worst:.2e} within the round-off allowance"


def _run(method: MinimizeMethod, op, kernel, ground, u0, opts):
    runner = _projected_gradient if method == MinimizeMethod.PROJECTED_GRADIENT else _scf
    u, state, trace, iterations, message, halvings = runner(op, kernel, u0, opts)
    converged = not message and norm_array(state.residual, op.grid) <= opts.residual_tol
    message = "; ".join(part for part in (message, _trace_rise_note(trace)) if part)
    return _package(op, kernel, ground, u, state, trace, iterations, message, halvings, method, converged)


def minimize(
    model: ModelSpec,
    grid: GridSpec,
    opts: Optional[MinimizeOptions] = None,
    *,
    kernel: Optional[KernelW] = None,
    ground: Optional[ElectronicGround] = None,
    start_state: Optional[RealField] = None,
    op: Optional[ElectronicOperator] = None,
) -> GroundStateResult:
    """Minimize J over normalized u; the state is phase-aligned so that <u, u_V> > 0.

    `kernel`, `ground` and `op` may be passed in to share them across calls.
    Non-convergence is reported through `converged`, not raised.
    """
    opts = opts or MinimizeOptions()
    op = op or operator_for(model.potential, grid)
    kernel = kernel or build_kernel(model, grid)
    ground = ground or electronic_ground(op, tol=opts.eigen_tol, seed=opts.seed)
    u0 = _start_samples(opts, grid, ground, start_state)

    if opts.method != MinimizeMethod.BOTH_CROSSCHECK:
        result = _run(opts.method, op, kernel, ground, u0, opts)
    else:
        pg = _run(MinimizeMethod.PROJECTED_GRADIENT, op, kernel, ground, u0, opts)
        scf = _run(MinimizeMethod.SCF, op, kernel, ground, u0, opts)
        difference = abs(pg.energy - scf.energy)
        distance = norm_array(pg.u_gs.samples - scf.u_gs.samples, grid)
        check = CrossCheck(
            energy_difference=difference,
            state_distance=distance,
            agree=difference <= 10.0 * opts.energy_tol and distance <= CROSSCHECK_STATE_TOL,
        )
        if not check.agree:
            convergence_logger.warning(
                "projected gradient and scf disagree: |dE|=%.3e, |du|=%.3e", difference, distance
            )
        result = pg.model_copy(update={
            "method": MinimizeMethod.BOTH_CROSSCHECK,
            "iterations": pg.iterations + scf.iterations,
            "mixing_halvings": scf.mixing_halvings,
            "crosscheck": check,
            "converged": pg.converged and scf.converged and check.agree,
            "message": pg.message or scf.message,
        })

    logger.info(
        "minimize %s: E=%.15g lambda=%.12g residual=%.3e in %d iterations (converged=%s)",
        result.method.value, result.energy, result.lambda_v, result.residual,
        result.iterations, result.converged,
    )
    return result


# === Diagnostics on a computed minimizer ===

def phi_fixed_point_check(
    result: GroundStateResult,
    op: ElectronicOperator,
    kernel: KernelW,
    ground: ElectronicGround,
    n_eigenbasis: int = 40,
    tol: float = 1e-9,
) -> PhiCheck:
    """Compare phi = Pi_perp u with sum_{n>=1} <u_n, 2 V_H u> / (E_n - lambda) u_n"""
    if not result.converged:
        raise FixedPointRefused("the minimizer did not converge")
    if n_eigenbasis < 2:
        raise ModelError("n_eigenbasis must be at least 2")
    if result.lambda_v > ground.mu_v + 0.5 * ground.delta_v:
        raise FixedPointRefused(
            f"lambda={result.lambda_v:.12g} is not below mu_V + delta_V/2 = "
            f"{ground.mu_v + 0.5 * ground.delta_v:.12g}"
        )
    grid = op.grid
    eigs = lowest_eigenpairs(op, n_eigenbasis, tol=tol)
    lam = result.lambda_v
    excited = eigs.values[1:]
    if np.any(np.abs(excited - lam) < RESONANCE_REL_TOL * ground.delta_v):
        raise FixedPointRefused(f"lambda={lam:.12g} resonates with an excited level of H_V")

    u = result.u_gs.samples
    state = evaluate_state(u, op, kernel)
    source = 2.0 * state.vh * u

    basis = eigs.states.reshape((eigs.count, -1))
    phi = u.ravel() - inner_array(basis[0], u.ravel(), grid) * basis[0]

    coefficients = grid.cell_volume * (np.conj(basis) @ source.ravel())
    rhs = (coefficients[1:] / (excited - lam)) @ basis[1:]
    outside = source.ravel() - coefficients @ basis

    residual = norm_array(state.residual, grid)
    tail = (norm_array(outside, grid) + residual) / (eigs.values[-1] - lam) + residual / (excited[0] - lam)
    return PhiCheck(
        lhs_rhs_gap=norm_array(phi - rhs, grid),
        tail_estimate=float(tail),
        phi_norm=norm_array(phi, grid),
        n_eigenbasis=eigs.count,
    )


def uniqueness_probe(
    model: ModelSpec,
    grid: GridSpec,
    n_starts: int,
    seed: int = 0,
    opts: Optional[MinimizeOptions] = None,
    threads: Optional[int] = None,
) -> UniquenessReport:
    """Minimize from seeded random starts and measure how far the minimizers spread"""
    if n_starts < 2:
        raise ModelError("uniqueness_probe needs at least 2 starts")
    opts = opts or MinimizeOptions()
    op = operator_for(model.potential, grid)
    kernel = build_kernel(model, grid)
    ground = electronic_ground(op, tol=opts.eigen_tol, seed=seed)

    def run(index: int) -> GroundStateResult:
        start_opts = opts.model_copy(update={"start": StartKind.RANDOM, "seed": seed + index})
        return minimize(model, grid, start_opts, kernel=kernel, ground=ground, op=op)

    n_jobs = settings.get_thread_count(threads)
    results = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(run)(i) for i in range(n_starts))

    kept = [r for r in results if r.converged]
    excluded = [seed + i for i, r in enumerate(results) if not r.converged]
    if excluded:
        convergence_logger.warning("uniqueness_probe: seeds %s did not converge and were excluded", excluded)

    energies = [r.energy for r in kept]
    if len(kept) < 2:
        return UniquenessReport(max_pairwise_l2=math.inf, energy_spread=math.inf,
                                energies=energies, excluded=excluded)
    distances = [
        norm_array(a.u_gs.samples - b.u_gs.samples, grid) for a, b in combinations(kept, 2)
    ]
    return UniquenessReport(
        max_pairwise_l2=float(max(distances)),
        energy_spread=float(max(energies) - min(energies)),
        energies=energies,
        excluded=excluded,
    )


def existence_condition_report(
    model: ModelSpec,
    grid: GridSpec,
    boost_C: float = 0.0,
    boost_R: Optional[float] = None,
    tol: float = 1e-9,
    seed: int = 0,
) -> ExistenceReport:
    """||W_1||_1 against the gap mu_{V_1} - mu_V, with V_1 = V_+ (+ 2C eta_R^2 when C > 0)"""
    if boost_C < 0:
        raise ModelError("boost_C must be nonnegative")
    decomposition = decompose_W(build_kernel(model, grid))
    potential = sample_potential(model.potential, grid)
    v_plus = np.maximum(potential.samples.real, 0.0)
    if boost_C > 0:
        radius = boost_R if boost_R is not None else grid.box_length / 6.0
        if radius <= 0 or 2.0 * radius >= grid.box_length / 2.0:
            raise ModelError(f"boost_R={radius:g} must satisfy 0 < 2R < L/2")
        v_plus = v_plus + localized_boost(grid, boost_C, radius).samples.real

    mu_v = float(lowest_eigenpairs(make_operator(potential), 1, tol=tol, seed=seed).values[0])
    mu_v1 = float(lowest_eigenpairs(
        make_operator(RealField(grid=grid, samples=v_plus)), 1, tol=tol, seed=seed
    ).values[0])
    gap = mu_v1 - mu_v
    w1 = decomposition.w1_l1_norm
    if w1 == 0.0:
        ratio = 0.0
    elif gap > 0:
        ratio = w1 / gap
    else:
        ratio = math.inf
    return ExistenceReport(
        w1_l1=w1,
        w2_weak3=decomposition.w2_weak3_norm,
        gap_mu=gap,
        smallness_ratio=ratio,
        mu_v=mu_v,
        mu_v1=mu_v1,
    )
