# kgsolver/numerics/studies.py - Coupling, cutoff and box-size sweeps; critical-coupling scan; second-order split; inequality probes
import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from kgsolver.config import settings
from kgsolver.errors import ConvergenceError, ModelError
from kgsolver.numerics.electronic_solver import (
    electronic_ground,
    lowest_eigenpairs,
    make_operator,
    qv_norm,
)
from kgsolver.numerics.hartree_core import field_from_state, interaction_term, zomega_distance
from kgsolver.numerics.minimizers import minimize
from kgsolver.numerics.model_library import build_kernel, sample_potential, split_kernel, weak_lorentz_norm
from kgsolver.numerics.spectral_grid import (
    bar_array,
    draw_gaussian_mixture,
    forward_array,
    h1dot_array,
    norm_array,
    sample_gaussian_mixture,
)
from kgsolver.schemas.electronic import ElectronicOperator, Eigenpairs
from kgsolver.schemas.field import RealField, SpectralField
from kgsolver.schemas.grid import GridSpec
from kgsolver.schemas.kernel import KernelW
from kgsolver.schemas.minimize import GroundStateResult, MinimizeOptions
from kgsolver.schemas.model import CouplingKind, DispersionKind, ModelSpec
from kgsolver.schemas.study import (
    CriticalCouplingScan,
    CriticalScanPoint,
    InequalityProbe,
    InequalityStats,
    IRSeries,
    IRStudy,
    SecondOrderSplit,
    SmallGSweep,
    StudyRecord,
    UVSweep,
)

logger = logging.getLogger(__name__)
convergence_logger = logging.getLogger("convergence")

BASIS_RESIDUAL_TOL = 1e-8
COLLAPSE_KINETIC_FRACTION = 0.1


def _parallel(jobs, threads: Optional[int]):
    """Run independent jobs on a thread pool; results come back in submission order"""
    n_jobs = settings.get_thread_count(threads)
    return Parallel(n_jobs=n_jobs, prefer="threads")(jobs)


def _check_ascending(values: Sequence[float], name: str):
    if len(values) == 0:
        raise ModelError(f"{name} must not be empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ModelError(f"{name} must be strictly ascending")


def _record(parameter: float, result: GroundStateResult, mu_v: float, kernel: KernelW, **extra) -> StudyRecord:
    field = field_from_state(result.u_gs, kernel)
    return StudyRecord(
        sweep_parameter=parameter,
        energy=result.energy,
        mu_v=mu_v,
        residual=result.residual,
        converged=result.converged,
        f_l2_norm=field.l2_norm_sq,
        f_zomega_norm=field.zomega_norm_sq,
        **extra,
    )


# === Small coupling ===

def small_g_sweep(
    model_template: ModelSpec,
    g_list: Sequence[float],
    grid: GridSpec,
    opts: Optional[MinimizeOptions] = None,
    threads: Optional[int] = None,
) -> SmallGSweep:
    """E_V(g) against mu_V - g^2 I_2 and the log-log slope of the remainder"""
    _check_ascending(g_list, "g_list")
    if g_list[0] <= 0:
        raise ModelError("g_list must contain positive couplings")
    opts = opts or MinimizeOptions()
    op = make_operator(sample_potential(model_template.potential, grid))
    ground = electronic_ground(op, tol=opts.eigen_tol, seed=opts.seed)
    i2 = interaction_term(ground.u_v, build_kernel(model_template.with_coupling(1.0), grid))

    def run(g: float):
        model = model_template.with_coupling(g)
        kernel = build_kernel(model, grid)
        return kernel, minimize(model, grid, opts, kernel=kernel, ground=ground, op=op)

    outcomes = _parallel((delayed(run)(g) for g in g_list), threads)
    records = []
    for g, (kernel, result) in zip(g_list, outcomes):
        remainder = result.energy - ground.mu_v + g ** 2 * i2
        records.append(_record(g, result, ground.mu_v, kernel, i2_coherent=i2, remainder=remainder))

    complete = all(r.converged for r in records)
    sweep = SmallGSweep(records=records, mu_v=ground.mu_v, i2=i2, complete=complete)
    if not complete:
        failed = [r.sweep_parameter for r in records if not r.converged]
        convergence_logger.warning("small_g_sweep: no fit, runs at g=%s did not converge", failed)
        return sweep

    g = np.array(g_list, dtype=float)
    r = np.array([rec.remainder for rec in records])
    constant = float(np.max(np.abs(r) / g ** 4))
    exponent = None
    if g.size >= 2 and np.all(r != 0):
        exponent = float(np.polyfit(np.log(g), np.log(np.abs(r)), 1)[0])
    logger.info("small_g_sweep: I2=%.10g exponent=%s |r|/g^4 <= %.6g", i2, exponent, constant)
    records = [rec.model_copy(update={"fitted_exponent": exponent}) for rec in records]
    return sweep.model_copy(update={
        "records": records, "fitted_exponent": exponent, "remainder_constant": constant,
    })


# === Ultraviolet cutoff ===

def uv_sweep(
    model_template: ModelSpec,
    lambda_list: Sequence[float],
    grid: GridSpec,
    opts: Optional[MinimizeOptions] = None,
    threads: Optional[int] = None,
) -> UVSweep:
    """Cutoff runs compared with the uncut run on the lattice (Λ = max |k|)"""
    _check_ascending(lambda_list, "lambda_list")
    if lambda_list[0] <= 0:
        raise ModelError("lambda_list must contain positive cutoffs")
    opts = opts or MinimizeOptions()
    reference_cutoff = grid.max_frequency
    cutoffs = [min(float(lam), reference_cutoff) for lam in lambda_list]
    if cutoffs[-1] < reference_cutoff:
        logger.info("uv_sweep: appending the reference cutoff %.6g", reference_cutoff)
        cutoffs.append(reference_cutoff)
    cutoffs = sorted(set(cutoffs))

    potential = sample_potential(model_template.potential, grid)
    op = make_operator(potential)
    ground = electronic_ground(op, tol=opts.eigen_tol, seed=opts.seed)

    def run(cutoff: float):
        model = model_template.with_cutoff(None if cutoff >= reference_cutoff else cutoff)
        kernel = build_kernel(model, grid)
        return kernel, minimize(model, grid, opts, kernel=kernel, ground=ground, op=op)

    outcomes = _parallel((delayed(run)(c) for c in cutoffs), threads)
    ref_kernel, reference = outcomes[-1]
    ref_field = field_from_state(reference.u_gs, ref_kernel).field

    records = []
    for cutoff, (kernel, result) in zip(cutoffs, outcomes):
        field = field_from_state(result.u_gs, kernel).field
        records.append(_record(
            cutoff, result, ground.mu_v, kernel,
            u_qv_distance=qv_norm(result.u_gs - reference.u_gs, potential),
            f_zomega_distance=zomega_distance(field, ref_field, ref_kernel),
        ))
        if not result.converged:
            convergence_logger.warning("uv_sweep: run at cutoff %.6g did not converge", cutoff)
    return UVSweep(records=records, reference_cutoff=reference_cutoff, mu_v=ground.mu_v)


# === Infrared ===

def ir_study(
    model_template: ModelSpec,
    grid: GridSpec,
    box_doublings: int,
    kappa_list: Sequence[float] = (0.0,),
    opts: Optional[MinimizeOptions] = None,
    threads: Optional[int] = None,
) -> IRStudy:
    """||f_gs||^2 as the box doubles at fixed spacing (k_min halves), per IR parameter"""
    if model_template.coupling.variant != CouplingKind.NELSON:
        raise ModelError("ir_study expects a Nelson coupling")
    if box_doublings < 1:
        raise ModelError("box_doublings must be at least 1")
    if any(kappa < 0 for kappa in kappa_list):
        raise ModelError("kappa_list must be nonnegative")
    opts = opts or MinimizeOptions()
    grids = [grid]
    for _ in range(box_doublings):
        grids.append(grids[-1].doubled_box())

    def run(kappa: float, box: GridSpec):
        model = model_template.with_ir_param(kappa)
        kernel = build_kernel(model, box)
        op = make_operator(sample_potential(model.potential, box))
        ground = electronic_ground(op, tol=opts.eigen_tol, seed=opts.seed)
        return kernel, ground.mu_v, minimize(model, box, opts, kernel=kernel, ground=ground, op=op)

    pairs = [(kappa, box) for kappa in kappa_list for box in grids]
    outcomes = _parallel((delayed(run)(kappa, box) for kappa, box in pairs), threads)

    series = []
    for i, kappa in enumerate(kappa_list):
        chunk = outcomes[i * len(grids):(i + 1) * len(grids)]
        records = []
        for box, (kernel, mu_v, result) in zip(grids, chunk):
            records.append(_record(box.box_length, result, mu_v, kernel, kappa=float(kappa)))
        norms = [r.f_l2_norm for r in records]
        increments = [b - a for a, b in zip(norms, norms[1:])]
        last = abs(increments[-1]) / abs(norms[-2]) if norms[-2] else None
        logger.info("ir_study kappa=%g: ||f||^2 = %s", kappa, ", ".join(f"{n:.6g}" for n in norms))
        series.append(IRSeries(kappa=float(kappa), records=records, increments=increments,
                               last_relative_change=last))
    return IRStudy(series=series, spacing=grid.spacing)


# === Critical coupling ===

def _check_scale_critical(model: ModelSpec):
    if (model.coupling.variant != CouplingKind.CRITICAL
            or model.dispersion.variant != DispersionKind.CONSTANT_ONE
            or model.coupling.ir_param != 0
            or model.uv_cutoff is not None):
        raise ModelError(
            "critical_coupling_scan expects the critical coupling with constant dispersion, "
            "no IR regularizer and no UV cutoff (W = 1/|k|)"
        )


def critical_coupling_scan(
    model_template: ModelSpec,
    g_list: Sequence[float],
    grid: GridSpec,
    opts: Optional[MinimizeOptions] = None,
    threads: Optional[int] = None,
    collapse_fraction: float = COLLAPSE_KINETIC_FRACTION,
) -> CriticalCouplingScan:
    """Scan g for the kernel W = 1/|k|, whose Hartree energy loses its minimizer above g*.

    Kinetic energy and interaction both scale as 1/a^2 under dilation, so every
    normalized u bounds g*^2 <= ||grad u||^2 / I_1(u). A run counts as collapsed
    when its kinetic energy exceeds `collapse_fraction` of max |k|^2: the state
    then sits on the lattice scale and its bound says nothing about g*.
    """
    _check_scale_critical(model_template)
    _check_ascending(g_list, "g_list")
    if g_list[0] <= 0:
        raise ModelError("g_list must contain positive couplings")
    if not 0.0 < collapse_fraction < 1.0:
        raise ModelError("collapse_fraction must lie in (0, 1)")
    opts = opts or MinimizeOptions()
    op = make_operator(sample_potential(model_template.potential, grid))
    ground = electronic_ground(op, tol=opts.eigen_tol, seed=opts.seed)
    unit = build_kernel(model_template.with_coupling(1.0), grid)
    lattice_kinetic = grid.max_frequency ** 2

    def run(g: float):
        model = model_template.with_coupling(g)
        return minimize(model, grid, opts, kernel=build_kernel(model, grid), ground=ground, op=op)

    outcomes = _parallel((delayed(run)(g) for g in g_list), threads)
    points = []
    for g, result in zip(g_list, outcomes):
        kinetic = h1dot_array(result.u_gs.samples, grid)
        interaction = interaction_term(result.u_gs, unit)
        fraction = kinetic / lattice_kinetic
        points.append(CriticalScanPoint(
            g=g,
            energy=result.energy,
            kinetic=kinetic,
            interaction_unit=interaction,
            coupling_bound=math.sqrt(kinetic / interaction),
            kinetic_fraction=fraction,
            collapsed=fraction > collapse_fraction,
            residual=result.residual,
            converged=result.converged,
        ))

    resolved = [p.coupling_bound for p in points if not p.collapsed]
    collapsed = [p.g for p in points if p.collapsed]
    scan = CriticalCouplingScan(
        points=points,
        mu_v=ground.mu_v,
        gstar_upper=min(resolved) if resolved else None,
        first_collapse=collapsed[0] if collapsed else None,
        collapse_fraction=collapse_fraction,
    )
    if scan.gstar_upper is not None and scan.first_collapse is not None and scan.first_collapse < scan.gstar_upper:
        convergence_logger.warning("critical_coupling_scan: collapse at g=%g below the bound %.6g",
                                   scan.first_collapse, scan.gstar_upper)
    logger.info("critical_coupling_scan: g* <= %s, first collapse at g=%s", scan.gstar_upper, scan.first_collapse)
    return scan


# === Second-order split ===

def noncoherent_term(eigs: Eigenpairs, coupling_sq: np.ndarray, shift: np.ndarray) -> float:
    """Δk^3 Σ_k v(k)^2 Σ_{n>=1} |<u_n, e^{-ik.x} u_0>|^2 / (E_n - E_0 + shift(k)).

    <u_n, e^{-ik.x} u_0> = F(conj(u_n) u_0)(k); levels degenerate with E_0 are skipped.
    """
    grid = eigs.grid
    e0 = eigs.values[0]
    u0 = eigs.states[0]
    total = 0.0
    skipped = 0
    for n in range(1, eigs.count):
        gap = eigs.values[n] - e0
        if gap <= 1e-8 * max(1.0, abs(e0)):
            skipped += 1
            continue
        overlap = forward_array(np.conj(eigs.states[n]) * u0, grid)
        weight = coupling_sq * (overlap.real ** 2 + overlap.imag ** 2)
        total += float(np.sum(weight / (gap + shift)))
    if skipped:
        logger.warning("noncoherent_term: %d levels degenerate with E0 left out", skipped)
    return grid.freq_cell_volume * total


def second_order_split(
    model: ModelSpec, grid: GridSpec, n_eigenbasis: int, tol: float = 1e-9, seed: int = 0
) -> SecondOrderSplit:
    """Coherent (I_2) and non-coherent (T_nc) second-order terms of the full ground energy"""
    if n_eigenbasis < 2:
        raise ModelError("n_eigenbasis must be at least 2")
    op = make_operator(sample_potential(model.potential, grid))
    eigs = lowest_eigenpairs(op, n_eigenbasis, tol=tol, seed=seed)
    worst = float(np.max(eigs.residuals))
    if worst > BASIS_RESIDUAL_TOL:
        raise ConvergenceError(
            f"eigenbasis residual {worst:.3e} above {BASIS_RESIDUAL_TOL:g}", best_residual=worst
        )
    unit = build_kernel(model.with_coupling(1.0), grid)
    u_v = eigs.state(0)
    i2 = interaction_term(u_v, unit)
    v_sq = unit.coupling_values ** 2
    t_nc = noncoherent_term(eigs, v_sq, unit.omega_values)
    t_nc_abs_k = noncoherent_term(eigs, v_sq, grid.k_norm)
    g_sq = model.g ** 2
    logger.info("second_order_split: I2=%.10g T_nc=%.10g (|k| variant %.10g), %d states",
                i2, t_nc, t_nc_abs_k, eigs.count)
    return SecondOrderSplit(
        mu_v=float(eigs.values[0]),
        g=model.g,
        i2=i2,
        t_nc=t_nc,
        t_nc_abs_k=t_nc_abs_k,
        predicted_full_shift=g_sq * (i2 + t_nc),
        predicted_full_shift_abs_k=g_sq * (i2 + t_nc_abs_k),
        n_eigenbasis=eigs.count,
    )


# === Convolution inequality probes ===

INEQUALITY_NAMES = ("l1_sup", "weak3_l1", "weak3_l2", "h1_form")


def _h1_norm(samples: np.ndarray, grid: GridSpec) -> float:
    return math.sqrt(h1dot_array(samples, grid))


def inequality_ratios(
    kernel: KernelW,
    u1: RealField,
    u2: RealField,
    u3: RealField,
    op: Optional[ElectronicOperator] = None,
) -> Dict[str, float]:
    """lhs / (product of norms) for the convolution bounds with W = W_1 + W_2:

    l1_sup    ||Fbar(W_1 F(u1 conj u2))||_inf        vs ||W_1||_1 ||u1|| ||u2||
    weak3_l1  Δk^3 Σ W_2 |F(u1 u2)|                 vs ||W_2||_{3,inf} ||u1||_H1 ||u2||_H1
    weak3_l2  ||Fbar(W_2 F(u1 u2)) u3||             vs ||W_2||_{3,inf} ||u1|| ||u2||_H1 ||u3||_H1
    h1_form   ||u1||^2_H1                           vs <u1, H_V u1> + b ||u1||^2, b = max(-V, 0)
    """
    grid = kernel.grid
    w1, w2 = split_kernel(kernel)
    w1_l1 = grid.freq_cell_volume * float(np.sum(np.abs(w1)))
    w2_weak = weak_lorentz_norm(SpectralField(grid=grid, samples=w2), 3.0)
    a, b, c = u1.samples, u2.samples, u3.samples
    norm_a, norm_b = norm_array(a, grid), norm_array(b, grid)
    h1_a, h1_b, h1_c = _h1_norm(a, grid), _h1_norm(b, grid), _h1_norm(c, grid)

    ratios = {}
    if w1_l1 > 0:
        sup = float(np.max(np.abs(bar_array(w1 * forward_array(a * np.conj(b), grid), grid))))
        ratios["l1_sup"] = sup / (w1_l1 * norm_a * norm_b)
    if w2_weak > 0:
        product_hat = forward_array(a * b, grid)
        integral = grid.freq_cell_volume * float(np.sum(w2 * np.abs(product_hat)))
        ratios["weak3_l1"] = integral / (w2_weak * h1_a * h1_b)
        potential = bar_array(w2 * product_hat, grid)
        ratios["weak3_l2"] = norm_array(potential * c, grid) / (w2_weak * norm_a * h1_b * h1_c)
    if op is not None:
        energy = float(grid.cell_volume * np.vdot(a, op.potential * a).real) + h1_a ** 2
        shift = max(0.0, -float(np.min(op.potential)))
        ratios["h1_form"] = h1_a ** 2 / (energy + shift * norm_a ** 2)
    return ratios


def _stats(rows: List[Dict[str, float]]) -> List[InequalityStats]:
    stats = []
    for name in INEQUALITY_NAMES:
        values = np.array([row[name] for row in rows if name in row])
        if values.size:
            stats.append(InequalityStats(
                name=name, max_ratio=float(np.max(values)),
                p95_ratio=float(np.percentile(values, 95)), n_trials=int(values.size),
            ))
    return stats


def _probe_rows(kernel: KernelW, draws, op: Optional[ElectronicOperator]) -> List[Dict[str, float]]:
    grid = kernel.grid
    rows = []
    for params in draws:
        u1, u2, u3 = (sample_gaussian_mixture(grid, p) for p in params)
        rows.append(inequality_ratios(kernel, u1, u2, u3, op))
    return rows


def inequality_probe(
    kernel: KernelW,
    n_trials: int,
    seed: int = 0,
    refine_kernel: Optional[KernelW] = None,
    op: Optional[ElectronicOperator] = None,
    refine_op: Optional[ElectronicOperator] = None,
) -> InequalityProbe:
    """Ratio statistics over seeded random Gaussian mixtures; with `refine_kernel`
    the same mixtures are resampled on its (finer) grid.
    """
    if n_trials < 1:
        raise ModelError("n_trials must be positive")
    rng = np.random.default_rng(seed)
    box = kernel.grid.box_length
    draws = [tuple(draw_gaussian_mixture(rng, box) for _ in range(3)) for _ in range(n_trials)]

    probe = InequalityProbe(
        n_per_axis=kernel.grid.n_per_axis, stats=_stats(_probe_rows(kernel, draws, op))
    )
    if refine_kernel is None:
        return probe
    if refine_kernel.grid.box_length != box:
        raise ModelError("refinement must keep the box length")
    refined = _stats(_probe_rows(refine_kernel, draws, refine_op))
    for coarse, fine in zip(probe.stats, refined):
        logger.info("inequality %s: max ratio %.6g (N=%d) vs %.6g (N=%d)", coarse.name,
                    coarse.max_ratio, probe.n_per_axis, fine.max_ratio, refine_kernel.grid.n_per_axis)
    return probe.model_copy(update={
        "refined_n_per_axis": refine_kernel.grid.n_per_axis, "refined_stats": refined,
    })
