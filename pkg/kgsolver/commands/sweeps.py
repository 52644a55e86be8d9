# kgsolver/commands/sweeps.py - Parameter sweeps, critical-coupling scan, second-order split and inequality probes
import logging

import typer

from kgsolver.commands.common import ConfigOption, OutputOption, SeedOption, ThreadsOption, execute
from kgsolver.numerics.electronic_solver import operator_for
from kgsolver.numerics.model_library import build_kernel
from kgsolver.numerics.spectral_grid import make_grid
from kgsolver.numerics.studies import (
    critical_coupling_scan,
    inequality_probe,
    ir_study,
    second_order_split,
    small_g_sweep,
    uv_sweep,
)
from kgsolver.reporting import RunReporter
from kgsolver.schemas.run import RunConfig

logger = logging.getLogger(__name__)

router = typer.Typer()


def _sweep_g(config: RunConfig, reporter: RunReporter, threads: int):
    study = config.study
    sweep = small_g_sweep(config.model, study.g_list, config.grid, config.options(), threads)
    reporter.write_table("sweep_g", [{
        "g": r.sweep_parameter,
        "energy": r.energy,
        "mu_v": r.mu_v,
        "i2": r.i2_coherent,
        "remainder": r.remainder,
        "residual": r.residual,
        "converged": r.converged,
    } for r in sweep.records], {
        "g": "1", "energy": "energy", "mu_v": "energy", "i2": "energy",
        "remainder": "energy", "residual": "energy", "converged": "bool",
    })
    reporter.write_plot_data("remainder_vs_g", [r.sweep_parameter for r in sweep.records],
                             [r.remainder for r in sweep.records], "g", "|E-mu+g^2*I2|", logscale=True)
    reporter.write_table("sweep_g_fit", [{
        "i2": sweep.i2,
        "fitted_exponent": sweep.fitted_exponent,
        "remainder_constant": sweep.remainder_constant,
    }], {"i2": "energy", "fitted_exponent": "1", "remainder_constant": "energy"})
    detail = f"exponent {sweep.fitted_exponent}" if sweep.complete else "incomplete sweep, no fit"
    reporter.add_stage("sweep-g", sweep.complete, residual=max(r.residual for r in sweep.records),
                       detail=detail)


@router.command("sweep-g")
def sweep_g(config: ConfigOption, output: OutputOption = None, seed: SeedOption = None,
            threads: ThreadsOption = None):
    """Small-coupling expansion E(g) = mu_V - g^2 I_2 + O(g^4)"""
    execute("sweep-g", config, output, seed, threads, _sweep_g)


def _sweep_uv(config: RunConfig, reporter: RunReporter, threads: int):
    sweep = uv_sweep(config.model, config.study.lambda_list, config.grid, config.options(), threads)
    records = sweep.records
    reporter.write_table("sweep_uv", [{
        "lambda": r.sweep_parameter,
        "energy": r.energy,
        "u_qv_distance": r.u_qv_distance,
        "f_zomega_distance": r.f_zomega_distance,
        "residual": r.residual,
        "converged": r.converged,
    } for r in records], {
        "lambda": "length^-1", "energy": "energy", "u_qv_distance": "1",
        "f_zomega_distance": "1", "residual": "energy", "converged": "bool",
    })
    # the reference run has distance 0; leave it out of the log-scale curve
    shown = records[:-1] or records
    reporter.write_plot_data("uv_state_distance", [r.sweep_parameter for r in shown],
                             [r.u_qv_distance for r in shown], "Lambda", "||u_L-u_ref||_QV", logscale=True)
    reporter.write_plot_data("uv_energy", [r.sweep_parameter for r in records],
                             [r.energy for r in records], "Lambda", "E")
    converged = all(r.converged for r in records)
    reporter.add_stage("sweep-uv", converged, residual=max(r.residual for r in records),
                       detail=f"reference cutoff {sweep.reference_cutoff:.6g}")


@router.command("sweep-uv")
def sweep_uv(config: ConfigOption, output: OutputOption = None, seed: SeedOption = None,
             threads: ThreadsOption = None):
    """Ultraviolet cutoff sweep against the lattice reference"""
    execute("sweep-uv", config, output, seed, threads, _sweep_uv)


def _ir_check(config: RunConfig, reporter: RunReporter, threads: int):
    study = config.study
    result = ir_study(config.model, config.grid, study.box_doublings, study.kappa_list,
                      config.options(), threads)
    rows = []
    for series in result.series:
        for r in series.records:
            rows.append({
                "kappa": series.kappa,
                "box_length": r.sweep_parameter,
                "f_l2_norm": r.f_l2_norm,
                "energy": r.energy,
                "residual": r.residual,
                "converged": r.converged,
            })
        reporter.write_plot_data(f"ir_f_norm_kappa_{series.kappa:g}",
                                 [r.sweep_parameter for r in series.records],
                                 [r.f_l2_norm for r in series.records], "L", "||f||^2")
        reporter.add_stage(f"ir-check kappa={series.kappa:g}", all(r.converged for r in series.records),
                           residual=max(r.residual for r in series.records),
                           detail=f"last relative change {series.last_relative_change}")
    reporter.write_table("ir_check", rows, {
        "kappa": "length^-1", "box_length": "length", "f_l2_norm": "1",
        "energy": "energy", "residual": "energy", "converged": "bool",
    })


@router.command("ir-check")
def ir_check(config: ConfigOption, output: OutputOption = None, seed: SeedOption = None,
             threads: ThreadsOption = None):
    """Field norm as the box doubles at fixed spacing (Nelson coupling)"""
    execute("ir-check", config, output, seed, threads, _ir_check)


def _scan_gstar(config: RunConfig, reporter: RunReporter, threads: int):
    study = config.study
    scan = critical_coupling_scan(config.model, study.gstar_list, config.grid, config.options(), threads,
                                  collapse_fraction=study.collapse_fraction)
    points = scan.points
    reporter.write_table("scan_gstar", [p.model_dump() for p in points], {
        "g": "1", "energy": "energy", "kinetic": "energy", "interaction_unit": "energy",
        "coupling_bound": "1", "kinetic_fraction": "1", "collapsed": "bool",
        "residual": "energy", "converged": "bool",
    })
    reporter.write_plot_data("kinetic_vs_g", [p.g for p in points], [p.kinetic for p in points],
                             "g", "||grad u||^2", logscale=True)
    # collapsed runs sit on the lattice scale; only the resolved ones have to converge
    converged = all(p.converged for p in points if not p.collapsed)
    bound = f"{scan.gstar_upper:.6g}" if scan.gstar_upper is not None else "none"
    reporter.add_stage("scan-gstar", converged, residual=max(p.residual for p in points),
                       detail=f"g* <= {bound}, first collapse at g={scan.first_collapse}")


@router.command("scan-gstar")
def scan_gstar(config: ConfigOption, output: OutputOption = None, seed: SeedOption = None,
               threads: ThreadsOption = None):
    """Critical coupling of the W = 1/|k| kernel: bound on g* and lattice collapse"""
    execute("scan-gstar", config, output, seed, threads, _scan_gstar)


def _perturb2(config: RunConfig, reporter: RunReporter, threads: int):
    opts = config.options()
    split = second_order_split(config.model, config.grid, config.study.n_eigenbasis,
                               tol=opts.eigen_tol, seed=config.seed)
    reporter.write_table("perturb2", [split.model_dump()], {
        "mu_v": "energy", "g": "1", "i2": "energy", "t_nc": "energy", "t_nc_abs_k": "energy",
        "predicted_full_shift": "energy", "predicted_full_shift_abs_k": "energy", "n_eigenbasis": "count",
    })
    reporter.add_stage("perturb2", True, detail=f"{split.n_eigenbasis} eigenstates")


@router.command("perturb2")
def perturb2(config: ConfigOption, output: OutputOption = None, seed: SeedOption = None,
             threads: ThreadsOption = None):
    """Coherent and non-coherent second-order energy terms"""
    execute("perturb2", config, output, seed, threads, _perturb2)


def _probe_ineq(config: RunConfig, reporter: RunReporter, threads: int):
    grid, model, study = config.grid, config.model, config.study
    kernel = build_kernel(model, grid)
    op = operator_for(model.potential, grid)
    refine_kernel = refine_op = None
    if study.refine_n_per_axis:
        fine = make_grid(study.refine_n_per_axis, grid.box_length)
        refine_kernel = build_kernel(model, fine)
        refine_op = operator_for(model.potential, fine)
    probe = inequality_probe(kernel, study.n_trials, seed=config.seed, refine_kernel=refine_kernel,
                             op=op, refine_op=refine_op)

    rows = [{"n_per_axis": probe.n_per_axis, **s.model_dump()} for s in probe.stats]
    rows += [{"n_per_axis": probe.refined_n_per_axis, **s.model_dump()} for s in probe.refined_stats]
    reporter.write_table("probe_ineq", rows, {
        "n_per_axis": "count", "name": "label", "max_ratio": "1", "p95_ratio": "1", "n_trials": "count",
    })
    reporter.add_stage("probe-ineq", True,
                       detail=", ".join(f"{name}={ratio:.4g}" for name, ratio in probe.max_ratios().items()))


@router.command("probe-ineq")
def probe_ineq(config: ConfigOption, output: OutputOption = None, seed: SeedOption = None,
               threads: ThreadsOption = None):
    """Convolution inequality ratios over seeded random test functions"""
    execute("probe-ineq", config, output, seed, threads, _probe_ineq)
