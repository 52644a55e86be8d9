# kgsolver/commands/solve.py - `solve` and `diagnose`
import logging

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

from kgsolver.commands.common import ConfigOption, OutputOption, SeedOption, ThreadsOption, execute
from kgsolver.errors import FixedPointRefused
from kgsolver.numerics.electronic_solver import (
    coercivity_check,
    confining_gap_probe,
    electronic_ground,
    form_bound_search,
    operator_for,
)
from kgsolver.numerics.hartree_core import euler_lagrange, field_from_state
from kgsolver.numerics.minimizers import (
    existence_condition_report,
    minimize,
    phi_fixed_point_check,
    uniqueness_probe,
)
from kgsolver.numerics.model_library import build_kernel, decompose_W, ir_l2_criterion, origin_exponent
from kgsolver.reporting import RunReporter
from kgsolver.schemas.run import RunConfig

logger = logging.getLogger(__name__)

router = typer.Typer()

SOLVE_UNITS = {
    "g": "1",
    "energy": "energy",
    "lambda": "energy",
    "mu_v": "energy",
    "delta_v": "energy",
    "interaction": "energy",
    "field_energy": "energy",
    "f_l2_norm": "length^3",
    "residual": "energy",
    "iterations": "count",
    "converged": "bool",
    "method": "label",
}


def _solve(config: RunConfig, reporter: RunReporter, threads: int):
    grid, model, opts = config.grid, config.model, config.options()
    op = operator_for(model.potential, grid)
    kernel = build_kernel(model, grid)
    ground = electronic_ground(op, tol=opts.eigen_tol, seed=opts.seed)
    result = minimize(model, grid, opts, kernel=kernel, ground=ground, op=op)
    reporter.add_stage("minimize", result.converged, result.iterations, result.residual, result.message)

    stationarity = euler_lagrange(result.u_gs, op, kernel)
    field = field_from_state(result.u_gs, kernel)
    reporter.write_table("solve", [{
        "g": model.g,
        "energy": result.energy,
        "lambda": stationarity.lambda_v,
        "mu_v": ground.mu_v,
        "delta_v": ground.delta_v,
        "interaction": stationarity.interaction_value,
        "field_energy": field.zomega_norm_sq,
        "f_l2_norm": field.l2_norm_sq,
        "residual": stationarity.residual_l2,
        "iterations": result.iterations,
        "converged": result.converged,
        "method": result.method.value,
    }], SOLVE_UNITS)
    reporter.write_plot_data("energy_trace", np.arange(len(result.energy_trace)), result.energy_trace,
                             "iteration", "J")
    center = grid.n_per_axis // 2
    reporter.write_plot_data("u_profile", grid.axis_positions, result.u_gs.samples[:, center, center].real,
                             "x", "u")

    study = config.study
    if study.phi_check:
        try:
            check = phi_fixed_point_check(result, op, kernel, ground, n_eigenbasis=study.n_eigenbasis,
                                          tol=opts.eigen_tol)
            reporter.write_table("phi_check", [check.model_dump()], {
                "lhs_rhs_gap": "length^-3/2", "tail_estimate": "length^-3/2",
                "phi_norm": "length^-3/2", "n_eigenbasis": "count",
            })
            reporter.add_stage("phi_check", True, detail=f"gap {check.lhs_rhs_gap:.3e}")
        except FixedPointRefused as exc:
            logger.warning("phi check refused: %s", exc.detail)
            reporter.add_stage("phi_check", False, detail=exc.detail)

    if study.uniqueness_starts:
        probe = uniqueness_probe(model, grid, study.uniqueness_starts, seed=config.seed, opts=opts,
                                 threads=threads)
        reporter.write_table("uniqueness", [{
            "n_starts": study.uniqueness_starts,
            "n_converged": len(probe.energies),
            "max_pairwise_l2": probe.max_pairwise_l2,
            "energy_spread": probe.energy_spread,
        }], {"n_starts": "count", "n_converged": "count", "max_pairwise_l2": "1", "energy_spread": "energy"})
        reporter.add_stage("uniqueness", not probe.excluded,
                           detail=f"excluded seeds {probe.excluded}" if probe.excluded else "")


@router.command("solve")
def solve(config: ConfigOption, output: OutputOption = None, seed: SeedOption = None,
          threads: ThreadsOption = None):
    """Ground state of the Hartree energy for one model"""
    execute("solve", config, output, seed, threads, _solve)


def _diagnose(config: RunConfig, reporter: RunReporter, threads: int):
    grid, model, opts, study = config.grid, config.model, config.options(), config.study
    kernel = build_kernel(model, grid)
    decomposition = decompose_W(kernel)
    behavior = origin_exponent(model)
    ir = ir_l2_criterion(model, grid)
    existence = existence_condition_report(model, grid, boost_C=study.boost_C, boost_R=study.boost_R,
                                           tol=opts.eigen_tol, seed=config.seed)
    op = operator_for(model.potential, grid)
    ground = electronic_ground(op, tol=opts.eigen_tol, seed=config.seed)
    bounds = form_bound_search(op, study.form_bound_a, seed=config.seed)
    first = bounds.bounds[0]
    coercivity = coercivity_check(op, ground.u_v, first.a, first.b)

    rows = [
        ("w1_l1", decomposition.w1_l1_norm, "energy length^3"),
        ("w2_weak3", decomposition.w2_weak3_norm, "energy length^2"),
        ("kernel_origin_power", behavior.kernel_power, "1"),
        ("field_origin_power", behavior.field_power, "1"),
        ("ir_low_band", ir.low_band, "1"),
        ("ir_high_band", ir.high_band, "1"),
        ("ir_origin_excluded", float(ir.origin_excluded), "bool"),
        ("mu_v", existence.mu_v, "energy"),
        ("mu_v1", existence.mu_v1, "energy"),
        ("gap_mu", existence.gap_mu, "energy"),
        ("smallness_ratio", existence.smallness_ratio, "1"),
        ("delta_v", ground.delta_v, "energy"),
        ("coercivity_lhs", coercivity.lhs, "energy"),
        ("coercivity_rhs", coercivity.rhs, "energy"),
    ]
    rows += [(f"form_bound_b(a={b.a:g})", b.b, "energy") for b in bounds.bounds]
    if model.potential.is_confining() and study.boost_C > 0:
        radius = study.boost_R or grid.box_length / 6.0
        gap = confining_gap_probe(model.potential, study.boost_C, radius, grid, opts.eigen_tol, config.seed)
        rows.append(("confining_gap", gap.mu_v1c - gap.mu_v, "energy"))

    reporter.write_table("diagnose", [{"quantity": q, "value": v, "unit": u} for q, v, u in rows],
                         {"quantity": "label", "value": "see unit column", "unit": "label"})
    reporter.write_json("diagnose", {
        "decomposition": decomposition.model_dump(),
        "origin": behavior.model_dump(),
        "ir": ir.model_dump(),
        "existence": existence.model_dump(),
        "coercivity": coercivity.model_dump(),
        "form_bounds": bounds.model_dump(),
    })

    table = Table(title=f"Hypothesis diagnostics ({model.coupling.variant.value}, g={model.g:g})")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    for quantity, value, _ in rows:
        table.add_row(quantity, f"{value:.6g}")
    if ir.origin_excluded:
        table.caption = "IR low band is grid-divergent: (v/omega)^2 is not integrable at k=0"
    Console(stderr=True).print(table)
    reporter.add_stage("diagnose", True, detail="grid-divergent IR band" if ir.origin_excluded else "")


@router.command("diagnose")
def diagnose(config: ConfigOption, output: OutputOption = None, seed: SeedOption = None,
             threads: ThreadsOption = None):
    """Hypothesis diagnostics for the configured model"""
    execute("diagnose", config, output, seed, threads, _diagnose)
