import numpy as np
import pytest

from conftest import critical_model, nelson_model, polaron_model
from kgsolver.errors import ModelError
from kgsolver.numerics.electronic_solver import lowest_eigenpairs
from kgsolver.numerics.hartree_core import interaction_term
from kgsolver.numerics.model_library import build_kernel
from kgsolver.numerics.spectral_grid import make_grid
from kgsolver.numerics.studies import (
    critical_coupling_scan,
    inequality_probe,
    ir_study,
    noncoherent_term,
    second_order_split,
    small_g_sweep,
    uv_sweep,
)
from kgsolver.schemas.minimize import MinimizeOptions
from kgsolver.schemas.model import KZeroPolicy

OPTS = MinimizeOptions(residual_tol=1e-7, energy_tol=1e-11)


def test_noncoherent_term_is_positive(harmonic_op8, grid8):
    eigs = lowest_eigenpairs(harmonic_op8, 20)
    kernel = build_kernel(polaron_model(g=1.0), grid8)
    v_sq = kernel.coupling_values ** 2
    assert noncoherent_term(eigs, v_sq, kernel.omega_values) > 0
    assert noncoherent_term(eigs, np.zeros(grid8.shape), kernel.omega_values) == 0.0


def test_second_order_split(grid8, ground8):
    split = second_order_split(polaron_model(g=0.5), grid8, 20)
    assert split.mu_v == pytest.approx(ground8.mu_v, abs=1e-9)
    unit = build_kernel(polaron_model(g=1.0), grid8)
    assert split.i2 == pytest.approx(interaction_term(ground8.u_v, unit), rel=1e-8)
    assert split.t_nc > 0
    assert split.t_nc_abs_k > 0
    assert split.predicted_full_shift == pytest.approx(0.25 * (split.i2 + split.t_nc))
    assert split.n_eigenbasis == 20


def test_noncoherent_term_grows_with_the_basis(grid8):
    small = second_order_split(polaron_model(g=1.0), grid8, 10)
    large = second_order_split(polaron_model(g=1.0), grid8, 40)
    assert large.t_nc >= small.t_nc
    with pytest.raises(ModelError):
        second_order_split(polaron_model(g=1.0), grid8, 1)


def test_small_g_sweep_remainder_is_quartic(grid8):
    sweep = small_g_sweep(polaron_model(), [0.02, 0.04, 0.08], grid8, OPTS, threads=1)
    assert sweep.complete
    assert all(r.remainder <= 1e-12 for r in sweep.records)
    assert 3.0 <= sweep.fitted_exponent <= 5.0
    assert sweep.remainder_constant > 0
    assert [r.sweep_parameter for r in sweep.records] == [0.02, 0.04, 0.08]


def test_small_g_sweep_rejects_bad_lists(grid8):
    with pytest.raises(ModelError):
        small_g_sweep(polaron_model(), [0.2, 0.1], grid8)
    with pytest.raises(ModelError):
        small_g_sweep(polaron_model(), [0.0, 0.1], grid8)
    with pytest.raises(ModelError):
        small_g_sweep(polaron_model(), [], grid8)


def test_uv_sweep_converges_to_the_reference(grid8):
    sweep = uv_sweep(polaron_model(g=0.5), [1.0, 2.0], grid8, OPTS, threads=1)
    records = sweep.records
    assert records[-1].sweep_parameter == pytest.approx(grid8.max_frequency)
    assert len(records) == 3
    assert records[-1].u_qv_distance == 0.0
    assert records[-1].f_zomega_distance == 0.0
    energies = [r.energy for r in records]
    assert all(b <= a + 1e-10 for a, b in zip(energies, energies[1:]))
    assert all(r.converged for r in records)


def test_uv_sweep_state_distance_shrinks_with_the_cutoff(grid16):
    sweep = uv_sweep(polaron_model(g=0.5), [2.0, 4.0, 8.0], grid16, OPTS, threads=1)
    distances = [r.u_qv_distance for r in sweep.records]
    assert len(distances) == 4
    assert distances[0] > distances[1] > distances[2]
    assert distances[2] >= distances[3] == 0.0
    # only the corner modes of the lattice lie beyond 8
    assert distances[2] <= 1e-5
    energies = [r.energy for r in sweep.records]
    assert all(b <= a + 10 * OPTS.energy_tol for a, b in zip(energies, energies[1:]))


def test_ir_study_needs_nelson(grid8):
    with pytest.raises(ModelError):
        ir_study(polaron_model(), grid8, 1)
    with pytest.raises(ModelError):
        ir_study(nelson_model(), grid8, 0)
    with pytest.raises(ModelError):
        ir_study(nelson_model(), grid8, 1, kappa_list=[-1.0])


@pytest.mark.slow
def test_ir_study_field_norm_grows_without_regularizer(grid8):
    study = ir_study(nelson_model(g=0.3), grid8, 1, kappa_list=[0.0, 0.5], opts=OPTS, threads=1)
    assert study.spacing == grid8.spacing
    bare, regular = study.series
    assert [r.sweep_parameter for r in bare.records] == [8.0, 16.0]
    assert bare.increments[0] > 0
    assert regular.increments[0] < bare.increments[0]


@pytest.mark.slow
def test_massless_field_norm_gains_log_two_per_doubling():
    g = 0.3
    base = make_grid(16, 10.0)
    study = ir_study(nelson_model(g=g), base, 2, kappa_list=[0.0], opts=OPTS, threads=1)
    (bare,) = study.series
    assert [r.sweep_parameter for r in bare.records] == [10.0, 20.0, 40.0]
    # 4 pi ln2 |rho(0)|^2 at unit coupling, |rho(0)| = 1
    predicted = g ** 2 * 4.0 * np.pi * np.log(2.0)
    assert predicted / g ** 2 == pytest.approx(8.710, abs=1e-3)
    for increment in bare.increments:
        assert increment > 0
        assert abs(increment / predicted - 1.0) <= 0.3


@pytest.mark.slow
def test_regularized_field_norm_settles_under_doubling():
    base = make_grid(16, 10.0)
    study = ir_study(nelson_model(g=0.3), base, 3, kappa_list=[0.5], opts=OPTS, threads=1)
    (regular,) = study.series
    assert regular.records[-1].sweep_parameter == 80.0
    assert all(r.converged for r in regular.records)
    assert regular.last_relative_change <= 0.01
    assert abs(regular.increments[-1]) < abs(regular.increments[0])


@pytest.mark.slow
def test_small_g_sweep_fourth_order_on_a_fine_grid():
    grid = make_grid(64, 14.0)
    model = polaron_model(k_zero_policy=KZeroPolicy.LATTICE_SUM)
    sweep = small_g_sweep(model, [0.05, 0.1, 0.2, 0.4], grid, OPTS, threads=2)
    assert sweep.complete
    assert all(r.remainder < 0 for r in sweep.records)
    assert 3.5 <= sweep.fitted_exponent <= 4.5
    assert sweep.i2 == pytest.approx(4.0 * np.pi * np.sqrt(np.pi / 2.0), rel=0.01)


@pytest.mark.slow
def test_inequality_ratios_are_stable_under_refinement():
    coarse = build_kernel(polaron_model(g=1.0), make_grid(32, 12.0))
    fine = build_kernel(polaron_model(g=1.0), make_grid(48, 12.0))
    report = inequality_probe(coarse, 200, seed=11, refine_kernel=fine)
    coarse_ratios = report.max_ratios()
    fine_ratios = report.refined_max_ratios()
    assert set(fine_ratios) == set(coarse_ratios)
    for name, ratio in coarse_ratios.items():
        assert 0.5 <= fine_ratios[name] / ratio <= 2.0, name


def test_critical_scan_bounds_gstar_and_flags_collapse():
    grid = make_grid(16, 8.0)
    scan = critical_coupling_scan(critical_model(), [0.1, 0.2, 0.6], grid, OPTS, threads=1)
    low, mid, high = scan.points
    for point in (low, mid):
        assert not point.collapsed
        assert point.converged
        assert point.coupling_bound > point.g
    # a Gaussian trial state gives sqrt(1.5 / (4 pi)) ~ 0.345
    assert 0.25 < scan.gstar_upper < 0.45
    assert scan.gstar_upper == min(low.coupling_bound, mid.coupling_bound)
    assert mid.kinetic > low.kinetic

    assert high.collapsed
    assert high.kinetic_fraction > scan.collapse_fraction
    assert scan.first_collapse == 0.6
    assert high.energy < mid.energy < low.energy < scan.mu_v


def test_critical_scan_rejects_other_kernels(grid8):
    with pytest.raises(ModelError):
        critical_coupling_scan(polaron_model(), [0.1], grid8)
    with pytest.raises(ModelError):
        critical_coupling_scan(critical_model().with_cutoff(2.0), [0.1], grid8)
    with pytest.raises(ModelError):
        critical_coupling_scan(critical_model(), [0.2, 0.1], grid8)
    with pytest.raises(ModelError):
        critical_coupling_scan(critical_model(), [0.1], grid8, collapse_fraction=1.5)


def test_inequality_probe(polaron_kernel16, harmonic_op16):
    report = inequality_probe(polaron_kernel16, 20, seed=3, op=harmonic_op16)
    ratios = report.max_ratios()
    assert set(ratios) == {"l1_sup", "weak3_l1", "weak3_l2", "h1_form"}
    assert ratios["l1_sup"] <= 1.0 + 1e-12
    assert ratios["h1_form"] <= 1.0 + 1e-12
    assert all(np.isfinite(r) and r > 0 for r in ratios.values())
    assert all(s.n_trials == 20 for s in report.stats)


def test_inequality_probe_is_seeded(polaron_kernel16):
    first = inequality_probe(polaron_kernel16, 5, seed=9)
    second = inequality_probe(polaron_kernel16, 5, seed=9)
    assert first.max_ratios() == second.max_ratios()
    assert "h1_form" not in first.max_ratios()


def test_inequality_probe_refinement(polaron_kernel16):
    coarse = build_kernel(polaron_model(g=1.0), make_grid(8, 10.0))
    report = inequality_probe(coarse, 10, seed=5, refine_kernel=polaron_kernel16)
    assert report.n_per_axis == 8
    assert report.refined_n_per_axis == 16
    assert report.refined_max_ratios()["l1_sup"] <= 1.0 + 1e-12

    with pytest.raises(ModelError):
        inequality_probe(coarse, 10, refine_kernel=build_kernel(polaron_model(g=1.0), make_grid(16, 12.0)))
    with pytest.raises(ModelError):
        inequality_probe(coarse, 0)
