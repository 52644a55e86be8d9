import math

import numpy as np
import pytest

from conftest import polaron_model
from kgsolver.errors import FixedPointRefused, ModelError
from kgsolver.numerics.hartree_core import evaluate_state, interaction_term
from kgsolver.numerics.minimizers import (
    _stall_converged,
    _trace_rise_note,
    existence_condition_report,
    minimize,
    phi_fixed_point_check,
    uniqueness_probe,
)
from kgsolver.numerics.model_library import build_kernel
from kgsolver.numerics.spectral_grid import inner_product, l2_norm
from kgsolver.schemas.minimize import MinimizeMethod, MinimizeOptions, StartKind

OPTS = MinimizeOptions(residual_tol=1e-7, energy_tol=1e-11)
WEAK = 0.3


@pytest.fixture(scope="module")
def weak_run(grid8, harmonic_op8, ground8):
    kernel = build_kernel(polaron_model(g=WEAK), grid8)
    result = minimize(polaron_model(g=WEAK), grid8, OPTS, kernel=kernel, ground=ground8, op=harmonic_op8)
    return result, kernel


def test_decoupled_model_returns_the_electronic_ground(grid8, harmonic_op8, ground8):
    result = minimize(polaron_model(g=0.0), grid8, OPTS, ground=ground8, op=harmonic_op8)
    assert result.converged
    assert result.energy == pytest.approx(ground8.mu_v, abs=1e-9)
    assert np.all(result.f_gs.samples == 0)


def test_weak_coupling_lowers_the_energy_below_second_order(weak_run, ground8):
    result, kernel = weak_run
    assert result.converged
    bound = ground8.mu_v - interaction_term(ground8.u_v, kernel)
    assert result.energy <= bound + 1e-12
    assert result.energy < ground8.mu_v


def test_minimizer_is_normalized_and_phase_aligned(weak_run, ground8):
    result, _ = weak_run
    assert l2_norm(result.u_gs) == pytest.approx(1.0, abs=1e-10)
    overlap = inner_product(result.u_gs, ground8.u_v)
    assert overlap.real > 0
    assert abs(overlap.imag) <= 1e-10


def test_energy_trace_is_nonincreasing(weak_run):
    result, _ = weak_run
    trace = np.array(result.energy_trace)
    assert np.all(np.diff(trace) <= 1e-12)
    assert trace[-1] == result.energy


def test_projected_gradient_and_scf_agree(grid8, harmonic_op8, ground8):
    opts = OPTS.model_copy(update={"method": MinimizeMethod.BOTH_CROSSCHECK})
    result = minimize(polaron_model(g=WEAK), grid8, opts, ground=ground8, op=harmonic_op8)
    assert result.crosscheck is not None
    assert result.crosscheck.agree
    assert result.converged
    assert result.method == MinimizeMethod.BOTH_CROSSCHECK


def test_random_start_reaches_the_same_minimizer(weak_run, grid8, harmonic_op8, ground8):
    reference, kernel = weak_run
    opts = OPTS.model_copy(update={"start": StartKind.RANDOM, "seed": 7})
    result = minimize(polaron_model(g=WEAK), grid8, opts, kernel=kernel, ground=ground8, op=harmonic_op8)
    assert result.converged
    assert result.energy == pytest.approx(reference.energy, abs=1e-9)
    assert l2_norm(result.u_gs - reference.u_gs) <= 1e-5


def test_provided_start_is_required(grid8, harmonic_op8, ground8):
    opts = OPTS.model_copy(update={"start": StartKind.PROVIDED})
    with pytest.raises(ModelError):
        minimize(polaron_model(g=WEAK), grid8, opts, ground=ground8, op=harmonic_op8)


def test_provided_start_is_used(weak_run, grid8, harmonic_op8, ground8):
    reference, kernel = weak_run
    opts = OPTS.model_copy(update={"start": StartKind.PROVIDED})
    result = minimize(polaron_model(g=WEAK), grid8, opts, kernel=kernel, ground=ground8, op=harmonic_op8,
                      start_state=reference.u_gs * 3.0)
    assert result.converged
    assert result.iterations <= 2


def test_iteration_cap_is_reported_not_raised(grid8, harmonic_op8, ground8):
    opts = OPTS.model_copy(update={"start": StartKind.RANDOM, "max_iter": 1})
    result = minimize(polaron_model(g=WEAK), grid8, opts, ground=ground8, op=harmonic_op8)
    assert not result.converged
    assert "max_iter" in result.message


def test_phi_fixed_point(weak_run, harmonic_op8, ground8):
    result, kernel = weak_run
    check = phi_fixed_point_check(result, harmonic_op8, kernel, ground8, n_eigenbasis=40)
    assert check.lhs_rhs_gap <= check.tail_estimate + 1e-10
    assert check.phi_norm > 0


def test_phi_fixed_point_gap_at_small_coupling(grid8, harmonic_op8, ground8):
    model = polaron_model(g=0.05)
    kernel = build_kernel(model, grid8)
    opts = OPTS.model_copy(update={"residual_tol": 1e-9})
    result = minimize(model, grid8, opts, kernel=kernel, ground=ground8, op=harmonic_op8)
    assert result.converged
    coarse = phi_fixed_point_check(result, harmonic_op8, kernel, ground8, n_eigenbasis=40)
    fine = phi_fixed_point_check(result, harmonic_op8, kernel, ground8, n_eigenbasis=80)
    assert coarse.lhs_rhs_gap <= 1e-5
    # the residual share of the gap grows with the basis by at most residual / (E_40 - lambda)
    assert fine.lhs_rhs_gap <= coarse.lhs_rhs_gap + 1e-9
    assert fine.n_eigenbasis == 80


def test_phi_fixed_point_refuses_unconverged(weak_run, harmonic_op8, ground8):
    result, kernel = weak_run
    with pytest.raises(FixedPointRefused):
        phi_fixed_point_check(result.model_copy(update={"converged": False}), harmonic_op8, kernel, ground8)
    with pytest.raises(ModelError):
        phi_fixed_point_check(result, harmonic_op8, kernel, ground8, n_eigenbasis=1)


def test_uniqueness_probe(grid8):
    report = uniqueness_probe(polaron_model(g=WEAK), grid8, 3, seed=11, opts=OPTS, threads=1)
    assert report.excluded == []
    assert len(report.energies) == 3
    assert report.max_pairwise_l2 <= 1e-5
    assert report.energy_spread <= 1e-9
    with pytest.raises(ModelError):
        uniqueness_probe(polaron_model(g=WEAK), grid8, 1)


def test_uniqueness_eight_starts_at_small_coupling(grid8):
    opts = OPTS.model_copy(update={"residual_tol": 1e-8})
    report = uniqueness_probe(polaron_model(g=0.05), grid8, 8, seed=0, opts=opts, threads=2)
    assert report.excluded == []
    assert len(report.energies) == 8
    assert report.max_pairwise_l2 <= 1e-6
    assert report.energy_spread <= 10 * opts.energy_tol


def test_energy_trace_rise_is_reported():
    assert _trace_rise_note([3.0, 2.5, 2.5]) == ""
    assert _trace_rise_note([3.0]) == ""
    note = _trace_rise_note([3.0, 2.5, 2.5 + 4e-15])
    assert "rose by up to 4.00e-15" in note


def test_stalled_search_needs_both_criteria(grid8, harmonic_op8, ground8):
    kernel = build_kernel(polaron_model(g=0.0), grid8)
    state = evaluate_state(np.asarray(ground8.u_v.samples, dtype=complex), harmonic_op8, kernel)
    assert _stall_converged(state, grid8, OPTS)
    # round-off of J near 3 is about 1e-14, so it cannot certify a 1e-16 energy tolerance
    assert not _stall_converged(state, grid8, OPTS.model_copy(update={"energy_tol": 1e-16}))
    assert not _stall_converged(state, grid8, OPTS.model_copy(update={"residual_tol": 1e-30}))


def test_existence_report(grid8):
    decoupled = existence_condition_report(polaron_model(g=0.0), grid8)
    assert decoupled.smallness_ratio == 0.0

    confining = existence_condition_report(polaron_model(g=1.0), grid8)
    assert confining.gap_mu == 0.0
    assert math.isinf(confining.smallness_ratio)

    boosted = existence_condition_report(polaron_model(g=1.0), grid8, boost_C=1.0, boost_R=1.5)
    assert boosted.gap_mu > 0
    assert math.isfinite(boosted.smallness_ratio)
    assert boosted.smallness_ratio == pytest.approx(boosted.w1_l1 / boosted.gap_mu)

    with pytest.raises(ModelError):
        existence_condition_report(polaron_model(g=1.0), grid8, boost_C=-1.0)
    with pytest.raises(ModelError):
        existence_condition_report(polaron_model(g=1.0), grid8, boost_C=1.0, boost_R=2.5)
