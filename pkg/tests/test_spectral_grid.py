import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kgsolver.errors import GridError
from kgsolver.numerics.spectral_grid import (
    bar_transform,
    forward_array,
    forward_transform,
    gaussian_mixture_field,
    gradient,
    h1dot_seminorm,
    inner_product,
    l2_norm,
    make_grid,
    normalize,
    real_field,
    spectral_field,
    spectral_integral,
)
from kgsolver.schemas.field import RealField


def gaussian(grid):
    return real_field(grid, np.exp(-grid.radius_squared / 2.0))


def test_grid_spacings():
    grid = make_grid(16, 8.0)
    assert grid.spacing == 0.5
    assert grid.freq_spacing == pytest.approx(math.pi / 4)
    assert make_grid(8, 2 * math.pi).freq_spacing == pytest.approx(1.0)


@pytest.mark.parametrize("n", [7, 6, 9])
def test_grid_rejects_odd_or_tiny(n):
    with pytest.raises(GridError):
        make_grid(n, 8.0)


def test_odd_grid_message_names_the_rule():
    with pytest.raises(GridError, match="n_per_axis must be even"):
        make_grid(7, 8.0)


def test_grid_equality_ignores_cached_arrays():
    a, b = make_grid(8, 8.0), make_grid(8, 8.0)
    a.k_norm  # populate the cache on one side only
    assert a == b
    assert hash(a) == hash(b)
    assert a != make_grid(8, 9.0)


def test_forward_matches_direct_summation(grid8, rng):
    samples = rng.normal(size=grid8.shape) + 1j * rng.normal(size=grid8.shape)
    phase = np.exp(-1j * np.outer(grid8.axis_frequencies, grid8.axis_positions))
    direct = grid8.cell_volume * np.einsum("ai,bj,ck,ijk->abc", phase, phase, phase, samples)
    assert_allclose(forward_array(samples, grid8), direct, rtol=0, atol=1e-12 * np.max(np.abs(direct)))


def test_forward_of_zero_is_zero(grid8):
    zero = forward_transform(real_field(grid8, np.zeros(grid8.shape)))
    assert np.all(zero.samples == 0)


def test_gaussian_transform(grid24):
    transformed = forward_transform(gaussian(grid24))
    expected = (2 * math.pi) ** 1.5 * np.exp(-grid24.k_squared / 2.0)
    assert_allclose(transformed.samples.real, expected, rtol=0, atol=1e-6)


def test_bar_inverts_forward_up_to_two_pi_cubed(grid16, random_state):
    back = bar_transform(forward_transform(random_state))
    assert_allclose(back.samples, (2 * math.pi) ** 3 * random_state.samples, atol=1e-10)


def test_bar_of_gaussian(grid24):
    g = spectral_field(grid24, (2 * math.pi) ** 1.5 * np.exp(-grid24.k_squared / 2.0))
    expected = (2 * math.pi) ** 3 * np.exp(-grid24.radius_squared / 2.0)
    assert_allclose(bar_transform(g).samples.real, expected, rtol=0, atol=1e-5)


def test_parseval(grid16, random_state):
    spectrum = forward_transform(random_state).samples
    spectral_norm_sq = grid16.freq_cell_volume * np.sum(np.abs(spectrum) ** 2) / (2 * math.pi) ** 3
    assert spectral_norm_sq == pytest.approx(l2_norm(random_state) ** 2, rel=1e-12)


def test_h1dot_of_normalized_gaussian(grid24):
    u = normalize(gaussian(grid24))
    assert h1dot_seminorm(u) == pytest.approx(1.5, abs=1e-8)


def test_h1dot_of_constant_is_zero(grid8):
    assert h1dot_seminorm(real_field(grid8, np.ones(grid8.shape))) == pytest.approx(0.0, abs=1e-12)


def test_gradient_agrees_with_h1dot(random_state):
    total = sum(l2_norm(component) ** 2 for component in gradient(random_state))
    assert total == pytest.approx(h1dot_seminorm(random_state), rel=1e-10)


def test_spectral_integral(grid8):
    ones = spectral_field(grid8, np.ones(grid8.shape))
    assert spectral_integral(ones).real == pytest.approx(grid8.freq_cell_volume * grid8.size)
    eight = make_grid(8, 2 * math.pi)
    assert spectral_integral(spectral_field(eight, np.ones(eight.shape))).real == pytest.approx(512.0)


def test_gaussian_spectral_integral(grid24):
    g = spectral_field(grid24, np.exp(-grid24.k_squared / 2.0))
    assert spectral_integral(g).real == pytest.approx((2 * math.pi) ** 1.5, abs=1e-8)


def test_normalize_rejects_zero(grid8):
    with pytest.raises(GridError):
        normalize(real_field(grid8, np.zeros(grid8.shape)))


def test_fields_on_different_grids_do_not_mix(grid8, grid16):
    with pytest.raises(GridError):
        inner_product(real_field(grid8, np.ones(grid8.shape)), real_field(grid16, np.ones(grid16.shape)))


def test_samples_are_read_only(grid8):
    field = real_field(grid8, np.ones(grid8.shape))
    with pytest.raises(ValueError):
        field.samples[0, 0, 0] = 2.0


def test_field_shape_is_checked(grid8):
    with pytest.raises(ValueError):
        RealField(grid=grid8, samples=np.ones((4, 4, 4)))


def test_gaussian_mixture_is_seeded_and_normalized(grid16):
    a = gaussian_mixture_field(grid16, np.random.default_rng(7))
    b = gaussian_mixture_field(grid16, np.random.default_rng(7))
    assert_allclose(a.samples, b.samples)
    assert l2_norm(a) == pytest.approx(1.0, abs=1e-12)
