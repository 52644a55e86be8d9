"""Shared grids, models and cached electronic ground data"""
import numpy as np
import pytest

from kgsolver.numerics.electronic_solver import electronic_ground, operator_for
from kgsolver.numerics.model_library import build_kernel
from kgsolver.numerics.spectral_grid import gaussian_mixture_field, make_grid
from kgsolver.schemas.model import (
    CouplingKind,
    CouplingSpec,
    DispersionKind,
    DispersionSpec,
    ModelSpec,
    PotentialKind,
    PotentialSpec,
)


@pytest.fixture(scope="session")
def grid8():
    """Dense-eigensolver grid"""
    return make_grid(8, 8.0)


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16, 10.0)


@pytest.fixture(scope="session")
def grid24():
    """Fine enough for the oscillator to 1e-6"""
    return make_grid(24, 12.0)


def polaron_model(g: float = 1.0, **extra) -> ModelSpec:
    return ModelSpec(
        potential=PotentialSpec(variant=PotentialKind.HARMONIC, omega0=1.0),
        dispersion=DispersionSpec(variant=DispersionKind.CONSTANT_ONE),
        coupling=CouplingSpec(variant=CouplingKind.POLARON),
        g=g,
        **extra,
    )


def nelson_model(g: float = 1.0, mass: float = 0.0, kappa: float = 0.0) -> ModelSpec:
    return ModelSpec(
        potential=PotentialSpec(variant=PotentialKind.HARMONIC, omega0=1.0),
        dispersion=DispersionSpec(variant=DispersionKind.RELATIVISTIC, mass=mass),
        coupling=CouplingSpec(variant=CouplingKind.NELSON, ir_param=kappa),
        g=g,
    )


def critical_model(g: float = 1.0) -> ModelSpec:
    """W = 1/|k|, the scale-critical kernel"""
    return ModelSpec(
        potential=PotentialSpec(variant=PotentialKind.HARMONIC, omega0=1.0),
        dispersion=DispersionSpec(variant=DispersionKind.CONSTANT_ONE),
        coupling=CouplingSpec(variant=CouplingKind.CRITICAL),
        g=g,
    )


@pytest.fixture
def harmonic():
    return polaron_model(g=0.0)


@pytest.fixture
def polaron():
    return polaron_model(g=1.0)


@pytest.fixture(scope="session")
def harmonic_op8(grid8):
    return operator_for(PotentialSpec(), grid8)


@pytest.fixture(scope="session")
def ground8(harmonic_op8):
    return electronic_ground(harmonic_op8)


@pytest.fixture(scope="session")
def harmonic_op16(grid16):
    return operator_for(PotentialSpec(), grid16)


@pytest.fixture(scope="session")
def polaron_kernel16(grid16):
    return build_kernel(polaron_model(g=1.0), grid16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_state(grid16, rng):
    return gaussian_mixture_field(grid16, rng)
