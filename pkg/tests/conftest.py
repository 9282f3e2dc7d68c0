import numpy as np
import pytest

from stochks.dynamics import quadratic_flux, sigma_linear, sigma_zero, zero_flux
from stochks.noise import build_noise
from stochks.solver import Models
from stochks.spectral import SpectralField, build_basis


@pytest.fixture
def spec32():
    return build_basis(np.pi, 32)


@pytest.fixture
def noise8(spec32):
    return build_noise(spec32, 1.0, 1.0, 8)


@pytest.fixture
def ks_models(spec32, noise8):
    """Quadratic flux with the small multiplicative noise σ = 0.1 u."""
    return Models(spec32, quadratic_flux(), sigma_linear(0.1), noise8)


@pytest.fixture
def det_models(spec32, noise8):
    return Models(spec32, quadratic_flux(), sigma_zero(), noise8)


@pytest.fixture
def linear_models(spec32, noise8):
    return Models(spec32, zero_flux(), sigma_zero(), noise8)


@pytest.fixture
def u0_smooth(spec32):
    a = np.zeros(32)
    a[:3] = [1.0, -0.8, 0.5]
    return SpectralField(a, spec32)


def dense_quadrature(f, L, n=2001):
    """Composite Simpson rule on n points; an oracle independent of the transforms."""
    from scipy.integrate import simpson

    x = np.linspace(0.0, L, n)
    return simpson(f(x), x=x)
