import numpy as np
import pytest

from csh_vortex.app.errors import ExponentRangeError, ResolutionError
from csh_vortex.app.services.torus_field import (
    Field,
    TorusGrid,
    VortexConfiguration,
    background,
    coefficients_a,
    inverse_laplacian,
    laplacian,
)

from conftest import smooth_field


def test_grid_rejects_odd_and_non_positive_sizes():
    with pytest.raises(ResolutionError):
        TorusGrid(1.0, 1.0, 33, 32)
    with pytest.raises(ResolutionError):
        TorusGrid(1.0, 1.0, 0, 32)
    with pytest.raises(ResolutionError):
        TorusGrid(-1.0, 1.0, 32, 32)


def test_grid_geometry():
    grid = TorusGrid(2.0, 0.5, 64, 16)
    assert grid.area == 1.0
    assert grid.h1 == pytest.approx(2.0 / 64)
    assert grid.h2 == pytest.approx(0.5 / 16)
    assert grid.spacing == pytest.approx(2.0 / 64)
    assert grid.integrate(np.ones(grid.shape)) == pytest.approx(1.0, rel=1e-15)


def test_spectral_laplacian_of_trigonometric_mode():
    grid = TorusGrid(1.0, 2.0, 32, 64)
    x, y = grid.coordinates
    f = np.sin(2 * np.pi * x) * np.cos(4 * np.pi * y / 2.0)
    expected = -((2 * np.pi) ** 2 + (2 * np.pi) ** 2) * f
    np.testing.assert_allclose(laplacian(Field(grid, f)).values, expected, atol=1e-9)


def test_inverse_laplacian_recovers_mean_zero_field(rng):
    grid = TorusGrid(1.0, 1.0, 32, 32)
    u = smooth_field(rng, grid, 1)[0]
    recovered = inverse_laplacian(laplacian(Field(grid, u)))
    np.testing.assert_allclose(recovered.values, u, atol=1e-12)
    assert recovered.is_mean_zero()


def test_background_without_vortices_is_zero():
    grid = TorusGrid(1.0, 1.0, 16, 16)
    bg = background(grid, VortexConfiguration.empty(2))
    assert bg.N == (0, 0)
    assert np.all(bg.u0 == 0)


def test_background_mass_and_equation():
    grid = TorusGrid(1.0, 1.0, 64, 64)
    vortices = VortexConfiguration.create(grid, [[(0.5, 0.25, 1), (0.1, 0.9, 2)]])
    bg = background(grid, vortices)
    assert bg.N == (3,)
    assert bg.flux(0) == pytest.approx(12 * np.pi, rel=1e-12)
    assert bg.field(0).is_mean_zero()
    lap = laplacian(bg.field(0)).values
    residual = lap - (bg.source[0] - 4 * np.pi * 3 / grid.area)
    assert np.max(np.abs(residual)) <= 1e-9 * np.max(np.abs(bg.source[0]))


def test_background_minimum_matches_direct_fourier_sum():
    grid = TorusGrid(1.0, 1.0, 32, 32)
    sigma = 2 * grid.spacing
    bg = background(grid, VortexConfiguration.create(grid, [[(0.5, 0.25, 1)]]), sigma)
    k1 = 2 * np.pi * np.fft.fftfreq(32, d=1 / 32)
    ksq = k1[:, None] ** 2 + k1[None, :] ** 2
    mask = ksq > 0
    oracle = -4 * np.pi * np.sum(np.exp(-0.5 * sigma ** 2 * ksq[mask]) / ksq[mask])
    assert bg.u0[0, 16, 8] == pytest.approx(oracle, rel=1e-10)
    assert bg.u0[0].argmin() == np.ravel_multi_index((16, 8), grid.shape)


def test_mollification_below_grid_spacing_is_rejected():
    grid = TorusGrid(1.0, 1.0, 16, 16)
    with pytest.raises(ResolutionError):
        background(grid, VortexConfiguration.create(grid, [[(0.5, 0.5, 1)]]), sigma=0.5 / 16)


def test_vortex_points_are_reduced_into_the_cell():
    grid = TorusGrid(1.0, 2.0, 16, 16)
    vortices = VortexConfiguration.create(grid, [[(1.25, -0.5, 1)], [(-0.25, 4.5, 2)]])
    assert (vortices.sites[0][0].x, vortices.sites[0][0].y) == pytest.approx((0.25, 1.5))
    assert (vortices.sites[1][0].x, vortices.sites[1][0].y) == pytest.approx((0.75, 0.5))
    assert vortices.N == (1, 2)


def test_coefficients_without_vortices():
    grid = TorusGrid(2.0, 1.0, 16, 16)
    bg = background(grid, VortexConfiguration.empty(3))
    a, aM = coefficients_a(bg, np.zeros((3, 16, 16)))
    np.testing.assert_allclose(a, 2.0, rtol=1e-14)
    np.testing.assert_allclose(aM, 2.0, rtol=1e-14)


def test_coefficients_satisfy_jensen_and_cauchy_schwarz(rng):
    grid = TorusGrid(1.0, 1.0, 32, 32)
    vortices = VortexConfiguration.create(grid, [[(0.3, 0.3, 1)], [(0.7, 0.6, 1)]])
    bg = background(grid, vortices)
    a, aM = coefficients_a(bg, smooth_field(rng, grid, 2, amplitude=0.5))
    assert np.all(a >= grid.area)
    np.testing.assert_allclose(aM, aM.T)
    assert np.all(np.diag(aM) >= a ** 2 / grid.area)
    assert aM[0, 1] ** 2 <= aM[0, 0] * aM[1, 1]


def test_exponent_range_is_checked():
    grid = TorusGrid(1.0, 1.0, 8, 8)
    bg = background(grid, VortexConfiguration.empty(1))
    w = np.zeros((1, 8, 8))
    w[0, 0, 0] = 800.0
    with pytest.raises(ExponentRangeError):
        coefficients_a(bg, w)
