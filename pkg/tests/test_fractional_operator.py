import math

import numpy as np
import pytest
from fractional_operator import (
    apply_fractional_laplacian,
    check_order,
    dirichlet_energy,
    finite_difference_laplacian,
    multiplier,
    resolvent_apply,
)
from oracles import gaussian_at_origin, image_correction, singular_integral
from spectral_grid import Field, Grid, inner
from utils import DomainError


def plane_wave(grid, mode):
    k = 2 * math.pi * mode / grid.L
    return Field.from_function(grid, lambda x: np.cos(k * x)), k


@pytest.mark.parametrize("s", [0.0, -0.5, 1.5])
def test_order_out_of_range(s):
    with pytest.raises(DomainError):
        check_order(s)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75, 1.0])
def test_plane_waves_are_eigenfunctions(s):
    grid = Grid(1, 64, 2 * math.pi)
    f, k = plane_wave(grid, 5)
    out = apply_fractional_laplacian(f, s)
    np.testing.assert_allclose(out.values, k ** (2 * s) * f.values, atol=1e-12)


def test_multiplier_is_cached_and_read_only():
    grid = Grid(2, 32, 10.0)
    table = multiplier(grid, 0.5)
    assert multiplier(Grid(2, 32, 10.0), 0.5) is table
    with pytest.raises(ValueError):
        table.values[0, 0] = 1.0


@pytest.mark.parametrize("s", [0.3, 0.5, 0.8])
def test_gaussian_matches_closed_form(s):
    grid = Grid(1, 512, 60.0)
    f = Field.from_function(grid, lambda x: np.exp(-(x**2)))
    out = apply_fractional_laplacian(f, s)
    origin = grid.nearest_node((0.0,))
    expected = gaussian_at_origin(s) + image_correction(
        s, grid.L, math.sqrt(math.pi)
    )
    assert out.values[origin] == pytest.approx(expected, rel=1e-5)


@pytest.mark.parametrize("s", [0.4, 0.7])
def test_singular_integral_away_from_origin(s):
    grid = Grid(1, 1024, 200.0)
    f = Field.from_function(grid, lambda x: np.exp(-(x**2)))
    out = apply_fractional_laplacian(f, s)
    index = grid.nearest_node((1.0,))
    x = grid.axis[index[0]]
    expected = singular_integral(lambda y: math.exp(-(y**2)), x, s)
    expected += image_correction(s, grid.L, math.sqrt(math.pi))
    assert out.values[index] == pytest.approx(expected, rel=1e-5, abs=1e-8)


def test_dirichlet_energy_agrees_with_operator():
    grid = Grid(2, 64, 20.0)
    f = Field.from_function(grid, lambda x, y: np.exp(-(x**2 + 2 * y**2)))
    for s in (0.3, 1.0):
        assert dirichlet_energy(f, s) == pytest.approx(
            inner(f, apply_fractional_laplacian(f, s)), rel=1e-12
        )


def test_dirichlet_energy_of_gaussian_at_s_one():
    grid = Grid(1, 256, 40.0)
    f = Field.from_function(grid, lambda x: np.exp(-(x**2) / 2))
    # int |f'|^2 = int x^2 exp(-x^2) = sqrt(pi) / 2
    assert dirichlet_energy(f, 1.0) == pytest.approx(
        math.sqrt(math.pi) / 2, rel=1e-12
    )


def test_finite_differences_converge_at_s_one():
    errors = []
    for n in (128, 256):
        grid = Grid(1, n, 20.0)
        f = Field.from_function(grid, lambda x: np.exp(-(x**2)))
        spectral = apply_fractional_laplacian(f, 1.0)
        errors.append((finite_difference_laplacian(f) - spectral).sup())
    # second order: halving h divides the error by four
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)


def test_resolvent_inverts_shifted_operator():
    grid = Grid(2, 32, 12.0)
    f = Field.from_function(grid, lambda x, y: np.exp(-(x**2 + y**2)))
    tau, s = 0.3, 0.6
    u = resolvent_apply(f, s, tau)
    back = u + apply_fractional_laplacian(u, s) * tau
    np.testing.assert_allclose(back.values, f.values, atol=1e-12)
    with pytest.raises(DomainError):
        resolvent_apply(f, s, 0.0)
