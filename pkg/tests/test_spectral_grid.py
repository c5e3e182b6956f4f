import math

import numpy as np
import pytest
from spectral_grid import (
    Field,
    Grid,
    decode_field,
    dilate,
    encode_field,
    fourier_shift,
    inner,
    integrate,
    interpolated_peak,
    l2_norm,
    lp_norm_p,
    moment,
    read_field,
    resample,
    symmetrize,
    write_field,
)
from utils import (
    DomainError,
    GridMismatchError,
    NoConcentrationError,
    NonFiniteFieldError,
)


def gaussian(grid, center=0.0, width=1.0):
    return Field.from_function(
        grid,
        lambda *xs: np.exp(
            -sum((x - center) ** 2 for x in xs) / (2 * width**2)
        ),
    )


@pytest.mark.parametrize(
    "d, n, L",
    [(3, 64, 10.0), (1, 15, 10.0), (1, 48, 10.0), (2, 64, 0.0)],
)
def test_grid_rejects_bad_parameters(d, n, L):
    with pytest.raises(DomainError):
        Grid(d, n, L)


def test_grid_geometry():
    grid = Grid(2, 32, 8.0)
    assert grid.h == 0.25
    assert grid.shape == (32, 32)
    assert grid.axis[0] == -4.0
    assert grid.axis[16] == 0.0
    assert grid.nearest_node((0.0, 0.0)) == (16, 16)
    np.testing.assert_allclose(grid.node((20, 12)), [1.0, -1.0])
    assert grid.refined() == Grid(2, 64, 8.0)
    assert grid.contains((0.0, -4.0))
    assert not grid.contains((4.0, 0.0))


def test_radius_uses_minimal_image():
    grid = Grid(1, 64, 16.0)
    r = grid.radius((7.0,))
    # x = -8 is at distance 1 from x0 = 7 across the boundary
    assert r[0] == pytest.approx(1.0)
    assert r.max() <= grid.L / 2


def test_field_is_immutable_copy():
    grid = Grid(1, 16, 4.0)
    raw = np.ones(16)
    f = Field(grid, raw)
    raw[0] = 5.0
    assert f.values[0] == 1.0
    with pytest.raises(ValueError):
        f.values[0] = 2.0


def test_integrate_gaussian_is_spectrally_accurate():
    grid = Grid(1, 128, 30.0)
    assert integrate(gaussian(grid)) == pytest.approx(
        math.sqrt(2 * math.pi), rel=1e-13
    )
    grid2 = Grid(2, 64, 30.0)
    assert integrate(gaussian(grid2)) == pytest.approx(2 * math.pi, rel=1e-12)


def test_lp_norm_p_returns_integral_of_power():
    grid = Grid(1, 128, 30.0)
    f = gaussian(grid)
    # int exp(-x^2) = sqrt(pi)
    assert lp_norm_p(f, 2.0) == pytest.approx(math.sqrt(math.pi), rel=1e-13)
    assert l2_norm(f) ** 2 == pytest.approx(lp_norm_p(f, 2.0))
    with pytest.raises(DomainError):
        lp_norm_p(f, 0.5)


def test_moment_of_order_zero_is_norm():
    grid = Grid(2, 64, 20.0)
    f = gaussian(grid)
    assert moment(f, (0.0, 0.0), 0.0, 2.0) == lp_norm_p(f, 2.0)


def test_second_moment_of_gaussian():
    grid = Grid(1, 256, 40.0)
    f = gaussian(grid, width=1.0 / math.sqrt(2))
    # int x^2 exp(-2 x^2) dx = sqrt(pi/2) / 4
    assert moment(f, (0.0,), 2.0, 2.0) == pytest.approx(
        math.sqrt(math.pi / 2) / 4, rel=1e-12
    )


def test_moment_center_outside_box():
    grid = Grid(1, 64, 10.0)
    with pytest.raises(DomainError):
        moment(gaussian(grid), (6.0,), 1.0)


def test_non_finite_field_is_rejected():
    grid = Grid(1, 16, 4.0)
    values = np.ones(16)
    values[3] = np.nan
    with pytest.raises(NonFiniteFieldError, match="non-finite field"):
        integrate(Field(grid, values))


def test_grid_mismatch():
    f = gaussian(Grid(1, 32, 10.0))
    g = gaussian(Grid(1, 64, 10.0))
    with pytest.raises(GridMismatchError):
        inner(f, g)
    with pytest.raises(GridMismatchError):
        f + g


def test_normalized_tags_mass():
    f = gaussian(Grid(2, 32, 12.0)).normalized(2.5)
    assert f.is_normalized
    assert f.mass == 2.5
    assert lp_norm_p(f, 2.0) == pytest.approx(2.5, rel=1e-14)
    with pytest.raises(DomainError):
        Field.constant(Grid(1, 16, 4.0), 0.0).normalized()


def test_fourier_shift_translates_band_limited_field():
    grid = Grid(1, 128, 30.0)
    f = gaussian(grid)
    shifted = fourier_shift(f, (1.3,))
    expected = gaussian(grid, center=1.3)
    np.testing.assert_allclose(shifted.values, expected.values, atol=1e-12)


def test_resample_reproduces_smooth_field():
    grid = Grid(2, 64, 24.0)
    f = gaussian(grid, width=1.5)
    points = [np.array([0.1, -0.37, 2.05]), np.array([0.0, 1.11])]
    values = resample(f, points)
    x, y = np.meshgrid(*points, indexing="ij")
    np.testing.assert_allclose(
        values, np.exp(-(x**2 + y**2) / 4.5), atol=1e-12
    )


def test_resample_fill_outside_box():
    grid = Grid(1, 64, 20.0)
    f = gaussian(grid)
    values = resample(f, [np.array([0.0, 15.0])], fill=-1.0)
    assert values[0] == pytest.approx(1.0, abs=1e-12)
    assert values[1] == -1.0


def test_dilate_samples_scaled_profile():
    grid = Grid(1, 256, 40.0)
    f = gaussian(grid)
    g = dilate(f, scale=2.0, center=(1.0,), source_center=(0.0,))
    expected = np.exp(-((2.0 * (grid.axis - 1.0)) ** 2) / 2)
    np.testing.assert_allclose(g.values, expected, atol=1e-12)


def test_interpolated_peak_finds_subgrid_maximum():
    grid = Grid(2, 128, 24.0)
    f = gaussian(grid, center=0.0, width=1.0)
    f = fourier_shift(f, (0.07, -0.11))
    np.testing.assert_allclose(interpolated_peak(f), [0.07, -0.11], atol=5e-3)


def test_interpolated_peak_tie_is_lexicographic():
    grid = Grid(1, 16, 16.0)
    values = np.zeros(16)
    values[[3, 10]] = 1.0
    peak = interpolated_peak(Field(grid, values))
    assert peak[0] == pytest.approx(grid.axis[3])


def test_flat_field_has_no_concentration():
    with pytest.raises(NoConcentrationError):
        interpolated_peak(Field.constant(Grid(1, 32, 8.0), 2.0))


def test_symmetrize_keeps_even_field_and_reflects():
    grid = Grid(2, 32, 10.0)
    f = gaussian(grid)
    np.testing.assert_allclose(symmetrize(f).values, f.values, atol=1e-15)
    g = symmetrize(fourier_shift(f, (0.5, 0.0)))
    u = g.values
    np.testing.assert_allclose(u, u.T, atol=1e-15)
    np.testing.assert_allclose(
        u, np.roll(np.flip(u, axis=0), 1, axis=0), atol=1e-15
    )


def test_flep_codec_round_trip_with_hash(tmp_path):
    grid = Grid(2, 16, 6.0)
    f = gaussian(grid)
    tag = "ab" * 32
    data = encode_field(f, 0.5, tag)
    assert data[:4] == b"FLEP"
    assert data[-68:-64] == b"HASH"
    stored = decode_field(data)
    assert stored.field.grid == grid
    assert stored.s == 0.5
    assert stored.problem_hash == tag
    np.testing.assert_array_equal(stored.field.values, f.values)

    path = tmp_path / "u.fld"
    write_field(path, f, 0.5)
    assert not (tmp_path / "u.fld.tmp").exists()
    assert read_field(path).problem_hash is None


def test_flep_decoder_rejects_garbage():
    with pytest.raises(DomainError, match="bad magic"):
        decode_field(b"NOPE" + bytes(40))
    data = encode_field(gaussian(Grid(1, 16, 4.0)))
    with pytest.raises(DomainError, match="truncated"):
        decode_field(data[:-8])
