"""
Test grids, transforms, spectral operators and norms
Run with: uv run pytest test/test_field_core.py
"""

import math

import numpy as np
import pytest

from polycgo.exceptions import ContractViolation, GridMismatch, InvalidExponent
from polycgo.field_core import (
  ComplexField,
  GridSpec,
  WeightedNormSpec,
  apply_conjugated_op,
  apply_polyharmonic,
  boundary_margin_ok,
  bump_field,
  fft_forward,
  fft_inverse,
  fourier_l2_norm,
  gaussian_field,
  l2_norm,
  lp_norm,
  norm,
  spectral_derivative,
  symbol_multiplier,
)


@pytest.fixture
def grid():
  """2-D grid wide enough for a unit Gaussian"""
  return GridSpec(n=2, points_per_axis=32, half_width=8.0)


@pytest.fixture
def gaussian(grid):
  return gaussian_field(grid, width=1.0)


def test_grid_geometry(grid):
  assert grid.shape == (32, 32)
  assert grid.size == 1024
  assert grid.spacing == pytest.approx(0.5)
  assert grid.frequency_spacing == pytest.approx(math.pi / 8)
  assert grid.axis()[0] == pytest.approx(-8.0)
  assert grid.points().shape == (32, 32, 2)


@pytest.mark.parametrize(
  "kwargs",
  [
    {"n": 1, "points_per_axis": 16, "half_width": 1.0},
    {"n": 2, "points_per_axis": 12, "half_width": 1.0},
    {"n": 2, "points_per_axis": 4, "half_width": 1.0},
    {"n": 2, "points_per_axis": 16, "half_width": 0.0},
    {"n": 2, "points_per_axis": 16, "half_width": 1.0, "offset_axis": 2},
  ],
)
def test_invalid_grid(kwargs):
  with pytest.raises(ContractViolation):
    GridSpec(**kwargs)


def test_offset_grid_shifts_one_axis(grid):
  shifted = grid.with_offset(1)
  assert shifted.same_nodes(grid)
  np.testing.assert_allclose(shifted.frequency_axis(0), grid.frequency_axis(0))
  np.testing.assert_allclose(
    shifted.frequency_axis(1) - grid.frequency_axis(1), 0.5 * grid.frequency_spacing
  )


def test_avoiding_uses_largest_real_component(grid):
  assert grid.avoiding(np.array([0.2 + 1j, 1.0 + 0.2j])).offset_axis == 1


def test_require_subcritical():
  GridSpec(n=3, points_per_axis=8, half_width=1.0).require_subcritical(1)
  with pytest.raises(InvalidExponent):
    GridSpec(n=2, points_per_axis=8, half_width=1.0).require_subcritical(1)


def test_field_is_read_only(gaussian):
  with pytest.raises(ValueError):
    gaussian.data[0, 0] = 1.0


def test_field_size_checked(grid):
  with pytest.raises(ContractViolation):
    ComplexField(grid, np.zeros(10))


def test_on_grid_requires_same_nodes(gaussian):
  other = GridSpec(n=2, points_per_axis=32, half_width=4.0)
  with pytest.raises(GridMismatch):
    gaussian.on_grid(other)


def test_forward_transform_of_gaussian(grid, gaussian):
  """exp(-|x|^2/2) has transform 2 pi exp(-|xi|^2/2) in 2-D"""
  spectrum = fft_forward(gaussian)
  expected = 2 * math.pi * np.exp(-grid.frequency_radius_squared() / 2)
  assert spectrum.representation == "fourier"
  np.testing.assert_allclose(spectrum.data, expected, atol=1e-10)


def test_forward_transform_on_offset_grid(grid):
  shifted = grid.with_offset(0)
  spectrum = fft_forward(gaussian_field(shifted, width=1.0))
  expected = 2 * math.pi * np.exp(-shifted.frequency_radius_squared() / 2)
  np.testing.assert_allclose(spectrum.data, expected, atol=1e-10)


@pytest.mark.parametrize("offset_axis", [None, 1])
def test_inverse_recovers_field(grid, offset_axis):
  tagged = grid.with_offset(offset_axis)
  f = gaussian_field(tagged, width=0.8, center=(0.5, -1.0), amplitude=2 - 1j)
  back = fft_inverse(fft_forward(f))
  np.testing.assert_allclose(back.data, f.data, atol=1e-12)


def test_parseval(gaussian):
  assert fourier_l2_norm(fft_forward(gaussian)) == pytest.approx(l2_norm(gaussian), rel=1e-12)


def test_representation_checked(gaussian):
  with pytest.raises(ContractViolation):
    fft_inverse(gaussian)
  with pytest.raises(ContractViolation):
    fft_forward(fft_forward(gaussian))


def test_polyharmonic_of_gaussian(grid, gaussian):
  """-Delta exp(-r^2/2) = (n - r^2) exp(-r^2/2)"""
  result = apply_polyharmonic(gaussian, 1)
  expected = (2 - grid.radius_squared()) * gaussian.data
  np.testing.assert_allclose(result.data, expected, atol=1e-9)


def test_conjugated_operator_of_gaussian(grid, gaussian):
  """(-Delta - 2 zeta.grad) w = (n - r^2 + 2 zeta.x) w for w = exp(-r^2/2)"""
  zeta = np.array([1.0, -1j])
  result = apply_conjugated_op(gaussian, zeta, 1)
  x1, x2 = grid.physical_mesh()
  expected = (2 - grid.radius_squared() + 2 * (zeta[0] * x1 + zeta[1] * x2)) * gaussian.data
  np.testing.assert_allclose(result.data, expected, atol=1e-8)


def test_symbol_multiplier_shape_checked(grid):
  with pytest.raises(GridMismatch):
    symbol_multiplier(grid, np.array([1.0, 1j, 0.0]))


def test_spectral_derivative(grid, gaussian):
  x1, _ = grid.physical_mesh()
  result = spectral_derivative(gaussian, (1, 0))
  np.testing.assert_allclose(result.data, -x1 * gaussian.data, atol=1e-9)


def test_lp_norm_of_gaussian(gaussian):
  """||exp(-r^2/2)||_p^p = 2 pi / p in 2-D"""
  for p in (1.0, 2.0, 3.0):
    assert lp_norm(gaussian, p) == pytest.approx((2 * math.pi / p) ** (1 / p), rel=1e-10)


def test_weighted_norm_and_sup(grid, gaussian):
  plain = l2_norm(gaussian)
  assert norm(gaussian, WeightedNormSpec(sigma=-1.0, p=2.0)) < plain
  assert norm(gaussian, WeightedNormSpec(sigma=1.0, p=2.0)) > plain
  assert norm(gaussian, WeightedNormSpec(sigma=0.0, p=math.inf)) == pytest.approx(1.0)


def test_invalid_norm_exponent():
  with pytest.raises(InvalidExponent):
    WeightedNormSpec(p=0.5)


def test_bump_support_and_margin(grid):
  bump = bump_field(grid, radius=2.0)
  outside = grid.radius_squared() > 4.0
  assert np.all(bump.data[outside] == 0)
  assert bump.max_abs() == pytest.approx(1.0)
  assert boundary_margin_ok(bump)
  assert not boundary_margin_ok(bump_field(grid, radius=7.9))
