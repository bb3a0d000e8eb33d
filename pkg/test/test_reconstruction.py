"""
Test zeta frames, coefficient extraction and the staged reconstruction
Run with: uv run pytest test/test_reconstruction.py
"""

import numpy as np
import pytest

from polycgo.cgo_solver import Potential
from polycgo.dirichlet_forward import DNMap, assemble_dn_map, assemble_form, build_basis
from polycgo.exceptions import ContractViolation, DependencyError, FrameInfeasible
from polycgo.field_core import ComplexField, GridSpec, fft_forward
from polycgo.potentials import bump_potential
from polycgo.reconstruction import (
  PROJECTION_TOL,
  CGOSettings,
  _assemble_spectrum,
  born_pairing,
  build_frame,
  extract_fourier_coefficient,
  low_pass,
  low_pass_error,
  oracle_pairing,
  reconstruct,
  reconstruct_oracle,
)


@pytest.fixture
def grid():
  return GridSpec(n=3, points_per_axis=16, half_width=4.0)


@pytest.fixture
def q(grid):
  return bump_potential(grid, height=1.0, radius=1.5)


@pytest.fixture
def dn_pair():
  basis = build_basis(n=3, m=1, basis_size=3, trace_size=2)
  dn = assemble_dn_map(assemble_form(basis, 2.0))
  dn0 = assemble_dn_map(assemble_form(basis, None))
  return dn, dn0


@pytest.mark.parametrize(
  "xi, s",
  [((0.0, 0.0, 0.0), 3.0), ((1.0, -2.0, 0.5), 4.0), ((0.0, 6.0, 0.0), 3.0)],
)
def test_frame_identities(xi, s):
  frame = build_frame(xi, s)
  defects = frame.defects()
  assert max(defects.values()) <= 1e-12
  np.testing.assert_allclose(frame.zeta1.raw + np.conj(frame.zeta2.raw), 1j * np.array(xi), atol=1e-12)
  assert abs(frame.eta1 @ np.array(xi)) <= 1e-12
  assert abs(frame.eta1 @ frame.eta2) <= 1e-12


def test_frame_is_deterministic():
  first = build_frame((1.0, 2.0, 3.0), 5.0)
  second = build_frame((1.0, 2.0, 3.0), 5.0)
  np.testing.assert_array_equal(first.zeta1.raw, second.zeta1.raw)


def test_frame_feasibility():
  with pytest.raises(FrameInfeasible):
    build_frame((4.0, 0.0, 0.0), 1.9)
  with pytest.raises(ContractViolation):
    build_frame((1.0, 0.0), 2.0)
  with pytest.raises(ContractViolation):
    build_frame((1.0, 0.0, 0.0), 2.0, n=4)


def test_leading_term_is_transform_at_minus_xi(grid, q):
  potential = Potential(q)
  step = grid.frequency_spacing
  frame = build_frame((step, 0.0, 0.0), 8.0)
  settings = CGOSettings()
  coefficient = oracle_pairing(
    frame,
    potential,
    settings.solve(potential, frame.zeta1),
    settings.solve(potential.conjugate(), frame.zeta2),
  )
  expected = fft_forward(q).data[grid.points_per_axis - 1, 0, 0]
  assert coefficient.leading == pytest.approx(expected, rel=1e-10)
  assert abs(coefficient.correction) < abs(coefficient.leading)


def test_extraction_dependencies(dn_pair):
  frame = build_frame((0.0, 0.0, 0.0), 2.0)
  with pytest.raises(DependencyError):
    extract_fourier_coefficient(frame, "oracle")
  with pytest.raises(DependencyError):
    extract_fourier_coefficient(frame, "boundary", dn=dn_pair[0])
  with pytest.raises(ContractViolation):
    extract_fourier_coefficient(frame, "fourier")


def test_zero_potential_oracle_coefficient(grid):
  zero = Potential(ComplexField(grid, np.zeros(grid.shape)))
  result = extract_fourier_coefficient(build_frame((0.0, 0.0, 0.0), 4.0), "oracle", potential=zero)
  assert result.value == 0


def test_born_pairing_of_identical_maps_vanishes(dn_pair):
  dn, _ = dn_pair
  result = born_pairing(dn, dn, build_frame((0.5, 0.0, 0.0), 1.0))
  assert result.value == 0
  assert result.projection_residual is not None


def test_born_pairing_rejects_incompatible_maps():
  first = DNMap(np.eye(2), {"n": 3, "trace_size": 1})
  second = DNMap(np.eye(2), {"n": 3, "trace_size": 2})
  with pytest.raises(ContractViolation):
    born_pairing(first, second, build_frame((0.0, 0.0, 0.0), 1.0))


def test_spectrum_placement():
  grid = GridSpec(n=3, points_per_axis=8, half_width=2.0)
  spectrum = _assemble_spectrum(grid, {(1, 0, 0): 2 + 1j, (0, 0, 0): 3 + 0.5j}, True)
  assert spectrum[7, 0, 0] == 2 + 1j
  assert spectrum[1, 0, 0] == 2 - 1j
  assert spectrum[0, 0, 0] == 3
  plain = _assemble_spectrum(grid, {(1, 0, 0): 2 + 1j}, False)
  assert plain[1, 0, 0] == 0


def test_oracle_reconstruction_of_zero(grid):
  result = reconstruct_oracle(ComplexField(grid, np.zeros(grid.shape)), 1.6, s_schedule=[4.0])
  assert result.field.max_abs() == 0
  assert not result.missing


def test_oracle_reconstruction_matches_low_pass(grid, q):
  result = reconstruct_oracle(q, 1.6, s_schedule=[8.0])
  assert len(result.stages) == 1
  assert result.imaginary_ratio() == 0.0
  assert result.correction_table()
  assert low_pass_error(result, q)[0] <= 0.2


def test_boundary_reconstruction_without_contrast(grid, dn_pair):
  _, dn0 = dn_pair
  result = reconstruct(dn0, dn0, grid, xi_radius=1.0, s_schedule=[2.0, 4.0])
  assert len(result.stages) == 2
  assert result.field.max_abs() == 0
  assert all(row["projection_residual"] is not None for row in result.rows)
  # cubic face traces cannot follow e^(4x) on [-1, 1]
  assert any(stage == 1 for stage, _, _ in result.rejected)
  assert all(row["accepted"] == (row["projection_residual"] <= PROJECTION_TOL) for row in result.rows)


def test_schedule_skips_infeasible_frequencies(grid):
  result = reconstruct_oracle(ComplexField(grid, np.zeros(grid.shape)), 2.4, s_schedule=[1.0])
  assert result.missing
  assert all(stage == 0 for stage, _ in result.missing)


def test_low_pass_keeps_ball(grid, q):
  filtered = low_pass(q, 1e-9)
  np.testing.assert_allclose(filtered.data, np.mean(q.data), atol=1e-12)


def test_oracle_error_does_not_grow_along_schedule(grid, q):
  result = reconstruct_oracle(q, 1.6, s_schedule=[4.0, 8.0])
  errors = low_pass_error(result, q)
  assert len(errors) == 2
  assert errors[1] <= 1.1 * errors[0]


@pytest.fixture
def weak_contrast():
  """Weak bump inside the forward domain [-1, 1]^3, sampled finely enough to interpolate"""
  grid = GridSpec(n=3, points_per_axis=32, half_width=2.0)
  return grid, bump_potential(grid, height=0.05, radius=1.0)


@pytest.fixture
def weak_dn_pair(weak_contrast):
  _, q = weak_contrast
  basis = build_basis(n=3, m=1, half_width=1.0, basis_size=4, trace_size=3, quadrature_points=20)
  return assemble_dn_map(assemble_form(basis, q)), assemble_dn_map(assemble_form(basis, None))


@pytest.mark.parametrize("xi", [(0.0, 0.0, 0.0), (np.pi / 2, 0.0, 0.0)])
def test_born_and_oracle_agree_at_small_contrast(weak_contrast, weak_dn_pair, xi):
  _, q = weak_contrast
  dn, dn0 = weak_dn_pair
  born = born_pairing(dn, dn0, build_frame(xi, 1.0))
  assert born.projection_residual <= PROJECTION_TOL

  potential = Potential(q)
  frame = build_frame(xi, 4.0)
  oracle = extract_fourier_coefficient(frame, "oracle", potential=potential)
  assert abs(oracle.correction) <= 1e-2 * abs(oracle.leading)
  assert abs(born.value - oracle.value) <= 3e-2 * abs(oracle.value)


def test_boundary_reconstruction_with_contrast():
  grid = GridSpec(n=3, points_per_axis=32, half_width=2.0)
  q = bump_potential(grid, height=0.5, radius=1.0)
  basis = build_basis(n=3, m=1, half_width=1.0, basis_size=4, trace_size=3, quadrature_points=20)
  dn = assemble_dn_map(assemble_form(basis, q))
  dn0 = assemble_dn_map(assemble_form(basis, None))

  result = reconstruct(dn, dn0, grid, xi_radius=1.6)
  assert not result.rejected
  assert not result.unresolved()
  assert all(row["s"] <= 1.0 for row in result.rows)
  assert low_pass_error(result, q)[-1] <= 0.2

  # a frame far outside the trace space is dropped instead of entering the field
  large = reconstruct(dn, dn0, grid, xi_radius=1.6, s_schedule=[1.0, 16.0])
  assert large.rejected and all(stage == 1 for stage, _, _ in large.rejected)
  np.testing.assert_allclose(large.stages[1].spectrum, large.stages[0].spectrum)
  assert not large.rejected_unresolved()
