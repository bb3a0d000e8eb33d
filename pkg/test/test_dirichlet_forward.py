"""
Test the Galerkin forward solver and the Dirichlet-to-Neumann map
Run with: uv run pytest test/test_dirichlet_forward.py
"""

import math

import numpy as np
import pytest

from polycgo.dirichlet_forward import (
  assemble_dn_map,
  assemble_form,
  build_basis,
  check_assumption_A,
  dirichlet_eigenvalue,
  evaluate,
  exponential_trace_data,
  form_bound,
  integral_identity_check,
  multinomial_weights,
  project_trace,
  sobolev_chain_ratios,
  solve_dirichlet,
)
from polycgo.exceptions import (
  AssumptionAViolated,
  ContractViolation,
  InvalidExponent,
  QuadratureUnderresolved,
)


def _bump(points: np.ndarray) -> np.ndarray:
  return 4.0 * np.exp(-4.0 * np.sum(points**2, axis=1))


@pytest.fixture
def basis():
  return build_basis(n=3, m=1, half_width=1.0, basis_size=4, trace_size=2)


@pytest.fixture
def forms(basis):
  return assemble_form(basis, _bump), assemble_form(basis, None)


def _traces(basis, seed: int) -> np.ndarray:
  rng = np.random.default_rng(seed)
  return rng.normal(size=basis.lift_size) + 1j * rng.normal(size=basis.lift_size)


def test_basis_sizes(basis):
  assert basis.interior_size == 4**3
  assert basis.lift_size == 4**3 - 2**3
  assert basis.size == basis.interior_size + basis.lift_size
  assert basis.descriptor()["lift_size"] == basis.lift_size


def test_boundary_polynomials_vanish_on_the_far_side():
  basis = build_basis(n=2, m=2, basis_size=3, trace_size=1)
  for label, poly in zip(basis.labels, basis.polynomials):
    if label[0] != "boundary":
      assert poly(-1.0) == pytest.approx(0.0, abs=1e-12)
      assert poly.deriv()(1.0) == pytest.approx(0.0, abs=1e-12)
      continue
    _, side, k = label
    for j in range(2):
      derivative = poly.deriv(j) if j else poly
      assert derivative(float(side)) == pytest.approx(1.0 if j == k else 0.0, abs=1e-12)
      assert derivative(-float(side)) == pytest.approx(0.0, abs=1e-12)


def test_invalid_basis_requests():
  with pytest.raises(ContractViolation):
    build_basis(n=3, m=1, basis_size=0)
  with pytest.raises(QuadratureUnderresolved):
    build_basis(n=2, m=1, basis_size=6, quadrature_points=2)


def test_multinomial_weights():
  assert multinomial_weights(2, 2) == {(0, 2): 1, (1, 1): 2, (2, 0): 1}


def test_dirichlet_eigenvalue_of_cube(basis):
  """Lowest eigenvalue of -Delta on [-1, 1]^3 is 3 pi^2 / 4"""
  exact = 3 * math.pi**2 / 4
  value = dirichlet_eigenvalue(basis)
  assert value >= exact * (1 - 1e-12)
  assert value == pytest.approx(exact, rel=1e-3)


def test_dirichlet_solve_residual(forms, basis):
  form_q, _ = forms
  solution = solve_dirichlet(form_q, _traces(basis, 1))
  assert solution.residual <= 1e-10
  assert solution.coefficients.shape == (basis.size,)


def test_zero_trace_gives_zero_solution(forms, basis):
  solution = solve_dirichlet(forms[0], np.zeros(basis.lift_size))
  assert not np.any(solution.interior)


def test_trace_length_checked(forms):
  with pytest.raises(ContractViolation):
    solve_dirichlet(forms[0], np.ones(3))


def test_dn_map_symmetric_for_real_potential(forms):
  dn = assemble_dn_map(forms[0], seed=2)
  assert dn.symmetry_defect() <= 1e-8
  assert dn.metadata["extension_residual"] <= 1e-9
  assert dn.metadata["solver"] == "lu"


def test_dn_map_pairing_matches_form(forms, basis):
  """a(u_f, w_h) evaluated through the full form equals h^H Lambda f"""
  form_q, _ = forms
  dn = assemble_dn_map(form_q)
  f, h = _traces(basis, 3), _traces(basis, 4)
  solution = solve_dirichlet(form_q, f)
  k = basis.interior_size
  direct = complex(np.conj(h) @ form_q.total[k:, :] @ solution.coefficients)
  assert dn.pairing(f, h) == pytest.approx(direct, rel=1e-10)


def test_integral_identity(forms, basis):
  form_q, form_0 = forms
  dn_q, dn_0 = assemble_dn_map(form_q), assemble_dn_map(form_0)
  u1 = solve_dirichlet(form_q, _traces(basis, 5))
  u2 = solve_dirichlet(form_0, _traces(basis, 6))
  report = integral_identity_check(form_q, form_0, u1, u2, dn_q, dn_0)
  assert abs(report.volume_side) > 0
  assert report.residual <= 1e-9


def test_integral_identity_detects_wrong_map(forms, basis):
  form_q, form_0 = forms
  dn_0 = assemble_dn_map(form_0)
  u1 = solve_dirichlet(form_q, _traces(basis, 5))
  u2 = solve_dirichlet(form_0, _traces(basis, 6))
  report = integral_identity_check(form_q, form_0, u1, u2, dn_0, dn_0)
  assert report.residual > 1e-3


def test_assumption_report(forms):
  report = check_assumption_A(forms[0])
  assert report.sigma_min > 0
  assert not report.near_singular


def test_dirichlet_eigenvalue_potential_is_rejected(basis):
  shifted = assemble_form(basis, -dirichlet_eigenvalue(basis))
  assert check_assumption_A(shifted).near_singular
  with pytest.raises(AssumptionAViolated):
    assemble_dn_map(shifted)


def test_constant_trace_projects_exactly(basis):
  projection = project_trace(basis, exponential_trace_data(np.zeros(3)))
  assert projection.residual <= 1e-10
  coefficients = np.concatenate([np.zeros(basis.interior_size), projection.coefficients])
  corners = np.array([[1.0, -1.0, 1.0], [-1.0, 0.3, 1.0]])
  np.testing.assert_allclose(evaluate(basis, coefficients, corners), 1.0, atol=1e-10)


def test_form_bound_for_laplacian(basis, forms):
  assert form_bound(basis, forms[1]) <= 1.0 + 1e-8


def test_sobolev_chain(basis):
  ratios = sobolev_chain_ratios(basis)
  assert np.all(np.isfinite(ratios))
  assert np.all(ratios > 0)
  with pytest.raises(InvalidExponent):
    sobolev_chain_ratios(build_basis(n=2, m=1, basis_size=3, trace_size=1))
