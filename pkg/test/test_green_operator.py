"""
Test Green operator assembly, the chart kernels and the decay/L^p probes
Run with: uv run pytest test/test_green_operator.py
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from polycgo.exceptions import (
  ContractViolation,
  GridMismatch,
  InvalidExponent,
  InvalidSigma,
  NotLocallyIntegrable,
)
from polycgo.field_core import GridSpec, fft_forward, fft_inverse, gaussian_field, l2_norm
from polycgo.green_operator import (
  ChartKernel,
  assemble,
  check_xzeta_preservation,
  dilation_matched_operators,
  free_resolvent_ratio,
  lp_exponents,
  normalize_backend,
  probe_lp_bound,
  probe_lp_fixed_field,
  probe_weighted_decay,
  random_test_functions,
  transfer_coefficients,
  verify_chart_kernel,
  verify_fundamental,
)
from polycgo.symbol_geometry import Diffeo, canonicalize, smoothstep

DIRECTION = np.array([1.0, -1j, 0.0])


@pytest.fixture
def grid():
  return GridSpec(n=3, points_per_axis=16, half_width=4.0, m=1)


@pytest.fixture
def test_field(grid):
  return gaussian_field(grid, width=0.75)


def _zeta(s: float):
  return canonicalize(s * DIRECTION)


def test_naive_residual(grid, test_field):
  zeta = _zeta(4.0)
  G = assemble(zeta, 1, grid.avoiding(zeta), "naive")
  assert verify_fundamental(G, test_field) <= 1e-6


@pytest.mark.parametrize("s", [2.0, 4.0])
def test_chart_residual(grid, test_field, s):
  zeta = _zeta(s)
  G = assemble(zeta, 1, grid.avoiding(zeta), "chart")
  assert verify_fundamental(G, test_field) <= 1e-2


def test_backends_agree_for_m_one(grid, test_field):
  zeta = _zeta(4.0)
  op_grid = grid.avoiding(zeta)
  naive = assemble(zeta, 1, op_grid, "naive").apply(test_field)
  chart = assemble(zeta, 1, op_grid, "chart").apply(test_field)
  assert l2_norm(naive.like(naive.data - chart.data)) <= 5e-3 * l2_norm(naive)


def test_chart_backend_bounded_on_sigma_nodes(grid):
  """The unshifted grid samples Sigma at xi = 0; the multiplier stays finite"""
  G = assemble(_zeta(4.0), 2, grid, "chart")
  assert np.all(np.isfinite(G.multiplier()))


def test_zero_field_residual(grid):
  zeta = _zeta(4.0)
  G = assemble(zeta, 1, grid.avoiding(zeta), "naive")
  assert verify_fundamental(G, gaussian_field(grid, amplitude=0.0)) == 0.0


def test_naive_needs_override_for_m_two(grid):
  zeta = _zeta(4.0)
  with pytest.raises(NotLocallyIntegrable):
    assemble(zeta, 2, grid.avoiding(zeta), "naive")
  G = assemble(zeta, 2, grid.avoiding(zeta), "naive", allow_unsafe=True)
  assert G.backend == "naive"


def test_naive_needs_avoiding_grid(grid):
  with pytest.raises(ContractViolation, match="Sigma-avoiding"):
    assemble(_zeta(4.0), 1, grid, "naive")


def test_dimension_mismatch(grid):
  with pytest.raises(GridMismatch):
    assemble(canonicalize([1.0, -1j]), 1, grid, "chart")


def test_field_grid_checked(grid):
  zeta = _zeta(4.0)
  G = assemble(zeta, 1, grid.avoiding(zeta), "naive")
  other = GridSpec(n=3, points_per_axis=16, half_width=2.0)
  with pytest.raises(GridMismatch):
    G.apply(gaussian_field(other))


def test_multiplier_is_immutable(grid):
  G = assemble(_zeta(4.0), 1, grid, "chart")
  with pytest.raises(ValueError):
    G.multiplier()[0, 0, 0] = 0.0


def test_adjoint_pairing(grid, test_field):
  zeta = _zeta(4.0)
  G = assemble(zeta, 1, grid.avoiding(zeta), "chart")
  other = gaussian_field(grid, width=1.0, center=(0.5, 0.0, -0.5), amplitude=1j)
  left = np.vdot(other.data, G.apply(test_field).data)
  right = np.vdot(G.apply_adjoint(other).data, test_field.data)
  assert abs(left - right) <= 1e-10 * abs(left)


@pytest.mark.parametrize("m", [2, 3])
def test_chart_kernel_identity(m):
  tests = random_test_functions(10, seed=3)
  assert verify_chart_kernel(m, 2, tests) <= 1e-3


def test_mollified_kernel_matches_pointwise_far_out():
  kernel = ChartKernel(j=2, sign=1, m=2, s=3.0)
  delta = 0.05
  angle = np.linspace(0, 2 * math.pi, 17)
  eta1, etaj = 20 * delta * np.sin(angle), 20 * delta * np.cos(angle)
  np.testing.assert_allclose(
    kernel.mollified(eta1, etaj, delta), kernel.pointwise(eta1, etaj), rtol=1e-12
  )


def test_tabulated_kernel_resampling():
  kernel = ChartKernel(j=2, sign=1, m=1, s=1.0)
  delta = 0.1
  rng = np.random.default_rng(5)
  eta1, etaj = rng.uniform(-3 * delta, 3 * delta, size=(2, 200))
  table = kernel.tabulate(delta)
  resampled = kernel.evaluate(eta1, etaj, delta, order=3, table=table)
  exact = kernel.mollified(eta1, etaj, delta)
  assert np.max(np.abs(resampled - exact)) <= 1e-2 * np.max(np.abs(table[1]))


def test_lp_exponents():
  assert lp_exponents(3, 1) == pytest.approx((1.2, 6.0))
  with pytest.raises(InvalidExponent):
    lp_exponents(4, 2)


def test_weighted_decay_slope(grid, test_field):
  operators = []
  for s in (4.0, 8.0, 16.0):
    zeta = _zeta(s)
    operators.append(assemble(zeta, 1, grid.avoiding(zeta), "naive"))
  probe = probe_weighted_decay(operators, test_field, sigma=-0.5)
  assert probe.slope < 0
  assert probe.passed


def test_weighted_decay_sigma_window(grid, test_field):
  zeta = _zeta(4.0)
  G = assemble(zeta, 1, grid.avoiding(zeta), "naive")
  with pytest.raises(InvalidSigma):
    probe_weighted_decay([G], test_field, sigma=0.5)


@pytest.mark.parametrize("backend", ["naive", "chart"])
def test_lp_ratio_uniform_on_dilated_family(grid, backend):
  family = dilation_matched_operators(
    DIRECTION, [4.0, 8.0, 16.0], grid.avoiding(DIRECTION), 1, s_ref=4.0, backend=backend
  )
  probe = probe_lp_bound(family, lambda g: gaussian_field(g, width=g.half_width / 5))
  assert probe.passed
  assert probe.spread == pytest.approx(1.0, abs=1e-6)


def test_lp_probe_zero_field_is_skipped(grid):
  zeta = _zeta(4.0)
  G = assemble(zeta, 1, grid.avoiding(zeta), "naive")
  probe = probe_lp_bound([G], gaussian_field(grid, amplitude=0.0))
  assert math.isnan(probe.rows[0][1])
  assert not probe.passed


def test_naive_operator_keeps_spectrum_away_from_sigma(grid, test_field):
  zeta = _zeta(4.0)
  G = assemble(zeta, 1, grid.avoiding(zeta), "naive")
  assert check_xzeta_preservation(G, test_field, radius=1.0) <= 1e-10


def _cleared_source(grid: GridSpec, zeta, width: float = 1.0):
  """Gaussian whose spectrum is smoothly removed within s/4 of Sigma"""
  f = gaussian_field(grid, width=width)
  xi = zeta.to_canonical(grid.frequencies())
  shifted = xi[..., 1:].copy()
  shifted[..., 0] -= zeta.s
  distance = np.hypot(xi[..., 0], np.linalg.norm(shifted, axis=-1) - zeta.s)
  reach = zeta.s / 4.0
  spectrum = fft_forward(f)
  return fft_inverse(spectrum.like(spectrum.data * smoothstep((distance - reach) / reach)))


def _central(field, half: float) -> np.ndarray:
  mesh = field.grid.physical_mesh()
  inside = np.ones(field.grid.shape, dtype=bool)
  for x in mesh:
    inside &= np.abs(np.broadcast_to(x, field.grid.shape)) <= half
  return field.data[inside]


def _relative(a: np.ndarray, b: np.ndarray) -> float:
  return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def test_chart_residual_order_two():
  grid = GridSpec(n=3, points_per_axis=48, half_width=12.0, m=2)
  zeta = _zeta(4.0)
  G = assemble(zeta, 2, grid.avoiding(zeta), "chart")
  assert G.chart_terms
  assert verify_fundamental(G, gaussian_field(grid, width=1.0)) <= 2e-2


def test_chart_decay_order_two_in_five_dimensions():
  grid = GridSpec(n=5, points_per_axis=8, half_width=4.0, m=2)
  direction = np.array([1.0, -1j, 0.0, 0.0, 0.0])
  operators = []
  for s in (8.0, 16.0, 32.0):
    zeta = canonicalize(s * direction)
    operators.append(assemble(zeta, 2, grid.avoiding(zeta), "chart"))
  probe = probe_weighted_decay(operators, gaussian_field(grid, width=1.0), sigma=-1.5)
  assert probe.slope <= -1.75
  assert probe.passed


def test_chart_matches_pointwise_inverse_away_from_sigma():
  """Off Sigma the chart distribution is 1/p^2, so both backends agree on a cleared source"""
  grid = GridSpec(n=3, points_per_axis=48, half_width=12.0, m=2)
  zeta = _zeta(4.0)
  op_grid = grid.avoiding(zeta)
  f = _cleared_source(op_grid, zeta)
  chart = assemble(zeta, 2, op_grid, "chart").apply(f)
  naive = assemble(zeta, 2, op_grid, "naive", allow_unsafe=True).apply(f)
  assert _relative(_central(chart, 6.0), _central(naive, 6.0)) <= 2e-2


def test_chart_plain_grid_stable_under_refinement():
  zeta = _zeta(4.0)
  results = []
  for N, L in ((32, 8.0), (48, 12.0)):
    grid = GridSpec(n=3, points_per_axis=N, half_width=L, m=2)
    G = assemble(zeta, 2, grid, "chart")
    results.append(G.apply(_cleared_source(grid, zeta)))
  coarse, fine = (_central(out, 4.0) for out in results)
  assert coarse.shape == fine.shape
  assert np.all(np.isfinite(fine))
  assert _relative(coarse, fine) <= 5e-2


def test_chart_plain_and_avoiding_grids_agree():
  grid = GridSpec(n=3, points_per_axis=48, half_width=12.0, m=2)
  zeta = _zeta(4.0)
  plain = assemble(zeta, 2, grid, "chart").apply(_cleared_source(grid, zeta))
  shifted_grid = grid.avoiding(zeta)
  shifted = assemble(zeta, 2, shifted_grid, "chart").apply(_cleared_source(shifted_grid, zeta))
  assert _relative(_central(plain, 6.0), _central(shifted, 6.0)) <= 5e-2


def test_order_two_needs_chart_backend(grid, test_field):
  zeta = _zeta(4.0)
  with pytest.raises(NotLocallyIntegrable):
    assemble(zeta, 2, grid.avoiding(zeta), "naive")
  G = assemble(zeta, 2, grid, "chart")
  assert G.chart_terms
  for term in G.chart_terms:
    assert all(np.all(np.isfinite(w)) for w in term.weights.values())
  out = G.apply(test_field)
  assert np.all(np.isfinite(out.data))
  assert l2_norm(out) > 0
  assert G.metadata()["chart_terms"] == len(G.chart_terms)


def test_adjoint_pairing_order_two(grid, test_field):
  zeta = _zeta(4.0)
  G = assemble(zeta, 2, grid.avoiding(zeta), "chart")
  other = gaussian_field(grid, width=1.0, center=(0.5, 0.0, -0.5), amplitude=1j)
  left = np.vdot(other.data, G.apply(test_field).data)
  right = np.vdot(G.apply_adjoint(other).data, test_field.data)
  assert abs(left - right) <= 1e-10 * abs(left)


def test_paper_backend_alias(grid, test_field):
  zeta = _zeta(4.0)
  alias = assemble(zeta, 1, grid, "paper")
  chart = assemble(zeta, 1, grid, "chart")
  assert alias.backend == "chart"
  np.testing.assert_array_equal(alias.multiplier(), chart.multiplier())
  assert normalize_backend("paper") == "chart"
  with pytest.raises(ContractViolation, match="Unknown backend"):
    assemble(zeta, 1, grid, "spectral")


@pytest.mark.parametrize("backend", ["naive", "chart"])
def test_lp_ratio_bounded_for_fixed_field(grid, test_field, backend):
  operators = []
  for s in (4.0, 8.0, 16.0):
    zeta = _zeta(s)
    operators.append(assemble(zeta, 1, grid.avoiding(zeta), backend))
  probe = probe_lp_fixed_field(operators, test_field)
  assert probe.passed
  assert probe.growth <= 3.0
  assert probe.peak <= 3.0 * probe.reference
  assert probe.reference == pytest.approx(free_resolvent_ratio(test_field, 1))


def test_lp_fixed_field_rejects_wrong_multiplier(grid, test_field):
  operators = []
  for s in (2.0, 4.0, 8.0):
    zeta = _zeta(s)
    G = assemble(zeta, 1, grid.avoiding(zeta), "naive")
    operators.append(replace(G, multiplier_data=100.0 * np.abs(G.multiplier())))
  probe = probe_lp_fixed_field(operators, test_field)
  assert probe.peak > 3.0 * probe.reference
  assert not probe.passed


def test_lp_fixed_field_zero_field(grid):
  zeta = _zeta(4.0)
  G = assemble(zeta, 1, grid.avoiding(zeta), "naive")
  probe = probe_lp_fixed_field([G], gaussian_field(grid, amplitude=0.0))
  assert not probe.passed
  assert math.isnan(probe.peak)


def test_transfer_coefficients_of_constant_cutoff():
  """For chi = 1 and m = 2: L psi = a D psi + (D a) psi with a = s / (2 c)"""
  chart = Diffeo(j=2, sign=1, s=2.0, n=3)
  xi = np.zeros((5, 3))
  xi[:, 1] = chart.s + np.linspace(0.5, 1.5, 5)
  c = xi[:, 1] - chart.s
  first, second = transfer_coefficients(lambda x: np.ones(x.shape[:-1]), chart, 2, 1e-3 * chart.s)
  np.testing.assert_allclose(first(xi), -chart.s / (2.0 * c**2), rtol=1e-8)
  np.testing.assert_allclose(second(xi), chart.s / (2.0 * c), rtol=1e-12)
