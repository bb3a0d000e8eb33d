"""
Test isotropic vectors, the conjugated symbol, the cover and its charts
Run with: uv run pytest test/test_symbol_geometry.py
"""

import math

import numpy as np
import pytest

from polycgo.exceptions import NotIsotropic, OutOfChart, ZeroVector
from polycgo.symbol_geometry import (
  Diffeo,
  PartitionOfUnity,
  build_partition,
  canonicalize,
  charts,
  check_symbol_bounds,
  complete_orthonormal,
  dist_to_char_set,
  eval_symbol,
  probe_symbol_integrability,
  smoothstep,
)


@pytest.fixture
def zeta():
  return canonicalize([0.0, 1.0, -1j])


@pytest.fixture
def rng():
  return np.random.default_rng(11)


def _sigma_points(s: float, count: int, n: int = 3) -> np.ndarray:
  """Points of the characteristic set in canonical coordinates"""
  angles = np.linspace(0.1, 2 * math.pi - 0.1, count)
  points = np.zeros((count, n))
  points[:, 1] = s + s * np.cos(angles)
  points[:, 2] = s * np.sin(angles)
  return points


def test_canonicalize_rotation(zeta):
  assert zeta.s == pytest.approx(1.0)
  assert zeta.magnitude == pytest.approx(math.sqrt(2.0))
  np.testing.assert_allclose(zeta.rotation @ zeta.raw, zeta.canonical(), atol=1e-14)
  np.testing.assert_allclose(zeta.rotation @ zeta.rotation.T, np.eye(3), atol=1e-14)


def test_canonicalize_rejects_bad_vectors():
  with pytest.raises(NotIsotropic):
    canonicalize([1.0, 1.0, 0.0])
  with pytest.raises(ZeroVector):
    canonicalize([0.0, 0.0, 0.0])


def test_complete_orthonormal_is_deterministic():
  rows = complete_orthonormal([np.array([0.0, 0.0, 2.0])], 3)
  np.testing.assert_allclose(rows, [[0, 0, 1], [1, 0, 0], [0, 1, 0]], atol=1e-15)


def test_symbol_matches_raw_definition(zeta, rng):
  """|xi|^2 - 2 i zeta.xi equals the canonical-frame symbol"""
  xi = rng.normal(size=(50, 3)) * 3
  raw = np.sum(xi**2, axis=-1) - 2j * (xi @ zeta.raw)
  np.testing.assert_allclose(eval_symbol(zeta, zeta.to_canonical(xi)), raw, atol=1e-12)


def test_symbol_vanishes_on_sigma(zeta):
  points = _sigma_points(zeta.s, 20)
  np.testing.assert_allclose(eval_symbol(zeta, points), 0, atol=1e-13)
  np.testing.assert_allclose(dist_to_char_set(zeta, points), 0, atol=1e-13)


def test_distance_scalar_input():
  assert dist_to_char_set(2.0, np.array([0.0, 0.0, 0.0])) == pytest.approx(0.0)
  assert dist_to_char_set(2.0, np.array([1.0, 2.0, 0.0])) == pytest.approx(math.sqrt(5.0))


def test_symbol_bounds_hold(zeta, rng):
  samples = np.concatenate([rng.normal(size=(400, 3)) * 2, rng.normal(size=(200, 3)) * 40])
  report = check_symbol_bounds(zeta, samples)
  assert report.far_samples > 0
  assert report.near_samples > 0
  assert report.near_ratio_range[0] >= 0.5


def test_partition_sums_to_one(rng):
  partition = PartitionOfUnity(s=2.0, n=3)
  xi = rng.uniform(-6, 6, size=(10_000, 3))
  total = sum(partition.pieces(xi).values())
  assert np.max(np.abs(total - 1.0)) <= 1e-12


def test_partition_scaling(rng):
  xi = rng.uniform(-3, 3, size=(10_000, 3))
  unit = PartitionOfUnity(s=1.0, n=3).pieces(xi)
  scaled = PartitionOfUnity(s=3.0, n=3).pieces(3.0 * xi)
  for key in unit:
    assert np.max(np.abs(unit[key] - scaled[key])) <= 1e-14


def test_smoothstep_is_flat_at_the_ends():
  t = np.linspace(0.0, 1.0, 101)
  values = smoothstep(t)
  assert values[0] == 0.0 and values[-1] == 1.0
  assert np.all(np.diff(values) >= 0)
  np.testing.assert_allclose(values + values[::-1], 1.0, atol=1e-14)
  assert smoothstep(0.01) <= 1e-40
  assert smoothstep(-1.0) == 0.0 and smoothstep(2.0) == 1.0


def test_partition_pieces_stay_in_charts(zeta, rng):
  partition = build_partition(zeta)
  xi = rng.uniform(-2.5, 2.5, size=(20_000, 3))
  for chart in charts(zeta):
    piece = partition.chi(chart.j, chart.sign, xi)
    assert np.all(chart.in_domain(xi[piece > 0]))


def test_chi_one_vanishes_near_sigma(zeta):
  partition = build_partition(zeta)
  near = _sigma_points(zeta.s, 30) + 0.01
  np.testing.assert_allclose(partition.chi_one(near), 0.0)


def test_chart_straightens_symbol(zeta, rng):
  chart = Diffeo(j=2, sign=+1, s=zeta.s, n=3)
  xi = rng.uniform(-2, 3, size=(5000, 3))
  inside = xi[chart.in_domain(xi)]
  eta = chart.forward(inside)
  expected = zeta.s * (eta[:, 1] + 1j * eta[:, 0])
  np.testing.assert_allclose(eval_symbol(zeta, inside), expected, atol=1e-12)
  np.testing.assert_allclose(chart.inverse(eta), inside, atol=1e-10)


@pytest.mark.parametrize("s", [0.5, 1.0, 4.0])
def test_jacobian_bounds(s, rng):
  n = 3
  for chart in charts(canonicalize(s * np.array([1.0, -1j, 0.0]))):
    xi = rng.uniform(-3 * s, 3 * s, size=(10_000, n))
    jac = chart.jacobian(xi[chart.in_domain(xi)])
    assert jac.size > 0
    assert np.all((jac > 2 / n) & (jac < 8))


def test_chart_domain_checks(zeta):
  chart = Diffeo(j=3, sign=-1, s=zeta.s, n=3)
  with pytest.raises(OutOfChart):
    chart.forward(np.array([[0.0, 1.0, 0.5]]))
  with pytest.raises(OutOfChart):
    Diffeo(j=1, sign=1, s=1.0, n=3)
  assert len(charts(zeta)) == 4


def test_integrability_threshold(zeta):
  assert probe_symbol_integrability(zeta, 1.0).locally_integrable
  assert not probe_symbol_integrability(zeta, 2.0).locally_integrable
