"""Potential fields q used by the CGO and forward solvers"""

import logging
from typing import Optional, Sequence

import numpy as np

from polycgo.exceptions import InvalidPotential
from polycgo.field_core import ComplexField, GridSpec, bump_field

logger = logging.getLogger(__name__)


def bump_potential(
  grid: GridSpec,
  height: complex = 5.0,
  radius: Optional[float] = None,
  center: Optional[Sequence[float]] = None,
) -> ComplexField:
  """Smooth compactly supported bump; radius defaults to a third of the box"""
  radius = grid.half_width / 3.0 if radius is None else radius
  return bump_field(grid, radius, center, height)


def power_law_potential(
  grid: GridSpec,
  exponent: float,
  m: int,
  height: complex = 1.0,
  radius: Optional[float] = None,
) -> ComplexField:
  """
  height * |x|^-exponent times a bump cutoff.

  exponent < 2m keeps q in L^(n/2m); the singular node is sampled at half a
  cell from the origin.
  """
  if not 0 <= exponent < 2 * m:
    raise InvalidPotential(f"Power-law exponent must lie in [0, {2 * m}), got {exponent}")
  radius = grid.half_width / 3.0 if radius is None else radius
  r = np.maximum(np.sqrt(grid.radius_squared()), 0.5 * grid.spacing)
  cutoff = bump_field(grid, radius)
  return cutoff.like(height * r**-exponent * cutoff.data)


def potential_from_config(grid: GridSpec, m: int, spec: dict) -> ComplexField:
  """Build q from a potential config section (kind plus parameters)"""
  match spec.get("kind", "bump"):
    case "bump":
      return bump_potential(grid, spec.get("height", 5.0), spec.get("radius"), spec.get("center"))
    case "power_law":
      return power_law_potential(
        grid, spec.get("exponent", 1.0), m, spec.get("height", 1.0), spec.get("radius")
      )
    case "file":
      from polycgo.field_io import read_field

      q = read_field(spec["path"])
      if not q.grid.same_nodes(grid):
        raise InvalidPotential(f"Potential file {spec['path']} is sampled on a different grid")
      return q.on_grid(grid)
    case "zero":
      return ComplexField(grid, np.zeros(grid.shape, dtype=np.complex128))
    case other:
      raise InvalidPotential(f"Unknown potential kind {other!r}")
