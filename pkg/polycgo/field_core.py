"""
Uniform periodic grids, complex fields, spectral calculus and norms

The continuum space R^n is modelled by the torus [-L, L)^n sampled with N
points per axis. Transforms follow the convention

    f^(xi) = integral of exp(-i x.xi) f(x) dx,

so the forward transform carries the quadrature weight (2L/N)^n and the
inverse carries (2L)^-n. Frequencies are (pi/L) k with k in numpy's fftfreq
order, optionally shifted by half a spacing along one axis so that the
characteristic set of a symbol aligned with that axis is never sampled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Literal, Optional, Sequence

import numpy as np

from polycgo.exceptions import ContractViolation, GridMismatch, InvalidExponent

logger = logging.getLogger(__name__)

Representation = Literal["physical", "fourier"]


@dataclass(frozen=True)
class GridSpec:
  """Discretization of R^n by the box [-L, L)^n"""

  n: int
  points_per_axis: int
  half_width: float
  m: Optional[int] = None
  offset_axis: Optional[int] = None

  def __post_init__(self):
    if self.n < 2:
      raise ContractViolation(f"Grid dimension must be >= 2, got {self.n}")
    npts = self.points_per_axis
    if npts < 8 or npts & (npts - 1) != 0:
      raise ContractViolation(
        f"points_per_axis must be a power of two >= 8, got {npts}"
      )
    if not self.half_width > 0:
      raise ContractViolation(f"half_width must be positive, got {self.half_width}")
    if self.m is not None and self.m < 1:
      raise ContractViolation(f"Operator order must be >= 1, got {self.m}")
    if self.offset_axis is not None and not 0 <= self.offset_axis < self.n:
      raise ContractViolation(
        f"offset_axis {self.offset_axis} outside 0..{self.n - 1}"
      )

  @property
  def shape(self) -> tuple[int, ...]:
    return (self.points_per_axis,) * self.n

  @property
  def size(self) -> int:
    return self.points_per_axis**self.n

  @property
  def spacing(self) -> float:
    return 2.0 * self.half_width / self.points_per_axis

  @property
  def cell_volume(self) -> float:
    return self.spacing**self.n

  @property
  def frequency_spacing(self) -> float:
    return math.pi / self.half_width

  @property
  def offset_vector(self) -> np.ndarray:
    shift = np.zeros(self.n)
    if self.offset_axis is not None:
      shift[self.offset_axis] = 0.5 * self.frequency_spacing
    return shift

  def axis(self) -> np.ndarray:
    """Physical node coordinates along one axis"""
    return -self.half_width + self.spacing * np.arange(self.points_per_axis)

  def frequency_axis(self, index: int) -> np.ndarray:
    """Frequency nodes along axis `index` in FFT order"""
    k = np.fft.fftfreq(self.points_per_axis, d=1.0 / self.points_per_axis)
    return self.frequency_spacing * k + self.offset_vector[index]

  def physical_mesh(self) -> list[np.ndarray]:
    """Sparse (broadcastable) coordinate arrays x_1..x_n"""
    return [_along(self.axis(), a, self.n) for a in range(self.n)]

  def frequency_mesh(self) -> list[np.ndarray]:
    """Sparse (broadcastable) frequency arrays xi_1..xi_n"""
    return [_along(self.frequency_axis(a), a, self.n) for a in range(self.n)]

  def radius_squared(self) -> np.ndarray:
    return _dense(sum(x**2 for x in self.physical_mesh()), self.shape)

  def frequency_radius_squared(self) -> np.ndarray:
    return _dense(sum(xi**2 for xi in self.frequency_mesh()), self.shape)

  def points(self) -> np.ndarray:
    """All physical nodes as an array of shape (*shape, n)"""
    axes = np.meshgrid(*[self.axis()] * self.n, indexing="ij")
    return np.stack(axes, axis=-1)

  def frequencies(self) -> np.ndarray:
    """All frequency nodes as an array of shape (*shape, n)"""
    axes = np.meshgrid(
      *[self.frequency_axis(a) for a in range(self.n)], indexing="ij"
    )
    return np.stack(axes, axis=-1)

  def same_nodes(self, other: "GridSpec") -> bool:
    """True when both grids sample the same physical nodes"""
    return (
      self.n == other.n
      and self.points_per_axis == other.points_per_axis
      and math.isclose(self.half_width, other.half_width, rel_tol=1e-14)
    )

  def with_offset(self, axis: Optional[int]) -> "GridSpec":
    return replace(self, offset_axis=axis)

  def avoiding(self, zeta: Any) -> "GridSpec":
    """Copy of the grid whose frequency nodes avoid Sigma_zeta.

    The half-spacing shift goes along the axis carrying the largest
    component of Re(zeta); for zeta aligned with that axis every node
    then stays half a spacing away from the plane containing Sigma_zeta.
    """
    raw = np.asarray(getattr(zeta, "raw", zeta))
    return self.with_offset(int(np.argmax(np.abs(raw.real))))

  def require_subcritical(self, m: int) -> None:
    if not self.n > 2 * m:
      raise InvalidExponent(
        f"Requires n > 2m, got n={self.n}, m={m}", source="field_core"
      )


@dataclass(frozen=True)
class WeightedNormSpec:
  """Weight exponent sigma and Lebesgue exponent p of a norm"""

  sigma: float = 0.0
  p: float = 2.0

  def __post_init__(self):
    if not self.p >= 1:
      raise InvalidExponent(f"Lebesgue exponent must be >= 1, got {self.p}")
    if not math.isfinite(self.sigma):
      raise InvalidExponent(f"Weight exponent must be finite, got {self.sigma}")


@dataclass(frozen=True, eq=False)
class ComplexField:
  """A complex scalar field sampled on a grid, physical or Fourier side"""

  grid: GridSpec
  data: np.ndarray = field(repr=False)
  representation: Representation = "physical"

  def __post_init__(self):
    values = np.asarray(self.data, dtype=np.complex128)
    if values.size != self.grid.size:
      raise ContractViolation(
        f"Field has {values.size} samples, grid needs {self.grid.size}"
      )
    values = np.array(values.reshape(self.grid.shape), copy=True)
    values.setflags(write=False)
    object.__setattr__(self, "data", values)
    if self.representation not in ("physical", "fourier"):
      raise ContractViolation(f"Unknown representation {self.representation!r}")

  @property
  def flat(self) -> np.ndarray:
    """Samples in row-major order"""
    return self.data.reshape(-1)

  def like(self, data: np.ndarray) -> "ComplexField":
    """New field on the same grid and representation"""
    return ComplexField(self.grid, data, self.representation)

  def on_grid(self, grid: GridSpec) -> "ComplexField":
    """Re-tag a physical field with a grid sampling the same nodes"""
    if not self.grid.same_nodes(grid):
      raise GridMismatch(f"Field grid {self.grid} does not match {grid}")
    if self.representation != "physical":
      raise ContractViolation("Only physical fields can change frequency sampling")
    return ComplexField(grid, self.data, "physical")

  def max_abs(self) -> float:
    return float(np.max(np.abs(self.data))) if self.data.size else 0.0


def _along(vec: np.ndarray, axis: int, n: int) -> np.ndarray:
  shape = [1] * n
  shape[axis] = vec.size
  return vec.reshape(shape)


def _dense(arr: np.ndarray | float, shape: tuple[int, ...]) -> np.ndarray:
  return np.broadcast_to(arr, shape).copy()


def _phase(grid: GridSpec, sign: int) -> np.ndarray:
  """exp(sign * i xi.x0) with x0 = (-L, ..., -L), as a dense array"""
  total = np.ones(grid.shape, dtype=np.complex128)
  for xi in grid.frequency_mesh():
    total = total * np.exp(-sign * 1j * grid.half_width * xi)
  return total


def _modulation(grid: GridSpec, sign: int) -> np.ndarray | float:
  if grid.offset_axis is None:
    return 1.0
  a = grid.offset_axis
  shift = grid.offset_vector[a]
  local = grid.spacing * np.arange(grid.points_per_axis)
  return _along(np.exp(sign * 1j * shift * local), a, grid.n)


def fft_forward(f: ComplexField) -> ComplexField:
  """
  Continuum-scaled forward transform.

  Args:
      f: field in physical representation

  Returns:
      Field tagged fourier whose values approximate the integral transform
      at the grid frequencies

  Raises:
      ContractViolation: If f is not in physical representation
  """
  if f.representation != "physical":
    raise ContractViolation("fft_forward expects a physical field")
  grid = f.grid
  data = f.data * _modulation(grid, -1)
  spectrum = np.fft.fftn(data) * grid.cell_volume * _phase(grid, -1)
  return ComplexField(grid, spectrum, "fourier")


def fft_inverse(f_hat: ComplexField) -> ComplexField:
  """Inverse of fft_forward; carries the (2 pi)^-n factor"""
  if f_hat.representation != "fourier":
    raise ContractViolation("fft_inverse expects a fourier field")
  grid = f_hat.grid
  data = np.fft.ifftn(f_hat.data * _phase(grid, +1)) / grid.cell_volume
  data = data * _modulation(grid, +1)
  return ComplexField(grid, data, "physical")


def apply_multiplier(f: ComplexField, multiplier: np.ndarray) -> ComplexField:
  """Apply a Fourier multiplier; the output keeps the input's representation"""
  if f.representation == "fourier":
    return f.like(f.data * multiplier)
  spectrum = fft_forward(f)
  return fft_inverse(spectrum.like(spectrum.data * multiplier))


def symbol_multiplier(grid: GridSpec, zeta: Any) -> np.ndarray:
  """p_zeta(xi) = |xi|^2 - 2 i zeta.xi sampled on the frequency grid"""
  raw = np.asarray(getattr(zeta, "raw", zeta), dtype=np.complex128)
  if raw.shape != (grid.n,):
    raise GridMismatch(f"zeta has shape {raw.shape}, grid dimension is {grid.n}")
  mesh = grid.frequency_mesh()
  dot = sum(raw[a] * mesh[a] for a in range(grid.n))
  return _dense(sum(xi**2 for xi in mesh) - 2j * dot, grid.shape)


def apply_conjugated_op(w: ComplexField, zeta: Any, m: int) -> ComplexField:
  """(-Delta - 2 zeta.grad)^m w, computed as the multiplier p_zeta^m"""
  return apply_multiplier(w, symbol_multiplier(w.grid, zeta) ** m)


def apply_polyharmonic(f: ComplexField, m: int) -> ComplexField:
  """(-Delta)^m f"""
  return apply_multiplier(f, f.grid.frequency_radius_squared() ** m)


def spectral_derivative(f: ComplexField, alpha: Sequence[int]) -> ComplexField:
  """Partial derivative d^alpha f by the multiplier (i xi)^alpha"""
  if len(alpha) != f.grid.n:
    raise ContractViolation(f"Multi-index {alpha} has wrong length")
  mult = np.ones(f.grid.shape, dtype=np.complex128)
  for xi, k in zip(f.grid.frequency_mesh(), alpha):
    if k:
      mult = mult * (1j * xi) ** k
  return apply_multiplier(f, mult)


def _weights(grid: GridSpec, sigma: float, power: float) -> np.ndarray | float:
  if sigma == 0:
    return 1.0
  return (1.0 + grid.radius_squared()) ** (sigma * power / 2.0)


def norm(f: ComplexField, spec: WeightedNormSpec = WeightedNormSpec()) -> float:
  """
  Quadrature value of (integral (1+|x|^2)^(sigma p/2) |f|^p dx)^(1/p).

  For p = inf returns max (1+|x|^2)^(sigma/2) |f| over the grid.

  Raises:
      ContractViolation: If f is not in physical representation
  """
  if f.representation != "physical":
    raise ContractViolation("norm expects a physical field")
  magnitude = np.abs(f.data)
  if math.isinf(spec.p):
    return float(np.max(_weights(f.grid, spec.sigma, 1.0) * magnitude))
  integrand = _weights(f.grid, spec.sigma, spec.p) * magnitude**spec.p
  return float((np.sum(integrand) * f.grid.cell_volume) ** (1.0 / spec.p))


def lp_norm(f: ComplexField, p: float) -> float:
  return norm(f, WeightedNormSpec(sigma=0.0, p=p))


def l2_norm(f: ComplexField) -> float:
  return norm(f, WeightedNormSpec())


def fourier_l2_norm(f_hat: ComplexField) -> float:
  """L2 norm of a Fourier-side field including the (2 pi)^-n Parseval factor"""
  grid = f_hat.grid
  total = np.sum(np.abs(f_hat.data) ** 2) / (2.0 * grid.half_width) ** grid.n
  return float(np.sqrt(total))


def gaussian_field(
  grid: GridSpec,
  width: float = 1.0,
  center: Optional[Sequence[float]] = None,
  amplitude: complex = 1.0,
) -> ComplexField:
  """amplitude * exp(-|x-c|^2 / (2 width^2))"""
  c = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
  r2 = sum((x - c[a]) ** 2 for a, x in enumerate(grid.physical_mesh()))
  return ComplexField(grid, amplitude * _dense(np.exp(-r2 / (2 * width**2)), grid.shape))


def bump_field(
  grid: GridSpec,
  radius: float,
  center: Optional[Sequence[float]] = None,
  height: complex = 1.0,
  power: int = 8,
) -> ComplexField:
  """height * (1 - |x-c|^2/R^2)^power inside the ball, 0 outside"""
  c = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
  r2 = sum((x - c[a]) ** 2 for a, x in enumerate(grid.physical_mesh()))
  profile = np.clip(1.0 - r2 / radius**2, 0.0, None) ** power
  return ComplexField(grid, height * _dense(profile, grid.shape))


def boundary_margin_ok(f: ComplexField, cells: int = 4, tol: float = 1e-12) -> bool:
  """True when |f| stays below tol * max|f| within `cells` of the box boundary"""
  peak = f.max_abs()
  if peak == 0:
    return True
  grid = f.grid
  mask = np.zeros(grid.shape, dtype=bool)
  for a in range(grid.n):
    index = [slice(None)] * grid.n
    index[a] = np.r_[0:cells, grid.points_per_axis - cells : grid.points_per_axis]
    mask[tuple(index)] = True
  return bool(np.max(np.abs(f.data[mask])) <= tol * peak)
