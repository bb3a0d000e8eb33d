"""
Regularized Green operator of the conjugated polyharmonic operator

Two realizations of G f = g * f with (-Delta - 2 zeta.grad)^m g = delta:

- naive: the multiplier 1/p_zeta^m on a frequency grid that avoids Sigma.
  Legitimate for m = 1 only; m >= 2 requires allow_unsafe.
- chart: chi_1/p^m away from Sigma plus, on every chart V_{j,+-}, the chart
  kernel E^(m,j) pulled back through the straightening diffeomorphism and
  applied as a distribution. Its m-1 derivatives along eta_j are moved onto
  chi_{j,+-} e^(ix.xi) f^, which leaves the locally integrable kernel
  1/(s (eta_j + i eta_1)), mollified at width delta and resampled from a
  table with spline interpolation of configurable order. Derivatives falling
  on e^(ix.xi) become powers of t = x.d_j; those falling on f^ become
  transforms of (-i t)^b f.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.special import eval_hermite

from polycgo.exceptions import (
  ChartCoverageError,
  ContractViolation,
  GridMismatch,
  InvalidExponent,
  InvalidSigma,
  NotLocallyIntegrable,
)
from polycgo.field_core import (
  ComplexField,
  GridSpec,
  WeightedNormSpec,
  apply_conjugated_op,
  apply_multiplier,
  fft_forward,
  fft_inverse,
  l2_norm,
  lp_norm,
  norm,
  symbol_multiplier,
)
from polycgo.parallel import parallel_map
from polycgo.symbol_geometry import (
  Diffeo,
  PartitionOfUnity,
  ZetaVector,
  build_partition,
  canonicalize,
  charts,
  dist_to_char_set,
)

logger = logging.getLogger(__name__)

Backend = Literal["naive", "chart"]
BACKEND_ALIASES = {"paper": "chart"}

# Gaussian mollification is negligible (< 1e-17) beyond this many widths
KERNEL_REACH = 9.0
TABLE_STEPS_PER_WIDTH = 8


class ChartTestFunction(ABC):
  """Smooth test function on the (eta_1, eta_j) plane"""

  @abstractmethod
  def derivative(self, order: int, eta1: np.ndarray, etaj: np.ndarray) -> np.ndarray:
    """d^order / d eta_j^order of the function"""

  @abstractmethod
  def support_radius(self) -> float:
    """Radius around the origin outside which the function is negligible"""

  @abstractmethod
  def integral(self) -> complex:
    """Integral over the plane"""


@dataclass(frozen=True)
class GaussianTestFunction(ChartTestFunction):
  center: tuple[float, float] = (0.0, 0.0)
  width: float = 1.0
  amplitude: complex = 1.0

  def derivative(self, order, eta1, etaj):
    scale = self.width * math.sqrt(2.0)
    u = (np.asarray(etaj) - self.center[1]) / scale
    across = np.exp(-((np.asarray(eta1) - self.center[0]) ** 2) / (2 * self.width**2))
    along = (-1.0 / scale) ** order * eval_hermite(order, u) * np.exp(-(u**2))
    return self.amplitude * across * along

  def support_radius(self) -> float:
    return math.hypot(*self.center) + 12.0 * self.width

  def integral(self) -> complex:
    return self.amplitude * 2.0 * math.pi * self.width**2


@dataclass(frozen=True)
class SymbolWeightedTestFunction(ChartTestFunction):
  """s^m (eta_j + i eta_1)^m times a base test function"""

  base: ChartTestFunction
  m: int
  s: float

  def derivative(self, order, eta1, etaj):
    w = np.asarray(etaj) + 1j * np.asarray(eta1)
    total = np.zeros(np.broadcast(w, eta1).shape, dtype=np.complex128)
    for k in range(min(order, self.m) + 1):
      falling = math.factorial(self.m) / math.factorial(self.m - k)
      total = total + math.comb(order, k) * falling * w ** (self.m - k) * self.base.derivative(
        order - k, eta1, etaj
      )
    return self.s**self.m * total

  def support_radius(self) -> float:
    return self.base.support_radius()

  def integral(self) -> complex:
    raise NotImplementedError("Weighted test functions are only paired with E")


@dataclass(frozen=True)
class ChartKernel:
  """
  E^(m,j) = (-1)^(m-1) / (s^m (m-1)!) d^(m-1)/d eta_j^(m-1) (eta_j + i eta_1)^-1.

  As a distribution its action is
  <E, phi> = 1/(s^m (m-1)!) integral (eta_j + i eta_1)^-1 d^(m-1) phi / d eta_j^(m-1).
  """

  j: int
  sign: int
  m: int
  s: float

  def pointwise(self, eta1: np.ndarray, etaj: np.ndarray) -> np.ndarray:
    return 1.0 / (self.s * (np.asarray(etaj) + 1j * np.asarray(eta1))) ** self.m

  def action(
    self,
    test: ChartTestFunction,
    eps: Optional[float] = None,
    radial_panels: int = 64,
    panel_nodes: int = 16,
    angles: int = 512,
  ) -> complex:
    """
    Derivative-transferred quadrature of <E, phi>.

    In polar coordinates eta_j + i eta_1 = r e^(i theta) the integrand times
    r is e^(-i theta) d^(m-1) phi, so the only singular contribution is the
    excised disc of radius eps; two ring radii are combined by Richardson
    extrapolation (error O(eps^2)).
    """
    radius = test.support_radius()
    ring = radius / 200.0 if eps is None else eps
    order = self.m - 1
    gl_x, gl_w = np.polynomial.legendre.leggauss(panel_nodes)
    theta = 2.0 * math.pi * np.arange(angles) / angles
    phase = np.exp(-1j * theta)

    def outside(inner: float) -> complex:
      edges = np.linspace(inner, radius, radial_panels + 1)
      half = 0.5 * np.diff(edges)
      mid = 0.5 * (edges[1:] + edges[:-1])
      r = (mid[:, None] + half[:, None] * gl_x[None, :]).ravel()
      w = (half[:, None] * gl_w[None, :]).ravel()
      eta1 = r[:, None] * np.sin(theta)[None, :]
      etaj = r[:, None] * np.cos(theta)[None, :]
      values = test.derivative(order, eta1, etaj) * phase[None, :]
      return complex(np.sum(w[:, None] * values) * (2.0 * math.pi / angles))

    coarse = outside(ring)
    fine = outside(ring / 2.0)
    extrapolated = (4.0 * fine - coarse) / 3.0
    return extrapolated / (self.s**self.m * math.factorial(order))

  def mollified(self, eta1: np.ndarray, etaj: np.ndarray, delta: float) -> np.ndarray:
    """E^(m,j) convolved with the normalized Gaussian of width delta"""
    eta1 = np.asarray(eta1, dtype=float)
    etaj = np.asarray(etaj, dtype=float)
    order = self.m - 1
    w = etaj + 1j * eta1
    scale = delta * math.sqrt(2.0)
    u = etaj / scale
    across = np.exp(-(eta1**2) / (2 * delta**2))
    total = np.zeros(w.shape, dtype=np.complex128)
    for k in range(order + 1):
      if k == 0:
        smooth = -np.expm1(-(eta1**2 + etaj**2) / (2 * delta**2))
      else:
        smooth = -across * (-1.0 / scale) ** k * eval_hermite(k, u) * np.exp(-(u**2))
      rest = order - k
      singular = (-1.0) ** rest * math.factorial(rest) / w ** (rest + 1)
      total = total + math.comb(order, k) * smooth * singular
    return (-1.0) ** order / (self.s**self.m * math.factorial(order)) * total

  def tabulate(self, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Mollified kernel on a regular eta-grid (half-cell offset, no node at 0)"""
    step = delta / TABLE_STEPS_PER_WIDTH
    count = 2 * int(math.ceil(KERNEL_REACH * TABLE_STEPS_PER_WIDTH))
    nodes = (np.arange(count) + 0.5 - count / 2) * step
    e1, ej = np.meshgrid(nodes, nodes, indexing="ij")
    return nodes, self.mollified(e1, ej, delta)

  def evaluate(
    self,
    eta1: np.ndarray,
    etaj: np.ndarray,
    delta: float,
    order: int = 3,
    table: Optional[tuple[np.ndarray, np.ndarray]] = None,
  ) -> np.ndarray:
    """Resample the tabulated kernel near the origin, closed form elsewhere"""
    eta1 = np.asarray(eta1, dtype=float)
    etaj = np.asarray(etaj, dtype=float)
    nodes, values = table if table is not None else self.tabulate(delta)
    step = nodes[1] - nodes[0]
    inner = nodes[-1] - 2 * step
    near = (np.abs(eta1) <= inner) & (np.abs(etaj) <= inner)
    out = np.empty(eta1.shape, dtype=np.complex128)
    far = ~near
    out[far] = self.mollified(eta1[far], etaj[far], delta)
    if np.any(near):
      coords = np.vstack([(eta1[near] - nodes[0]) / step, (etaj[near] - nodes[0]) / step])
      real = ndimage.map_coordinates(values.real, coords, order=order, mode="nearest")
      imag = ndimage.map_coordinates(values.imag, coords, order=order, mode="nearest")
      out[near] = real + 1j * imag
    return out


@dataclass(frozen=True, eq=False)
class ChartTerm:
  """
  Derivative-transferred part of the chart kernels along canonical axis j.

  Realizes f -> sum_{e,b} (i t)^e F^-1[M_{e,b} F[(-i t)^b f]] with
  t = x . d_j, where d_j is canonical axis j in the raw frame. The pure
  multiplier M_{0,0} lives in the operator's multiplier.
  """

  j: int
  direction: np.ndarray = field(repr=False)
  weights: dict[tuple[int, int], np.ndarray] = field(repr=False)

  def coordinate(self, grid: GridSpec) -> np.ndarray:
    mesh = grid.physical_mesh()
    return np.broadcast_to(
      sum(self.direction[a] * mesh[a] for a in range(grid.n)), grid.shape
    )

  def accumulate(self, f: ComplexField) -> dict[int, np.ndarray]:
    """Frequency data sum_b M_{e,b} F[(-i t)^b f] for every power e"""
    t = self.coordinate(f.grid)
    spectra = {
      b: fft_forward(f.like(f.data * (-1j * t) ** b)).data
      for b in sorted({b for _, b in self.weights})
    }
    out: dict[int, np.ndarray] = {}
    for (e, b), weight in self.weights.items():
      out[e] = out.get(e, 0.0) + weight * spectra[b]
    return out

  def apply(self, f: ComplexField) -> np.ndarray:
    t = self.coordinate(f.grid)
    total = np.zeros(f.grid.shape, dtype=np.complex128)
    for e, data in self.accumulate(f).items():
      total += (1j * t) ** e * fft_inverse(ComplexField(f.grid, data, "fourier")).data
    return total

  def apply_adjoint(self, f: ComplexField) -> np.ndarray:
    t = self.coordinate(f.grid)
    spectra = {
      e: fft_forward(f.like(f.data * (-1j * t) ** e)).data
      for e in sorted({e for e, _ in self.weights})
    }
    gathered: dict[int, np.ndarray] = {}
    for (e, b), weight in self.weights.items():
      gathered[b] = gathered.get(b, 0.0) + np.conj(weight) * spectra[e]
    total = np.zeros(f.grid.shape, dtype=np.complex128)
    for b, data in gathered.items():
      total += (1j * t) ** b * fft_inverse(ComplexField(f.grid, data, "fourier")).data
    return total


@dataclass(frozen=True, eq=False)
class GreenOperator:
  """Assembled G_zeta^(m): a Fourier multiplier plus chart terms; immutable"""

  zeta: ZetaVector
  m: int
  grid: GridSpec
  backend: Backend
  interpolation_order: int
  mollifier_width: Optional[float]
  multiplier_data: np.ndarray = field(repr=False)
  chart_terms: tuple[ChartTerm, ...] = ()

  def multiplier(self) -> np.ndarray:
    """Pure multiplier part; the whole operator when there are no chart terms"""
    return self.multiplier_data

  def _prepare(self, f: ComplexField) -> ComplexField:
    if not self.grid.same_nodes(f.grid):
      raise GridMismatch(
        f"Field grid {f.grid} does not match operator grid {self.grid}",
        source="green_operator",
      )
    if f.representation != "physical":
      raise ContractViolation("Green operator expects a physical field", "green_operator")
    return f.on_grid(self.grid)

  def apply(self, f: ComplexField) -> ComplexField:
    f = self._prepare(f)
    out = apply_multiplier(f, self.multiplier_data)
    if not self.chart_terms:
      return out
    return out.like(out.data + sum(term.apply(f) for term in self.chart_terms))

  def apply_adjoint(self, f: ComplexField) -> ComplexField:
    f = self._prepare(f)
    out = apply_multiplier(f, np.conj(self.multiplier_data))
    if not self.chart_terms:
      return out
    return out.like(out.data + sum(term.apply_adjoint(f) for term in self.chart_terms))

  def metadata(self) -> dict:
    return {
      "zeta_real": self.zeta.raw.real.tolist(),
      "zeta_imag": self.zeta.raw.imag.tolist(),
      "m": self.m,
      "backend": self.backend,
      "interpolation_order": self.interpolation_order,
      "mollifier_width": self.mollifier_width,
      "chart_terms": len(self.chart_terms),
    }


def _naive_multiplier(zeta: ZetaVector, m: int, grid: GridSpec) -> np.ndarray:
  if grid.offset_axis is None:
    raise ContractViolation(
      "naive backend requires a Sigma-avoiding grid (use grid.avoiding(zeta))",
      "green_operator",
    )
  symbol = symbol_multiplier(grid, zeta)
  if np.any(symbol == 0):
    raise ContractViolation("Frequency grid hits the characteristic set", "green_operator")
  return 1.0 / symbol**m


Coefficient = Callable[[np.ndarray], np.ndarray]


def transfer_coefficients(
  chi: Coefficient, chart: Diffeo, m: int, step: float
) -> list[Coefficient]:
  """
  A_0..A_{m-1} with L^(m-1)(chi psi) = sum_r A_r D^r psi.

  D is the derivative along canonical axis j and L psi = D(a psi) with
  a = s / (2 (xi_j - s delta_j2)), the transport of d/d eta_j through the
  chart. The recursion A'_r = D(a A_r) + a A_(r-1) is evaluated lazily;
  D is a fourth-order central difference of width `step`.
  """

  def a(xi: np.ndarray) -> np.ndarray:
    return chart.s / (2.0 * chart.chart_coordinate(xi))

  def along(g: Coefficient) -> Coefficient:
    def derivative(xi: np.ndarray) -> np.ndarray:
      def shifted(k: int) -> np.ndarray:
        moved = np.array(xi, dtype=float, copy=True)
        moved[..., chart.index] += k * step
        return g(moved)

      return (shifted(-2) - 8.0 * shifted(-1) + 8.0 * shifted(1) - shifted(2)) / (12.0 * step)

    return derivative

  def scaled(g: Coefficient) -> Coefficient:
    return lambda xi: a(xi) * g(xi)

  def combined(parts: tuple[Coefficient, ...]) -> Coefficient:
    return lambda xi: sum(part(xi) for part in parts)

  coefficients = [chi]
  for _ in range(m - 1):
    following = []
    for r in range(len(coefficients) + 1):
      parts: list[Coefficient] = []
      if r < len(coefficients):
        parts.append(along(scaled(coefficients[r])))
      if r >= 1:
        parts.append(scaled(coefficients[r - 1]))
      following.append(combined(tuple(parts)))
    coefficients = following
  return coefficients


# relative to s; the pieces vary on the scale s / (2n)
DIFFERENCE_STEP = 1e-3


def _chart_weights(
  chart: Diffeo,
  partition: PartitionOfUnity,
  piece: np.ndarray,
  xi_c: np.ndarray,
  m: int,
  delta: float,
  order: int,
) -> dict[tuple[int, int], np.ndarray]:
  """Flat weights M_{e,b} of one chart, including the multiplier M_{0,0}"""
  support = piece > 0
  if not np.any(support):
    return {}
  points = xi_c[support]
  if not np.all(chart.in_domain(points)):
    raise ChartCoverageError(
      f"chi_({chart.j},{chart.sign:+d}) is nonzero outside its chart domain"
    )
  eta = chart.forward(points, check=False)
  kernel = ChartKernel(j=chart.j, sign=chart.sign, m=1, s=chart.s)
  # mollified 1/(s w) scaled to the prefactor of <E^(m,j), .>
  weight = kernel.evaluate(
    eta[:, 0], eta[:, chart.index], delta, order=order, table=kernel.tabulate(delta)
  ) / (chart.s ** (m - 1) * math.factorial(m - 1))

  values = [piece[support]]
  if m > 1:
    coefficients = transfer_coefficients(
      lambda xi: partition.chi(chart.j, chart.sign, xi), chart, m, DIFFERENCE_STEP * chart.s
    )
    values = [coefficient(points) for coefficient in coefficients]

  weights = {}
  for r, value in enumerate(values):
    for b in range(r + 1):
      full = np.zeros(piece.shape, dtype=np.complex128)
      full[support] = math.comb(r, b) * weight * value
      weights[(r - b, b)] = full
  return weights


def _chart_operator(
  zeta: ZetaVector,
  m: int,
  grid: GridSpec,
  interpolation_order: int,
  delta: float,
) -> tuple[np.ndarray, tuple[ChartTerm, ...]]:
  xi_c = zeta.to_canonical(grid.frequencies().reshape(-1, grid.n))
  partition = build_partition(zeta)
  pieces = partition.pieces(xi_c)
  symbol = symbol_multiplier(grid, zeta).reshape(-1)
  chi_one = pieces[(1, 0)]
  total = np.zeros(symbol.shape, dtype=np.complex128)
  keep = chi_one > 0
  total[keep] = chi_one[keep] / symbol[keep] ** m

  chart_list = charts(zeta)
  results = parallel_map(
    lambda chart: _chart_weights(
      chart,
      partition,
      pieces[(chart.j, chart.sign)],
      xi_c,
      m,
      delta,
      interpolation_order,
    ),
    chart_list,
  )
  merged: dict[int, dict[tuple[int, int], np.ndarray]] = {}
  for chart, weights in zip(chart_list, results):
    total = total + weights.pop((0, 0), 0.0)
    into = merged.setdefault(chart.j, {})
    for key, value in weights.items():
      into[key] = into.get(key, 0.0) + value

  terms = []
  for j, weights in sorted(merged.items()):
    if not weights:
      continue
    frozen = {}
    for key, value in weights.items():
      data = np.array(value.reshape(grid.shape), dtype=np.complex128)
      data.setflags(write=False)
      frozen[key] = data
    terms.append(ChartTerm(j=j, direction=zeta.rotation[j - 1].copy(), weights=frozen))
  return total.reshape(grid.shape), tuple(terms)


def normalize_backend(backend: str) -> Backend:
  """Canonical backend name; "paper" is accepted for "chart" """
  name = BACKEND_ALIASES.get(backend, backend)
  if name not in ("naive", "chart"):
    raise ContractViolation(f"Unknown backend {backend!r}", "green_operator")
  return name


def assemble(
  zeta: ZetaVector,
  m: int,
  grid: GridSpec,
  backend: str = "chart",
  interpolation_order: int = 3,
  allow_unsafe: bool = False,
  mollifier_fraction: float = 0.125,
) -> GreenOperator:
  """
  Assemble G_zeta^(m) on a grid.

  Args:
      zeta: canonicalized isotropic vector
      m: operator order
      grid: discretization; the naive backend needs grid.offset_axis set
      backend: "naive" or "chart" ("paper" is an alias of "chart")
      interpolation_order: spline order of the chart-kernel resampling
      allow_unsafe: permit the naive backend for m >= 2
      mollifier_fraction: kernel mollification width in units of pi/L

  Raises:
      NotLocallyIntegrable: naive backend with m >= 2 and no override
      ChartCoverageError: a partition piece leaks outside its chart
      GridMismatch: dimension of zeta and grid differ
  """
  if zeta.n != grid.n:
    raise GridMismatch(f"zeta in R^{zeta.n}, grid in R^{grid.n}", source="green_operator")
  if m < 1:
    raise ContractViolation(f"Operator order must be >= 1, got {m}", "green_operator")
  if not 1 <= interpolation_order <= 5:
    raise ContractViolation("interpolation_order must be within 1..5", "green_operator")
  backend = normalize_backend(backend)

  terms: tuple[ChartTerm, ...] = ()
  match backend:
    case "naive":
      if m >= 2 and not allow_unsafe:
        raise NotLocallyIntegrable(
          f"1/p_zeta^{m} is not locally integrable for m >= 2; "
          "use the chart backend or pass allow_unsafe"
        )
      data = _naive_multiplier(zeta, m, grid)
      delta = None
    case "chart":
      delta = mollifier_fraction * grid.frequency_spacing
      data, terms = _chart_operator(zeta, m, grid, interpolation_order, delta)

  finite = np.all(np.isfinite(data)) and all(
    np.all(np.isfinite(w)) for term in terms for w in term.weights.values()
  )
  if not finite:
    raise ContractViolation("Assembled operator is not finite", "green_operator")
  data = np.array(data, dtype=np.complex128)
  data.setflags(write=False)
  logger.info(
    f"Assembled {backend} Green operator: n={grid.n}, m={m}, s={zeta.s:.4g}, "
    f"N={grid.points_per_axis}, chart terms={len(terms)}"
  )
  return GreenOperator(
    zeta=zeta,
    m=m,
    grid=grid,
    backend=backend,
    interpolation_order=interpolation_order,
    mollifier_width=delta,
    multiplier_data=data,
    chart_terms=terms,
  )


def apply(G: GreenOperator, f: ComplexField) -> ComplexField:
  return G.apply(f)


def _symbol_power_derivatives(
  p: np.ndarray, c: np.ndarray, m: int, orders: int
) -> list[np.ndarray]:
  """D^k p^m, k = 0..orders, writing p = c^2 + (p - c^2) with D c = 1"""
  rest = p - c**2
  out = []
  for k in range(orders + 1):
    total = np.zeros(p.shape, dtype=np.complex128)
    for l in range(m + 1):
      if 2 * l < k:
        continue
      falling = math.factorial(2 * l) / math.factorial(2 * l - k)
      total = total + math.comb(m, l) * rest ** (m - l) * falling * c ** (2 * l - k)
    out.append(total)
  return out


def conjugated_apply(G: GreenOperator, f: ComplexField) -> ComplexField:
  """
  (-Delta - 2 zeta.grad)^m G f.

  Chart terms return (i t)^e F^-1[h_e]; the operator acts on them through
  P((i t)^e h) = sum_k C(e,k) (i t)^(e-k) F^-1[(D^k p^m) h^], so no
  polynomially weighted field is ever transformed.
  """
  f = G._prepare(f)
  out = apply_conjugated_op(apply_multiplier(f, G.multiplier_data), G.zeta, G.m).data
  if G.chart_terms:
    grid = G.grid
    p = symbol_multiplier(grid, G.zeta)
    xi_c = G.zeta.to_canonical(grid.frequencies())
    for term in G.chart_terms:
      c = xi_c[..., term.j - 1] - (G.zeta.s if term.j == 2 else 0.0)
      t = term.coordinate(grid)
      accumulated = term.accumulate(f)
      derivatives = _symbol_power_derivatives(p, c, G.m, max(accumulated))
      for e, data in accumulated.items():
        for k in range(e + 1):
          part = fft_inverse(ComplexField(grid, derivatives[k] * data, "fourier")).data
          out = out + math.comb(e, k) * (1j * t) ** (e - k) * part
  return f.like(out)


def verify_fundamental(G: GreenOperator, f: ComplexField) -> float:
  """||(-Delta - 2 zeta.grad)^m G f - f||_2 / ||f||_2 (0 for f = 0)"""
  f = G._prepare(f)
  size = l2_norm(f)
  if size == 0:
    return 0.0
  residual = conjugated_apply(G, f)
  return l2_norm(residual.like(residual.data - f.data)) / size


@dataclass
class DecayProbe:
  sigma: float
  m: int
  rows: list[tuple[float, float]]
  slope: float
  passed: bool


def probe_weighted_decay(
  operators: Sequence[GreenOperator], f: ComplexField, sigma: float
) -> DecayProbe:
  """
  Weighted L2_sigma norms of G f across |zeta| and their log-log slope.

  Contract: slope <= -m + 0.25.

  Raises:
      InvalidSigma: If sigma lies outside (-m, 1 - m)
  """
  if not operators:
    raise ContractViolation("No operators to probe", "green_operator")
  m = operators[0].m
  if not -m < sigma < 1 - m:
    raise InvalidSigma(f"sigma={sigma} outside the window ({-m}, {1 - m})")
  spec = WeightedNormSpec(sigma=sigma, p=2.0)
  rows = []
  for G in operators:
    rows.append((G.zeta.s, norm(G.apply(f), spec)))
    logger.debug(f"s={G.zeta.s:.4g}: ||Gf||_(L2,{sigma}) = {rows[-1][1]:.6e}")
  log_s = np.log([r[0] for r in rows])
  log_v = np.log([r[1] for r in rows])
  slope = float(np.polyfit(log_s, log_v, 1)[0]) if len(rows) > 1 else math.nan
  passed = bool(slope <= -m + 0.25)
  logger.info(f"Weighted decay slope {slope:.4f} (contract <= {-m + 0.25})")
  return DecayProbe(sigma=sigma, m=m, rows=rows, slope=slope, passed=passed)


def lp_exponents(n: int, m: int) -> tuple[float, float]:
  """(2n/(n+2m), 2n/(n-2m))"""
  if not n > 2 * m:
    raise InvalidExponent(f"Needs n > 2m, got n={n}, m={m}", source="green_operator")
  return 2.0 * n / (n + 2 * m), 2.0 * n / (n - 2 * m)


@dataclass
class LpProbe:
  p: float
  q: float
  rows: list[tuple[float, float]]
  spread: float
  passed: bool


FieldSource = ComplexField | Callable[[GridSpec], ComplexField]


def probe_lp_bound(operators: Sequence[GreenOperator], f: FieldSource) -> LpProbe:
  """
  Ratios ||G f||_q / ||f||_p across |zeta|; contract max/min <= 3.

  `f` is either one field shared by all operators or a factory producing the
  test field for each operator's grid. On a dilation-matched family the
  ratios coincide by scaling covariance, so that use checks the scaling of
  the assembled operators; probe_lp_fixed_field bounds the ratio itself.
  """
  if not operators:
    raise ContractViolation("No operators to probe", "green_operator")
  first = operators[0]
  p, q = lp_exponents(first.grid.n, first.m)
  rows = []
  for G in operators:
    field_in = f(G.grid) if callable(f) else f
    denominator = lp_norm(G._prepare(field_in), p)
    if denominator == 0:
      logger.warning(f"Zero test field at s={G.zeta.s:.4g}; ratio skipped")
      rows.append((G.zeta.s, math.nan))
      continue
    rows.append((G.zeta.s, lp_norm(G.apply(field_in), q) / denominator))
  finite = [r for _, r in rows if math.isfinite(r)]
  spread = max(finite) / min(finite) if finite else math.nan
  passed = bool(finite) and spread <= 3.0
  logger.info(f"L^{p:.4g} -> L^{q:.4g} ratio spread {spread:.4f}")
  return LpProbe(p=p, q=q, rows=rows, spread=spread, passed=passed)


@dataclass
class FixedFieldLpProbe:
  """||G f||_q / ||f||_p for one field across |zeta|, against the free resolvent"""

  p: float
  q: float
  rows: list[tuple[float, float]]
  reference: float
  growth: float
  peak: float
  passed: bool


def free_resolvent_ratio(f: ComplexField, m: int) -> float:
  """||(-Delta)^-m f||_q / ||f||_p, sampled half a cell off xi = 0"""
  grid = f.grid if f.grid.offset_axis is not None else f.grid.with_offset(0)
  field_in = f.on_grid(grid)
  p, q = lp_exponents(grid.n, m)
  denominator = lp_norm(field_in, p)
  if denominator == 0:
    return math.nan
  out = apply_multiplier(field_in, 1.0 / grid.frequency_radius_squared() ** m)
  return lp_norm(out, q) / denominator


def probe_lp_fixed_field(
  operators: Sequence[GreenOperator], f: ComplexField, reference_factor: float = 3.0
) -> FixedFieldLpProbe:
  """
  Ratios ||G f||_q / ||f||_p for a fixed field across |zeta|.

  Contract: no growth (max/first <= 3) and every ratio within
  reference_factor times the ratio of (-Delta)^-m, the zeta -> 0 member of
  the family, on the same field.
  """
  if not operators:
    raise ContractViolation("No operators to probe", "green_operator")
  first = operators[0]
  p, q = lp_exponents(first.grid.n, first.m)
  denominator = lp_norm(first._prepare(f), p)
  if denominator == 0:
    logger.warning("Zero test field; fixed-field L^p probe skipped")
    return FixedFieldLpProbe(p, q, [], math.nan, math.nan, math.nan, False)
  rows = [(G.zeta.s, lp_norm(G.apply(f), q) / denominator) for G in operators]
  reference = free_resolvent_ratio(first._prepare(f), first.m)
  ratios = [r for _, r in rows]
  growth = max(ratios) / ratios[0] if ratios[0] > 0 else math.inf
  peak = max(ratios)
  passed = bool(
    all(math.isfinite(r) for r in ratios)
    and growth <= 3.0
    and peak <= reference_factor * reference
  )
  logger.info(
    f"Fixed-field L^{p:.4g} -> L^{q:.4g}: peak ratio {peak:.4e} "
    f"(free resolvent {reference:.4e}), growth {growth:.4f}"
  )
  return FixedFieldLpProbe(
    p=p, q=q, rows=rows, reference=reference, growth=growth, peak=peak, passed=passed
  )


def dilation_matched_operators(
  direction: np.ndarray,
  s_list: Sequence[float],
  base_grid: GridSpec,
  m: int,
  s_ref: float,
  backend: str = "chart",
  interpolation_order: int = 3,
  allow_unsafe: bool = False,
) -> list[GreenOperator]:
  """Operators at zeta = s * direction on grids with half-width scaled by s_ref/s"""
  unit = np.asarray(direction, dtype=np.complex128)
  unit = unit / (np.linalg.norm(unit) / math.sqrt(2.0))

  def build(s: float) -> GreenOperator:
    grid = GridSpec(
      n=base_grid.n,
      points_per_axis=base_grid.points_per_axis,
      half_width=base_grid.half_width * s_ref / s,
      m=base_grid.m,
      offset_axis=base_grid.offset_axis,
    )
    return assemble(
      canonicalize(s * unit), m, grid, backend, interpolation_order, allow_unsafe
    )

  return parallel_map(build, list(s_list))


def random_test_functions(count: int, seed: int) -> list[GaussianTestFunction]:
  """Gaussian test functions with random centres and widths"""
  rng = np.random.default_rng(seed)
  out = []
  for _ in range(count):
    center = tuple(float(c) for c in rng.uniform(-1.5, 1.5, size=2))
    width = float(rng.uniform(0.3, 0.8))
    out.append(GaussianTestFunction(center=center, width=width))
  return out


def verify_chart_kernel(
  m: int,
  j: int,
  test_functions: Sequence[ChartTestFunction],
  s: float = 1.0,
) -> float:
  """
  Max relative error of <E, s^m (eta_j + i eta_1)^m phi> = integral phi.

  Zero test functions contribute zero error.
  """
  if m < 1:
    raise ContractViolation(f"Operator order must be >= 1, got {m}", "green_operator")
  kernel = ChartKernel(j=j, sign=+1, m=m, s=s)
  worst = 0.0
  for phi in test_functions:
    expected = phi.integral()
    got = kernel.action(SymbolWeightedTestFunction(base=phi, m=m, s=s))
    if expected == 0 and got == 0:
      continue
    error = abs(got - expected) / max(abs(expected), 1e-300)
    worst = max(worst, error)
  logger.info(f"Chart kernel identity (m={m}, j={j}): max relative error {worst:.3e}")
  return worst


def check_xzeta_preservation(G: GreenOperator, f: ComplexField, radius: float) -> float:
  """
  Leakage of G f into a neighbourhood of Sigma when f^ vanishes there.

  f^ is zeroed where d(xi, Sigma) < radius; the returned value is
  max |w^| on d < radius / 2 relative to max |w^|.
  """
  f = G._prepare(f)
  xi_c = G.zeta.to_canonical(G.grid.frequencies().reshape(-1, G.grid.n))
  dist = np.asarray(dist_to_char_set(G.zeta, xi_c)).reshape(G.grid.shape)
  spectrum = fft_forward(f)
  cleaned = fft_inverse(spectrum.like(np.where(dist < radius, 0.0, spectrum.data)))
  w_hat = fft_forward(G.apply(cleaned))
  peak = float(np.max(np.abs(w_hat.data)))
  if peak == 0:
    return 0.0
  inside = dist < radius / 2
  if not np.any(inside):
    return 0.0
  return float(np.max(np.abs(w_hat.data[inside]))) / peak
