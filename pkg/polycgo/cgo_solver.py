"""
Complex geometric optics solutions u = e^(x.zeta)(1 + r) of ((-Delta)^m + q) u = 0

With q = d1 d2, d1 = |q|^(1/2), d2 = q/|q|^(1/2), the remainder is r = G(d1 v)
where v solves (I + d2 G d1) v = -d2. The solver iterates the Neumann series
v <- -d2 - d2 G(d1 v) and monitors its contraction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from polycgo.exceptions import (
  ContractViolation,
  GridMismatch,
  InvalidPotential,
  NumericalFailure,
  SeriesDiverged,
)
from polycgo.field_core import (
  ComplexField,
  GridSpec,
  boundary_margin_ok,
  l2_norm,
  lp_norm,
  spectral_derivative,
)
from polycgo.green_operator import Backend, GreenOperator, assemble, conjugated_apply
from polycgo.parallel import parallel_map
from polycgo.settings import RuntimeSettings
from polycgo.symbol_geometry import ZetaVector, canonicalize

logger = logging.getLogger(__name__)

MARGIN_CELLS = 4
DIVERGENCE_WINDOW = 5


@dataclass(frozen=True, eq=False)
class TruncationScheme:
  """d_(j,tau) = d_j where |d_j| <= tau, 0 elsewhere"""

  tau: float
  d1: ComplexField
  d2: ComplexField


@dataclass(frozen=True, eq=False)
class Potential:
  """Compactly supported q with its factorization q = d1 d2"""

  q: ComplexField
  d1: ComplexField = field(init=False, repr=False)
  d2: ComplexField = field(init=False, repr=False)

  def __post_init__(self):
    q = self.q
    if q.representation != "physical":
      raise InvalidPotential("Potential must be given in physical representation")
    if not np.all(np.isfinite(q.data)):
      raise InvalidPotential("Potential has non-finite samples")
    if not boundary_margin_ok(q, cells=MARGIN_CELLS):
      raise InvalidPotential(
        f"Potential support must keep a {MARGIN_CELLS}-cell margin from the box boundary"
      )
    magnitude = np.abs(q.data)
    root = np.sqrt(magnitude)
    d2 = np.zeros(q.grid.shape, dtype=np.complex128)
    np.divide(q.data, root, out=d2, where=root > 0)
    object.__setattr__(self, "d1", q.like(root))
    object.__setattr__(self, "d2", q.like(d2))

  @property
  def grid(self) -> GridSpec:
    return self.q.grid

  def is_zero(self) -> bool:
    return self.q.max_abs() == 0

  def scaled(self, factor: complex) -> "Potential":
    return Potential(self.q.like(factor * self.q.data))

  def conjugate(self) -> "Potential":
    return Potential(self.q.like(np.conj(self.q.data)))

  def truncate(self, tau: float) -> TruncationScheme:
    if not tau > 0:
      raise ContractViolation(f"Truncation threshold must be positive, got {tau}", "cgo_solver")
    keep = np.abs(self.d1.data) <= tau
    return TruncationScheme(
      tau=tau,
      d1=self.d1.like(np.where(keep, self.d1.data, 0.0)),
      d2=self.d2.like(np.where(keep, self.d2.data, 0.0)),
    )

  def default_tau(self, m: int, fraction: float = 0.05) -> float:
    """
    Smallest tau with ||d - d_tau||_(n/m) <= fraction ||d||_(n/m).

    |d1| = |d2| so one threshold serves both factors.
    """
    exponent = self.grid.n / m
    values = np.sort(np.abs(self.d1.data).ravel())[::-1]
    if values.size == 0 or values[0] == 0:
      return 1.0
    powered = values**exponent
    total = float(np.sum(powered))
    tail = np.concatenate([[0.0], np.cumsum(powered)[:-1]])
    allowed = np.nonzero(tail <= fraction**exponent * total)[0]
    return float(values[allowed[-1]])


@dataclass(eq=False)
class CGOSolution:
  zeta: ZetaVector
  m: int
  r: ComplexField
  v: ComplexField
  iterations: int
  update_history: list[float]
  contraction_factor: float
  equation_residual: float
  fixed_point_residual: float
  norms: dict[str, float]
  compact_half_width: float
  converged: bool
  small_s: bool

  def exponential(self) -> np.ndarray:
    """e^(x.zeta) on the grid nodes"""
    grid = self.r.grid
    phase = sum(z * x for z, x in zip(self.zeta.raw, grid.physical_mesh()))
    return np.broadcast_to(np.exp(phase), grid.shape)

  def u(self, points: Optional[np.ndarray] = None, method: str = "cubic") -> np.ndarray:
    """u on the grid, or at arbitrary points with 1 + r interpolated"""
    if points is None:
      return self.exponential() * (1.0 + self.r.data)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grid = self.r.grid
    axes = [grid.axis()] * grid.n
    real = RegularGridInterpolator(axes, self.r.data.real, method=method)
    imag = RegularGridInterpolator(axes, self.r.data.imag, method=method)
    remainder = real(points) + 1j * imag(points)
    return np.exp(points @ self.zeta.raw) * (1.0 + remainder)

  def conjugated_derivative(self, alpha: Sequence[int]) -> ComplexField:
    """(d + zeta)^alpha (1 + r); d^alpha u = e^(x.zeta) times this"""
    grid = self.r.grid
    total = np.zeros(grid.shape, dtype=np.complex128)
    for beta in product(*[range(a + 1) for a in alpha]):
      coefficient = 1.0 + 0j
      for a, b, z in zip(alpha, beta, self.zeta.raw):
        coefficient *= math.comb(a, b) * z ** (a - b)
      if any(beta):
        total = total + coefficient * spectral_derivative(self.r, beta).data
      else:
        total = total + coefficient * (1.0 + self.r.data)
    return self.r.like(total)

  def diagnostics(self) -> dict:
    return {
      "s": self.zeta.s,
      "m": self.m,
      "iterations": self.iterations,
      "contraction_factor": self.contraction_factor,
      "equation_residual": self.equation_residual,
      "fixed_point_residual": self.fixed_point_residual,
      "converged": self.converged,
      "small_s": self.small_s,
      "compact_half_width": self.compact_half_width,
      **self.norms,
    }


def _restrict_to_box(f: ComplexField, half_width: float) -> np.ndarray:
  inside = np.ones(f.grid.shape, dtype=bool)
  for x in f.grid.physical_mesh():
    inside = inside & (np.abs(x) <= half_width)
  return inside


def _contraction(history: Sequence[float]) -> float:
  ratios = [b / a for a, b in zip(history[:-1], history[1:]) if a > 0]
  if not ratios:
    return 0.0
  tail = ratios[-3:]
  return float(np.exp(np.mean(np.log(np.maximum(tail, 1e-300)))))


def _zero_solution(
  q: Potential, zeta: ZetaVector, G: GreenOperator, compact: float, small_s: bool
) -> CGOSolution:
  zero = ComplexField(q.grid, np.zeros(q.grid.shape, dtype=np.complex128))
  norms = {"r_lq": 0.0, "r_l2_compact": 0.0, "v_l2": 0.0, "d2_l2": 0.0}
  return CGOSolution(
    zeta, G.m, zero, zero, 0, [], 0.0, 0.0, 0.0, norms, compact, True, small_s
  )


def build_cgo(
  q: Potential,
  zeta: ZetaVector,
  G: GreenOperator,
  tol: float = 1e-8,
  max_iter: int = 200,
  s_min: float = 2.0,
  compact_fraction: float = 0.5,
) -> CGOSolution:
  """
  Neumann-series construction of the CGO remainder.

  Args:
      q: factorized potential on the operator's nodes
      zeta: isotropic vector matching G.zeta
      G: assembled Green operator
      tol: stop when the relative L2 update falls below tol
      max_iter: iteration cap
      s_min: below this |zeta|/sqrt(2) the regime is flagged
      compact_fraction: K is the central box of this fraction of the half-width

  Raises:
      InvalidExponent: If n <= 2m
      SeriesDiverged: If the update fails to contract for 5 iterations in a row
      NumericalFailure: If the iteration produces non-finite values
  """
  G.grid.require_subcritical(G.m)
  if not np.allclose(zeta.raw, G.zeta.raw):
    raise ContractViolation("Green operator was assembled for a different zeta", "cgo_solver")
  if not q.grid.same_nodes(G.grid):
    raise GridMismatch("Potential and Green operator sample different nodes", "cgo_solver")
  small_s = zeta.s < s_min
  if small_s:
    logger.warning(f"|zeta| scale s={zeta.s:.4g} below s_min={s_min}; series may not contract")
  compact = compact_fraction * q.grid.half_width
  if q.is_zero():
    return _zero_solution(q, zeta, G, compact, small_s)

  d1 = q.d1.data
  d2 = q.d2.data
  d2_norm = l2_norm(q.d2)
  v = -d2
  history: list[float] = []
  streak = 0
  converged = False
  iterations = 0
  for iterations in range(1, max_iter + 1):
    Gv = G.apply(q.q.like(d1 * v)).data
    v_new = -d2 - d2 * Gv
    if not np.all(np.isfinite(v_new)):
      raise NumericalFailure(f"Non-finite iterate at step {iterations}")
    update = l2_norm(q.q.like(v_new - v)) / max(l2_norm(q.q.like(v_new)), 1e-300)
    history.append(update)
    logger.debug(f"CGO iteration {iterations}: relative update {update:.3e}")
    v = v_new
    if len(history) > 1 and history[-1] >= history[-2]:
      streak += 1
      if streak >= DIVERGENCE_WINDOW:
        factor = history[-1] / history[-2]
        raise SeriesDiverged(
          f"Neumann series not contracting at s={zeta.s:.4g} (factor {factor:.3f})",
          factor=factor,
        )
    else:
      streak = 0
    if update < tol:
      converged = True
      break
  if not converged:
    logger.warning(f"CGO iteration hit max_iter={max_iter} with update {history[-1]:.3e}")

  v_field = q.q.like(v)
  r = G.apply(q.q.like(d1 * v))
  if not np.all(np.isfinite(r.data)):
    raise NumericalFailure("Remainder contains non-finite values")

  n, m = q.grid.n, G.m
  p_dual = 2.0 * n / (n + 2 * m)
  q_exp = 2.0 * n / (n - 2 * m)
  conj = conjugated_apply(G, q.q.like(d1 * v))
  residual_field = conj.like(conj.data + q.q.data * (1.0 + r.data))
  equation_residual = lp_norm(residual_field, p_dual) / lp_norm(q.q, p_dual)
  fixed = v + d2 + d2 * G.apply(q.q.like(d1 * v)).data
  fixed_point_residual = l2_norm(q.q.like(fixed)) / d2_norm

  inside = _restrict_to_box(r, compact)
  norms = {
    "r_lq": lp_norm(r, q_exp),
    "r_l2_compact": float(np.sqrt(np.sum(np.abs(r.data[inside]) ** 2) * q.grid.cell_volume)),
    "v_l2": l2_norm(v_field),
    "d2_l2": d2_norm,
  }
  contraction = _contraction(history)
  logger.info(
    f"CGO at s={zeta.s:.4g}: {iterations} iterations, contraction {contraction:.3f}, "
    f"residual {equation_residual:.2e}"
  )
  return CGOSolution(
    zeta=zeta,
    m=m,
    r=r,
    v=v_field,
    iterations=iterations,
    update_history=history,
    contraction_factor=contraction,
    equation_residual=equation_residual,
    fixed_point_residual=fixed_point_residual,
    norms=norms,
    compact_half_width=compact,
    converged=converged,
    small_s=small_s,
  )


def _operator_norm(
  left: np.ndarray,
  right: np.ndarray,
  G: GreenOperator,
  iterations: int,
  seed: int,
) -> float:
  """Power iteration on A*A for A = left . G . right"""
  if not np.any(left) or not np.any(right):
    return 0.0
  grid = G.grid
  rng = np.random.default_rng(seed)
  x = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
  x = x * (right != 0)
  template = ComplexField(grid, np.zeros(grid.shape, dtype=np.complex128))
  estimate = 0.0
  for _ in range(iterations):
    x = x / np.linalg.norm(x)
    ax = left * G.apply(template.like(right * x)).data
    aax = np.conj(right) * G.apply_adjoint(template.like(np.conj(left) * ax)).data
    size = np.linalg.norm(aax)
    if size == 0:
      return 0.0
    estimate = math.sqrt(size)
    x = aax
  return estimate


@dataclass
class OperatorNormProbe:
  m: int
  rows: list[tuple[float, float]]
  slope: float
  decreasing: bool
  passed: bool


def probe_operator_norm(
  q: Potential,
  operators: Sequence[GreenOperator],
  iterations: int = 30,
  seed: Optional[int] = None,
) -> OperatorNormProbe:
  """
  ||d2 G d1||_(L2 -> L2) per operator by power iteration.

  Contract: decreasing in s with log-log slope <= -m + 0.25.
  """
  if not operators:
    raise ContractViolation("No operators to probe", "cgo_solver")
  seed = RuntimeSettings.SEED if seed is None else seed
  m = operators[0].m
  norms = parallel_map(
    lambda G: _operator_norm(q.d2.data, q.d1.data, G, iterations, seed), list(operators)
  )
  rows = [(G.zeta.s, value) for G, value in zip(operators, norms)]
  rows.sort()
  values = [v for _, v in rows]
  decreasing = all(b < a for a, b in zip(values[:-1], values[1:]))
  if all(v > 0 for v in values) and len(rows) > 1:
    slope = float(np.polyfit(np.log([s for s, _ in rows]), np.log(values), 1)[0])
  else:
    slope = math.nan
  passed = decreasing and slope <= -m + 0.25
  logger.info(f"||d2 G d1|| slope {slope:.4f} over {len(rows)} values of s")
  return OperatorNormProbe(m=m, rows=rows, slope=slope, decreasing=decreasing, passed=passed)


def truncation_diagnostics(
  q: Potential,
  G: GreenOperator,
  tau: Optional[float] = None,
  iterations: int = 30,
  seed: Optional[int] = None,
) -> dict:
  """Operator norms of the bounded/unbounded split of d2 G d1 at one zeta"""
  seed = RuntimeSettings.SEED if seed is None else seed
  tau = q.default_tau(G.m) if tau is None else tau
  scheme = q.truncate(tau)
  d1, d2 = q.d1.data, q.d2.data
  t1, t2 = scheme.d1.data, scheme.d2.data
  n_exp = q.grid.n / G.m
  return {
    "tau": tau,
    "bounded": _operator_norm(t2, t1, G, iterations, seed),
    "tail_right": _operator_norm(t2, d1 - t1, G, iterations, seed),
    "tail_left": _operator_norm(d2 - t2, d1, G, iterations, seed),
    "full": _operator_norm(d2, d1, G, iterations, seed),
    "sup_bound_without_constant": float(
      np.max(np.abs(t1)) * np.max(np.abs(t2)) / G.zeta.s**G.m
    ),
    "tail_fraction": lp_norm(q.d1.like(d1 - t1), n_exp) / max(lp_norm(q.d1, n_exp), 1e-300),
  }


@dataclass
class RegularityReport:
  box_half_width: float
  seminorm: float
  qu_norm: float
  finite: bool


def _box_integral(values: np.ndarray, grid: GridSpec, inside_axes: list[np.ndarray]) -> float:
  sub = values[np.ix_(*[np.nonzero(mask)[0] for mask in inside_axes])]
  x = grid.axis()
  for mask in reversed(inside_axes):
    sub = trapezoid(sub, x[mask], axis=-1)
  return float(sub)


def check_regularity(
  solution: CGOSolution, box_half_width: float, q: Optional[Potential] = None
) -> RegularityReport:
  """
  H^m seminorm of u on [-b, b]^n and ||q u||_(2n/(n+2m)) over the grid.

  Raises:
      ContractViolation: If the sub-box holds fewer than two nodes per axis
      NumericalFailure: If NaN or overflow is detected
  """
  grid = solution.r.grid
  axis = grid.axis()
  mask = np.abs(axis) <= box_half_width
  if box_half_width <= 0 or np.count_nonzero(mask) < 2:
    raise ContractViolation(f"Sub-box of half-width {box_half_width} is empty", "cgo_solver")
  n, m = grid.n, solution.m
  exponential = solution.exponential()
  total = 0.0
  for alpha in product(range(m + 1), repeat=n):
    if sum(alpha) != m:
      continue
    derivative = exponential * solution.conjugated_derivative(alpha).data
    total += _box_integral(np.abs(derivative) ** 2, grid, [mask] * n)
  seminorm = math.sqrt(total) if total >= 0 else math.nan
  if q is None:
    qu_norm = 0.0
  else:
    u = exponential * (1.0 + solution.r.data)
    qu_norm = lp_norm(q.q.like(q.q.data * u), 2.0 * n / (n + 2 * m))
  finite = math.isfinite(seminorm) and math.isfinite(qu_norm)
  if not finite:
    raise NumericalFailure(f"Regularity check produced non-finite values on [-{box_half_width}, {box_half_width}]^{n}")
  return RegularityReport(box_half_width, seminorm, qu_norm, finite)


@dataclass
class SweepResult:
  rows: list[dict]
  r_lq_growth: float
  r_lq_spread: float
  compact_monotone: bool
  contraction_ok: bool
  passed: bool
  solutions: list[CGOSolution] = field(default_factory=list, repr=False)


def zeta_along(direction: np.ndarray, s: float) -> ZetaVector:
  """Isotropic vector s * direction with direction rescaled to |Re| = 1"""
  unit = np.asarray(direction, dtype=np.complex128)
  unit = unit / (np.linalg.norm(unit) / math.sqrt(2.0))
  return canonicalize(s * unit)


def sweep(
  q: Potential,
  s_list: Sequence[float],
  direction: np.ndarray,
  m: int,
  backend: Backend = "chart",
  interpolation_order: int = 3,
  tol: float = 1e-8,
  max_iter: int = 200,
  s_min: float = 2.0,
  compact_fraction: float = 0.5,
  slack: float = 0.10,
  contraction_from: float = 16.0,
  contraction_limit: float = 0.5,
) -> SweepResult:
  """
  CGO solutions along zeta = s * direction.

  Contracts: ||r||_(2n/(n-2m)) varies by at most a factor 3 across s
  (max/min; max/first is reported as growth), the compact L2 norm does not
  grow by more than `slack` between consecutive s, and the Neumann series
  contracts by at least `contraction_limit` once s >= contraction_from.
  """
  grid = q.grid

  def solve(s: float) -> CGOSolution:
    zeta = zeta_along(direction, s)
    op_grid = grid.avoiding(zeta) if backend == "naive" else grid
    G = assemble(zeta, m, op_grid, backend, interpolation_order)
    return build_cgo(q, zeta, G, tol, max_iter, s_min, compact_fraction)

  solutions = parallel_map(solve, sorted(s_list))
  rows = [sol.diagnostics() for sol in solutions]
  lq = [row["r_lq"] for row in rows]
  compact = [row["r_l2_compact"] for row in rows]
  if lq and min(lq) > 0:
    growth = max(lq) / lq[0]
    spread = max(lq) / min(lq)
  else:
    growth = spread = 0.0
  monotone = all(b <= (1 + slack) * a for a, b in zip(compact[:-1], compact[1:]))
  contraction_ok = all(
    row["contraction_factor"] <= contraction_limit
    for row in rows
    if row["s"] >= contraction_from
  )
  passed = spread <= 3.0 and monotone and contraction_ok
  logger.info(
    f"CGO sweep: r_lq spread {spread:.3f}, growth {growth:.3f}, monotone={monotone}, "
    f"contraction_ok={contraction_ok}"
  )
  return SweepResult(rows, growth, spread, monotone, contraction_ok, passed, solutions)
