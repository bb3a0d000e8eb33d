"""
Isotropic complex frequencies, the conjugated symbol and its characteristic set

In canonical coordinates zeta = s e_1 - i s e_2 with s = |zeta|/sqrt(2), and

    p_zeta(xi) = |xi - s e_2|^2 - s^2 - 2 i s xi_1,

which vanishes on the codimension-2 sphere
Sigma = {xi_1 = 0, |xi - s e_2| = s}. This module builds the open cover of a
neighbourhood of Sigma, a smooth partition of unity subordinate to it, and
the charts in which p_zeta becomes s (eta_j + i eta_1).

Axis labels in the public API follow the mathematical 1-based convention
(j = 2..n); array indices are 0-based (axis j lives at index j - 1).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from polycgo.exceptions import InvariantFailure, NotIsotropic, OutOfChart, ZeroVector

logger = logging.getLogger(__name__)

ISOTROPY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ZetaVector:
  """A complex frequency with zeta.zeta = 0 and its canonical rotation"""

  raw: np.ndarray
  s: float
  rotation: np.ndarray = field(repr=False)

  @property
  def n(self) -> int:
    return self.raw.size

  @property
  def magnitude(self) -> float:
    return math.sqrt(2.0) * self.s

  def canonical(self) -> np.ndarray:
    """s e_1 - i s e_2"""
    out = np.zeros(self.n, dtype=np.complex128)
    out[0] = self.s
    out[1] = -1j * self.s
    return out

  def to_canonical(self, xi: np.ndarray) -> np.ndarray:
    """Rotate frequencies (..., n) into the canonical frame"""
    return np.asarray(xi, dtype=float) @ self.rotation.T

  def from_canonical(self, xi_c: np.ndarray) -> np.ndarray:
    return np.asarray(xi_c, dtype=float) @ self.rotation


def complete_orthonormal(rows: Sequence[np.ndarray], n: int) -> np.ndarray:
  """
  Complete orthonormal rows to an n x n orthogonal matrix.

  Candidates e_1, e_2, ... are tried in index order and kept after
  Gram-Schmidt whenever they add a new direction, so the result is
  deterministic.
  """
  basis = [np.asarray(r, dtype=float) / np.linalg.norm(r) for r in rows]
  for k in range(n):
    if len(basis) == n:
      break
    candidate = np.zeros(n)
    candidate[k] = 1.0
    for b in basis:
      candidate = candidate - np.dot(candidate, b) * b
    size = np.linalg.norm(candidate)
    if size > 1e-8:
      basis.append(candidate / size)
  return np.vstack(basis)


def canonicalize(zeta_raw: Sequence[complex], tol: float = ISOTROPY_TOL) -> ZetaVector:
  """
  Build the canonical data of an isotropic complex vector.

  Args:
      zeta_raw: complex vector of length n
      tol: relative tolerance on |zeta.zeta| / |zeta|^2

  Returns:
      ZetaVector whose rotation maps zeta_raw to s e_1 - i s e_2

  Raises:
      ZeroVector: If |zeta| = 0
      NotIsotropic: If zeta.zeta differs from 0 beyond tolerance
  """
  raw = np.asarray(zeta_raw, dtype=np.complex128).reshape(-1)
  size2 = float(np.sum(np.abs(raw) ** 2))
  if size2 == 0.0:
    raise ZeroVector("zeta must be nonzero")
  square = complex(np.sum(raw * raw))
  if abs(square) > tol * size2:
    raise NotIsotropic(
      f"zeta.zeta = {square:.3e} is not zero (|zeta|^2 = {size2:.3e})"
    )
  s = math.sqrt(size2 / 2.0)
  first = raw.real / np.linalg.norm(raw.real)
  second = -raw.imag - np.dot(-raw.imag, first) * first
  rotation = complete_orthonormal([first, second], raw.size)
  logger.debug(f"Canonicalized zeta with s={s:.6g}")
  return ZetaVector(raw=raw, s=s, rotation=rotation)


def _maybe_scalar(values: np.ndarray, xi: np.ndarray):
  return values.item() if np.ndim(xi) == 1 else values


def eval_symbol(zeta: ZetaVector, xi: np.ndarray):
  """p_zeta at canonical-frame frequencies (..., n)"""
  xi = np.asarray(xi, dtype=float)
  s = zeta.s
  shifted = xi.copy()
  shifted[..., 1] -= s
  values = np.sum(shifted**2, axis=-1) - s**2 - 2j * s * xi[..., 0]
  return _maybe_scalar(np.asarray(values), xi)


def dist_to_char_set(zeta: ZetaVector | float, xi: np.ndarray):
  """Exact Euclidean distance from canonical-frame xi to Sigma_zeta"""
  s = zeta.s if isinstance(zeta, ZetaVector) else float(zeta)
  xi = np.asarray(xi, dtype=float)
  rest = xi[..., 1:].copy()
  rest[..., 0] -= s
  radial = np.sqrt(np.sum(rest**2, axis=-1)) - s
  values = np.sqrt(xi[..., 0] ** 2 + radial**2)
  return _maybe_scalar(np.asarray(values), xi)


@dataclass
class SymbolBoundsReport:
  """Outcome of check_symbol_bounds"""

  far_samples: int
  near_samples: int
  skipped_on_sigma: int
  far_ratio_range: Tuple[float, float]
  near_ratio_range: Tuple[float, float]
  bracket: Tuple[float, float]
  M: float


def check_symbol_bounds(
  zeta: ZetaVector, samples: np.ndarray, M: float = 4.0
) -> SymbolBoundsReport:
  """
  Check |p| ~ |xi|^2 far from Sigma and |p| ~ s d(xi, Sigma) near it.

  For |xi| >= 4|zeta| the hard bounds |xi|^2/2 <= |p| <= 3|xi|^2/2 are
  asserted. For |xi| <= M|zeta| the ratio |p|/(s d) must lie in
  [1/2, M sqrt(2) + 4].

  Raises:
      InvariantFailure: naming the offending sample
  """
  xi = np.atleast_2d(np.asarray(samples, dtype=float))
  radius = np.linalg.norm(xi, axis=-1)
  p_abs = np.abs(np.atleast_1d(eval_symbol(zeta, xi)))
  far = radius >= 4.0 * zeta.magnitude
  far_ratio = p_abs[far] / radius[far] ** 2 if np.any(far) else np.array([])
  bad = np.flatnonzero((far_ratio < 0.5 - 1e-12) | (far_ratio > 1.5 + 1e-12))
  if bad.size:
    culprit = xi[far][bad[0]]
    raise InvariantFailure(
      "symbol_far_bounds",
      f"|p|/|xi|^2 = {far_ratio[bad[0]]:.6g} at xi = {culprit.tolist()}",
      "symbol_geometry",
    )

  bracket = (0.5, M * math.sqrt(2.0) + 4.0)
  near = radius <= M * zeta.magnitude
  scale = zeta.s * np.atleast_1d(dist_to_char_set(zeta, xi))
  degenerate = near & (scale <= 1e-12 * zeta.s**2)
  usable = near & ~degenerate
  near_ratio = p_abs[usable] / scale[usable] if np.any(usable) else np.array([])
  if near_ratio.size:
    low, high = float(near_ratio.min()), float(near_ratio.max())
    if low < bracket[0] - 1e-12 or high > bracket[1] + 1e-12:
      worst = int(np.argmin(near_ratio)) if low < bracket[0] else int(np.argmax(near_ratio))
      raise InvariantFailure(
        "symbol_near_bracket",
        f"|p|/(s d) = {near_ratio[worst]:.6g} outside {bracket} at "
        f"xi = {xi[usable][worst].tolist()}",
        "symbol_geometry",
      )
  else:
    low, high = math.nan, math.nan

  return SymbolBoundsReport(
    far_samples=int(far.sum()),
    near_samples=int(usable.sum()),
    skipped_on_sigma=int(degenerate.sum()),
    far_ratio_range=(
      (float(far_ratio.min()), float(far_ratio.max())) if far_ratio.size else (math.nan, math.nan)
    ),
    near_ratio_range=(low, high),
    bracket=bracket,
    M=M,
  )


def smoothstep(t: np.ndarray) -> np.ndarray:
  """C-infinity step exp(-1/t) / (exp(-1/t) + exp(-1/(1-t))) clamped to [0, 1]"""
  t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
  rise = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
  fall = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
  return rise / (rise + fall)


def _rise(x: np.ndarray, start: float, width: float) -> np.ndarray:
  return smoothstep((x - start) / width)


PieceKey = Tuple[int, int]


@dataclass(frozen=True)
class PartitionOfUnity:
  """
  chi_1(s) plus chi_{j,+-}(s), j = 2..n, summing to one.

  Pieces are built at s = 1 from C-infinity steps and evaluated at scale s
  through chi(s)(xi) = chi(1)(xi/s). chi_1 rises over 1/(2n) <= d <= 1/2,
  the chart pieces rise over 1/(2n) <= |xi_j - delta_j2| <= 1/sqrt(n-1) and
  drop out over 1/2 <= d <= 9/10. The transitions are O(s) wide so that the
  derivatives taken by the chart backend stay resolved on the frequency grid.
  Keys are (1, 0) for chi_1 and (j, +1) / (j, -1).
  """

  s: float
  n: int

  @property
  def keys(self) -> list[PieceKey]:
    out: list[PieceKey] = [(1, 0)]
    for j in range(2, self.n + 1):
      out.extend([(j, +1), (j, -1)])
    return out

  def pieces(self, xi_c: np.ndarray) -> Dict[PieceKey, np.ndarray]:
    """All pieces at canonical-frame frequencies (..., n)"""
    unit = np.asarray(xi_c, dtype=float) / self.s
    start = 1.0 / (2 * self.n)
    reach = 1.0 / math.sqrt(self.n - 1)
    dist = np.asarray(dist_to_char_set(1.0, unit))
    raw: Dict[PieceKey, np.ndarray] = {(1, 0): _rise(dist, start, 0.5 - start)}
    inner = 1.0 - _rise(dist, 0.5, 0.4)
    for j in range(2, self.n + 1):
      coord = unit[..., j - 1] - (1.0 if j == 2 else 0.0)
      bump = _rise(np.abs(coord), start, reach - start) * inner
      raw[(j, +1)] = np.where(coord > 0, bump, 0.0)
      raw[(j, -1)] = np.where(coord < 0, bump, 0.0)
    total = sum(raw.values())
    return {key: value / total for key, value in raw.items()}

  def chi_one(self, xi_c: np.ndarray) -> np.ndarray:
    return self.pieces(xi_c)[(1, 0)]

  def chi(self, j: int, sign: int, xi_c: np.ndarray) -> np.ndarray:
    return self.pieces(xi_c)[(j, sign)]


def build_partition(zeta: ZetaVector, n: int | None = None) -> PartitionOfUnity:
  dim = zeta.n if n is None else n
  if dim < 2:
    raise OutOfChart(f"Partition needs n >= 2, got {dim}")
  return PartitionOfUnity(s=zeta.s, n=dim)


@dataclass(frozen=True)
class Diffeo:
  """
  Chart of V_{j,+-}(s) straightening Sigma.

  eta_1 = -2 xi_1, eta_j = (|xi - s e_2|^2 - s^2)/s, eta_l = xi_l otherwise.
  """

  j: int
  sign: int
  s: float
  n: int

  def __post_init__(self):
    if not 2 <= self.j <= self.n or self.sign not in (-1, 1):
      raise OutOfChart(f"No chart ({self.j}, {self.sign}) in dimension {self.n}")

  @property
  def index(self) -> int:
    return self.j - 1

  def _centered(self, xi_c: np.ndarray) -> np.ndarray:
    shifted = np.array(xi_c, dtype=float, copy=True)
    shifted[..., 1] -= self.s
    return shifted

  def chart_coordinate(self, xi_c: np.ndarray) -> np.ndarray:
    """xi_j - s delta_{j2}; its sign selects the chart"""
    return self._centered(xi_c)[..., self.index]

  def in_domain(self, xi_c: np.ndarray) -> np.ndarray:
    """Membership in V_{j,+-}(s)"""
    c = self.chart_coordinate(xi_c)
    dist = np.asarray(dist_to_char_set(self.s, xi_c))
    return (self.sign * c > self.s / (2 * self.n)) & (dist < self.s)

  def forward(self, xi_c: np.ndarray, check: bool = True) -> np.ndarray:
    xi_c = np.asarray(xi_c, dtype=float)
    if check and not np.all(self.in_domain(xi_c)):
      raise OutOfChart(f"Point outside V_({self.j},{self.sign:+d})(s={self.s:.6g})")
    centered = self._centered(xi_c)
    eta = np.array(xi_c, copy=True)
    eta[..., 0] = -2.0 * xi_c[..., 0]
    eta[..., self.index] = (np.sum(centered**2, axis=-1) - self.s**2) / self.s
    return eta

  def inverse(self, eta: np.ndarray, check: bool = True) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    xi = np.array(eta, copy=True)
    xi[..., 0] = -0.5 * eta[..., 0]
    others = self._centered(xi)
    others[..., 0] = 0.0
    others[..., self.index] = 0.0
    radicand = (
      self.s * eta[..., self.index]
      + self.s**2
      - xi[..., 0] ** 2
      - np.sum(others**2, axis=-1)
    )
    floor = (self.s / (2 * self.n)) ** 2
    if check and np.any(radicand <= floor):
      raise OutOfChart(
        f"eta outside the image of chart ({self.j},{self.sign:+d}): branch ambiguous"
      )
    c = self.sign * np.sqrt(np.clip(radicand, 0.0, None))
    xi[..., self.index] = c + (self.s if self.j == 2 else 0.0)
    return xi

  def jacobian(self, xi_c: np.ndarray) -> np.ndarray:
    """|det d eta / d xi| = 4 |xi_j - s delta_{j2}| / s"""
    return 4.0 * np.abs(self.chart_coordinate(xi_c)) / self.s


def charts(zeta: ZetaVector) -> list[Diffeo]:
  return [
    Diffeo(j=j, sign=sign, s=zeta.s, n=zeta.n)
    for j in range(2, zeta.n + 1)
    for sign in (+1, -1)
  ]


@dataclass
class IntegrabilityReport:
  """Tube integrals of |p|^-q around a point of Sigma for shrinking radii"""

  exponent: float
  eps: list[float]
  integrals: list[float]
  increment_ratio: float
  estimated_margin: float
  locally_integrable: bool


def probe_symbol_integrability(
  zeta: ZetaVector,
  exponent: float,
  eps_list: Sequence[float] | None = None,
  nodes: int = 24,
) -> IntegrabilityReport:
  """
  Numerical probe of whether |p_zeta|^-q is locally integrable near Sigma.

  The tube piece {eps < rho < s/8} around the point 2 s e_2 of Sigma is
  parametrized through the chart (2, +): there p = s (eta_2 + i eta_1) and
  d xi = |det d eta/d xi|^-1 d eta. For halving eps the increments of the
  integral shrink by 2^(q-2); a non-shrinking increment means divergence.
  """
  s = zeta.s
  n = zeta.n
  chart = Diffeo(j=2, sign=+1, s=s, n=n)
  rho_max = s / 8.0
  eps_values = list(eps_list) if eps_list is not None else [rho_max * 2.0**-k for k in range(2, 9)]
  gl_x, gl_w = np.polynomial.legendre.leggauss(nodes)
  theta = 2 * math.pi * np.arange(4 * nodes) / (4 * nodes)
  side = rho_max
  other_x, other_w = np.polynomial.legendre.leggauss(max(4, nodes // 3))

  def shell(lo: float, hi: float) -> float:
    # Gauss-Legendre in log(rho) resolves the rho^(1-q) profile on each shell
    t = 0.5 * (np.log(hi) - np.log(lo)) * gl_x + 0.5 * (np.log(hi) + np.log(lo))
    rho = np.exp(t)
    w_rho = 0.5 * (np.log(hi) - np.log(lo)) * gl_w * rho
    total = 0.0
    extra = n - 2
    grids = np.meshgrid(*([other_x * side] * extra), indexing="ij") if extra else []
    weights = np.ones(1)
    if extra:
      weights = np.prod(np.meshgrid(*([other_w * side] * extra), indexing="ij"), axis=0).ravel()
    tail = np.stack([g.ravel() for g in grids], axis=-1) if extra else np.zeros((1, 0))
    for r, wr in zip(rho, w_rho):
      eta = np.zeros((theta.size, tail.shape[0], n))
      eta[..., 1] = (r * np.cos(theta))[:, None]
      eta[..., 0] = (r * np.sin(theta))[:, None]
      eta[..., 2:] = tail[None, :, :]
      xi = chart.inverse(eta.reshape(-1, n), check=False)
      jac = chart.jacobian(xi).reshape(theta.size, -1)
      integrand = (s * r) ** (-exponent) * r / jac
      total += wr * (2 * math.pi / theta.size) * float(np.sum(integrand * weights[None, :]))
    return total

  integrals = []
  running = 0.0
  ordered = sorted(eps_values, reverse=True)
  previous = rho_max
  increments = []
  for eps in ordered:
    piece = shell(eps, previous)
    increments.append(piece)
    running += piece
    integrals.append(running)
    previous = eps
  ratio = increments[-1] / increments[-2] if len(increments) > 1 and increments[-2] > 0 else math.nan
  step = ordered[-2] / ordered[-1] if len(ordered) > 1 else 2.0
  margin = -math.log(ratio) / math.log(step) if ratio > 0 else math.inf
  report = IntegrabilityReport(
    exponent=exponent,
    eps=ordered,
    integrals=integrals,
    increment_ratio=ratio,
    estimated_margin=margin,
    locally_integrable=bool(margin > 0.025),
  )
  logger.info(
    f"|p|^-{exponent:g}: increment ratio {ratio:.4f}, margin {margin:.4f}, "
    f"integrable={report.locally_integrable}"
  )
  return report
