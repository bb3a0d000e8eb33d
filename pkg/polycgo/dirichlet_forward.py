"""
Galerkin forward solver for ((-Delta)^m + q) u = 0 on the box [-a, a]^n

The basis is hierarchical and tensor-product. In one dimension it holds
2m boundary polynomials of degree 2m-1 (the k-th x-derivative equals one at
one end, all other derivatives below order m vanish at both ends) and bubbles
(1 - t^2)^m P_k(t), t = x/a. Interior functions are products of bubbles;
lift functions carry at least one boundary factor and span the finite trace
family on which the Dirichlet-to-Neumann map is represented.

Matrix convention: A[i, j] = a(phi_j, phi_i), so a(u, v) = c_v^H A c_u with
combined coefficient vectors ordered interior first, lift second.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import Legendre, Polynomial
from scipy import linalg
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import gmres

from polycgo.exceptions import (
  AssumptionAViolated,
  ContractViolation,
  InvalidExponent,
  InvariantFailure,
  NumericalFailure,
  QuadratureUnderresolved,
)
from polycgo.field_core import ComplexField
from polycgo.parallel import parallel_map

logger = logging.getLogger(__name__)

ASSUMPTION_A_THRESHOLD = 1e-8
DIRECT_SOLVE_LIMIT = 4000
MASS_CONDITION_LIMIT = 1e12

PotentialSource = Callable[[np.ndarray], np.ndarray] | ComplexField | complex | float | None


def _in_x(poly_t: Polynomial, a: float, scale: float = 1.0) -> Polynomial:
  """p(x) = scale * poly_t(x / a)"""
  coef = poly_t.coef * a ** -np.arange(poly_t.coef.size)
  return Polynomial(scale * coef)


def _boundary_polynomials(m: int, a: float) -> list[tuple[tuple, Polynomial]]:
  """Degree 2m-1 polynomials with d^j/dx^j h(side a) = delta_(side) delta_(jk), j < m"""
  size = 2 * m
  rows = []
  for side in (-1.0, 1.0):
    for j in range(m):
      rows.append(
        [math.perm(p, j) * side ** (p - j) if p >= j else 0.0 for p in range(size)]
      )
  system = np.array(rows)
  out = []
  for col, (side, k) in enumerate(product((-1, 1), range(m))):
    rhs = np.zeros(size)
    rhs[col] = 1.0
    poly_t = Polynomial(np.linalg.solve(system, rhs))
    out.append((("boundary", side, k), _in_x(poly_t, a, a**k)))
  return out


def _bubbles(m: int, a: float, count: int) -> list[tuple[tuple, Polynomial]]:
  weight = Polynomial([1.0, 0.0, -1.0]) ** m
  out = []
  for k in range(count):
    legendre = Legendre.basis(k).convert(kind=Polynomial)
    out.append((("bubble", k), _in_x(weight * legendre, a)))
  return out


@dataclass(eq=False)
class GalerkinBasis:
  """
  Hierarchical tensor basis on [-a, a]^n.

  Attributes:
      basis_size: bubbles per axis in the interior span
      trace_size: bubbles per axis allowed in lift functions
      quadrature_points: Gauss-Legendre nodes per axis
  """

  n: int
  m: int
  half_width: float
  basis_size: int
  trace_size: int
  quadrature_points: int
  labels: list[tuple] = field(repr=False)
  polynomials: list[Polynomial] = field(repr=False)
  interior: np.ndarray = field(repr=False)
  lift: np.ndarray = field(repr=False)
  nodes: np.ndarray = field(repr=False)
  weights: np.ndarray = field(repr=False)
  values: list[np.ndarray] = field(repr=False)

  @property
  def interior_size(self) -> int:
    return len(self.interior)

  @property
  def lift_size(self) -> int:
    return len(self.lift)

  @property
  def size(self) -> int:
    return self.interior_size + self.lift_size

  @property
  def indices(self) -> np.ndarray:
    return np.vstack([self.interior, self.lift])

  def gram_1d(self, order: int) -> np.ndarray:
    """integral of d^k phi_i d^k phi_j over [-a, a]"""
    table = self.values[order]
    return (table * self.weights) @ table.T

  def tensor_values(self, rows: np.ndarray, tables: Sequence[np.ndarray]) -> np.ndarray:
    """Products of 1-D tables: out[I, q_1, ..., q_n] flattened to (len(rows), -1)"""
    out = tables[0][rows[:, 0]]
    for a in range(1, self.n):
      out = out[..., None] * tables[a][rows[:, a]].reshape(
        (len(rows),) + (1,) * (out.ndim - 1) + (-1,)
      )
    return out.reshape(len(rows), -1)

  def quadrature_points_nd(self) -> tuple[np.ndarray, np.ndarray]:
    mesh = np.meshgrid(*[self.nodes] * self.n, indexing="ij")
    points = np.stack([x.ravel() for x in mesh], axis=-1)
    w = self.weights
    for _ in range(self.n - 1):
      w = np.multiply.outer(w, self.weights)
    return points, np.asarray(w).ravel()

  def descriptor(self) -> dict:
    return {
      "n": self.n,
      "m": self.m,
      "half_width": self.half_width,
      "basis_size": self.basis_size,
      "trace_size": self.trace_size,
      "quadrature_points": self.quadrature_points,
      "interior_size": self.interior_size,
      "lift_size": self.lift_size,
    }


def build_basis(
  n: int,
  m: int,
  half_width: float = 1.0,
  basis_size: int = 6,
  trace_size: int = 3,
  quadrature_points: Optional[int] = None,
) -> GalerkinBasis:
  """
  Raises:
      ContractViolation: On invalid sizes
      QuadratureUnderresolved: If the 1-D mass matrix is singular or
          ill-conditioned on the chosen quadrature
  """
  if n < 1 or m < 1 or basis_size < 1 or trace_size < 0 or half_width <= 0:
    raise ContractViolation(
      f"Invalid basis request n={n}, m={m}, K={basis_size}, T={trace_size}, a={half_width}",
      "dirichlet_forward",
    )
  bubble_count = max(basis_size, trace_size)
  quadrature_points = quadrature_points or (2 * m + bubble_count + 4)
  entries = _bubbles(m, half_width, bubble_count) + _boundary_polynomials(m, half_width)
  labels = [label for label, _ in entries]
  polys = [poly for _, poly in entries]

  gl_x, gl_w = np.polynomial.legendre.leggauss(quadrature_points)
  nodes = half_width * gl_x
  weights = half_width * gl_w
  values = [np.array([p.deriv(k)(nodes) if k else p(nodes) for p in polys]) for k in range(m + 1)]

  mass = (values[0] * weights) @ values[0].T
  eig = linalg.eigvalsh(mass)
  if eig[0] <= 0 or eig[-1] / eig[0] > MASS_CONDITION_LIMIT:
    raise QuadratureUnderresolved(
      f"1-D mass matrix condition {eig[-1] / max(eig[0], 1e-300):.3e} with "
      f"{quadrature_points} quadrature points for {len(polys)} functions"
    )

  boundary_ids = [i for i, label in enumerate(labels) if label[0] == "boundary"]
  interior = np.array(list(product(range(basis_size), repeat=n)), dtype=int)
  allowed = list(range(trace_size)) + boundary_ids
  lift = np.array(
    [idx for idx in product(allowed, repeat=n) if any(i in boundary_ids for i in idx)],
    dtype=int,
  ).reshape(-1, n)
  basis = GalerkinBasis(
    n=n,
    m=m,
    half_width=half_width,
    basis_size=basis_size,
    trace_size=trace_size,
    quadrature_points=quadrature_points,
    labels=labels,
    polynomials=polys,
    interior=interior,
    lift=lift,
    nodes=nodes,
    weights=weights,
    values=values,
  )
  logger.info(
    f"Galerkin basis n={n}, m={m}: {basis.interior_size} interior, {basis.lift_size} lift functions"
  )
  return basis


def multinomial_weights(n: int, m: int) -> dict[tuple[int, ...], int]:
  """m!/alpha! for every multi-index |alpha| = m"""
  out = {}
  for alpha in product(range(m + 1), repeat=n):
    if sum(alpha) == m:
      out[alpha] = math.factorial(m) // math.prod(math.factorial(a) for a in alpha)
  return out


def _tensor_gram(basis: GalerkinBasis, alpha: Sequence[int], grams: list[np.ndarray]) -> np.ndarray:
  idx = basis.indices
  out = np.ones((basis.size, basis.size))
  for a, k in enumerate(alpha):
    out = out * grams[k][np.ix_(idx[:, a], idx[:, a])]
  return out


def _potential_at(basis: GalerkinBasis, q: PotentialSource, points: np.ndarray) -> np.ndarray:
  match q:
    case None:
      return np.zeros(len(points), dtype=np.complex128)
    case ComplexField():
      grid = q.grid
      axes = [grid.axis()] * grid.n
      values = []
      for part in (q.data.real, q.data.imag):
        interp = RegularGridInterpolator(
          axes, part, method="cubic", bounds_error=False, fill_value=0.0
        )
        values.append(interp(points))
      return values[0] + 1j * values[1]
    case int() | float() | complex():
      return np.full(len(points), complex(q))
    case _ if callable(q):
      return np.asarray(q(points), dtype=np.complex128)
    case _:
      raise ContractViolation(f"Unsupported potential source {type(q).__name__}", "dirichlet_forward")


@dataclass(eq=False)
class FormMatrices:
  basis: GalerkinBasis
  principal: np.ndarray = field(repr=False)
  potential: np.ndarray = field(repr=False)
  mass: np.ndarray = field(repr=False)
  q_samples: np.ndarray = field(repr=False)

  @property
  def total(self) -> np.ndarray:
    return self.principal + self.potential

  def blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(A_II, A_IB, A_BI, A_BB)"""
    k = self.basis.interior_size
    A = self.total
    return A[:k, :k], A[:k, k:], A[k:, :k], A[k:, k:]

  def potential_is_real_nonnegative(self) -> bool:
    return bool(np.all(np.abs(self.q_samples.imag) <= 1e-14 * (1 + np.abs(self.q_samples.real)))
                and np.all(self.q_samples.real >= 0))


def potential_matrix(basis: GalerkinBasis, q: PotentialSource) -> tuple[np.ndarray, np.ndarray]:
  """Phi diag(q w) Phi^T over the combined basis, and q at the quadrature nodes"""
  points, w = basis.quadrature_points_nd()
  q_values = _potential_at(basis, q, points)
  phi = basis.tensor_values(basis.indices, [basis.values[0]] * basis.n)
  return (phi * (q_values * w)) @ phi.T, q_values


def assemble_form(basis: GalerkinBasis, q: PotentialSource = None) -> FormMatrices:
  """
  Gram matrices of a(u, v) = sum m!/alpha! (D^alpha u, D^alpha v) + (q u, v).

  q may be a constant, a callable on points of shape (N, n), or a field
  interpolated onto the quadrature nodes (zero outside its grid).
  """
  grams = [basis.gram_1d(k) for k in range(basis.m + 1)]
  terms = parallel_map(
    lambda item: item[1] * _tensor_gram(basis, item[0], grams),
    list(multinomial_weights(basis.n, basis.m).items()),
  )
  principal = np.sum(terms, axis=0)
  mass = _tensor_gram(basis, (0,) * basis.n, grams)
  potential, q_values = potential_matrix(basis, q)
  logger.debug(f"Assembled forms of size {basis.size}")
  return FormMatrices(basis, principal, potential, mass, q_values)


@dataclass
class AssumptionReport:
  sigma_min: float
  sigma_max: float
  relative: float
  near_singular: bool


def check_assumption_A(matrices: FormMatrices) -> AssumptionReport:
  """
  Smallest singular value of the interior block.

  Raises:
      InvariantFailure: If q is real, nonnegative and the block is singular
  """
  A_II = matrices.blocks()[0]
  sv = linalg.svdvals(A_II)
  sigma_min, sigma_max = float(sv[-1]), float(sv[0])
  relative = sigma_min / sigma_max if sigma_max > 0 else 0.0
  near = relative < ASSUMPTION_A_THRESHOLD
  if near:
    logger.warning(f"Interior block near singular: sigma_min/sigma_max = {relative:.3e}")
  if matrices.potential_is_real_nonnegative() and not sigma_min > 0:
    raise InvariantFailure("coercivity", "interior block singular for q >= 0", "dirichlet_forward")
  return AssumptionReport(sigma_min, sigma_max, relative, near)


@dataclass(eq=False)
class InteriorSolver:
  """Shared factorization of A_II; dense LU or GMRES for large blocks"""

  A_II: np.ndarray
  lu: Optional[tuple] = None

  @classmethod
  def build(cls, matrices: FormMatrices) -> "InteriorSolver":
    report = check_assumption_A(matrices)
    if report.near_singular:
      raise AssumptionAViolated(
        f"0 is (numerically) a Dirichlet eigenvalue: sigma_min/sigma_max = {report.relative:.3e}",
        sigma_min=report.sigma_min,
      )
    A_II = matrices.blocks()[0]
    if len(A_II) <= DIRECT_SOLVE_LIMIT:
      return cls(A_II, linalg.lu_factor(A_II))
    return cls(A_II)

  def solve(self, rhs: np.ndarray) -> np.ndarray:
    if self.lu is not None:
      return linalg.lu_solve(self.lu, rhs)
    columns = rhs.reshape(len(rhs), -1)

    def one(col: np.ndarray) -> np.ndarray:
      x, info = gmres(self.A_II, col, rtol=1e-12, restart=200, maxiter=50)
      if info != 0:
        raise NumericalFailure(f"GMRES did not converge (info={info})", "dirichlet_forward")
      return x

    solved = parallel_map(one, [columns[:, j] for j in range(columns.shape[1])])
    return np.stack(solved, axis=1).reshape(rhs.shape)


@dataclass
class DirichletSolution:
  interior: np.ndarray
  trace: np.ndarray
  residual: float

  @property
  def coefficients(self) -> np.ndarray:
    return np.concatenate([self.interior, self.trace])


def solve_dirichlet(
  matrices: FormMatrices,
  f: np.ndarray,
  solver: Optional[InteriorSolver] = None,
) -> DirichletSolution:
  """
  Interior coefficients of u = v + w with w the lift of trace coefficients f.

  Raises:
      AssumptionAViolated: If the interior block is singular
  """
  f = np.asarray(f, dtype=np.complex128)
  if f.shape != (matrices.basis.lift_size,):
    raise ContractViolation(
      f"Trace vector has shape {f.shape}, expected ({matrices.basis.lift_size},)",
      "dirichlet_forward",
    )
  solver = solver or InteriorSolver.build(matrices)
  A_II, A_IB, _, _ = matrices.blocks()
  rhs = -A_IB @ f
  if not np.any(f):
    return DirichletSolution(np.zeros(len(A_II), dtype=np.complex128), f, 0.0)
  v = solver.solve(rhs)
  residual = float(np.linalg.norm(A_II @ v - rhs) / max(np.linalg.norm(rhs), 1e-300))
  return DirichletSolution(v, f, residual)


@dataclass(eq=False)
class DNMap:
  """Lambda[h, f] = a(u_f, w_h) over the lift basis"""

  matrix: np.ndarray
  basis: dict
  metadata: dict = field(default_factory=dict)

  @property
  def size(self) -> int:
    return len(self.matrix)

  def pairing(self, f: np.ndarray, h: np.ndarray) -> complex:
    """<Lambda f, conj h> = h^H Lambda f"""
    return complex(np.conj(h) @ self.matrix @ f)

  def symmetry_defect(self) -> float:
    scale = float(np.max(np.abs(self.matrix))) or 1.0
    return float(np.max(np.abs(self.matrix - self.matrix.T))) / scale

  def compatible(self, other: "DNMap") -> bool:
    return self.basis == other.basis


def assemble_dn_map(
  matrices: FormMatrices,
  seed: int = 0,
  extension_tol: float = 1e-9,
) -> DNMap:
  """
  Schur complement A_BB - A_BI A_II^-1 A_IB.

  The columns are recomputed with every lift perturbed by a random interior
  component; both versions must agree to `extension_tol` relative.

  Raises:
      AssumptionAViolated: If the interior block is singular
      InvariantFailure: If the perturbed lift changes the map
  """
  solver = InteriorSolver.build(matrices)
  A_II, A_IB, A_BI, A_BB = matrices.blocks()
  X = solver.solve(-A_IB)
  Lambda = A_BB + A_BI @ X

  rng = np.random.default_rng(seed)
  D = rng.normal(size=A_IB.shape)
  Lambda_perturbed = Lambda + D.T @ (A_IB + A_II @ X)
  scale = max(float(np.max(np.abs(Lambda))), 1e-300)
  extension_residual = float(np.max(np.abs(Lambda_perturbed - Lambda))) / scale
  if extension_residual > extension_tol:
    raise InvariantFailure(
      "extension_independence",
      f"perturbed lift changed the map by {extension_residual:.3e}",
      "dirichlet_forward",
    )
  basis = matrices.basis
  logger.info(f"DN map of size {len(Lambda)}; extension residual {extension_residual:.2e}")
  return DNMap(
    matrix=Lambda,
    basis=basis.descriptor(),
    metadata={
      "solver": "lu" if solver.lu is not None else "gmres",
      "extension_residual": extension_residual,
      "interior_unknowns": basis.interior_size,
    },
  )


@dataclass
class IdentityReport:
  volume_side: complex
  boundary_side: complex
  scale: float
  residual: float


def integral_identity_check(
  form1: FormMatrices,
  form2: FormMatrices,
  u1: DirichletSolution,
  u2: DirichletSolution,
  dn1: DNMap,
  dn2: DNMap,
) -> IdentityReport:
  """
  integral (q2 - q1) u1 conj(u2) against f2^H (Lambda_q2 - Lambda_q1) f1.

  u1 solves with q1, u2 with conj(q2); the residual is relative to
  integral (|q1| + |q2|) |u1| |u2|.
  """
  c1, c2 = u1.coefficients, u2.coefficients
  volume = complex(np.conj(c2) @ (form2.potential - form1.potential) @ c1)
  boundary = complex(np.conj(u2.trace) @ (dn2.matrix - dn1.matrix) @ u1.trace)

  basis = form1.basis
  _, w = basis.quadrature_points_nd()
  phi = basis.tensor_values(basis.indices, [basis.values[0]] * basis.n)
  v1, v2 = c1 @ phi, c2 @ phi
  scale = float(np.sum((np.abs(form1.q_samples) + np.abs(form2.q_samples)) * np.abs(v1) * np.abs(v2) * w))
  if scale == 0:
    residual = abs(volume - boundary)
  else:
    residual = abs(volume - boundary) / scale
  logger.info(f"Integral identity: volume {volume:.6e}, boundary {boundary:.6e}, residual {residual:.2e}")
  return IdentityReport(volume, boundary, scale, residual)


def dirichlet_eigenvalue(basis: GalerkinBasis) -> float:
  """Smallest Dirichlet eigenvalue of (-Delta)^m on the interior span"""
  forms = assemble_form(basis, None)
  k = basis.interior_size
  value = linalg.eigh(
    forms.principal[:k, :k], forms.mass[:k, :k], eigvals_only=True, subset_by_index=[0, 0]
  )
  return float(value[0])


def evaluate(basis: GalerkinBasis, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
  """Sum of coefficient times basis function at points of shape (N, n)"""
  points = np.atleast_2d(np.asarray(points, dtype=float))
  idx = basis.indices
  total = np.ones((basis.size, len(points)))
  for a in range(basis.n):
    table = np.array([p(points[:, a]) for p in basis.polynomials])
    total = total * table[idx[:, a]]
  return np.asarray(coeffs) @ total


TraceData = Callable[[np.ndarray, tuple[int, ...]], np.ndarray]


def exponential_trace_data(zeta: np.ndarray) -> TraceData:
  """d^alpha e^(x.zeta) = zeta^alpha e^(x.zeta)"""
  zeta = np.asarray(zeta, dtype=np.complex128)

  def data(points: np.ndarray, alpha: tuple[int, ...]) -> np.ndarray:
    return np.prod(zeta ** np.asarray(alpha)) * np.exp(points @ zeta)

  return data


@dataclass
class TraceProjection:
  coefficients: np.ndarray
  residual: float


def project_trace(basis: GalerkinBasis, g: TraceData) -> TraceProjection:
  """
  Least-squares fit of (g, d_nu g, ..., d_nu^(m-1) g) on every face by the
  traces of the lift functions.
  """
  a = basis.half_width
  idx = basis.lift
  rows, targets = [], []
  face_mesh = np.meshgrid(*[basis.nodes] * (basis.n - 1), indexing="ij")
  face_w = np.ones(1)
  for _ in range(basis.n - 1):
    face_w = np.multiply.outer(face_w, basis.weights).ravel()
  root_w = np.sqrt(face_w)
  for axis in range(basis.n):
    others = [b for b in range(basis.n) if b != axis]
    for side in (-1.0, 1.0):
      points = np.zeros((face_w.size, basis.n))
      for b, coord in zip(others, face_mesh):
        points[:, b] = coord.ravel()
      points[:, axis] = side * a
      for k in range(basis.m):
        alpha = tuple(k if b == axis else 0 for b in range(basis.n))
        values = side**k * g(points, alpha)
        model = np.ones((len(idx), face_w.size))
        for b in range(basis.n):
          if b == axis:
            ends = np.array([p.deriv(k)(side * a) if k else p(side * a) for p in basis.polynomials])
            model = model * (side**k * ends[idx[:, b]])[:, None]
          else:
            table = np.array([p(points[:, b]) for p in basis.polynomials])
            model = model * table[idx[:, b]]
        rows.append((model * root_w).T)
        targets.append(values * root_w)
  system = np.vstack(rows)
  rhs = np.concatenate(targets)
  coeffs, *_ = linalg.lstsq(system, rhs)
  residual = float(np.linalg.norm(system @ coeffs - rhs) / max(np.linalg.norm(rhs), 1e-300))
  return TraceProjection(coeffs, residual)


def sobolev_gram(basis: GalerkinBasis) -> np.ndarray:
  """H^m inner products: sum over |alpha| <= m of (D^alpha phi_j, D^alpha phi_i)"""
  grams = [basis.gram_1d(k) for k in range(basis.m + 1)]
  total = np.zeros((basis.size, basis.size))
  for alpha in product(range(basis.m + 1), repeat=basis.n):
    if sum(alpha) <= basis.m:
      total = total + _tensor_gram(basis, alpha, grams)
  return total


def form_bound(basis: GalerkinBasis, matrices: FormMatrices) -> float:
  """Estimated C in |a(u, v)| <= C ||u||_(H^m) ||v||_(H^m) over the combined span"""
  chol = linalg.cholesky(sobolev_gram(basis), lower=True)
  left = linalg.solve_triangular(chol, matrices.total, lower=True)
  scaled = linalg.solve_triangular(chol, left.conj().T, lower=True).conj().T
  return float(linalg.svdvals(scaled)[0])


def sobolev_chain_ratios(basis: GalerkinBasis) -> np.ndarray:
  """||phi||_(2n/(n-2m)) / ||phi||_(H^m) for each basis function"""
  if not basis.n > 2 * basis.m:
    raise InvalidExponent(
      f"Sobolev chain needs n > 2m, got n={basis.n}, m={basis.m}", source="dirichlet_forward"
    )
  exponent = 2.0 * basis.n / (basis.n - 2 * basis.m)
  _, w = basis.quadrature_points_nd()
  phi = basis.tensor_values(basis.indices, [basis.values[0]] * basis.n)
  lq = (np.abs(phi) ** exponent @ w) ** (1.0 / exponent)
  hm = np.sqrt(np.diag(sobolev_gram(basis)))
  return lq / hm
