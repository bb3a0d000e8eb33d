"""
Recovery of q from CGO pairings

For xi in R^n and s >= |xi|/2 the frame

    zeta1 =  s eta1 + i (xi/2 + r eta2)
    zeta2 = -s eta1 - i (xi/2 - r eta2),   r = sqrt(s^2 - |xi|^2/4)

gives zeta1 + conj(zeta2) = i xi, so q u1 conj(u2) = q e^(i xi.x)(1 + r1)(1 + conj r2).
The target coefficient is q^(xi) = integral q e^(i xi.x), i.e. the library
transform evaluated at -xi.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Literal, Optional, Sequence

import numpy as np

from polycgo.cgo_solver import CGOSolution, Potential, build_cgo
from polycgo.dirichlet_forward import (
  DNMap,
  GalerkinBasis,
  build_basis,
  exponential_trace_data,
  project_trace,
)
from polycgo.exceptions import (
  ContractViolation,
  DependencyError,
  FrameInfeasible,
  InvariantFailure,
)
from polycgo.field_core import ComplexField, GridSpec, fft_forward, fft_inverse, l2_norm
from polycgo.green_operator import Backend, assemble
from polycgo.parallel import parallel_map
from polycgo.symbol_geometry import ZetaVector, canonicalize, complete_orthonormal

logger = logging.getLogger(__name__)

Mode = Literal["oracle", "boundary"]
Scaling = Literal["fixed", "xi", "floor"]

DEFAULT_SCHEDULE = (8.0, 16.0, 32.0)
PROJECTION_TOL = 2e-2
FRAME_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ZetaFrame:
  xi: np.ndarray
  s: float
  eta1: np.ndarray
  eta2: np.ndarray
  r: float
  zeta1: ZetaVector
  zeta2: ZetaVector

  def defects(self) -> dict[str, float]:
    z1, z2 = self.zeta1.raw, self.zeta2.raw
    scale = max(self.s**2, 1.0)
    return {
      "zeta1_isotropy": abs(complex(z1 @ z1)) / scale,
      "zeta2_isotropy": abs(complex(z2 @ z2)) / scale,
      "sum_identity": float(np.max(np.abs(z1 + np.conj(z2) - 1j * self.xi))) / max(self.s, 1.0),
      "magnitude": abs(np.linalg.norm(z1) - math.sqrt(2.0) * self.s) / max(self.s, 1.0)
      + abs(np.linalg.norm(z2) - math.sqrt(2.0) * self.s) / max(self.s, 1.0),
    }

  def check(self, tol: float = FRAME_TOL) -> None:
    for name, value in self.defects().items():
      if value > tol:
        raise InvariantFailure(f"frame_{name}", f"defect {value:.3e}", "reconstruction")


def build_frame(xi: Sequence[float], s: float, n: Optional[int] = None) -> ZetaFrame:
  """
  Deterministic frame: eta1, eta2 are rows 1 and 2 of the smallest-index
  orthonormal completion of xi/|xi| (rows 0 and 1 of the identity completion
  for xi = 0).

  Raises:
      FrameInfeasible: If s < |xi|/2
  """
  xi = np.asarray(xi, dtype=float).reshape(-1)
  n = xi.size if n is None else n
  if xi.size != n:
    raise ContractViolation(f"xi has length {xi.size}, expected {n}", "reconstruction")
  if n < 3:
    raise ContractViolation(f"Frames need n >= 3, got {n}", "reconstruction")
  size = float(np.linalg.norm(xi))
  slack = s**2 - size**2 / 4.0
  if s <= 0 or slack < -1e-12 * max(s**2, 1.0):
    raise FrameInfeasible(f"s={s:.6g} below |xi|/2={size / 2:.6g}")
  if size == 0:
    rows = complete_orthonormal([], n)
    eta1, eta2 = rows[0], rows[1]
  else:
    rows = complete_orthonormal([xi / size], n)
    eta1, eta2 = rows[1], rows[2]
  r = math.sqrt(max(slack, 0.0))
  zeta1 = s * eta1 + 1j * (xi / 2 + r * eta2)
  zeta2 = -s * eta1 - 1j * (xi / 2 - r * eta2)
  frame = ZetaFrame(xi, s, eta1, eta2, r, canonicalize(zeta1), canonicalize(zeta2))
  frame.check()
  return frame


@dataclass(frozen=True)
class CGOSettings:
  m: int = 1
  backend: Backend = "naive"
  interpolation_order: int = 3
  tol: float = 1e-8
  max_iter: int = 200
  s_min: float = 2.0

  def solve(self, potential: Potential, zeta: ZetaVector) -> CGOSolution:
    grid = potential.grid
    op_grid = grid.avoiding(zeta) if self.backend == "naive" else grid
    G = assemble(zeta, self.m, op_grid, self.backend, self.interpolation_order)
    return build_cgo(potential, zeta, G, self.tol, self.max_iter, self.s_min)


@dataclass
class ExtractedCoefficient:
  """Approximation of integral q e^(i xi.x) at one frame"""

  mode: Mode
  xi: tuple[float, ...]
  s: float
  value: complex
  leading: Optional[complex] = None
  correction: Optional[complex] = None
  projection_residual: Optional[float] = None
  accepted: bool = True

  def row(self) -> dict:
    return {
      "mode": self.mode,
      "xi": list(self.xi),
      "s": self.s,
      "value_real": self.value.real,
      "value_imag": self.value.imag,
      "correction_abs": abs(self.correction) if self.correction is not None else None,
      "projection_residual": self.projection_residual,
      "accepted": self.accepted,
    }


def _plane_wave(grid: GridSpec, xi: np.ndarray) -> np.ndarray:
  phase = sum(k * x for k, x in zip(xi, grid.physical_mesh()))
  return np.broadcast_to(np.exp(1j * phase), grid.shape)


def oracle_pairing(
  frame: ZetaFrame,
  potential: Potential,
  cgo1: CGOSolution,
  cgo2: CGOSolution,
) -> ExtractedCoefficient:
  """
  integral q e^(i xi.x)(1 + r1)(1 + conj r2) together with the leading term
  and the exact correction integral q e^(i xi.x)(r1 + conj r2 + r1 conj r2).
  """
  grid = potential.grid
  weight = potential.q.data * _plane_wave(grid, frame.xi) * grid.cell_volume
  r1, r2 = cgo1.r.data, np.conj(cgo2.r.data)
  leading = complex(np.sum(weight))
  correction = complex(np.sum(weight * (r1 + r2 + r1 * r2)))
  return ExtractedCoefficient(
    mode="oracle",
    xi=tuple(float(k) for k in frame.xi),
    s=frame.s,
    value=leading + correction,
    leading=leading,
    correction=correction,
  )


def born_pairing(
  dn: DNMap, dn0: DNMap, frame: ZetaFrame, basis: Optional[GalerkinBasis] = None
) -> ExtractedCoefficient:
  """
  f2^H (Lambda_q - Lambda_0) f1 with f1, f2 the projected traces of the free
  exponentials e^(x.zeta1), e^(x.zeta2).
  """
  if not dn.compatible(dn0):
    raise ContractViolation("DN maps were assembled on different trace bases", "reconstruction")
  basis = basis or basis_from_descriptor(dn.basis)
  first = project_trace(basis, exponential_trace_data(frame.zeta1.raw))
  second = project_trace(basis, exponential_trace_data(frame.zeta2.raw))
  value = dn.pairing(first.coefficients, second.coefficients) - dn0.pairing(
    first.coefficients, second.coefficients
  )
  return ExtractedCoefficient(
    mode="boundary",
    xi=tuple(float(k) for k in frame.xi),
    s=frame.s,
    value=value,
    projection_residual=max(first.residual, second.residual),
  )


def basis_from_descriptor(descriptor: dict) -> GalerkinBasis:
  return build_basis(
    n=descriptor["n"],
    m=descriptor["m"],
    half_width=descriptor["half_width"],
    basis_size=descriptor["basis_size"],
    trace_size=descriptor["trace_size"],
    quadrature_points=descriptor["quadrature_points"],
  )


def extract_fourier_coefficient(
  frame: ZetaFrame,
  mode: Mode,
  potential: Optional[Potential] = None,
  dn: Optional[DNMap] = None,
  dn0: Optional[DNMap] = None,
  settings: CGOSettings = CGOSettings(),
  cgo1: Optional[CGOSolution] = None,
  cgo2: Optional[CGOSolution] = None,
  basis: Optional[GalerkinBasis] = None,
) -> ExtractedCoefficient:
  """
  Raises:
      DependencyError: If the inputs required by the mode are missing
  """
  match mode:
    case "oracle":
      if potential is None:
        raise DependencyError("oracle mode needs the potential", hint="pass --potential or run cgo-build")
      if potential.is_zero():
        return ExtractedCoefficient("oracle", tuple(frame.xi), frame.s, 0j, 0j, 0j)
      cgo1 = cgo1 or settings.solve(potential, frame.zeta1)
      cgo2 = cgo2 or settings.solve(potential.conjugate(), frame.zeta2)
      return oracle_pairing(frame, potential, cgo1, cgo2)
    case "boundary":
      if dn is None or dn0 is None:
        raise DependencyError("boundary mode needs DN maps for q and 0", hint="run dn-sim first")
      return born_pairing(dn, dn0, frame, basis)
    case _:
      raise ContractViolation(f"Unknown mode {mode!r}", "reconstruction")


@dataclass(eq=False)
class ReconstructionStage:
  schedule_index: int
  spectrum: np.ndarray = field(repr=False)
  field: ComplexField = field(repr=False)


@dataclass(eq=False)
class ReconstructionResult:
  grid: GridSpec
  mode: Mode
  xi_radius: float
  conjugate_symmetric: bool
  stages: list[ReconstructionStage]
  rows: list[dict]
  missing: list[tuple[int, tuple[float, ...]]]
  rejected: list[tuple[int, tuple[float, ...], float]] = field(default_factory=list)

  @property
  def field(self) -> ComplexField:
    return self.stages[-1].field

  def unresolved(self) -> list[tuple[float, ...]]:
    """Frequencies without a coefficient in the final stage"""
    last = len(self.stages) - 1
    return [xi for stage, xi in self.missing if stage == last]

  def rejected_unresolved(self) -> list[tuple[float, ...]]:
    """Final-stage gaps caused by a trace projection above tolerance"""
    rejected = {xi for _, xi, _ in self.rejected}
    return [xi for xi in self.unresolved() if xi in rejected]

  def imaginary_ratio(self) -> float:
    data = self.field.data
    peak = float(np.max(np.abs(data)))
    return float(np.max(np.abs(data.imag))) / peak if peak > 0 else 0.0

  def correction_table(self) -> list[dict]:
    """Correction magnitude per xi and s (oracle mode)"""
    return [row for row in self.rows if row.get("correction_abs") is not None]


def _frequency_targets(
  grid: GridSpec, xi_radius: float, conjugate_symmetric: bool
) -> list[tuple[tuple[int, ...], np.ndarray]]:
  """Signed integer indices k with |xi_k| <= radius; half-space when symmetric"""
  N = grid.points_per_axis
  signed = np.rint(np.fft.fftfreq(N) * N).astype(int)
  step = grid.frequency_spacing
  out = []
  for k in product(signed, repeat=grid.n):
    xi = step * np.asarray(k, dtype=float)
    if np.linalg.norm(xi) > xi_radius:
      continue
    if conjugate_symmetric:
      nonzero = [c for c in k if c != 0]
      if nonzero and nonzero[0] < 0:
        continue
    out.append((tuple(int(c) for c in k), xi))
  return out


def _stage_s(schedule: Sequence[float], stage: int, xi: np.ndarray, scaling: Scaling) -> Optional[float]:
  """
  fixed: the schedule as given; xi: entries scaled by max(1, |xi|/2);
  floor: entries raised to the smallest feasible s = |xi|/2.
  """
  half = float(np.linalg.norm(xi)) / 2.0
  match scaling:
    case "xi":
      entries = [s * max(1.0, half) for s in schedule[: stage + 1]]
    case "floor":
      entries = [max(s, half) for s in schedule[: stage + 1]]
    case _:
      entries = list(schedule[: stage + 1])
  feasible = [s for s in entries if s >= half]
  return max(feasible) if feasible else None


def _assemble_spectrum(
  grid: GridSpec,
  values: dict[tuple[int, ...], complex],
  conjugate_symmetric: bool,
) -> np.ndarray:
  """Library-convention spectrum: F(-xi) = target(xi)"""
  N = grid.points_per_axis
  spectrum = np.zeros(grid.shape, dtype=np.complex128)
  for k, value in values.items():
    minus = tuple((-c) % N for c in k)
    plus = tuple(c % N for c in k)
    if conjugate_symmetric:
      if not any(k):
        value = complex(value.real, 0.0)
      spectrum[plus] = np.conj(value)
    spectrum[minus] = value
  return spectrum


def _invert(grid: GridSpec, spectrum: np.ndarray, conjugate_symmetric: bool) -> ComplexField:
  out = fft_inverse(ComplexField(grid, spectrum, "fourier"))
  if conjugate_symmetric:
    out = out.like(out.data.real)
  return out


def _run_schedule(
  grid: GridSpec,
  xi_radius: float,
  schedule: Sequence[float],
  scaling: Scaling,
  conjugate_symmetric: bool,
  extract,
  mode: Mode,
  projection_tol: Optional[float] = None,
) -> ReconstructionResult:
  """
  A coefficient whose trace projection residual exceeds projection_tol is
  rejected; the frequency then keeps its last accepted value, or stays
  missing when there is none.
  """
  grid = grid.with_offset(None)
  targets = _frequency_targets(grid, xi_radius, conjugate_symmetric)
  stages, rows, missing, rejected = [], [], [], []
  values: dict[tuple[int, ...], complex] = {}
  for stage in range(len(schedule)):

    def one(target):
      k, xi = target
      s = _stage_s(schedule, stage, xi, scaling)
      if s is None:
        return k, xi, None
      try:
        return k, xi, extract(build_frame(xi, s, grid.n))
      except FrameInfeasible:
        return k, xi, None

    for k, xi, result in parallel_map(one, targets):
      key = tuple(float(c) for c in xi)
      if result is not None:
        residual = result.projection_residual
        if projection_tol is not None and residual is not None and not residual <= projection_tol:
          result.accepted = False
          rejected.append((stage, key, float(residual)))
        else:
          values[k] = result.value
        rows.append({"stage": stage, **result.row()})
      if k not in values:
        missing.append((stage, key))
    spectrum = _assemble_spectrum(grid, values, conjugate_symmetric)
    stages.append(ReconstructionStage(stage, spectrum, _invert(grid, spectrum, conjugate_symmetric)))
    dropped = sum(1 for entry in rejected if entry[0] == stage)
    if dropped:
      logger.warning(
        f"Stage {stage}: {dropped} coefficients rejected, trace projection above {projection_tol:.1e}"
      )
    logger.info(f"Stage {stage}: {len(values)} coefficients, {len(targets) - len(values)} missing")
  return ReconstructionResult(grid, mode, xi_radius, conjugate_symmetric, stages, rows, missing, rejected)


def reconstruct(
  dn: DNMap,
  dn0: DNMap,
  grid: GridSpec,
  xi_radius: float,
  s_schedule: Optional[Sequence[float]] = None,
  conjugate_symmetric: bool = True,
  projection_tol: float = PROJECTION_TOL,
) -> ReconstructionResult:
  """
  Born inversion from boundary data, one stage per schedule entry.

  Each stage uses, per xi, the largest feasible s among the schedule
  entries seen so far. Without an explicit schedule every xi gets the
  smallest frame, s = max(1/a, |xi|/2): the Born error grows like e^(s a) on a
  domain of half-width a, and the exponential traces stop being
  representable once s a is large. Coefficients whose trace projection
  residual exceeds projection_tol are rejected.
  """
  if not dn.compatible(dn0):
    raise ContractViolation("DN maps were assembled on different trace bases", "reconstruction")
  basis = basis_from_descriptor(dn.basis)
  schedule = tuple(s_schedule) if s_schedule else (1.0 / basis.half_width,)
  return _run_schedule(
    grid,
    xi_radius,
    schedule,
    "fixed" if s_schedule else "floor",
    conjugate_symmetric,
    lambda frame: born_pairing(dn, dn0, frame, basis),
    "boundary",
    projection_tol,
  )


def reconstruct_oracle(
  q: ComplexField,
  xi_radius: float,
  s_schedule: Optional[Sequence[float]] = None,
  settings: CGOSettings = CGOSettings(),
  conjugate_symmetric: bool = True,
) -> ReconstructionResult:
  """Reconstruction with CGO pairings computed from the known q"""
  potential = Potential(q)
  conjugated = potential.conjugate()
  schedule = tuple(s_schedule) if s_schedule else DEFAULT_SCHEDULE

  def extract(frame: ZetaFrame) -> ExtractedCoefficient:
    if potential.is_zero():
      return ExtractedCoefficient("oracle", tuple(frame.xi), frame.s, 0j, 0j, 0j)
    cgo1 = settings.solve(potential, frame.zeta1)
    cgo2 = settings.solve(conjugated, frame.zeta2)
    return oracle_pairing(frame, potential, cgo1, cgo2)

  scaling = "fixed" if s_schedule else "xi"
  return _run_schedule(q.grid, xi_radius, schedule, scaling, conjugate_symmetric, extract, "oracle")


def low_pass(q: ComplexField, xi_radius: float) -> ComplexField:
  grid = q.grid.with_offset(None)
  spectrum = fft_forward(q.on_grid(grid))
  keep = grid.frequency_radius_squared() <= xi_radius**2
  return fft_inverse(spectrum.like(np.where(keep, spectrum.data, 0.0)))


def low_pass_error(result: ReconstructionResult, q_true: ComplexField) -> list[float]:
  """Relative L2 error of every stage against the low-passed true potential"""
  target = low_pass(q_true, result.xi_radius)
  size = l2_norm(target)
  errors = []
  for stage in result.stages:
    diff = l2_norm(target.like(stage.field.data - target.data))
    errors.append(diff / size if size > 0 else diff)
  return errors
