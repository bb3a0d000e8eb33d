"""
Empirical constants of the weighted L^p estimates for (-Delta)^m

Two weights are probed on compactly supported samples u:

    linear:  ||e^(k.x) u||_q <= C ||e^(k.x) (-Delta)^m u||_p   uniformly in k
    log:     || |x|^-t u ||_q <= C || |x|^-t (-Delta)^m u ||_p  for u = 0 near 0

with p = 2n/(n+2m), q = 2n/(n-2m). (-Delta)^m u is computed spectrally and
restricted to the sample support, where it lives in the continuum. Weights are
evaluated in log-space; the common maximum cancels between both sides.

A sample with scale lambda stands for u(./lambda): since the ratio is
dilation covariant, ratio(k, u(./lambda)) = ratio(lambda k, u), which lets a
ladder of scales share one grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Literal, Optional, Sequence

import numpy as np

from polycgo.exceptions import ContractViolation, InvalidExponent, PreconditionError
from polycgo.field_core import ComplexField, GridSpec, apply_polyharmonic, bump_field
from polycgo.parallel import parallel_map

logger = logging.getLogger(__name__)

WeightKind = Literal["linear", "log"]
SampleKind = Literal["bump", "annular", "random"]

DELTA_THRESHOLD = 1e-3
DEGENERATE = 1e-14
ORIGIN_CELLS = 4


@dataclass(frozen=True)
class CarlemanConfig:
  n: int
  m: int
  weight: WeightKind
  t: Optional[float] = None
  k_list: tuple[tuple[float, ...], ...] = ()

  def __post_init__(self):
    if not (self.m >= 1 and 2 * self.m < self.n):
      raise InvalidExponent(
        f"Requires 1 <= m < n/2, got n={self.n}, m={self.m}", source="carleman_probe"
      )
    match self.weight:
      case "log":
        if self.t is None or not self.t > float(self.n / self.q_exact):
          raise PreconditionError(f"log weight needs t > n/q = {float(self.n / self.q_exact):.6g}")
      case "linear":
        for k in self.k_list:
          if len(k) != self.n:
            raise ContractViolation(f"k={k} is not in R^{self.n}", "carleman_probe")
      case _:
        raise ContractViolation(f"Unknown weight {self.weight!r}", "carleman_probe")

  @property
  def p_exact(self) -> Fraction:
    return Fraction(2 * self.n, self.n + 2 * self.m)

  @property
  def q_exact(self) -> Fraction:
    return Fraction(2 * self.n, self.n - 2 * self.m)

  @property
  def p(self) -> float:
    return float(self.p_exact)

  @property
  def q(self) -> float:
    return float(self.q_exact)

  def exponents_consistent(self) -> bool:
    """1/p - 1/q = 2m/n and p, q conjugate, in exact arithmetic"""
    p, q = self.p_exact, self.q_exact
    return 1 / p - 1 / q == Fraction(2 * self.m, self.n) and 1 / p + 1 / q == 1

  @property
  def delta(self) -> Optional[float]:
    """dist(t - n/q, Z) for the log weight"""
    if self.t is None:
      return None
    shifted = self.t - float(self.n / self.q_exact)
    return abs(shifted - round(shifted))

  @property
  def delta_flagged(self) -> bool:
    return self.delta is not None and self.delta < DELTA_THRESHOLD


@dataclass(frozen=True, eq=False)
class CarlemanSample:
  """Compactly supported u on a grid; support inside the ball (center, radius)"""

  sample_id: str
  field: ComplexField
  center: tuple[float, ...]
  radius: float
  scale: float = 1.0

  def support_mask(self) -> np.ndarray:
    grid = self.field.grid
    r2 = sum((x - c) ** 2 for x, c in zip(grid.physical_mesh(), self.center))
    return np.broadcast_to(r2 <= self.radius**2 * (1 + 1e-12), grid.shape)


def translate_sample(sample: CarlemanSample, cells: Sequence[int]) -> CarlemanSample:
  """Shift u by whole grid cells; the support must not wrap"""
  grid = sample.field.grid
  data = np.roll(sample.field.data, shift=tuple(cells), axis=tuple(range(grid.n)))
  center = tuple(c + k * grid.spacing for c, k in zip(sample.center, cells))
  return replace(
    sample,
    sample_id=f"{sample.sample_id}+shift",
    field=sample.field.like(data),
    center=center,
  )


def build_test_set(
  grid: GridSpec,
  kind: SampleKind,
  seed: int,
  count: int = 4,
  ladder: Sequence[float] = (1.0,),
) -> list[CarlemanSample]:
  """
  Seeded samples kept within the inner half of the box.

  bump: (1 - r^2/R^2)^8 at random centres; annular: radial bump around a
  shell centred at the origin with a hole of at least 4 cells; random:
  band-limited random field times a bump cutoff. Every sample is repeated for
  each scale of the dilation ladder.
  """
  rng = np.random.default_rng(seed)
  L = grid.half_width
  base: list[CarlemanSample] = []
  for i in range(count):
    match kind:
      case "bump":
        radius = float(rng.uniform(0.25, 0.4) * L)
        center = tuple(float(c) for c in rng.uniform(-0.1 * L, 0.1 * L, size=grid.n))
        u = bump_field(grid, radius, center)
      case "annular":
        hole = max(ORIGIN_CELLS + 2, 0.1 * grid.points_per_axis) * grid.spacing
        width = float(rng.uniform(0.12, 0.2) * L)
        shell = hole + width
        center = (0.0,) * grid.n
        r = np.sqrt(grid.radius_squared())
        profile = np.clip(1.0 - ((r - shell) / width) ** 2, 0.0, None) ** 8
        u = ComplexField(grid, profile.astype(np.complex128))
        radius = shell + width
      case "random":
        radius = float(rng.uniform(0.3, 0.45) * L)
        center = (0.0,) * grid.n
        modes = 3
        data = np.zeros(grid.shape, dtype=np.complex128)
        mesh = grid.physical_mesh()
        for _ in range(modes):
          k = rng.normal(size=grid.n) * (2.0 * math.pi / radius)
          amp = rng.normal() + 1j * rng.normal()
          data = data + amp * np.exp(1j * sum(kk * x for kk, x in zip(k, mesh)))
        cutoff = bump_field(grid, radius, center)
        u = cutoff.like(data * cutoff.data)
      case _:
        raise ContractViolation(f"Unknown sample kind {kind!r}", "carleman_probe")
    base.append(CarlemanSample(f"{kind}-{i}", u, center, radius))

  return [
    replace(sample, sample_id=f"{sample.sample_id}@{scale:g}", scale=float(scale))
    for sample in base
    for scale in ladder
  ]


def _log_norm_terms(magnitude: np.ndarray, log_weight: np.ndarray, power: float) -> float:
  """sum |f|^power exp(power * log_weight); log_weight is already max-shifted"""
  return float(np.sum(magnitude**power * np.exp(power * log_weight)))


def _weighted_ratio(
  u: np.ndarray,
  lu: np.ndarray,
  log_weight: np.ndarray,
  mask: np.ndarray,
  p: float,
  q: float,
  cell_volume: float,
) -> float:
  shift = float(np.max(log_weight[mask]))
  lw = log_weight[mask] - shift
  top = (_log_norm_terms(np.abs(u[mask]), lw, q) * cell_volume) ** (1.0 / q)
  bottom = (_log_norm_terms(np.abs(lu[mask]), lw, p) * cell_volume) ** (1.0 / p)
  if bottom < DEGENERATE:
    return math.nan
  return top / bottom


@dataclass
class CarlemanRow:
  weight: WeightKind
  parameter: str
  sample_id: str
  ratio: float


@dataclass
class CarlemanResult:
  weight: WeightKind
  rows: list[CarlemanRow]
  constant: float
  per_parameter: dict[str, float] = field(default_factory=dict)
  spread: float = math.nan
  skipped: list[str] = field(default_factory=list)
  delta: Optional[float] = None
  delta_flagged: bool = False

  def csv_rows(self) -> list[dict]:
    return [
      {"weight": r.weight, "parameter": r.parameter, "sample_id": r.sample_id, "ratio": r.ratio}
      for r in self.rows
    ]


def _summarize(
  weight: WeightKind, rows: list[CarlemanRow], skipped: list[str], **extra
) -> CarlemanResult:
  per: dict[str, float] = {}
  for row in rows:
    if math.isfinite(row.ratio):
      per[row.parameter] = max(per.get(row.parameter, 0.0), row.ratio)
  finite = list(per.values())
  constant = max(finite) if finite else math.nan
  spread = max(finite) / min(finite) if finite and min(finite) > 0 else math.nan
  for sample_id in skipped:
    logger.warning(f"Degenerate sample {sample_id} skipped (denominator below {DEGENERATE})")
  return CarlemanResult(
    weight=weight,
    rows=rows,
    constant=constant,
    per_parameter=per,
    spread=spread,
    skipped=sorted(set(skipped)),
    **extra,
  )


def _format_k(k: Sequence[float]) -> str:
  return "k=(" + ",".join(f"{c:g}" for c in k) + ")"


def sample_ratio_linear(config: CarlemanConfig, sample: CarlemanSample, k: Sequence[float]) -> float:
  """||e^(k.x) u||_q / ||e^(k.x)(-Delta)^m u||_p for u(./scale), nan if degenerate"""
  grid = sample.field.grid
  lu = apply_polyharmonic(sample.field, config.m).data
  effective = [sample.scale * c for c in k]
  log_weight = np.broadcast_to(
    sum(c * x for c, x in zip(effective, grid.physical_mesh())), grid.shape
  )
  if sample.field.max_abs() == 0:
    return math.nan
  return _weighted_ratio(
    sample.field.data,
    lu,
    log_weight,
    sample.support_mask(),
    config.p,
    config.q,
    grid.cell_volume,
  )


def probe_linear(config: CarlemanConfig, test_set: Sequence[CarlemanSample]) -> CarlemanResult:
  """Max ratio over samples and k-list; per-k suprema and their spread"""
  if config.weight != "linear":
    raise ContractViolation("probe_linear needs a linear-weight config", "carleman_probe")
  k_list = config.k_list or ((0.0,) * config.n,)

  def run(sample: CarlemanSample) -> list[CarlemanRow]:
    return [
      CarlemanRow("linear", _format_k(k), sample.sample_id, sample_ratio_linear(config, sample, k))
      for k in k_list
    ]

  rows = [row for chunk in parallel_map(run, list(test_set)) for row in chunk]
  skipped = [r.sample_id for r in rows if not math.isfinite(r.ratio)]
  result = _summarize("linear", rows, skipped)
  logger.info(
    f"Linear-weight constant {result.constant:.6g} over {len(k_list)} k, spread {result.spread:.4g}"
  )
  return result


def _require_hole(sample: CarlemanSample) -> None:
  grid = sample.field.grid
  peak = sample.field.max_abs()
  if peak == 0:
    return
  near = grid.radius_squared() <= (ORIGIN_CELLS * grid.spacing) ** 2
  if np.max(np.abs(sample.field.data[near])) > DEGENERATE * peak:
    raise PreconditionError(
      f"Sample {sample.sample_id} does not vanish within {ORIGIN_CELLS} cells of the origin"
    )


def sample_ratio_log(config: CarlemanConfig, sample: CarlemanSample) -> float:
  grid = sample.field.grid
  r2 = grid.radius_squared()
  mask = sample.support_mask() & (r2 > 0)
  log_weight = np.zeros(grid.shape)
  log_weight[r2 > 0] = -0.5 * config.t * np.log(r2[r2 > 0])
  if sample.field.max_abs() == 0:
    return math.nan
  lu = apply_polyharmonic(sample.field, config.m).data
  return _weighted_ratio(
    sample.field.data, lu, log_weight, mask, config.p, config.q, grid.cell_volume
  )


def probe_log(config: CarlemanConfig, test_set: Sequence[CarlemanSample]) -> CarlemanResult:
  """
  Max ratio of the |x|^-t weighted estimate over the test set.

  Raises:
      PreconditionError: If a sample does not vanish near the origin
  """
  if config.weight != "log":
    raise ContractViolation("probe_log needs a log-weight config", "carleman_probe")
  for sample in test_set:
    _require_hole(sample)
  if config.delta_flagged:
    logger.warning(
      f"delta = {config.delta:.3e} below {DELTA_THRESHOLD}; the constant is expected to blow up"
    )
  parameter = f"t={config.t:g}"
  ratios = parallel_map(lambda s: sample_ratio_log(config, s), list(test_set))
  rows = [CarlemanRow("log", parameter, s.sample_id, r) for s, r in zip(test_set, ratios)]
  skipped = [r.sample_id for r in rows if not math.isfinite(r.ratio)]
  result = _summarize(
    "log", rows, skipped, delta=config.delta, delta_flagged=config.delta_flagged
  )
  logger.info(f"Log-weight constant {result.constant:.6g} (delta={config.delta:.4g})")
  return result


def inverted_parametrization(
  k_list: Sequence[Sequence[float]],
) -> list[tuple[tuple[float, ...], float]]:
  """
  Pairs (k/|k|^2, |k|^2): the substituted weight together with the dilation
  that maps it back onto k.
  """
  out = []
  for k in k_list:
    size = float(np.dot(k, k))
    if size == 0:
      raise ContractViolation("k = 0 has no inverse", "carleman_probe")
    out.append((tuple(float(c) / size for c in k), size))
  return out


def compare_constants(linear: CarlemanResult, log: CarlemanResult) -> dict:
  """Side-by-side empirical constants of both weights; reported, not asserted"""
  quotient = (
    linear.constant / log.constant
    if math.isfinite(linear.constant) and math.isfinite(log.constant) and log.constant > 0
    else math.nan
  )
  logger.info(f"Linear/log constant quotient {quotient:.4g}")
  return {
    "linear_constant": linear.constant,
    "log_constant": log.constant,
    "quotient": quotient,
    "log_delta": log.delta,
    "log_delta_flagged": log.delta_flagged,
  }
