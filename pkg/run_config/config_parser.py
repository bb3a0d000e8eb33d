"""
Run configuration parser
Parses YAML run configs shared by every polycgo command
"""

from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, field_validator, model_validator

from polycgo.exceptions import ConfigError
from polycgo.settings import RuntimeSettings, default_output_dir


class ProblemSection(BaseModel):
  """Dimension and operator order"""

  n: int = 3
  m: int = 1

  @field_validator("n")
  @classmethod
  def validate_n(cls, v: int) -> int:
    if v < 2:
      raise ValueError(f"Dimension n must be at least 2, got: {v}")
    return v

  @field_validator("m")
  @classmethod
  def validate_m(cls, v: int) -> int:
    if v < 1:
      raise ValueError(f"Operator order m must be at least 1, got: {v}")
    return v


class GridSection(BaseModel):
  points_per_axis: int = 32
  half_width: float = 4.0

  @field_validator("points_per_axis")
  @classmethod
  def validate_points(cls, v: int) -> int:
    if v <= 0 or v & (v - 1):
      raise ValueError(f"points_per_axis must be a power of two, got: {v}")
    return v

  @field_validator("half_width")
  @classmethod
  def validate_half_width(cls, v: float) -> float:
    if v <= 0:
      raise ValueError(f"half_width must be positive, got: {v}")
    return v


class ZetaSection(BaseModel):
  """Magnitudes s and the direction of Re zeta / Im zeta"""

  s_list: list[float] = [4.0, 8.0, 16.0]
  real: Optional[list[float]] = None
  imag: Optional[list[float]] = None

  @field_validator("s_list", mode="before")
  @classmethod
  def parse_s_list(cls, v):
    """Accept a single number or a list"""
    match v:
      case int() | float():
        return [float(v)]
      case list() | tuple():
        return list(v)
      case _:
        return v

  @field_validator("s_list")
  @classmethod
  def validate_s_list(cls, v: list[float]) -> list[float]:
    if not v or any(s <= 0 for s in v):
      raise ValueError(f"s_list must hold positive values, got: {v}")
    return v


class GreenSection(BaseModel):
  backend: Literal["naive", "chart", "paper"] = "chart"
  interpolation_order: int = 3
  sigma: Optional[float] = None
  allow_unsafe: bool = False
  mollifier_fraction: float = 0.125

  @field_validator("backend")
  @classmethod
  def normalize_backend(cls, v: str) -> str:
    # "paper" names the chart backend
    return "chart" if v == "paper" else v

  @field_validator("mollifier_fraction")
  @classmethod
  def validate_fraction(cls, v: float) -> float:
    if v <= 0:
      raise ValueError(f"mollifier_fraction must be positive, got: {v}")
    return v


class CGOSection(BaseModel):
  tol: float = 1e-8
  max_iter: int = 200
  s_min: float = 2.0
  compact_fraction: float = 0.5

  @field_validator("tol", "s_min")
  @classmethod
  def validate_positive(cls, v: float) -> float:
    if v <= 0:
      raise ValueError(f"Value must be positive, got: {v}")
    return v

  @field_validator("max_iter")
  @classmethod
  def validate_max_iter(cls, v: int) -> int:
    if v < 1:
      raise ValueError(f"max_iter must be at least 1, got: {v}")
    return v

  @field_validator("compact_fraction")
  @classmethod
  def validate_compact(cls, v: float) -> float:
    if not 0 < v <= 1:
      raise ValueError(f"compact_fraction must lie in (0, 1], got: {v}")
    return v


class PotentialSection(BaseModel):
  kind: Literal["bump", "power_law", "file", "zero"] = "bump"
  height: float = 5.0
  radius: Optional[float] = None
  center: Optional[list[float]] = None
  exponent: float = 1.0
  path: Optional[str] = None

  @model_validator(mode="after")
  def validate_file(self):
    if self.kind == "file" and not self.path:
      raise ValueError("potential kind 'file' requires a path")
    return self


class ForwardSection(BaseModel):
  basis_size: int = 6
  trace_size: int = 3
  quadrature_points: Optional[int] = None
  domain_half_width: float = 2.0

  @field_validator("basis_size", "trace_size")
  @classmethod
  def validate_sizes(cls, v: int) -> int:
    if v < 1:
      raise ValueError(f"Basis sizes must be at least 1, got: {v}")
    return v


class ReconstructSection(BaseModel):
  xi_radius: float = 4.0
  s_schedule: Optional[list[float]] = None
  conjugate_symmetric: bool = True
  mode: Literal["oracle", "boundary"] = "oracle"
  projection_tol: float = 2e-2


class CarlemanSection(BaseModel):
  k_list: list[float] = [1.0, 2.0, 4.0, 8.0, 16.0]
  t_offset: float = 0.5
  ladder: list[float] = [1.0]
  samples: int = 4
  kind: Literal["bump", "annular", "random"] = "bump"


class OutputSection(BaseModel):
  directory: Optional[Path] = None


class RunConfig(BaseModel):
  """Complete run configuration"""

  problem: ProblemSection = ProblemSection()
  grid: GridSection = GridSection()
  zeta: ZetaSection = ZetaSection()
  green: GreenSection = GreenSection()
  cgo: CGOSection = CGOSection()
  potential: PotentialSection = PotentialSection()
  forward: ForwardSection = ForwardSection()
  reconstruct: ReconstructSection = ReconstructSection()
  carleman: CarlemanSection = CarlemanSection()
  output: OutputSection = OutputSection()
  seed: Optional[int] = None

  @field_validator("potential", mode="before")
  @classmethod
  def parse_potential(cls, v):
    """`potential: bump` is shorthand for `potential: {kind: bump}`"""
    match v:
      case str():
        return {"kind": v}
      case _:
        return v

  @model_validator(mode="after")
  def validate_cross_fields(self):
    if self.grid.points_per_axis < 8:
      raise ValueError(f"points_per_axis must be at least 8, got: {self.grid.points_per_axis}")
    if not 1 <= self.green.interpolation_order <= 5:
      raise ValueError(
        f"interpolation_order must lie in 1..5, got: {self.green.interpolation_order}"
      )
    for name, vector in (("real", self.zeta.real), ("imag", self.zeta.imag)):
      if vector is not None and len(vector) != self.problem.n:
        raise ValueError(f"zeta.{name} must have {self.problem.n} components")
    return self

  def require_subcritical(self) -> None:
    n, m = self.problem.n, self.problem.m
    if not n > 2 * m:
      raise ConfigError(f"This command requires n > 2m, got n={n}, m={m}")

  def zeta_direction(self) -> list[complex]:
    """Re zeta along `real` (default e_1), Im zeta along `imag` (default -e_2)"""
    n = self.problem.n
    real = self.zeta.real or [1.0] + [0.0] * (n - 1)
    imag = self.zeta.imag or [0.0, -1.0] + [0.0] * (n - 2)
    return [complex(a, b) for a, b in zip(real, imag)]

  def sigma(self) -> float:
    """Weight exponent of the decay probe; defaults to the middle of (-m, 1-m)"""
    return self.green.sigma if self.green.sigma is not None else 0.5 - self.problem.m

  def output_dir(self) -> Path:
    return self.output.directory or default_output_dir()

  def effective_seed(self) -> int:
    return self.seed if self.seed is not None else RuntimeSettings.SEED


def _coerce(text: str) -> Any:
  return yaml.safe_load(text)


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
  """
  Apply `section.key=value` overrides; values are parsed as YAML scalars or
  flow collections

  Raises:
      ConfigError: If an override is malformed
  """
  merged = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
  for item in overrides:
    match item.split("=", 1):
      case [path, value] if path.strip():
        keys = path.strip().split(".")
      case _:
        raise ConfigError(f"Override must look like section.key=value, got: {item!r}")
    target = merged
    for key in keys[:-1]:
      node = target.get(key)
      if node is None:
        node = {}
      elif isinstance(node, str):
        node = {"kind": node}
      elif not isinstance(node, dict):
        raise ConfigError(f"Override {item!r} descends into non-mapping {key!r}")
      target[key] = node
      target = node
    try:
      target[keys[-1]] = _coerce(value)
    except yaml.YAMLError as e:
      raise ConfigError(f"Override {item!r} has an unparsable value") from e
  return merged


def parse_run_config(config_path: Path | str, overrides: Optional[list[str]] = None) -> RunConfig:
  """
  Parse a run configuration from a YAML file

  Args:
      config_path: Path to the YAML configuration file
      overrides: optional `section.key=value` strings applied after loading

  Returns:
      RunConfig with all sections validated

  Raises:
      FileNotFoundError: If config file doesn't exist
      yaml.YAMLError: If YAML is malformed
      pydantic.ValidationError: If config doesn't match schema
      ConfigError: If the file is not a mapping or an override is malformed
  """
  config_path = Path(config_path)

  if not config_path.exists():
    raise FileNotFoundError(f"Configuration file not found: {config_path}")

  with open(config_path, "r") as f:
    raw_config = yaml.safe_load(f)

  match raw_config:
    case None:
      raw_config = {}
    case dict():
      pass
    case _:
      raise ConfigError(f"Configuration root must be a mapping: {config_path}")

  return RunConfig(**apply_overrides(raw_config, overrides or []))
