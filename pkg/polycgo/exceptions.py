"""
Custom exceptions for polycgo
"""

from typing import Literal, Optional, cast
from pydantic import BaseModel, Field


# All possible error sources in the library
ErrorSource = Literal[
  "field_core",  # Grids, fields, transforms and norms
  "symbol_geometry",  # Isotropic vectors, symbol, cover, charts
  "green_operator",  # Green operator assembly and probes
  "carleman_probe",  # Carleman constant probes
  "cgo_solver",  # CGO construction
  "dirichlet_forward",  # Galerkin forward solver and DN maps
  "reconstruction",  # Frames and Fourier extraction
  "config",  # Run configuration
  "io",  # Field and DN-map files
  "cli",  # Command dispatch
  "unknown",  # Uncategorized errors
]


def get_exit_code(source: ErrorSource) -> int:
  """Determine the process exit code based on error source"""
  if source in ["config", "io", "cli"]:
    return 2  # Usage / configuration error
  elif source in [
    "field_core",
    "symbol_geometry",
    "green_operator",
    "carleman_probe",
    "cgo_solver",
    "dirichlet_forward",
    "reconstruction",
    "unknown",
  ]:
    return 1  # Invariant or numerical failure
  else:
    return 1


class ErrorReport(BaseModel):
  """Standardized error record embedded in JSON summaries"""

  description: str = Field(..., description="Human-readable error message")
  name: str = Field(..., description="Unique error identifier")
  source: ErrorSource = Field(..., description="Where the error originated")
  caused_by: Optional[str] = Field(
    None, description="Original error details if this is a chained error"
  )


class PolyError(Exception):
  """
  Base class for polycgo errors.
  Every failure surfaced by the library or the CLI is converted to this format.
  """

  def __init__(
    self,
    description: str,
    name: str,
    source: ErrorSource,
    caused_by: Optional[str] = None,
  ):
    """
    Initialize a polycgo error

    Args:
        description: Human-readable error message
        name: Unique error identifier (e.g., "NOT_ISOTROPIC")
        source: Where the error originated from
        caused_by: Original error details if this wraps another error
    """
    self.description: str = description
    self.name: str = name
    self.source: ErrorSource = source
    self.caused_by: Optional[str] = caused_by
    super().__init__(description)

  @property
  def exit_code(self) -> int:
    return get_exit_code(self.source)

  def to_report(self) -> ErrorReport:
    """Convert to ErrorReport model for JSON summaries"""
    return ErrorReport(
      description=self.description,
      name=self.name,
      source=cast(ErrorSource, self.source),
      caused_by=self.caused_by,
    )

  @classmethod
  def from_exception(
    cls,
    e: Exception,
    name: str,
    source: ErrorSource,
    context: Optional[str] = None,
  ) -> "PolyError":
    """
    Create a PolyError from an existing exception

    Args:
        e: The original exception
        name: Error identifier for this error
        source: Where this error originated
        context: Additional context to prepend to the description

    Returns:
        PolyError with original exception details preserved
    """
    original_msg = str(e)
    description = f"{context}: {original_msg}" if context else original_msg

    return cls(
      description=description,
      name=name,
      source=source,
      caused_by=f"{e.__class__.__name__}: {original_msg}",
    )


class ContractViolation(PolyError):
  def __init__(self, description: str, source: ErrorSource = "field_core"):
    super().__init__(description, "CONTRACT_VIOLATION", source)


class InvalidExponent(PolyError):
  def __init__(self, description: str, source: ErrorSource = "field_core"):
    super().__init__(description, "INVALID_EXPONENT", source)


class GridMismatch(PolyError):
  def __init__(self, description: str, source: ErrorSource = "field_core"):
    super().__init__(description, "GRID_MISMATCH", source)


class NotIsotropic(PolyError):
  def __init__(self, description: str):
    super().__init__(description, "NOT_ISOTROPIC", "symbol_geometry")


class ZeroVector(PolyError):
  def __init__(self, description: str):
    super().__init__(description, "ZERO_VECTOR", "symbol_geometry")


class OutOfChart(PolyError):
  def __init__(self, description: str):
    super().__init__(description, "OUT_OF_CHART", "symbol_geometry")


class NotLocallyIntegrable(PolyError):
  def __init__(self, description: str):
    super().__init__(description, "NOT_LOCALLY_INTEGRABLE", "green_operator")


class ChartCoverageError(PolyError):
  def __init__(self, description: str):
    super().__init__(description, "CHART_COVERAGE", "green_operator")


class InvalidSigma(PolyError):
  def __init__(self, description: str):
    super().__init__(description, "INVALID_SIGMA", "green_operator")


class PreconditionError(PolyError):
  def __init__(self, description: str, source: ErrorSource = "carleman_probe"):
    super().__init__(description, "PRECONDITION_FAILED", source)


class InvalidPotential(PolyError):
  def __init__(self, description: str):
    super().__init__(description, "INVALID_POTENTIAL", "cgo_solver")


class SeriesDiverged(PolyError):
  """Raised when the Neumann series stops contracting"""

  def __init__(self, description: str, factor: float):
    self.factor = factor
    super().__init__(description, "SERIES_DIVERGED", "cgo_solver")


class NumericalFailure(PolyError):
  def __init__(self, description: str, source: ErrorSource = "cgo_solver"):
    super().__init__(description, "NUMERICAL_FAILURE", source)


class QuadratureUnderresolved(PolyError):
  def __init__(self, description: str):
    super().__init__(description, "QUADRATURE_UNDERRESOLVED", "dirichlet_forward")


class AssumptionAViolated(PolyError):
  def __init__(self, description: str, sigma_min: float):
    self.sigma_min = sigma_min
    super().__init__(description, "ASSUMPTION_A_VIOLATED", "dirichlet_forward")


class FrameInfeasible(PolyError):
  def __init__(self, description: str):
    super().__init__(description, "FRAME_INFEASIBLE", "reconstruction")


class DependencyError(PolyError):
  """Missing upstream artifact; carries a remediation hint"""

  def __init__(self, description: str, hint: Optional[str] = None):
    self.hint = hint
    text = f"{description} (hint: {hint})" if hint else description
    super().__init__(text, "MISSING_DEPENDENCY", "cli")


class ConfigError(PolyError):
  def __init__(self, description: str):
    super().__init__(description, "INVALID_CONFIG", "config")


class InvariantFailure(PolyError):
  """A checked contract did not hold; `invariant` names it"""

  def __init__(self, invariant: str, description: str, source: ErrorSource):
    self.invariant = invariant
    super().__init__(f"{invariant}: {description}", "INVARIANT_FAILED", source)


class FileFormatError(PolyError):
  def __init__(self, description: str):
    super().__init__(description, "INVALID_FILE", "io")
