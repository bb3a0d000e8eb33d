"""Numerical machinery for the perturbed polyharmonic operator (-Delta)^m + q"""

from .carleman_probe import (
  CarlemanConfig,
  CarlemanResult,
  build_test_set,
  compare_constants,
  probe_linear,
  probe_log,
)
from .cgo_solver import (
  CGOSolution,
  Potential,
  TruncationScheme,
  build_cgo,
  check_regularity,
  probe_operator_norm,
  sweep,
  truncation_diagnostics,
)
from .dirichlet_forward import (
  DNMap,
  FormMatrices,
  GalerkinBasis,
  assemble_dn_map,
  assemble_form,
  build_basis,
  check_assumption_A,
  integral_identity_check,
  solve_dirichlet,
)
from .exceptions import ErrorReport, PolyError
from .field_core import (
  ComplexField,
  GridSpec,
  WeightedNormSpec,
  apply_conjugated_op,
  fft_forward,
  fft_inverse,
  norm,
)
from .green_operator import (
  ChartKernel,
  GreenOperator,
  assemble,
  probe_lp_bound,
  probe_weighted_decay,
  verify_chart_kernel,
  verify_fundamental,
)
from .reconstruction import (
  ReconstructionResult,
  ZetaFrame,
  build_frame,
  extract_fourier_coefficient,
  low_pass_error,
  reconstruct,
  reconstruct_oracle,
)
from .symbol_geometry import (
  Diffeo,
  PartitionOfUnity,
  ZetaVector,
  build_partition,
  canonicalize,
  check_symbol_bounds,
  dist_to_char_set,
  eval_symbol,
)

__all__ = [
  "CGOSolution",
  "CarlemanConfig",
  "CarlemanResult",
  "ChartKernel",
  "ComplexField",
  "DNMap",
  "Diffeo",
  "ErrorReport",
  "FormMatrices",
  "GalerkinBasis",
  "GreenOperator",
  "GridSpec",
  "PartitionOfUnity",
  "PolyError",
  "Potential",
  "ReconstructionResult",
  "TruncationScheme",
  "WeightedNormSpec",
  "ZetaFrame",
  "ZetaVector",
  "apply_conjugated_op",
  "assemble",
  "assemble_dn_map",
  "assemble_form",
  "build_basis",
  "build_cgo",
  "build_frame",
  "build_partition",
  "build_test_set",
  "canonicalize",
  "check_assumption_A",
  "check_regularity",
  "check_symbol_bounds",
  "compare_constants",
  "dist_to_char_set",
  "eval_symbol",
  "extract_fourier_coefficient",
  "fft_forward",
  "fft_inverse",
  "integral_identity_check",
  "low_pass_error",
  "norm",
  "probe_linear",
  "probe_log",
  "probe_lp_bound",
  "probe_operator_norm",
  "probe_weighted_decay",
  "reconstruct",
  "reconstruct_oracle",
  "solve_dirichlet",
  "sweep",
  "truncation_diagnostics",
  "verify_chart_kernel",
  "verify_fundamental",
]
