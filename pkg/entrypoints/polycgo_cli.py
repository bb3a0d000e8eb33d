"""
polycgo command line

Every command reads one YAML run config (see run_config/example_config.yaml),
writes its artifacts to the output directory and prints a JSON summary on
stdout. Logs go to stderr.

Exit codes: 0 all checked contracts hold, 1 contract or numerical failure,
2 usage, configuration or missing-input error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import yaml
from pydantic import ValidationError

from polycgo.carleman_probe import (
  CarlemanConfig,
  build_test_set,
  compare_constants,
  probe_linear,
  probe_log,
)
from polycgo.cgo_solver import (
  Potential,
  check_regularity,
  probe_operator_norm,
  sweep,
  zeta_along,
)
from polycgo.dirichlet_forward import (
  assemble_dn_map,
  assemble_form,
  build_basis,
  check_assumption_A,
  integral_identity_check,
  solve_dirichlet,
)
from polycgo.exceptions import DependencyError, ErrorReport, PolyError
from polycgo.field_core import ComplexField, GridSpec, gaussian_field
from polycgo.field_io import (
  read_dn_map,
  read_field,
  to_json_ready,
  write_csv,
  write_dn_map,
  write_field,
  write_json,
)
from polycgo.green_operator import (
  assemble,
  dilation_matched_operators,
  normalize_backend,
  probe_lp_bound,
  probe_lp_fixed_field,
  probe_weighted_decay,
  random_test_functions,
  verify_chart_kernel,
  verify_fundamental,
)
from polycgo.parallel import parallel_map
from polycgo.potentials import potential_from_config
from polycgo.reconstruction import CGOSettings, low_pass_error, reconstruct, reconstruct_oracle
from polycgo.settings import RuntimeSettings, default_config_path
from run_config.config_parser import RunConfig, apply_overrides, parse_run_config

logger = logging.getLogger(__name__)

# Contract thresholds checked by the commands
NAIVE_RESIDUAL_LIMIT = 1e-6
CHART_RESIDUAL_LIMIT = 1e-2
CHART_KERNEL_LIMIT = 1e-3
CARLEMAN_SPREAD_LIMIT = 3.0
DN_SYMMETRY_LIMIT = 1e-8
IDENTITY_LIMIT = 1e-9
LOW_PASS_LIMIT = 0.2


def load_config(config_path: Optional[Path], overrides: list[str]) -> RunConfig:
  """Explicit --config, else the user's default config if present, else defaults"""
  if config_path is None:
    candidate = default_config_path()
    if candidate.exists():
      config_path = candidate
  if config_path is None:
    return RunConfig(**apply_overrides({}, overrides))
  config = parse_run_config(config_path, overrides)
  logger.info(f"Loaded configuration from {config_path}")
  return config


def _grid(config: RunConfig) -> GridSpec:
  return GridSpec(
    n=config.problem.n,
    points_per_axis=config.grid.points_per_axis,
    half_width=config.grid.half_width,
    m=config.problem.m,
  )


def _potential_field(config: RunConfig, grid: GridSpec, path: Optional[Path]) -> ComplexField:
  """q from --potential (sampled on the config grid) or from the potential section"""
  spec = {"kind": "file", "path": str(path)} if path is not None else config.potential.model_dump()
  return potential_from_config(grid, config.problem.m, spec)


def run_green_verify(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> tuple[dict, list[str]]:
  n, m = config.problem.n, config.problem.m
  base = _grid(config)
  direction = np.asarray(config.zeta_direction())
  backend = normalize_backend(config.green.backend)
  allow_unsafe = args.allow_unsafe or config.green.allow_unsafe
  s_list = sorted(config.zeta.s_list)

  # both backends are checked on frequency grids that keep half a cell off Sigma
  def build(s: float):
    zeta = zeta_along(direction, s)
    return assemble(
      zeta,
      m,
      base.avoiding(zeta),
      backend,
      config.green.interpolation_order,
      allow_unsafe,
      config.green.mollifier_fraction,
    )

  operators = parallel_map(build, s_list)
  f = gaussian_field(base, width=base.half_width / 8)
  failures = []

  limit = NAIVE_RESIDUAL_LIMIT if backend == "naive" else CHART_RESIDUAL_LIMIT
  residuals = [{"s": G.zeta.s, "residual": verify_fundamental(G, f)} for G in operators]
  write_csv(out_dir / "green_residuals.csv", residuals, ["s", "residual"])
  if any(not row["residual"] <= limit for row in residuals):
    failures.append("fundamental_residual")

  decay = probe_weighted_decay(operators, f, config.sigma())
  write_csv(
    out_dir / "green_decay.csv",
    [{"s": s, "weighted_norm": v} for s, v in decay.rows],
    ["s", "weighted_norm"],
  )
  if len(decay.rows) > 1 and not decay.passed:
    failures.append("weighted_decay")

  summary: dict = {
    "backend": backend,
    "residual_limit": limit,
    "residuals": residuals,
    "decay": {"sigma": decay.sigma, "slope": decay.slope, "passed": decay.passed},
  }

  if n > 2 * m:
    family = dilation_matched_operators(
      direction,
      s_list,
      base.avoiding(direction),
      m,
      s_ref=s_list[0],
      backend=backend,
      interpolation_order=config.green.interpolation_order,
      allow_unsafe=allow_unsafe,
    )
    lp = probe_lp_bound(family, lambda grid: gaussian_field(grid, width=grid.half_width / 8))
    write_csv(
      out_dir / "green_lp.csv", [{"s": s, "ratio": r} for s, r in lp.rows], ["s", "ratio"]
    )
    fixed = probe_lp_fixed_field(operators, f)
    write_csv(
      out_dir / "green_lp_fixed.csv",
      [{"s": s, "ratio": r} for s, r in fixed.rows],
      ["s", "ratio"],
    )
    summary["lp"] = {
      "p": lp.p,
      "q": lp.q,
      "spread": lp.spread,
      "passed": lp.passed,
      "fixed_field": {
        "peak": fixed.peak,
        "free_resolvent": fixed.reference,
        "growth": fixed.growth,
        "passed": fixed.passed,
      },
    }
    if not lp.passed:
      failures.append("lp_scaling")
    if not fixed.passed:
      failures.append("lp_uniformity")
  else:
    logger.info(f"L^p probe skipped: needs n > 2m, got n={n}, m={m}")

  if backend == "chart":
    tests = random_test_functions(10, config.effective_seed())
    error = verify_chart_kernel(m, 2, tests)
    summary["chart_kernel_error"] = error
    if not error <= CHART_KERNEL_LIMIT:
      failures.append("chart_kernel_identity")

  return summary, failures


def run_cgo_build(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> tuple[dict, list[str]]:
  config.require_subcritical()
  m = config.problem.m
  grid = _grid(config)
  potential = Potential(_potential_field(config, grid, args.potential))
  write_field(out_dir / "potential", potential.q, {"source": config.potential.kind})
  direction = np.asarray(config.zeta_direction())

  result = sweep(
    potential,
    config.zeta.s_list,
    direction,
    m,
    backend=config.green.backend,
    interpolation_order=config.green.interpolation_order,
    tol=config.cgo.tol,
    max_iter=config.cgo.max_iter,
    s_min=config.cgo.s_min,
    compact_fraction=config.cgo.compact_fraction,
  )
  rows = []
  for solution, row in zip(result.solutions, result.rows):
    regularity = check_regularity(solution, solution.compact_half_width, potential)
    rows.append({**row, "hm_seminorm": regularity.seminorm, "qu_norm": regularity.qu_norm})
    write_field(out_dir / f"cgo_r_s{solution.zeta.s:g}", solution.r, solution.diagnostics())
  write_csv(out_dir / "cgo_sweep.csv", rows)

  summary: dict = {
    "r_lq_growth": result.r_lq_growth,
    "r_lq_spread": result.r_lq_spread,
    "compact_monotone": result.compact_monotone,
    "contraction_ok": result.contraction_ok,
    "rows": rows,
  }
  failures = []
  if not all(row["converged"] for row in rows):
    failures.append("cgo_convergence")
  if not result.passed:
    failures.append("cgo_uniformity")

  if args.operator_norm:
    operators = parallel_map(
      lambda s: assemble(
        zeta_along(direction, s),
        m,
        grid.avoiding(direction) if config.green.backend == "naive" else grid,
        config.green.backend,
        config.green.interpolation_order,
      ),
      sorted(config.zeta.s_list),
    )
    probe = probe_operator_norm(potential, operators, seed=config.effective_seed())
    write_csv(
      out_dir / "cgo_operator_norm.csv",
      [{"s": s, "norm": v} for s, v in probe.rows],
      ["s", "norm"],
    )
    summary["operator_norm"] = {"slope": probe.slope, "decreasing": probe.decreasing}
    if not probe.passed:
      failures.append("operator_norm_decay")

  return summary, failures


def run_dn_sim(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> tuple[dict, list[str]]:
  seed = config.effective_seed()
  grid = _grid(config)
  # the forward solver samples q by interpolation, any grid covering the domain will do
  q = read_field(args.potential) if args.potential else _potential_field(config, grid, None)
  write_field(out_dir / "potential", q, {"source": config.potential.kind})
  basis = build_basis(
    n=config.problem.n,
    m=config.problem.m,
    half_width=config.forward.domain_half_width,
    basis_size=config.forward.basis_size,
    trace_size=config.forward.trace_size,
    quadrature_points=config.forward.quadrature_points,
  )
  forms_q = assemble_form(basis, q)
  forms_0 = assemble_form(basis, None)
  assumption = check_assumption_A(forms_q)
  dn = assemble_dn_map(forms_q, seed=seed)
  dn0 = assemble_dn_map(forms_0, seed=seed)
  write_dn_map(out_dir / "dn_q", dn)
  write_dn_map(out_dir / "dn_0", dn0)

  rng = np.random.default_rng(seed)
  size = basis.lift_size
  f1 = rng.normal(size=size) + 1j * rng.normal(size=size)
  f2 = rng.normal(size=size) + 1j * rng.normal(size=size)
  u1 = solve_dirichlet(forms_q, f1)
  u2 = solve_dirichlet(forms_0, f2)
  identity = integral_identity_check(forms_q, forms_0, u1, u2, dn, dn0)

  failures = []
  symmetry = dn.symmetry_defect()
  real_q = bool(np.all(np.isreal(q.data)))
  if real_q and not symmetry <= DN_SYMMETRY_LIMIT:
    failures.append("dn_symmetry")
  if not identity.residual <= IDENTITY_LIMIT:
    failures.append("integral_identity")

  summary = {
    "basis": basis.descriptor(),
    "dn_size": dn.size,
    "assumption_A": {
      "sigma_min": assumption.sigma_min,
      "relative": assumption.relative,
      "near_singular": assumption.near_singular,
    },
    "symmetry_defect": symmetry,
    "real_potential": real_q,
    "extension_residual": dn.metadata.get("extension_residual"),
    "identity_residual": identity.residual,
    "files": {"dn": str(out_dir / "dn_q.json"), "dn0": str(out_dir / "dn_0.json")},
  }
  return summary, failures


def _dn_input(path: Optional[Path], flag: str):
  if path is None:
    raise DependencyError(
      f"boundary mode needs {flag}", hint="run `polycgo dn-sim` first and pass dn_q.json / dn_0.json"
    )
  if not Path(path).with_suffix(".json").exists():
    raise DependencyError(f"{flag} file {path} does not exist", hint="run `polycgo dn-sim` first")
  return read_dn_map(path)


def run_reconstruct(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> tuple[dict, list[str]]:
  settings = config.reconstruct
  mode = args.mode or settings.mode
  grid = _grid(config)
  q_true: Optional[ComplexField] = None

  match mode:
    case "boundary":
      dn = _dn_input(args.dn, "--dn")
      dn0 = _dn_input(args.dn0, "--dn0")
      if args.potential is not None:
        q_true = read_field(args.potential)
      result = reconstruct(
        dn,
        dn0,
        grid,
        settings.xi_radius,
        settings.s_schedule,
        settings.conjugate_symmetric,
        settings.projection_tol,
      )
    case _:
      config.require_subcritical()
      q_true = _potential_field(config, grid, args.potential)
      cgo = CGOSettings(
        m=config.problem.m,
        backend=config.green.backend,
        interpolation_order=config.green.interpolation_order,
        tol=config.cgo.tol,
        max_iter=config.cgo.max_iter,
        s_min=config.cgo.s_min,
      )
      result = reconstruct_oracle(
        q_true, settings.xi_radius, settings.s_schedule, cgo, settings.conjugate_symmetric
      )

  for stage in result.stages:
    write_field(out_dir / f"reconstruction_stage{stage.schedule_index}", stage.field)
  write_field(out_dir / "reconstruction", result.field, {"mode": mode})
  if result.rows:
    write_csv(out_dir / "reconstruct_coefficients.csv", result.rows)

  summary: dict = {
    "mode": mode,
    "xi_radius": result.xi_radius,
    "stages": len(result.stages),
    "coefficients": len(result.rows),
    "missing": len(result.missing),
    "unresolved": len(result.unresolved()),
    "rejected": len(result.rejected),
    "imaginary_ratio": result.imaginary_ratio(),
  }
  failures = []
  if result.rejected_unresolved():
    failures.append("projection_residual")
  if q_true is not None and q_true.grid.same_nodes(grid):
    errors = low_pass_error(result, q_true)
    summary["low_pass_errors"] = errors
    if not errors[-1] <= LOW_PASS_LIMIT:
      failures.append("low_pass_error")
  return summary, failures


def run_carleman_probe(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> tuple[dict, list[str]]:
  n, m = config.problem.n, config.problem.m
  seed = config.effective_seed()
  grid = _grid(config)
  section = config.carleman
  k_list = tuple((float(k),) + (0.0,) * (n - 1) for k in section.k_list)

  linear_config = CarlemanConfig(n, m, "linear", k_list=k_list)
  samples = build_test_set(grid, section.kind, seed, section.samples, section.ladder)
  linear = probe_linear(linear_config, samples)

  t = float(n / linear_config.q_exact) + section.t_offset
  log_config = CarlemanConfig(n, m, "log", t=t)
  annular = build_test_set(grid, "annular", seed, section.samples, section.ladder)
  log = probe_log(log_config, annular)

  write_csv(out_dir / "carleman_ratios.csv", linear.csv_rows() + log.csv_rows())
  failures = []
  if not linear.spread <= CARLEMAN_SPREAD_LIMIT:
    failures.append("carleman_k_uniformity")

  summary = {
    "p": linear_config.p,
    "q": linear_config.q,
    "exponents_consistent": linear_config.exponents_consistent(),
    "linear": {
      "constant": linear.constant,
      "spread": linear.spread,
      "per_parameter": linear.per_parameter,
      "skipped": linear.skipped,
    },
    "log": {"t": t, "constant": log.constant, "skipped": log.skipped},
    "comparison": compare_constants(linear, log),
  }
  return summary, failures


COMMANDS = {
  "green-verify": run_green_verify,
  "cgo-build": run_cgo_build,
  "dn-sim": run_dn_sim,
  "reconstruct": run_reconstruct,
  "carleman-probe": run_carleman_probe,
}


def build_parser() -> argparse.ArgumentParser:
  parser = argparse.ArgumentParser(
    prog="polycgo",
    description="Green operators, CGO solutions and reconstruction for (-Delta)^m + q.",
  )
  common = argparse.ArgumentParser(add_help=False)
  common.add_argument(
    "--config",
    type=Path,
    help="Path to run config (default: ~/.config/polycgo/config.yaml if present)",
  )
  common.add_argument(
    "--set",
    dest="overrides",
    action="append",
    default=[],
    metavar="SECTION.KEY=VALUE",
    help="Override a config key; may be repeated",
  )
  common.add_argument("--output", type=Path, help="Output directory (overrides output.directory)")

  sub = parser.add_subparsers(dest="command", required=True)
  green = sub.add_parser("green-verify", parents=[common], help="Check the Green operator contracts")
  green.add_argument(
    "--allow-unsafe",
    action="store_true",
    help="Allow the naive backend for m >= 2",
  )

  cgo = sub.add_parser("cgo-build", parents=[common], help="Build CGO solutions along the s-list")
  cgo.add_argument("--potential", type=Path, help="Potential field file instead of the config")
  cgo.add_argument(
    "--operator-norm", action="store_true", help="Also estimate ||d2 G d1|| per s"
  )

  dn = sub.add_parser("dn-sim", parents=[common], help="Simulate DN maps for q and for 0")
  dn.add_argument("--potential", type=Path, help="Potential field file instead of the config")

  rec = sub.add_parser("reconstruct", parents=[common], help="Recover low frequencies of q")
  rec.add_argument("--mode", choices=["oracle", "boundary"], help="Override reconstruct.mode")
  rec.add_argument("--dn", type=Path, help="DN map of q (boundary mode)")
  rec.add_argument("--dn0", type=Path, help="DN map of the zero potential (boundary mode)")
  rec.add_argument("--potential", type=Path, help="True potential (oracle input / error report)")

  sub.add_parser("carleman-probe", parents=[common], help="Estimate Carleman constants")
  return parser


def _emit(command: str, payload: dict, out_dir: Optional[Path]) -> None:
  if out_dir is not None:
    try:
      write_json(out_dir / f"{command}_summary.json", payload)
    except OSError as e:
      logger.error(f"Could not write summary: {e}")
  print(json.dumps(to_json_ready(payload), indent=2))


def _as_poly_error(exc: Exception) -> PolyError:
  match exc:
    case PolyError():
      return exc
    case FileNotFoundError():
      return PolyError.from_exception(exc, "FILE_NOT_FOUND", "io")
    case yaml.YAMLError():
      return PolyError.from_exception(exc, "INVALID_YAML", "config", "Malformed YAML")
    case ValidationError():
      return PolyError.from_exception(exc, "INVALID_CONFIG", "config", "Invalid configuration")
    case _:
      return PolyError.from_exception(exc, "UNEXPECTED_ERROR", "unknown")


def main(argv: Optional[list[str]] = None) -> int:
  """Entry point of the polycgo console script; returns the exit code"""
  parser = build_parser()
  args = parser.parse_args(argv)

  logging.basicConfig(
    level=RuntimeSettings.LOG_LEVEL,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    stream=sys.stderr,
  )

  out_dir: Optional[Path] = None
  seed: Optional[int] = None
  try:
    config = load_config(args.config, args.overrides)
    seed = config.effective_seed()
    out_dir = args.output or config.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    summary, failures = COMMANDS[args.command](config, args, out_dir)
  except Exception as exc:
    error = _as_poly_error(exc)
    logger.error(f"{args.command} failed: {error.description}")
    report: ErrorReport = error.to_report()
    _emit(
      args.command,
      {"command": args.command, "seed": seed, "status": "error", "error": report.model_dump()},
      out_dir,
    )
    return error.exit_code

  for name in failures:
    logger.error(f"Contract failed: {name}")
  status = "failed" if failures else "passed"
  _emit(
    args.command,
    {
      "command": args.command,
      "seed": seed,
      "status": status,
      "failed_invariants": failures,
      "output_directory": str(out_dir),
      **summary,
    },
    out_dir,
  )
  logger.info(f"{args.command} {status}; artifacts in {out_dir}")
  return 1 if failures else 0


if __name__ == "__main__":
  sys.exit(main())
