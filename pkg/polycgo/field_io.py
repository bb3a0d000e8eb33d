"""
On-disk formats

Fields and DN maps are a JSON header `<stem>.json` next to raw little-endian
complex128 samples `<stem>.bin` (row-major, interleaved real/imaginary).
Tables go to CSV with a header row, diagnostics to indented JSON.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from polycgo.dirichlet_forward import DNMap
from polycgo.exceptions import ConfigError, FileFormatError
from polycgo.field_core import ComplexField, GridSpec

logger = logging.getLogger(__name__)

DTYPE = "complex128-little-endian"


def _paths(path: Path | str) -> tuple[Path, Path]:
  path = Path(path)
  stem = path.with_suffix("") if path.suffix in (".json", ".bin") else path
  return stem.with_suffix(".json"), stem.with_suffix(".bin")


def _write_raw(path: Path, data: np.ndarray) -> None:
  np.ascontiguousarray(data, dtype="<c16").tofile(path)


def _read_raw(path: Path, count: int) -> np.ndarray:
  if not path.exists():
    raise FileNotFoundError(f"Sample file not found: {path}")
  data = np.fromfile(path, dtype="<c16")
  if data.size != count:
    raise FileFormatError(f"{path} holds {data.size} samples, header announces {count}")
  return data


def write_field(path: Path | str, f: ComplexField, metadata: Optional[dict] = None) -> Path:
  """Write a field; returns the header path"""
  header_path, bin_path = _paths(path)
  header_path.parent.mkdir(parents=True, exist_ok=True)
  grid = f.grid
  header = {
    "kind": "field",
    "n": grid.n,
    "m": grid.m,
    "points_per_axis": grid.points_per_axis,
    "half_width": grid.half_width,
    "offset_axis": grid.offset_axis,
    "representation": f.representation,
    "dtype": DTYPE,
    "order": "row-major",
    "metadata": metadata or {},
  }
  _write_raw(bin_path, f.flat)
  write_json(header_path, header)
  logger.info(f"Wrote field {header_path}")
  return header_path


def read_field(path: Path | str) -> ComplexField:
  """
  Raises:
      FileNotFoundError: If header or samples are missing
      FileFormatError: On malformed header or size mismatch
  """
  header_path, bin_path = _paths(path)
  if not header_path.exists():
    raise FileNotFoundError(f"Field header not found: {header_path}")
  with open(header_path) as fh:
    header = json.load(fh)
  if header.get("dtype") != DTYPE or header.get("order") != "row-major":
    raise FileFormatError(f"Unsupported sample layout in {header_path}")
  try:
    grid = GridSpec(
      n=header["n"],
      points_per_axis=header["points_per_axis"],
      half_width=header["half_width"],
      m=header.get("m"),
      offset_axis=header.get("offset_axis"),
    )
  except KeyError as e:
    raise FileFormatError(f"{header_path} misses key {e}") from e
  data = _read_raw(bin_path, grid.size)
  return ComplexField(grid, data, header.get("representation", "physical"))


def write_dn_map(path: Path | str, dn: DNMap) -> Path:
  header_path, bin_path = _paths(path)
  header_path.parent.mkdir(parents=True, exist_ok=True)
  header = {
    "kind": "dn_map",
    "size": dn.size,
    "m": dn.basis.get("m"),
    "n": dn.basis.get("n"),
    "basis": dn.basis,
    "solver": dn.metadata,
    "dtype": DTYPE,
    "order": "row-major",
  }
  _write_raw(bin_path, dn.matrix.reshape(-1))
  write_json(header_path, header)
  logger.info(f"Wrote DN map {header_path} ({dn.size}x{dn.size})")
  return header_path


def read_dn_map(path: Path | str) -> DNMap:
  header_path, bin_path = _paths(path)
  if not header_path.exists():
    raise FileNotFoundError(f"DN map header not found: {header_path}")
  with open(header_path) as fh:
    header = json.load(fh)
  if header.get("kind") != "dn_map":
    raise FileFormatError(f"{header_path} is not a DN map header")
  size = int(header["size"])
  matrix = _read_raw(bin_path, size * size).reshape(size, size)
  return DNMap(matrix=matrix, basis=header["basis"], metadata=header.get("solver", {}))


def _plain(value: Any) -> Any:
  match value:
    case np.ndarray():
      return [_plain(v) for v in value.tolist()]
    case np.generic():
      return _plain(value.item())
    case complex():
      return {"real": value.real, "imag": value.imag}
    case float() if not math.isfinite(value):
      return None
    case dict():
      return {str(k): _plain(v) for k, v in value.items()}
    case list() | tuple():
      return [_plain(v) for v in value]
    case Path():
      return str(value)
    case _:
      return value


def to_json_ready(value: Any) -> Any:
  """Replace numpy scalars/arrays, complex numbers and non-finite floats"""
  return _plain(value)


def write_json(path: Path | str, payload: Any) -> Path:
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  with open(path, "w") as fh:
    json.dump(to_json_ready(payload), fh, indent=2)
  return path


def write_csv(path: Path | str, rows: Iterable[dict], columns: Optional[list[str]] = None) -> Path:
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  rows = [to_json_ready(r) for r in rows]
  if columns is None:
    columns = list(rows[0].keys()) if rows else []
  if not columns:
    raise ConfigError(f"No columns to write for {path}")
  with open(path, "w", newline="") as fh:
    writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
    writer.writeheader()
    writer.writerows(rows)
  logger.info(f"Wrote {len(rows)} rows to {path}")
  return path
