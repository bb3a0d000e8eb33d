"""
Process-level settings for polycgo
Reads worker count, log level and default seed from the environment
"""

import os
import logging
from pathlib import Path

from dotenv import load_dotenv
from platformdirs import user_config_dir, user_data_dir

logger = logging.getLogger(__name__)

# Load environment variables from .env file
load_dotenv(os.getenv("POLYCGO_DOTENV_PATH"))

APP_NAME = "polycgo"


def default_config_path() -> Path:
  """Location of the user's default run configuration"""
  return Path(user_config_dir(APP_NAME, ensure_exists=True)) / "config.yaml"


def default_output_dir() -> Path:
  """Directory for run artifacts when the config names none"""
  return Path(user_data_dir(APP_NAME, ensure_exists=True)) / "runs"


def _int_env(name: str, default: int) -> int:
  raw = os.getenv(name)
  if raw is None or raw.strip() == "":
    return default
  try:
    return int(raw)
  except ValueError:
    logger.warning(f"Ignoring non-integer {name}={raw!r}, using {default}")
    return default


class RuntimeSettings:
  """Environment-driven settings"""

  # Worker threads for sweeps, charts and samples
  THREADS = max(1, _int_env("POLYCGO_THREADS", os.cpu_count() or 1))

  # Logging
  LOG_LEVEL = os.getenv("POLYCGO_LOG_LEVEL", "INFO")

  # Seed used when the run config does not carry one
  SEED = _int_env("POLYCGO_SEED", 20240601)
