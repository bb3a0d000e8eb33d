"""YAML run configuration for the polycgo commands"""

from .config_parser import RunConfig, apply_overrides, parse_run_config

__all__ = ["RunConfig", "apply_overrides", "parse_run_config"]
