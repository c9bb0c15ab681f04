"""Scenario runner and command-line interface."""

from .config import SCENARIOS, ConfigError, ScenarioConfig, build_config, resolve_document, validate_config
from .scenarios import RunReport, StageError, run_scenario

__all__ = [
    "SCENARIOS",
    "ConfigError",
    "RunReport",
    "ScenarioConfig",
    "StageError",
    "build_config",
    "resolve_document",
    "run_scenario",
    "validate_config",
]
