# =============================================================================
# 🔧 Configuration Manager (utils/manager/config_manager.py)
# -----------------------------------------------------------------------------
# Purpose:             Loads, validates, overrides and dumps the run configuration
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-14
# Last Updated:        2026-10-14
#
# Description:
#   Centralized configuration manager. Wraps access to config values, runs the section
#   validators, applies command-line overrides and writes the resolved configuration (all
#   defaults filled in) next to run outputs. Integrates with LogManager and PathManager, and
#   hands out the typed views (ModelConfig, PretrainConfig, AdaptConfig, SyntheticConfig).
#
# File Location:        /utils/manager/config_manager.py
# Called By:            tools/*, scripts/nrc_cli.py, utils/experiment.py, tests
# Int. Dependencies:    utils/manager/path_manager, utils/manager/log_manager, utils/validators,
#                       utils/shared/nrc_exceptions
# Ext. Dependencies:    yaml, json, copy, pathlib, typing, os
#
# Notes:
#   - JSON config documents load through yaml.safe_load (JSON is a YAML subset).
#   - Overrides use dot paths ("adapt.seed") and are recorded in the resolved dump.
# =============================================================================

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Optional, TextIO, Union

import yaml

if TYPE_CHECKING:
    from utils.manager.log_manager import LogManager
    from utils.manager.path_manager import PathManager
    from utils.manager.progressor_manager import ProgressorManager

from utils.shared.nrc_exceptions import ConfigValidationError
from utils.validators import (
    adapt_validator,
    diagnostics_validator,
    model_validator,
    pretrain_validator,
    synthetic_validator,
)
from utils.validators.validate_full_config import validate_full_config

SUPPORTED_SCHEMA_VERSIONS = {"1.0.0"}

__all__ = ["ConfigManager", "SUPPORTED_SCHEMA_VERSIONS"]


class ConfigManager:
    """
    Manages configuration for the NRC toolkit.

    Attributes:
        _config (dict): The parsed configuration dictionary.
        _config_path (str): Path to the loaded config file.
        _project_base (Path): Output directory of the run.
        _paths (PathManager): Path manager instance for resolving file paths.
        _lm (LogManager): Logger instance for logging messages.

    Typical usage:
        cfg = ConfigManager.from_file("configs/config.sample.yaml", project_base="runs/demo")
        cfg.validate()
        adapt_config = cfg.adapt_config()
        log = cfg.get_logger()
    """
    def __init__(self, config: Dict, config_path: Optional[str] = None,
                 project_base: Optional[Union[str, Path]] = None, *,
                 console: bool = True, stream: Optional[TextIO] = None):
        """
        Initialize ConfigManager from a parsed config dictionary.

        Args:
            config (dict): Parsed configuration.
            config_path (str, optional): Path to the loaded config file.
            project_base (str or Path): Output directory used for logs and reports.
            console (bool): Echo log lines to the console.
            stream (TextIO, optional): Console stream for log lines.
        """
        if not project_base:
            raise ValueError("An output folder must be supplied when initializing ConfigManager. It is required for "
                             "path resolution and logging operations.")
        self._config = config
        self._config_path = config_path or config.get("__source__")
        self._overrides: Dict[str, Any] = {}
        self._project_base = Path(project_base).resolve()

        from utils.manager.path_manager import PathManager
        from utils.manager.log_manager import LogManager
        self._paths = PathManager(project_base=self._project_base, config=self._config)
        self._lm = LogManager(
            config=self._config,
            path_manager=self._paths,
            enable_file_output=bool(self.get("logs.enable_file_output", False)),
            console=console,
            stream=stream,
        )

    @classmethod
    def from_file(cls, path: Optional[Union[str, Path]] = None, project_base: Optional[Union[str, Path]] = None,
                  **kwargs) -> "ConfigManager":
        """
        Load a YAML (or JSON) configuration file, check its schema version and build a ConfigManager.

        Args:
            path (str | Path, optional): Config file. Defaults to configs/config.yaml, falling back to
                configs/config.sample.yaml.
            project_base (str | Path): Output directory for the run.
            **kwargs: Forwarded to the constructor (console, stream).

        Returns:
            ConfigManager: An instance initialized from the loaded configuration.

        Raises:
            FileNotFoundError: If the configuration file does not exist.
            ConfigValidationError: Invalid YAML/JSON, a non-mapping document or an unsupported schema_version.
        """
        config_path = Path(path) if path else cls._get_default_config_path()
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                config = yaml.safe_load(f) or {}
        except FileNotFoundError:
            raise FileNotFoundError(f"Config file not found: {config_path}")
        except yaml.YAMLError as e:
            raise ConfigValidationError(f"Invalid YAML/JSON in config file: {e}",
                                        validation_context={"path": str(config_path)}) from e

        if not isinstance(config, dict):
            raise ConfigValidationError(
                f"Config file did not parse into a dictionary. Got {type(config).__name__} instead.",
                validation_context={"path": str(config_path)})

        version = config.get("schema_version")
        if version not in SUPPORTED_SCHEMA_VERSIONS:
            raise ConfigValidationError(f"Expected schema_version {sorted(SUPPORTED_SCHEMA_VERSIONS)}, got {version}",
                                        invalid_keys=["schema_version"])

        config["__source__"] = os.path.abspath(config_path)
        cm = cls(config, str(config_path), project_base=project_base, **kwargs)
        cm.get_logger().debug(f"Loaded config from {config['__source__']}")
        return cm

    @staticmethod
    def _get_default_config_path() -> Path:
        """
        Return configs/config.yaml if present, else configs/config.sample.yaml.

        Raises:
            FileNotFoundError: If neither file exists.
        """
        configs = Path(__file__).resolve().parents[2] / "configs"
        for candidate in (configs / "config.yaml", configs / "config.sample.yaml"):
            if candidate.is_file():
                return candidate
        raise FileNotFoundError("No config.yaml or config.sample.yaml found in /configs")

    TOOL_VALIDATORS = {
        "model": model_validator.validate,
        "pretrain": pretrain_validator.validate,
        "adapt": adapt_validator.validate,
        "synthetic": synthetic_validator.validate,
        "diagnostics": diagnostics_validator.validate,
    }

    def validate(self, tool: Optional[str] = None) -> None:
        """
        Run schema validation on the whole config, or on a single section.

        Args:
            tool (str, optional): Section name registered in TOOL_VALIDATORS (e.g. "adapt").

        Raises:
            ConfigValidationError: If the configuration fails validation.
        """
        if tool:
            self.validate_tool_config(tool)
        else:
            validate_full_config(self)

    def validate_tool_config(self, tool: str) -> None:
        """
        Validates one section using its registered validator.

        Raises:
            ConfigValidationError: If the section is invalid or the name is not registered.
        """
        logger = self.get_logger()
        if tool in self.TOOL_VALIDATORS:
            self.TOOL_VALIDATORS[tool](self)
        else:
            logger.error(f"Unknown tool '{tool}'", error_type=ConfigValidationError)

    def get(self, key_path: str, default: Any = None) -> Any:
        """
        Access a nested config key using dot notation.

        Examples:
            cfg.get("adapt.K")
                3
            cfg.get("nonexistent.key", "fallback")
                "fallback"
        """
        value = self._config
        for key in key_path.split("."):
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value

    def apply_overrides(self, overrides: Dict[str, Any]) -> None:
        """
        Set dot-path values (None values are skipped) and record them for the resolved dump.

        Examples:
            cfg.apply_overrides({"adapt.seed": 7, "adapt.mode": "nrc++"})
        """
        for key_path, value in overrides.items():
            if value is None:
                continue
            keys = key_path.split(".")
            node = self._config
            for key in keys[:-1]:
                if not isinstance(node.get(key), dict):
                    node[key] = {}
                node = node[key]
            node[keys[-1]] = value
            self._overrides[key_path] = value
            self._lm.debug(f"Override {key_path} = {value!r}")

    @property
    def overrides(self) -> Dict[str, Any]:
        return dict(self._overrides)

    def resolved(self) -> Dict[str, Any]:
        """Every effective value: typed sections with defaults filled in, plus the override record."""
        return {
            "schema_version": self.get("schema_version"),
            "debug_messages": bool(self.get("debug_messages", False)),
            "logs": copy.deepcopy(self.get("logs", {}) or {}),
            "model": self.model_config().to_dict(),
            "pretrain": self.pretrain_config().to_dict(),
            "adapt": self.adapt_config().to_dict(),
            "synthetic": self.synthetic_config().to_dict(),
            "diagnostics": self.diagnostics_settings(),
            "source": self._config_path,
            "overrides": self.overrides,
        }

    def dump_resolved(self, path: Optional[Union[str, Path]] = None) -> Path:
        """Write resolved() as sorted, indented JSON (defaults to <output>/resolved_config.json)."""
        target = Path(path) if path else self.paths.resolved_config
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(self.resolved(), f, indent=2, sort_keys=True)
            f.write("\n")
        return target

    # --- Typed views ---
    def model_config(self):
        from utils.model import ModelConfig
        return ModelConfig.from_config(self)

    def pretrain_config(self):
        from utils.trainer import PretrainConfig
        return PretrainConfig.from_config(self)

    def adapt_config(self):
        from utils.trainer import AdaptConfig
        return AdaptConfig.from_config(self)

    def synthetic_config(self):
        from utils.data import SyntheticConfig
        return SyntheticConfig.from_config(self)

    def diagnostics_settings(self) -> Dict[str, Any]:
        section = self.get("diagnostics", {}) or {}
        reverse_m = section.get("M", 5)
        return {
            "k_values": list(section.get("k_values", [1, 2, 3, 4, 5])),
            "M": None if reverse_m is None else int(reverse_m),
            "shared_k": int(section.get("shared_k", 5)),
            "track_every": int(section.get("track_every", 1)),
        }

    @property
    def raw(self) -> dict:
        return self._config

    @property
    def paths(self) -> "PathManager":
        return self._paths

    def get_logger(self) -> "LogManager":
        return self._lm

    def get_progressor(self, total: int, label: str = "Processing...", step: int = 1) -> "ProgressorManager":
        """Progressor bound to this manager's logger; silent unless logs.show_progress is true."""
        from utils.manager.progressor_manager import ProgressorManager
        return ProgressorManager(total=total, label=label, step=step, log_manager=self.get_logger(),
                                 enabled=bool(self.get("logs.show_progress", False)))
