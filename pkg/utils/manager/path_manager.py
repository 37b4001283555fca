# =============================================================================
# 📂 Path Manager Utility (utils/manager/path_manager.py)
# -----------------------------------------------------------------------------
# Purpose:             Resolves repository (configs, templates) and run-output (logs, reports) paths
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-14
# Last Updated:        2026-10-08
#
# Description:
#   Two roots: the script base (repository root holding configs/ and templates/) and the
#   project base (the run's output directory). Folder names under the project base are
#   configurable through the ``logs`` config section.
#
# File Location:        /utils/manager/path_manager.py
# Called By:            ConfigManager, LogManager, utils/generate_report.py, tools/*
# Ext. Dependencies:    pathlib, typing
#
# Notes:
#   - Script base is resolved to the repo root unless explicitly passed.
#   - Verifies configs/ exists under the script base to validate repo structure.
# =============================================================================

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional, Union, TYPE_CHECKING

if TYPE_CHECKING:
    from utils.manager.config_manager import ConfigManager

__all__ = ["PathManager"]


class PathManager:
    """
    Central path manager.

    Resolves:
    - 🗂 Script structure (configs/, templates/)
    - 📁 Run outputs (logs/, report/, resolved config dump)
    """
    def __init__(self, project_base: Union[str, Path], config: Union[dict, "ConfigManager", None] = None,
                 script_base: Optional[Path] = None):
        """
        Args:
            project_base (Path): Output directory of the active run.
            config (dict or ConfigManager, optional): The loaded configuration, raw or wrapped.
            script_base (Path, optional): Repository root. Defaults to two levels above this file.
        """
        self.script_base: Path = Path(script_base or Path(__file__).resolve().parents[2])
        self.project_base: Path = Path(project_base).resolve()
        if config is not None and config.__class__.__name__ == "ConfigManager":
            self.cfg = config.raw
        else:
            self.cfg = config or {}

        if not (self.script_base / "configs").is_dir():
            raise ValueError(f"Resolved script base {self.script_base} does not contain a configs/ folder")

    # --- Script-Level Paths ---
    @property
    def templates(self) -> Path:
        return self.script_base / "templates"

    @property
    def configs(self) -> Path:
        return self.script_base / "configs"

    # --- Project-Level Paths ---
    @property
    def logs(self) -> Path:
        """Path to logs folder (configurable via logs.path)."""
        return self.project_base / self._get_config_value("logs.path", default="logs")

    @property
    def report(self) -> Path:
        """Path to reports folder (configurable via logs.report_path)."""
        return self.project_base / self._get_config_value("logs.report_path", default="report")

    @property
    def resolved_config(self) -> Path:
        return self.project_base / "resolved_config.json"

    def _get_config_value(self, dotted_key: str, default: Any = None) -> Any:
        """
        Resolve a nested key in the config dict using dot notation.

        Args:
            dotted_key (str): e.g. "logs.path".
            default (Any): Value returned when any segment is missing or the value is empty.
        """
        value: Any = self.cfg
        for key in dotted_key.split("."):
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value if value not in (None, "") else default
