# =============================================================================
# 🧰 Shared Tool Helpers (tools/tool_common.py)
# -----------------------------------------------------------------------------
# Purpose:             Config loading, override handling and input checks shared by the CLI tools
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-28
# Last Updated:        2026-10-10
#
# Description:
#   Every tool loads the config named by --config with its output folder as project base,
#   applies the --seed / --mode overrides to the sections it owns, validates the whole
#   document and dumps resolved_config.json next to its outputs before any work starts.
#
# File Location:        /tools/tool_common.py
# Called By:            tools/*_tool.py
# Int. Dependencies:    utils/manager/config_manager, utils/shared/nrc_exceptions
# Ext. Dependencies:    argparse, pathlib, sys, typing
# =============================================================================

import argparse
import sys
from pathlib import Path
from typing import Dict, Optional, Union

from utils.manager.config_manager import ConfigManager
from utils.shared.nrc_exceptions import ConfigValidationError


def load_config(args: argparse.Namespace, project_base: Union[str, Path],
                overrides: Optional[Dict[str, object]] = None) -> ConfigManager:
    """
    Build the run's ConfigManager: load, override, validate and dump the resolved config.

    Raises:
        ConfigValidationError: Missing or invalid document, or an invalid override.
    """
    if not Path(args.config).is_file():
        raise ConfigValidationError(f"config file not found: {args.config}", invalid_keys=["--config"])
    cfg = ConfigManager.from_file(args.config, project_base=project_base, stream=sys.stderr)
    if overrides:
        cfg.apply_overrides(overrides)
    cfg.validate()
    cfg.dump_resolved()
    return cfg


def require_files(*paths: Optional[Union[str, Path]]) -> None:
    """Raise FileNotFoundError for the first input that is not an existing file."""
    for path in paths:
        if path is not None and not Path(path).is_file():
            raise FileNotFoundError(f"input file not found: {path}")


def output_folder(path: Union[str, Path]) -> Path:
    """Folder that receives a file output and the resolved config."""
    return Path(path).resolve().parent

