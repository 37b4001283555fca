# =============================================================================
# 📦 Report Data Builder (utils/shared/report_data_builder.py)
# -----------------------------------------------------------------------------
# Purpose:             Initializes, loads and saves the report.json of a diagnose or ablate run
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-27
# Last Updated:        2026-10-12
#
# Description:
#   Builds a JSON-compatible dictionary holding the run kind, the resolved configuration,
#   accuracies, purity rows, shared-curve rows and ablation tables. Tools fill the sections
#   they produce and persist the result under the report folder resolved by PathManager.
#
# File Location:        /utils/shared/report_data_builder.py
# Called By:            tools/diagnose_tool.py, tools/ablation_tool.py, utils/generate_report.py
# Int. Dependencies:    utils/manager/config_manager
# Ext. Dependencies:    json, datetime, typing
#
# Notes:
#   - Creates the report folder if it doesn't exist
#   - Non-finite floats are written as null
# =============================================================================

import json
import math
from datetime import datetime, timezone
from typing import TYPE_CHECKING, Any, Dict, Optional

if TYPE_CHECKING:
    from utils.manager.config_manager import ConfigManager

REPORT_FILENAME = "report.json"


def initialize_report_data(cfg: "ConfigManager", kind: str) -> Dict[str, Any]:
    """
    Create the initial report dictionary.

    Args:
        cfg (ConfigManager): Active configuration.
        kind (str): "diagnose" or "ablate".

    Returns:
        Dict[str, Any]: Keys kind, created, config, metrics, purity, shared_curve, ablation.
    """
    return {
        "kind": kind,
        "created": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "config": cfg.resolved(),
        "metrics": {},
        "purity": [],
        "shared_curve": [],
        "ablation": None,
    }


def _clean(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def save_report_json(report_data: Dict[str, Any], cfg: "ConfigManager", logger: Optional[Any] = None) -> str:
    """
    Save the report dictionary as <report folder>/report.json.

    Returns:
        The file path as a string.

    Raises:
        OSError: If the report folder is not writable.
    """
    logger = logger or cfg.get_logger()
    report_dir = cfg.paths.report
    report_dir.mkdir(parents=True, exist_ok=True)
    out_path = report_dir / REPORT_FILENAME
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(_clean(report_data), f, indent=2, ensure_ascii=False, sort_keys=True)
        f.write("\n")
    logger.custom(f"Saved report JSON to: {out_path}", emoji="📄", indent=1)
    return str(out_path)


def load_report_json_if_exists(cfg: "ConfigManager", logger: Optional[Any] = None) -> Optional[Dict[str, Any]]:
    """Load report.json from the report folder, or None when absent or unreadable."""
    logger = logger or cfg.get_logger()
    json_path = cfg.paths.report / REPORT_FILENAME
    if not json_path.exists():
        return None
    try:
        with open(json_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.warning(f"Failed to load report JSON: {e}", indent=1)
        return None
