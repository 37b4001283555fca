# =============================================================================
# ✅ Config Validator & Section Schema Enforcer (utils/validators/validate_full_config.py)
# -----------------------------------------------------------------------------
# Purpose:             Validates the whole configuration document against structure, types and section rules
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-19
# Last Updated:        2026-10-09
#
# Description:
#   Checks schema version support, top-level keys and the logs block, then dispatches every
#   registered section validator (ConfigManager.TOOL_VALIDATORS). Collects errors, logs a
#   summary and raises ConfigValidationError when anything failed.
#
# File Location:        /utils/validators/validate_full_config.py
# Called By:            ConfigManager.validate, scripts/nrc_cli.py
# Int. Dependencies:    utils/validators/common_validators, utils/shared/nrc_exceptions
# =============================================================================
from __future__ import annotations

from typing import TYPE_CHECKING

from utils.shared.nrc_exceptions import ConfigValidationError
from utils.validators.common_validators import (
    check_unknown_keys,
    validate_config_section,
    validate_keys_with_types,
    validate_type,
)

if TYPE_CHECKING:
    from utils.manager.config_manager import ConfigManager

__all__ = ["validate_full_config", "TOP_LEVEL_KEYS", "LOGS_KEYS"]

TOP_LEVEL_KEYS = ("schema_version", "debug_messages", "logs", "model", "pretrain", "adapt", "synthetic",
                  "diagnostics")
LOGS_KEYS = {"path": str, "report_path": str, "enable_file_output": bool, "show_progress": bool}


def validate_full_config(cfg: "ConfigManager", logger=None) -> bool:
    """
    Validates the entire configuration.

    Args:
        cfg (ConfigManager): The configuration manager instance.
        logger: Optional logger for testing; defaults to cfg.get_logger().

    Returns:
        True if validation passes.

    Raises:
        ConfigValidationError: On the summary of all collected failures.
    """
    from utils.manager.config_manager import SUPPORTED_SCHEMA_VERSIONS
    logger = logger or cfg.get_logger()
    errors = []

    def _collect(check, *args):
        try:
            check(*args)
        except ConfigValidationError as e:
            errors.append(str(e))

    schema_version = cfg.get("schema_version")
    if schema_version not in SUPPORTED_SCHEMA_VERSIONS:
        errors.append(f"Unsupported schema_version '{schema_version}'. Supported versions: "
                      f"{sorted(SUPPORTED_SCHEMA_VERSIONS)}")
    if "debug_messages" in cfg.raw:
        _collect(validate_type, cfg.get("debug_messages"), "debug_messages", bool, cfg)

    user_keys = {k: v for k, v in cfg.raw.items() if not k.startswith("__")}
    _collect(check_unknown_keys, user_keys, TOP_LEVEL_KEYS, "config", cfg)

    _collect(validate_config_section, cfg, "logs", dict)
    _collect(validate_keys_with_types, cfg, cfg.get("logs", {}) or {}, LOGS_KEYS, "logs", False)

    for tool, validator in getattr(cfg, "TOOL_VALIDATORS", {}).items():
        try:
            validator(cfg)
            logger.debug(f"[{tool} validation] passed.", indent=1)
        except ConfigValidationError as e:
            errors.append(f"{tool}: {e}")

    if not errors:
        logger.success("Full config validation passed.", indent=1)
        return True
    for message in errors:
        logger.warning(message, indent=1)
    raise ConfigValidationError(f"Config validation failed with {len(errors)} error(s)",
                                validation_context={"errors": errors})
