# =============================================================================
# 🔬 Diagnostics Section Validator (utils/validators/diagnostics_validator.py)
# -----------------------------------------------------------------------------
# Purpose:             Validates the 'diagnostics' configuration section (purity curve K values, tracking)
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-22
# Last Updated:        2026-09-30
#
# File Location:        /utils/validators/diagnostics_validator.py
# Called By:            ConfigManager.TOOL_VALIDATORS, validate_full_config
# =============================================================================

from utils.validators.common_validators import (
    check_unknown_keys,
    validate_count,
    validate_keys_with_types,
    validate_type,
)

__all__ = ["validate"]

DIAGNOSTICS_KEYS = {"k_values": list, "M": int, "shared_k": int, "track_every": int}


def validate(cfg: "ConfigManager") -> bool:
    section = cfg.get("diagnostics", {}) or {}
    if not validate_type(section, "diagnostics", dict, cfg):
        return False
    error_count = 0
    error_count += not check_unknown_keys(section, DIAGNOSTICS_KEYS, "diagnostics", cfg)
    error_count += validate_keys_with_types(cfg, section, DIAGNOSTICS_KEYS, "diagnostics", required=False)
    for i, k in enumerate(section.get("k_values", []) or []):
        error_count += not validate_count(k, f"diagnostics.k_values[{i}]", cfg, minimum=1)
    # null M means M = K at each purity point
    if section.get("M") is not None:
        error_count += not validate_count(section["M"], "diagnostics.M", cfg, minimum=1)
    for key in ("shared_k", "track_every"):
        if key in section:
            error_count += not validate_count(section[key], f"diagnostics.{key}", cfg, minimum=1)
    return error_count == 0
