# =============================================================================
# 🎲 Synthetic Benchmark Validator (utils/validators/synthetic_validator.py)
# -----------------------------------------------------------------------------
# Purpose:             Validates the 'synthetic' configuration section (covariate-shift generator settings)
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-21
# Last Updated:        2026-10-03
#
# File Location:        /utils/validators/synthetic_validator.py
# Called By:            ConfigManager.TOOL_VALIDATORS, validate_full_config
# =============================================================================

from utils.shared.nrc_exceptions import ConfigValidationError
from utils.validators.common_validators import (
    check_unknown_keys,
    validate_count,
    validate_keys_with_types,
    validate_range,
    validate_type,
)

__all__ = ["validate"]

NUMBER = (int, float)

SYNTHETIC_KEYS = {
    "num_classes": int,
    "d_in": int,
    "n_per_class": int,
    "rotation_deg": NUMBER,
    "translation": NUMBER,
    "noise_scale": NUMBER,
    "radius": NUMBER,
    "cluster_std": NUMBER,
    "seed": int,
    "target_classes": list,
}


def validate(cfg: "ConfigManager") -> bool:
    logger = cfg.get_logger()
    section = cfg.get("synthetic", {}) or {}
    if not validate_type(section, "synthetic", dict, cfg):
        return False
    error_count = 0
    error_count += not check_unknown_keys(section, SYNTHETIC_KEYS, "synthetic", cfg)
    error_count += validate_keys_with_types(cfg, section, SYNTHETIC_KEYS, "synthetic", required=False)

    num_classes = section.get("num_classes", 4)
    if "num_classes" in section:
        error_count += not validate_count(num_classes, "synthetic.num_classes", cfg, minimum=2)
    if "d_in" in section:
        error_count += not validate_count(section["d_in"], "synthetic.d_in", cfg, minimum=2)
    if "n_per_class" in section:
        error_count += not validate_count(section["n_per_class"], "synthetic.n_per_class", cfg, minimum=1)
    for key in ("noise_scale", "radius", "cluster_std"):
        if key in section:
            error_count += not validate_range(section[key], f"synthetic.{key}", cfg, low=0.0)

    classes = section.get("target_classes")
    if classes is not None:
        for i, c in enumerate(classes):
            error_count += not validate_count(c, f"synthetic.target_classes[{i}]", cfg, minimum=0)
        if any(isinstance(c, int) and c >= num_classes for c in classes) or not classes:
            logger.error(f"synthetic.target_classes must be a non-empty subset of [0, {num_classes})",
                         error_type=ConfigValidationError)
            error_count += 1
    return error_count == 0
