# =============================================================================
# 🧠 Model Section Validator (utils/validators/model_validator.py)
# -----------------------------------------------------------------------------
# Purpose:             Validates the 'model' configuration section (architecture sizes, batch norm)
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-19
# Last Updated:        2026-10-01
#
# File Location:        /utils/validators/model_validator.py
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

MODEL_KEYS = {
    "hidden_dims": list,
    "feature_dim": int,
    "batch_norm": bool,
    "bn_momentum": (int, float),
    "bn_eps": (int, float),
    "init_scale": (int, float),
}


def validate(cfg: "ConfigManager") -> bool:
    """
    Validates the optional 'model' section. Missing keys fall back to ModelConfig defaults.

    Returns:
        bool: True if validation passes.
    """
    logger = cfg.get_logger()
    model = cfg.get("model", {}) or {}
    if not validate_type(model, "model", dict, cfg):
        return False
    error_count = 0
    error_count += not check_unknown_keys(model, MODEL_KEYS, "model", cfg)
    error_count += validate_keys_with_types(cfg, model, MODEL_KEYS, "model", required=False)

    for i, width in enumerate(model.get("hidden_dims", []) or []):
        error_count += not validate_count(width, f"model.hidden_dims[{i}]", cfg, minimum=1)
    if "feature_dim" in model:
        error_count += not validate_count(model["feature_dim"], "model.feature_dim", cfg, minimum=1)
    if "bn_momentum" in model:
        error_count += not validate_range(model["bn_momentum"], "model.bn_momentum", cfg, 0.0, 1.0)
    for key in ("bn_eps", "init_scale"):
        if key in model:
            error_count += not validate_range(model[key], f"model.{key}", cfg, low=0.0, low_inclusive=False)

    if error_count:
        logger.error(f"model section has {error_count} error(s)", error_type=ConfigValidationError)
    return error_count == 0
