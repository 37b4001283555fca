# =============================================================================
# 🎓 Pretrain Section Validator (utils/validators/pretrain_validator.py)
# -----------------------------------------------------------------------------
# Purpose:             Validates the 'pretrain' configuration section (source training schedule)
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-19
# Last Updated:        2026-10-01
#
# File Location:        /utils/validators/pretrain_validator.py
# Called By:            ConfigManager.TOOL_VALIDATORS, validate_full_config
# =============================================================================

from utils.validators.common_validators import (
    check_unknown_keys,
    validate_count,
    validate_keys_with_types,
    validate_range,
    validate_type,
)
from utils.validators.optimizer_checks import validate_lr_block

__all__ = ["validate"]

PRETRAIN_KEYS = {
    "epochs": int,
    "batch_size": int,
    "lr": dict,
    "momentum": (int, float),
    "weight_decay": (int, float),
    "smoothing": (int, float),
    "seed": int,
}


def validate(cfg: "ConfigManager") -> bool:
    section = cfg.get("pretrain", {}) or {}
    if not validate_type(section, "pretrain", dict, cfg):
        return False
    error_count = 0
    error_count += not check_unknown_keys(section, PRETRAIN_KEYS, "pretrain", cfg)
    error_count += validate_keys_with_types(cfg, section, PRETRAIN_KEYS, "pretrain", required=False)
    if "epochs" in section:
        error_count += not validate_count(section["epochs"], "pretrain.epochs", cfg, minimum=0)
    if "batch_size" in section:
        error_count += not validate_count(section["batch_size"], "pretrain.batch_size", cfg, minimum=1)
    if "lr" in section:
        error_count += not validate_lr_block(section["lr"], "pretrain.lr", cfg)
    if "momentum" in section:
        error_count += not validate_range(section["momentum"], "pretrain.momentum", cfg, 0.0, 1.0, high_inclusive=False)
    if "weight_decay" in section:
        error_count += not validate_range(section["weight_decay"], "pretrain.weight_decay", cfg, low=0.0)
    if "smoothing" in section:
        error_count += not validate_range(section["smoothing"], "pretrain.smoothing", cfg, 0.0, 1.0, high_inclusive=False)
    return error_count == 0
