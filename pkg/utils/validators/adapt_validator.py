# =============================================================================
# 🔁 Adapt Section Validator (utils/validators/adapt_validator.py)
# -----------------------------------------------------------------------------
# Purpose:             Validates the 'adapt' configuration section (neighborhood sizes, ablation flags, banks)
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-19
# Last Updated:        2026-10-09
#
# Description:
#   Keys mirror AdaptConfig field names exactly. Every key is optional; AdaptConfig supplies
#   defaults. Cross-key rules: U > V in nrc++ mode, and a fifo bank needs a capacity.
#
# File Location:        /utils/validators/adapt_validator.py
# Called By:            ConfigManager.TOOL_VALIDATORS, validate_full_config
# =============================================================================

import math

from utils.shared.nrc_exceptions import ConfigValidationError
from utils.validators.common_validators import (
    check_unknown_keys,
    validate_choice,
    validate_count,
    validate_keys_with_types,
    validate_range,
    validate_type,
)
from utils.validators.optimizer_checks import validate_lr_block

__all__ = ["validate", "ADAPT_KEYS"]

NUMBER = (int, float)

ADAPT_KEYS = {
    "K": int,
    "M": int,
    "U": int,
    "V": int,
    "r": NUMBER,
    "r_expanded": NUMBER,
    "batch_size": int,
    "epochs": int,
    "lr": dict,
    "momentum": NUMBER,
    "weight_decay": NUMBER,
    "seed": int,
    "mode": str,
    "use_affinity": bool,
    "dedupe_expanded": bool,
    "use_loss_n": bool,
    "use_loss_e": bool,
    "use_loss_self": bool,
    "use_loss_div": bool,
    "use_loss_d": bool,
    "bank_mode": str,
    "bank_capacity": int,
    "batch_norm_train": bool,
    "div_prior": list,
}


def validate(cfg: "ConfigManager") -> bool:
    """
    Validates the 'adapt' section for types, ranges and cross-key rules.

    Returns:
        bool: True if validation passes.
    """
    logger = cfg.get_logger()
    adapt = cfg.get("adapt", {}) or {}
    if not validate_type(adapt, "adapt", dict, cfg):
        return False

    error_count = 0
    error_count += not check_unknown_keys(adapt, ADAPT_KEYS, "adapt", cfg)
    error_count += validate_keys_with_types(cfg, adapt, ADAPT_KEYS, "adapt", required=False)

    for key in ("K", "M", "U", "V", "batch_size"):
        if key in adapt:
            error_count += not validate_count(adapt[key], f"adapt.{key}", cfg, minimum=1)
    if "epochs" in adapt:
        error_count += not validate_count(adapt["epochs"], "adapt.epochs", cfg, minimum=0)
    for key in ("r", "r_expanded"):
        if key in adapt:
            error_count += not validate_range(adapt[key], f"adapt.{key}", cfg, -1.0, 1.0)
    if "momentum" in adapt:
        error_count += not validate_range(adapt["momentum"], "adapt.momentum", cfg, 0.0, 1.0, high_inclusive=False)
    if "weight_decay" in adapt:
        error_count += not validate_range(adapt["weight_decay"], "adapt.weight_decay", cfg, low=0.0)
    if "lr" in adapt:
        error_count += not validate_lr_block(adapt["lr"], "adapt.lr", cfg)

    mode = adapt.get("mode", "nrc")
    error_count += not validate_choice(mode, "adapt.mode", ("nrc", "nrc++"), cfg)
    if mode == "nrc++":
        u, v = adapt.get("U", 20), adapt.get("V", 5)
        if not u > v:
            logger.error(f"adapt.U must be greater than adapt.V in nrc++ mode (U={u}, V={v})",
                         error_type=ConfigValidationError)
            error_count += 1

    bank_mode = adapt.get("bank_mode", "full")
    error_count += not validate_choice(bank_mode, "adapt.bank_mode", ("full", "fifo"), cfg)
    capacity = adapt.get("bank_capacity")
    if capacity is not None:
        error_count += not validate_count(capacity, "adapt.bank_capacity", cfg, minimum=1)
    elif bank_mode == "fifo":
        logger.error("adapt.bank_capacity is required when adapt.bank_mode is 'fifo'",
                     error_type=ConfigValidationError)
        error_count += 1

    prior = adapt.get("div_prior")
    if prior is not None:
        for i, value in enumerate(prior):
            error_count += not validate_range(value, f"adapt.div_prior[{i}]", cfg, low=0.0, low_inclusive=False)
        if not math.isclose(sum(prior), 1.0, abs_tol=1e-6):
            logger.error(f"adapt.div_prior must sum to 1, got {sum(prior)}", error_type=ConfigValidationError)
            error_count += 1

    return error_count == 0
