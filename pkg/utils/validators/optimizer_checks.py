# =============================================================================
# ⚙️ Optimizer Setting Checks (utils/validators/optimizer_checks.py)
# -----------------------------------------------------------------------------
# Purpose:             Shared check for the per-group learning-rate block used by pretrain and adapt
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-20
# Last Updated:        2026-09-20
#
# File Location:        /utils/validators/optimizer_checks.py
# Called By:            pretrain_validator, adapt_validator
# =============================================================================

from utils.validators.common_validators import check_unknown_keys, validate_range, validate_type

__all__ = ["LR_GROUPS", "validate_lr_block"]

LR_GROUPS = ("backbone", "head")


def validate_lr_block(block, context: str, cfg: "ConfigManager") -> bool:
    """``lr`` must map each of backbone/head to a non-negative number."""
    if not validate_type(block, context, dict, cfg):
        return False
    ok = check_unknown_keys(block, LR_GROUPS, context, cfg)
    for group in LR_GROUPS:
        if group in block:
            ok &= validate_range(block[group], f"{context}.{group}", cfg, low=0.0)
    return ok
