# =============================================================================
# 🛠️ Common Validators (utils/validators/common_validators.py)
# -----------------------------------------------------------------------------
# Purpose:             Reusable type, presence and range checks for configuration sections
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-19
# Last Updated:        2026-10-06
#
# Description:
#   Helpers shared by every section validator. Each check logs through the ConfigManager's
#   LogManager with error_type=ConfigValidationError, so the first failure raises.
#
# File Location:        /utils/validators/common_validators.py
# Called By:            All validation modules in utils/validators
# Notes:                bool is rejected wherever an integer count is expected.
# =============================================================================

from __future__ import annotations

from typing import TYPE_CHECKING, Optional, Tuple, Type, Union

from utils.shared.nrc_exceptions import ConfigValidationError

if TYPE_CHECKING:
    from utils.manager.config_manager import ConfigManager

__all__ = [
    "validate_type",
    "check_required_keys",
    "check_unknown_keys",
    "validate_config_section",
    "validate_keys_with_types",
    "validate_count",
    "validate_range",
    "validate_choice",
]

NUMBER = (int, float)


def validate_type(value, context: str, expected_type: Union[Type, Tuple[Type, ...]], cfg: "ConfigManager") -> bool:
    """
    Checks whether a value matches the expected Python type(s) and logs an error if not.

    Args:
        value: The value to validate.
        context: Dot path of the value, used in error messages.
        expected_type: The required type or tuple of types.
        cfg (ConfigManager): Provides logger access.

    Returns:
        bool: True if validation passed.
    """
    logger = cfg.get_logger()
    types = expected_type if isinstance(expected_type, tuple) else (expected_type,)
    bool_smuggled = isinstance(value, bool) and bool not in types
    if bool_smuggled or not isinstance(value, types):
        expected = ", ".join(t.__name__ for t in types)
        logger.error(f"{context} must be of type {expected}, but got {type(value).__name__}",
                     error_type=ConfigValidationError)
        return False
    return True


def check_required_keys(d: dict, keys, context: str, cfg: "ConfigManager") -> bool:
    """Log an error for the first required key missing from ``d``."""
    logger = cfg.get_logger()
    for key in keys:
        if key not in d:
            logger.error(f"{context}.{key} is required", error_type=ConfigValidationError)
            return False
    return True


def check_unknown_keys(d: dict, allowed, context: str, cfg: "ConfigManager") -> bool:
    """Reject keys that no typed view knows about (catches typos such as ``use_los_n``)."""
    logger = cfg.get_logger()
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        logger.error(f"{context} has unknown keys: {unknown}", error_type=ConfigValidationError)
        return False
    return True


def validate_config_section(cfg: "ConfigManager", path: str, expected_type=dict) -> bool:
    """
    Validates that a nested section exists in the configuration and matches the expected type.

    Returns:
        bool: True if validation passed.
    """
    logger = cfg.get_logger()

    if not path:
        logger.error("Empty config path provided", error_type=ConfigValidationError)
        return False

    keys = path.split(".")
    current = cfg.raw
    for i, key in enumerate(keys):
        if not isinstance(current, dict):
            logger.error(f"{'.'.join(keys[:i])} must be a dictionary", error_type=ConfigValidationError)
            return False
        if key not in current:
            logger.error(f"Missing required config section: '{path}'", error_type=ConfigValidationError)
            return False
        current = current[key]

    if not isinstance(current, expected_type):
        logger.error(f"Config section '{path}' must be of type {expected_type.__name__}",
                     error_type=ConfigValidationError)
        return False
    return True


def validate_keys_with_types(
    cfg: "ConfigManager",
    section: dict,
    keymap: dict,
    context_prefix: str,
    required: bool = True,
) -> int:
    """
    Validates keys in a config section for type correctness, and optionally for presence.

    Args:
        cfg (ConfigManager): ConfigManager instance.
        section (dict): Config subsection to check (e.g. cfg.get("adapt")).
        keymap (dict): Mapping of keys to expected types.
        context_prefix (str): String prefix for logging context.
        required (bool): If True, missing keys are errors. If False, keys are only validated if present.

    Returns:
        int: Number of validation errors encountered.
    """
    logger = cfg.get_logger()
    error_count = 0

    for key, expected_type in keymap.items():
        context = f"{context_prefix}.{key}"
        val = section.get(key)

        if val is None:
            if required:
                logger.error(f"{context} is required", error_type=ConfigValidationError)
                error_count += 1
        elif not validate_type(val, context, expected_type, cfg):
            error_count += 1

    return error_count


def validate_count(value, context: str, cfg: "ConfigManager", minimum: int = 0) -> bool:
    """Integer (not bool) no smaller than ``minimum``."""
    if not validate_type(value, context, int, cfg):
        return False
    if value < minimum:
        cfg.get_logger().error(f"{context} must be >= {minimum}, got {value}", error_type=ConfigValidationError)
        return False
    return True


def validate_range(value, context: str, cfg: "ConfigManager",
                   low: Optional[float] = None, high: Optional[float] = None,
                   low_inclusive: bool = True, high_inclusive: bool = True) -> bool:
    """Number inside the (half-)open or closed interval described by the bounds."""
    if not validate_type(value, context, NUMBER, cfg):
        return False
    too_low = low is not None and (value < low if low_inclusive else value <= low)
    too_high = high is not None and (value > high if high_inclusive else value >= high)
    if too_low or too_high:
        left = "[" if low_inclusive else "("
        right = "]" if high_inclusive else ")"
        interval = f"{left}{'-inf' if low is None else low}, {'inf' if high is None else high}{right}"
        cfg.get_logger().error(f"{context} must lie in {interval}, got {value}", error_type=ConfigValidationError)
        return False
    return True


def validate_choice(value, context: str, choices, cfg: "ConfigManager") -> bool:
    if value not in choices:
        cfg.get_logger().error(f"{context} must be one of {list(choices)}, got {value!r}",
                               error_type=ConfigValidationError)
        return False
    return True
