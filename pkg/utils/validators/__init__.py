from . import (
    adapt_validator,
    common_validators,
    diagnostics_validator,
    model_validator,
    optimizer_checks,
    pretrain_validator,
    synthetic_validator,
)
from .validate_full_config import validate_full_config

__all__ = [
    "adapt_validator",
    "common_validators",
    "diagnostics_validator",
    "model_validator",
    "optimizer_checks",
    "pretrain_validator",
    "synthetic_validator",
    "validate_full_config",
]
