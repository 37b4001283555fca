# =============================================================================
# 🚨 Custom Exception Definitions (utils/shared/nrc_exceptions.py)
# -----------------------------------------------------------------------------
# Purpose:             Defines the exception hierarchy used across the NRC adaptation toolkit
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-14
# Last Updated:        2026-10-12
#
# Description:
#   Project-specific exceptions so that callers (and the CLI exit-code mapping) can tell
#   configuration problems, bad inputs, corrupt files and numeric blow-ups apart.
#
# File Location:        /utils/shared/nrc_exceptions.py
# Called By:            every module under utils/, tools/, scripts/nrc_cli.py
# Notes:                Extend this file with additional exceptions as needed for future features.
# =============================================================================

from typing import Optional


class NRCError(Exception):
    """Base class for all toolkit errors."""


class ConfigValidationError(NRCError):
    """Raised when configuration validation fails."""

    def __init__(self, message, invalid_keys=None, validation_context=None):
        """
        Args:
            message (str): Error description.
            invalid_keys (list, optional): List of configuration keys that failed validation.
            validation_context (dict, optional): Additional context about the validation failure.
        """
        self.invalid_keys = invalid_keys or []
        self.validation_context = validation_context
        super().__init__(message)

    def __str__(self):
        base = super().__str__()
        details = []

        if self.invalid_keys:
            details.append(f"Invalid keys: {self.invalid_keys}")
        if self.validation_context:
            details.append(f"Context: {self.validation_context}")

        if details:
            return f"{base} | {' | '.join(details)}"
        return base


class InvalidInputError(NRCError, ValueError):
    """Raised when an operation receives arguments that violate its preconditions (shape, range, size)."""


class FeatureFormatError(NRCError):
    """Raised when a feature file (NRCF binary or CSV) cannot be decoded."""

    def __init__(self, message: str, offset: Optional[int] = None, path: Optional[str] = None):
        """
        Args:
            message: Error description.
            offset: Byte offset (binary) or line number (CSV) where decoding failed.
            path: File being decoded, if known.
        """
        self.offset = offset
        self.path = path
        super().__init__(message)

    def __str__(self):
        base = super().__str__()
        parts = [base]
        if self.offset is not None:
            parts.append(f"offset={self.offset}")
        if self.path:
            parts.append(f"path={self.path}")
        return " ".join(parts)


class CheckpointFormatError(FeatureFormatError):
    """Raised when an NRCM model checkpoint cannot be decoded."""


class NumericFailureError(NRCError, ArithmeticError):
    """Raised when a loss or parameter becomes non-finite during training."""
