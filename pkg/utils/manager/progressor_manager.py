# =============================================================================
# 📊 CLI Progress Tracker (utils/manager/progressor_manager.py)
# -----------------------------------------------------------------------------
# Purpose:             Context-managed console progress for pretraining and adaptation epochs
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-14
# Last Updated:        2026-10-02
#
# Description:
#   Writes a single carriage-return progress line while a loop runs and terminates it with a
#   newline on exit. When disabled (logs.show_progress = false) it only tracks the position.
#
# File Location:        /utils/manager/progressor_manager.py
# Called By:            ConfigManager.get_progressor, utils/trainer.py
# Int. Dependencies:    utils/manager/log_manager
# Ext. Dependencies:    sys, typing
# =============================================================================

import sys
from typing import Optional, TextIO

from utils.manager.log_manager import LogManager

__all__ = ["ProgressorManager"]


class ProgressorManager:
    def __init__(self, total: int, label: str = "Processing...", step: int = 1,
                 log_manager: Optional[LogManager] = None, enabled: bool = True,
                 stream: Optional[TextIO] = None):
        """
        Args:
            total: The total number of steps to track.
            label: The label to display.
            step: The increment used by advance().
            log_manager: Optional LogManager for reporting display failures.
            enabled: When False nothing is written.
            stream: Output stream, standard error when omitted.
        """
        self.total = total
        self.label = label
        self.step = step
        self.log_manager = log_manager
        self.enabled = enabled and total > 0
        self.stream = stream
        self.completed = 0

    def __enter__(self):
        return self

    def update(self, pos: int, label: Optional[str] = None):
        """Move to ``pos`` and redraw the progress line."""
        self.completed = pos
        if not self.enabled:
            return
        out = self.stream or sys.stderr
        percent = (pos / self.total) * 100
        label_str = label or f"{self.label} {pos}/{self.total}"
        try:
            out.write(f"\r{label_str} ({percent:.1f}%)")
            out.flush()
        except (OSError, ValueError) as e:
            if self.log_manager:
                self.log_manager.warning(f"Progress update failed: {e}")
            self.enabled = False

    def advance(self, label: Optional[str] = None):
        self.update(self.completed + self.step, label)

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.enabled:
            out = self.stream or sys.stderr
            out.write("\n")
            out.flush()
