# =============================================================================
# 🗾 Log Manager Utility (utils/manager/log_manager.py)
# -----------------------------------------------------------------------------
# Purpose:             Structured process logging for the CLI, tools and library calls
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-14
# Last Updated:        2026-10-10
#
# Description:
#   Centralized logging with emoji level prefixes, step-based indentation, duration tracking
#   and context metadata. Messages are echoed to the console, kept in memory as plain lines
#   and structured records, and optionally appended to a process log file resolved by
#   PathManager.
#
# File Location:        /utils/manager/log_manager.py
# Called By:            ConfigManager, tools/*, utils/trainer.py, utils/experiment.py, scripts/nrc_cli.py
# Int. Dependencies:    utils/manager/path_manager
# Ext. Dependencies:    sys, time, contextlib, typing, datetime
#
# Notes:
#   - Process logs carry wall-clock timestamps and are never part of the determinism contract;
#     the per-iteration training log is a separate CSV.
#   - error(..., error_type=X) logs the message and then raises X.
# =============================================================================

from contextlib import contextmanager
from datetime import datetime
from typing import Dict, List, Optional, TextIO, Type
import sys
import time

from utils.manager.path_manager import PathManager

__all__ = ["LogManager"]


class LogManager:
    """
    LogManager provides structured logging for command-line and library workflows.

    Logs are collected as plain text and JSON records with support for:
    - Multiple log levels (debug, info, warning, error, success, custom)
    - Step-based indentation and timing
    - Context metadata (tool, epoch, seed, ...)
    - Export to .txt and .json files via PathManager
    """

    LEVEL_PREFIX = {
        "debug": "🛠️",
        "info": "ℹ️",
        "warning": "⚠️",
        "error": "❌",
        "success": "✅",
        "custom": "",
    }
    SHOW_INDENT_LEVEL_IN_DEBUG = True

    def __init__(
            self,
            config: Optional[dict] = None,
            path_manager: Optional[PathManager] = None,
            enable_file_output: bool = False,
            console: bool = True,
            stream: Optional[TextIO] = None,
    ):
        """
        Args:
            config (dict, optional): Raw configuration; ``debug_messages`` gates debug output.
            path_manager (PathManager, optional): Provides the logs directory.
            enable_file_output (bool): Append every line to ``<logs>/process_log.txt``.
            console (bool): Echo lines to ``stream``.
            stream (TextIO, optional): Console stream, standard output when omitted.
        """
        self.config = config or {}
        self.path_manager = path_manager
        self.enable_file_output = enable_file_output
        self.console = console
        self.stream = stream
        self.entries: List[str] = []
        self.records: List[Dict] = []
        self.indent_char = "    "
        self._context_stack: List[Optional[Dict]] = []

    @classmethod
    def quiet(cls) -> "LogManager":
        """A logger that records but never prints or writes files."""
        return cls(config={}, console=False)

    @property
    def debug_enabled(self) -> bool:
        return bool(self.config.get("debug_messages", False))

    def log(self, msg: str, level: str = "info", context: Optional[Dict] = None, indent: int = 0,
            error_type: Optional[Type[Exception]] = None, emoji: Optional[str] = None) -> None:
        """
        Log a message with a level, optional context and explicit indentation.

        Args:
            msg (str): The message to log.
            level (str): One of 'debug', 'info', 'warning', 'error', 'success', or 'custom'.
            context (dict, optional): Metadata stored with the record.
            indent (int, optional): Number of indent units.
            error_type (Type[Exception], optional): Raised with ``msg`` after logging an error.
            emoji (str, optional): Prefix for 'custom' level messages.
        """
        if level not in self.LEVEL_PREFIX:
            self.log(f"Invalid log level '{level}' (defaulting to info)", level="warning", indent=indent)
            level = "info"

        if level == "debug" and not self.debug_enabled:
            return

        if context is None and self._context_stack:
            context = self._context_stack[-1]

        prefix = (emoji or "") if level == "custom" else self.LEVEL_PREFIX[level]
        if self.debug_enabled and self.SHOW_INDENT_LEVEL_IN_DEBUG:
            prefix = f"{prefix} [{indent}]"

        now = datetime.now()
        full_msg = f"[{now.strftime('%Y-%m-%d %H:%M:%S')}] {prefix} {self.indent_char * indent}{msg}"
        self.entries.append(full_msg)
        self.records.append({
            "timestamp": now.isoformat(),
            "level": level,
            "message": msg,
            "indent": indent,
            "context": context or {},
        })

        if self.console:
            print(full_msg, file=self.stream or sys.stdout)

        if self.enable_file_output and self.path_manager:
            try:
                log_file = self.path_manager.logs / "process_log.txt"
                log_file.parent.mkdir(parents=True, exist_ok=True)
                with open(log_file, "a", encoding="utf-8") as f:
                    f.write(full_msg + "\n")
            except OSError as e:
                # Avoid recursion
                print(f"Could not write to log file: {e}", file=sys.stderr)

        if level == "error" and error_type:
            raise error_type(msg)

    def debug(self, msg: str, context: Optional[Dict] = None, indent: int = 0) -> None:
        self.log(msg, level="debug", context=context, indent=indent)

    def info(self, msg: str, context: Optional[Dict] = None, indent: int = 0) -> None:
        self.log(msg, level="info", context=context, indent=indent)

    def warning(self, msg: str, context: Optional[Dict] = None, indent: int = 0) -> None:
        self.log(msg, level="warning", context=context, indent=indent)

    def error(self, msg: str, context: Optional[Dict] = None, indent: int = 0,
              error_type: Optional[Type[Exception]] = None) -> None:
        self.log(msg, level="error", context=context, indent=indent, error_type=error_type)

    def success(self, msg: str, context: Optional[Dict] = None, indent: int = 0) -> None:
        self.log(msg, level="success", context=context, indent=indent)

    def custom(self, msg: str, emoji: str, context: Optional[Dict] = None, indent: int = 0) -> None:
        self.log(msg, level="custom", context=context, indent=indent, emoji=emoji)

    @staticmethod
    def _format_duration(seconds: float) -> str:
        mins, secs = divmod(seconds, 60)
        return f"{int(mins)}m {secs:.1f}s" if mins >= 1 else f"{secs:.1f}s"

    def get_messages(self) -> List[str]:
        return self.entries

    @contextmanager
    def step(self, msg: str, context: Optional[Dict] = None):
        """
        Log the start and end of a logical step.

        Messages inside should use indent=1. A failure is logged with the elapsed time and re-raised.

        Usage:
            with logger.step("Adapt to target"):
                logger.info("epoch 1 done", indent=1)
        """
        self._context_stack.append(context)
        self.custom(msg, emoji="▶️", indent=0, context=context)
        start_time = time.perf_counter()
        try:
            yield
        except Exception as e:
            elapsed_str = self._format_duration(time.perf_counter() - start_time)
            self.log(f"{msg} failed: {e} (Elapsed: {elapsed_str})", level="error")
            raise
        else:
            elapsed_str = self._format_duration(time.perf_counter() - start_time)
            self.success(f"{msg} complete (Elapsed: {elapsed_str})")
        finally:
            self._context_stack.pop()
