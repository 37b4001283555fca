# =============================================================================
# 📝 HTML Report Generator (utils/generate_report.py)
# -----------------------------------------------------------------------------
# Purpose:             Renders the HTML summary of a diagnose or ablate run from its report data
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-27
# Last Updated:        2026-10-12
#
# Description:
#   Loads report data (in memory or from report.json) and renders
#   templates/diagnostics_report_template.html with Jinja2: accuracies, purity tables,
#   the shared-label curve and ablation medians. Tables only; curves are meant to be
#   plotted externally from the CSV outputs.
#
# File Location:        /utils/generate_report.py
# Called By:            tools/diagnose_tool.py, tools/ablation_tool.py
# Int. Dependencies:    utils/manager/config_manager
# Ext. Dependencies:    jinja2, json, datetime, pathlib, typing
# =============================================================================

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict

from jinja2 import Environment, FileSystemLoader, select_autoescape

if TYPE_CHECKING:
    from utils.manager.config_manager import ConfigManager

TEMPLATE_NAME = "diagnostics_report_template.html"


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def generate_full_process_report(report_data: Dict[str, Any], cfg: "ConfigManager",
                                 output_basename: str = "report") -> Dict[str, str]:
    """
    Render the HTML report into the report folder.

    Args:
        report_data: Dictionary produced by report_data_builder and filled by a tool.
        cfg (ConfigManager): Active configuration, used for logging and path resolution.
        output_basename: Base filename of the HTML file.

    Returns:
        A dictionary with key "html_path".

    Raises:
        FileNotFoundError: If the template is missing.
    """
    logger = cfg.get_logger()
    paths = cfg.paths
    output_dir = paths.report
    output_dir.mkdir(parents=True, exist_ok=True)
    template_dir = paths.templates

    if not (template_dir / TEMPLATE_NAME).is_file():
        logger.error(f"Template file not found at: {template_dir / TEMPLATE_NAME}", indent=1,
                     error_type=FileNotFoundError)

    env = Environment(loader=FileSystemLoader(str(template_dir)), autoescape=select_autoescape(["html"]))
    env.filters["fmt"] = _fmt
    template = env.get_template(TEMPLATE_NAME)
    context = dict(report_data)
    context["generated_on"] = datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M UTC")
    html_out = template.render(**context)

    html_path = Path(output_dir) / f"{output_basename}.html"
    with open(html_path, "w", encoding="utf-8") as f:
        f.write(html_out)
    logger.success(f"HTML report written to: {html_path}", indent=1)
    return {"html_path": str(html_path)}


def generate_report_from_json(cfg: "ConfigManager", json_path: str) -> Dict[str, str]:
    """Render the HTML report from a saved report.json."""
    logger = cfg.get_logger()
    with open(json_path, "r", encoding="utf-8") as f:
        report_data = json.load(f)
    logger.custom(f"Loaded report data from: {json_path}", emoji="📄", indent=1)
    return generate_full_process_report(report_data=report_data, cfg=cfg)
