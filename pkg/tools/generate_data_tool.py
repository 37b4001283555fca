# =============================================================================
# 🎲 Generate Synthetic Data (tools/generate_data_tool.py)
# -----------------------------------------------------------------------------
# Tool Name:          GenerateDataTool
# CLI Subcommand:     gen-data
# Version:            1.0.0
# Author:             NRC Toolkit Maintainers
# Created:            2026-09-28
# Last Updated:       2026-10-10
#
# Description:
#   Draws the covariate-shift benchmark described by the ``synthetic`` config section and
#   writes it as a manifest folder (source.nrcf, target.nrcf, manifest.json).
#
# File Location:      /tools/generate_data_tool.py
# Core Utils:
#   - utils/data.py
#   - utils/manager/config_manager.py
#
# Parameters:
#   - Output Folder {--out} (Path): Manifest folder to create.
#   - Seed Override {--seed} (int): Replaces synthetic.seed.
# =============================================================================

from pathlib import Path

from tools.tool_common import load_config
from utils.data import generate_synthetic_shift, save_manifest


class GenerateDataTool(object):
    def __init__(self):
        self.name = "gen-data"
        self.label = "Generate Synthetic Data"
        self.description = "Writes the synthetic covariate-shift benchmark as a dataset folder."

    def add_arguments(self, parser):
        parser.add_argument("--out", type=Path, required=True, help="Dataset folder to write")

    def execute(self, args) -> None:
        cfg = load_config(args, args.out, {"synthetic.seed": args.seed})
        logger = cfg.get_logger()
        with logger.step("Generate synthetic shift"):
            manifest = generate_synthetic_shift(cfg.synthetic_config())
            save_manifest(manifest, args.out)
            logger.info(f"{manifest.source_x.shape[0]} source / {manifest.target_x.shape[0]} target rows "
                        f"written to {args.out}", indent=1)
