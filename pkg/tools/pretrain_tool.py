# =============================================================================
# 🎓 Source Pretraining (tools/pretrain_tool.py)
# -----------------------------------------------------------------------------
# Tool Name:          PretrainTool
# CLI Subcommand:     pretrain
# Version:            1.0.0
# Author:             NRC Toolkit Maintainers
# Created:            2026-09-28
# Last Updated:       2026-10-11
#
# Description:
#   Fits the source model on a labeled feature file with label-smoothed cross-entropy and
#   writes an NRCM checkpoint.
#
# File Location:      /tools/pretrain_tool.py
# Core Utils:
#   - utils/trainer.py (pretrain_source)
#   - utils/model.py (save_checkpoint)
#   - utils/data.py (load_features)
#
# Parameters:
#   - Source Features {--source} (Path): NRCF or CSV file with labels.
#   - Output Checkpoint {--out} (Path): NRCM file to write.
#   - Class Count {--num-classes} (int, optional): Defaults to max(label) + 1.
#   - Seed Override {--seed} (int): Replaces pretrain.seed.
# =============================================================================

from pathlib import Path

from tools.tool_common import load_config, output_folder, require_files
from utils.data import load_features
from utils.model import save_checkpoint
from utils.shared.nrc_exceptions import InvalidInputError
from utils.trainer import pretrain_source


class PretrainTool(object):
    def __init__(self):
        self.name = "pretrain"
        self.label = "Pretrain on Source"
        self.description = "Trains the source model on labeled source features and writes a checkpoint."

    def add_arguments(self, parser):
        parser.add_argument("--source", type=Path, required=True, help="Labeled source feature file")
        parser.add_argument("--out", type=Path, required=True, help="Checkpoint to write (.nrcm)")
        parser.add_argument("--num-classes", type=int, default=None, help="Class count C")

    def execute(self, args) -> None:
        require_files(args.source)
        cfg = load_config(args, output_folder(args.out), {"pretrain.seed": args.seed})
        logger = cfg.get_logger()
        source = load_features(args.source)
        if source.labels is None:
            raise InvalidInputError(f"source file {args.source} carries no labels")

        config = cfg.pretrain_config()
        with cfg.get_progressor(total=config.epochs, label="Pretrain") as progressor:
            with logger.step("Pretrain on source"):
                params = pretrain_source(config, cfg.model_config(), source.matrix, source.labels,
                                         num_classes=args.num_classes, logger=logger, progressor=progressor)
        save_checkpoint(params, args.out)
        logger.success(f"Checkpoint written to {args.out}", indent=1)
