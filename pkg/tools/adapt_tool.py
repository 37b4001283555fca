# =============================================================================
# 🎯 Target Adaptation (tools/adapt_tool.py)
# -----------------------------------------------------------------------------
# Tool Name:          AdaptTool
# CLI Subcommand:     adapt
# Version:            1.0.0
# Author:             NRC Toolkit Maintainers
# Created:            2026-09-28
# Last Updated:       2026-10-14
#
# Description:
#   Loads a source checkpoint and unlabeled target features, runs NRC / NRC++ adaptation and
#   writes the adapted checkpoint plus the per-iteration training log. Target labels present
#   in the file are ignored.
#
# File Location:      /tools/adapt_tool.py
# Core Utils:
#   - utils/trainer.py (adapt)
#   - utils/model.py (load_checkpoint, save_checkpoint, predict)
#   - utils/data.py (load_features, save_embeddings)
#
# Parameters:
#   - Source Model {--model} (Path): NRCM checkpoint.
#   - Target Features {--target} (Path): NRCF or CSV file.
#   - Output Checkpoint {--out} (Path): Adapted NRCM file.
#   - Training Log {--log} (Path, optional): Defaults to training_log.csv beside --out.
#   - Embeddings {--embeddings} (Path, optional): Adapted (z, p) of the target set as NRCF.
#   - Seed / Mode Overrides {--seed, --mode}: Replace adapt.seed and adapt.mode.
# =============================================================================

from pathlib import Path

from tools.tool_common import load_config, output_folder, require_files
from utils.data import load_features, save_embeddings
from utils.model import load_checkpoint, predict, save_checkpoint
from utils.trainer import adapt


class AdaptTool(object):
    def __init__(self):
        self.name = "adapt"
        self.label = "Adapt to Target"
        self.description = "Adapts a source checkpoint to unlabeled target features with NRC or NRC++."

    def add_arguments(self, parser):
        parser.add_argument("--model", type=Path, required=True, help="Source checkpoint (.nrcm)")
        parser.add_argument("--target", type=Path, required=True, help="Target feature file")
        parser.add_argument("--out", type=Path, required=True, help="Adapted checkpoint to write (.nrcm)")
        parser.add_argument("--log", type=Path, default=None, help="Training log CSV")
        parser.add_argument("--embeddings", type=Path, default=None, help="Write adapted (z, p) as NRCF")

    def execute(self, args) -> None:
        require_files(args.model, args.target)
        cfg = load_config(args, output_folder(args.out), {"adapt.seed": args.seed, "adapt.mode": args.mode})
        logger = cfg.get_logger()
        pretrained = load_checkpoint(args.model)
        target = load_features(args.target)
        config = cfg.adapt_config()

        with cfg.get_progressor(total=config.epochs, label="Adapt") as progressor:
            with logger.step(f"Adapt to target ({config.mode})"):
                result = adapt(config, pretrained, target.matrix, logger=logger, progressor=progressor)

        save_checkpoint(result.params, args.out)
        log_path = args.log or output_folder(args.out) / "training_log.csv"
        result.log.to_csv(log_path)
        logger.success(f"Checkpoint written to {args.out}; training log to {log_path}", indent=1)
        if args.embeddings:
            z, p = predict(result.params, target.matrix)
            save_embeddings(args.embeddings, z, p)
            logger.info(f"Embeddings written to {args.embeddings}", indent=1)
