# =============================================================================
# 📏 Evaluate Checkpoint (tools/evaluate_tool.py)
# -----------------------------------------------------------------------------
# Tool Name:          EvaluateTool
# CLI Subcommand:     eval
# Version:            1.0.0
# Author:             NRC Toolkit Maintainers
# Created:            2026-09-29
# Last Updated:       2026-10-11
#
# Description:
#   Scores a checkpoint on a feature file and writes metrics JSON: predicted-class counts,
#   plus accuracy, mean per-class accuracy and class-wise recalls when the file has labels.
#   Inputs are only read.
#
# File Location:      /tools/evaluate_tool.py
# Core Utils:
#   - utils/diagnostics.py
#   - utils/model.py (load_checkpoint, predict)
#   - utils/data.py (load_features, save_embeddings)
#
# Parameters:
#   - Model {--model} (Path): NRCM checkpoint.
#   - Features {--target} (Path): NRCF or CSV file.
#   - Metrics {--out} (Path): JSON file to write.
#   - Embeddings {--embeddings} (Path, optional): (z, p) of the evaluated rows as NRCF.
# =============================================================================

import json
from pathlib import Path

import numpy as np

from tools.tool_common import load_config, output_folder, require_files
from utils.data import load_features, save_embeddings
from utils.diagnostics import accuracy, mean_per_class_accuracy, per_class_accuracy
from utils.model import load_checkpoint, predict


def evaluation_metrics(p: np.ndarray, labels=None) -> dict:
    """Metrics dictionary for scores ``p`` and optional labels."""
    num_classes = p.shape[1]
    predicted = np.argmax(p, axis=1)
    metrics = {
        "n": int(p.shape[0]),
        "num_classes": int(num_classes),
        "predicted_counts": np.bincount(predicted, minlength=num_classes).tolist(),
    }
    if labels is not None:
        recalls = per_class_accuracy(p, labels, num_classes)
        metrics["accuracy"] = accuracy(p, labels)
        metrics["mean_per_class_accuracy"] = mean_per_class_accuracy(p, labels, num_classes)
        metrics["per_class_accuracy"] = [None if np.isnan(v) else float(v) for v in recalls]
    return metrics


class EvaluateTool(object):
    def __init__(self):
        self.name = "eval"
        self.label = "Evaluate Checkpoint"
        self.description = "Writes accuracy metrics of a checkpoint on a feature file."

    def add_arguments(self, parser):
        parser.add_argument("--model", type=Path, required=True, help="Checkpoint (.nrcm)")
        parser.add_argument("--target", type=Path, required=True, help="Feature file, labels optional")
        parser.add_argument("--out", type=Path, required=True, help="Metrics JSON to write")
        parser.add_argument("--embeddings", type=Path, default=None, help="Write (z, p) as NRCF")

    def execute(self, args) -> None:
        require_files(args.model, args.target)
        cfg = load_config(args, output_folder(args.out))
        logger = cfg.get_logger()
        params = load_checkpoint(args.model)
        features = load_features(args.target)
        z, p = predict(params, features.matrix)

        metrics = evaluation_metrics(p, features.labels)
        args.out.parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(metrics, f, indent=2, sort_keys=True)
            f.write("\n")
        if "accuracy" in metrics:
            logger.info(f"accuracy={metrics['accuracy']:.4f} "
                        f"mean per-class={metrics['mean_per_class_accuracy']:.4f}", indent=1)
        else:
            logger.info("No labels in the feature file; wrote predicted-class counts only", indent=1)
        if args.embeddings:
            save_embeddings(args.embeddings, z, p, features.labels)
        logger.success(f"Metrics written to {args.out}", indent=1)
