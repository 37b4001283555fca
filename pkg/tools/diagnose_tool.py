# =============================================================================
# 🔬 Neighbor Diagnostics (tools/diagnose_tool.py)
# -----------------------------------------------------------------------------
# Tool Name:          DiagnoseTool
# CLI Subcommand:     diagnose
# Version:            1.0.0
# Author:             NRC Toolkit Maintainers
# Created:            2026-09-29
# Last Updated:       2026-10-15
#
# Description:
#   Adapts a checkpoint while tracking the shared-label curve, then measures neighbor purity
#   with the pretrained banks and with the final banks. Writes into --out:
#     purity.csv, shared_curve.csv, adapted.nrcm, training_log.csv, resolved_config.json,
#     report/report.json and report/report.html (plus graph.csv with --dump-graph).
#   Target labels, when the file has them, are used for the "correct" columns and accuracy
#   only; the trainer never sees them.
#
# File Location:      /tools/diagnose_tool.py
# Core Utils:
#   - utils/diagnostics.py
#   - utils/trainer.py, utils/banks.py, utils/graph.py
#   - utils/shared/report_data_builder.py, utils/generate_report.py
#
# Parameters:
#   - Source Model {--model} (Path): NRCM checkpoint.
#   - Target Features {--target} (Path): NRCF or CSV file, labels optional.
#   - Output Folder {--out} (Path): Run folder.
#   - Graph Dump {--dump-graph} (flag): Write the final full-bank neighbor graph as CSV.
# =============================================================================

from pathlib import Path

import numpy as np

from tools.evaluate_tool import evaluation_metrics
from tools.tool_common import load_config, require_files
from utils.banks import initialize_banks
from utils.data import load_features
from utils.diagnostics import SharedCurveTracker, neighbor_purity, purity_table, write_purity_csv
from utils.generate_report import generate_full_process_report
from utils.graph import build_neighbor_graph, dump_graph_csv
from utils.model import load_checkpoint, predict, save_checkpoint
from utils.shared.report_data_builder import initialize_report_data, save_report_json
from utils.trainer import adapt


class DiagnoseTool(object):
    def __init__(self):
        self.name = "diagnose"
        self.label = "Neighbor Diagnostics"
        self.description = "Adapts with curve tracking and reports pre/post neighbor purity."

    def add_arguments(self, parser):
        parser.add_argument("--model", type=Path, required=True, help="Source checkpoint (.nrcm)")
        parser.add_argument("--target", type=Path, required=True, help="Target feature file")
        parser.add_argument("--out", type=Path, required=True, help="Output folder")
        parser.add_argument("--dump-graph", action="store_true", help="Write graph.csv for the final bank")

    def execute(self, args) -> None:
        require_files(args.model, args.target)
        cfg = load_config(args, args.out, {"adapt.seed": args.seed, "adapt.mode": args.mode})
        logger = cfg.get_logger()
        pretrained = load_checkpoint(args.model)
        target = load_features(args.target)
        config = cfg.adapt_config()
        settings = cfg.diagnostics_settings()
        labels = target.labels
        report = initialize_report_data(cfg, "diagnose")

        with logger.step("Neighbor purity before adaptation"):
            pre_banks = initialize_banks(pretrained, target.matrix, mode="full")
            pre = neighbor_purity(pre_banks, settings["k_values"], settings["M"], true_labels=labels)

        tracker = SharedCurveTracker(target.matrix, labels, shared_k=settings["shared_k"],
                                     track_every=settings["track_every"], total_epochs=config.epochs,
                                     logger=logger)
        with cfg.get_progressor(total=config.epochs, label="Adapt") as progressor:
            with logger.step(f"Adapt to target ({config.mode})"):
                result = adapt(config, pretrained, target.matrix, logger=logger, progressor=progressor,
                               epoch_callback=tracker)

        with logger.step("Neighbor purity after adaptation"):
            post = neighbor_purity(result.banks, settings["k_values"], settings["M"], true_labels=labels)

        out = Path(args.out)
        save_checkpoint(result.params, out / "adapted.nrcm")
        result.log.to_csv(out / "training_log.csv")
        write_purity_csv(out / "purity.csv", pre, post)
        tracker.to_csv(out / "shared_curve.csv")
        if args.dump_graph:
            bank = result.banks.features
            graph = build_neighbor_graph(bank, np.arange(len(bank)), config.K, config.M, config.r,
                                         r_expanded=config.r_expanded, use_affinity=config.use_affinity,
                                         dedupe_expanded=config.dedupe_expanded,
                                         with_density=config.flags.density_enabled, U=config.U, V=config.V)
            dump_graph_csv(graph, out / "graph.csv")

        _, p_pre = predict(pretrained, target.matrix)
        _, p_post = predict(result.params, target.matrix)
        pre_metrics = evaluation_metrics(p_pre, labels)
        post_metrics = evaluation_metrics(p_post, labels)
        if labels is not None:
            report["metrics"] = {
                "source_only_accuracy": pre_metrics["accuracy"],
                "adapted_accuracy": post_metrics["accuracy"],
                "source_only_mean_per_class": pre_metrics["mean_per_class_accuracy"],
                "adapted_mean_per_class": post_metrics["mean_per_class_accuracy"],
            }
        report["metrics"]["iterations"] = result.iterations
        report["purity"] = purity_table(pre, post)
        report["shared_curve"] = [dict(zip(tracker.COLUMNS, row)) for row in tracker.rows]
        save_report_json(report, cfg)
        generate_full_process_report(report, cfg)

