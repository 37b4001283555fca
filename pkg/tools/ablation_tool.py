# =============================================================================
# 🧪 Ablation Grid (tools/ablation_tool.py)
# -----------------------------------------------------------------------------
# Tool Name:          AblationTool
# CLI Subcommand:     ablate
# Version:            1.0.0
# Author:             NRC Toolkit Maintainers
# Created:            2026-09-30
# Last Updated:       2026-10-15
#
# Description:
#   Runs the ablation variants of utils/experiment.py over a list of seeds on a dataset
#   folder (or on the configured synthetic benchmark when --data is omitted) and writes
#   ablation.csv plus report/report.json and report/report.html into --out.
#
# File Location:      /tools/ablation_tool.py
# Core Utils:
#   - utils/experiment.py (run_ablation)
#   - utils/data.py (load_manifest, generate_synthetic_shift)
#   - utils/shared/report_data_builder.py, utils/generate_report.py
#
# Parameters:
#   - Dataset Folder {--data} (Path, optional): Folder written by gen-data.
#   - Output Folder {--out} (Path): Run folder.
#   - Seeds {--seeds} (int list): Defaults to 0 1 2 3 4; --seed runs a single seed.
#   - Variants {--variants} (str list, optional): Subset of the variant names.
# =============================================================================

from pathlib import Path

from tools.tool_common import load_config
from utils.data import generate_synthetic_shift, load_manifest
from utils.experiment import ABLATION_VARIANTS, run_ablation
from utils.generate_report import generate_full_process_report
from utils.shared.report_data_builder import initialize_report_data, save_report_json


class AblationTool(object):
    def __init__(self):
        self.name = "ablate"
        self.label = "Ablation Grid"
        self.description = "Compares loss-term and neighborhood variants across seeds."

    def add_arguments(self, parser):
        parser.add_argument("--data", type=Path, default=None, help="Dataset folder (defaults to synthetic)")
        parser.add_argument("--out", type=Path, required=True, help="Output folder")
        parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4], help="Seeds to run")
        parser.add_argument("--variants", nargs="+", choices=list(ABLATION_VARIANTS), default=None,
                            help="Variants to run (default: all)")

    def execute(self, args) -> None:
        if args.data is not None and not (Path(args.data) / "manifest.json").is_file():
            raise FileNotFoundError(f"dataset folder has no manifest.json: {args.data}")
        cfg = load_config(args, args.out, {"adapt.mode": args.mode})
        logger = cfg.get_logger()
        seeds = [args.seed] if args.seed is not None else list(args.seeds)
        manifest = load_manifest(args.data) if args.data else generate_synthetic_shift(cfg.synthetic_config())
        variants = args.variants or list(ABLATION_VARIANTS)

        with cfg.get_progressor(total=len(seeds) * len(variants), label="Ablation") as progressor:
            result = run_ablation(manifest, cfg.model_config(), cfg.pretrain_config(), cfg.adapt_config(),
                                  seeds=seeds, variants=variants, logger=logger, progressor=progressor)

        result.to_csv(Path(args.out) / "ablation.csv")
        for name, median in result.medians().items():
            logger.info(f"{name:<22} median={median:.4f}", indent=1)
        report = initialize_report_data(cfg, "ablate")
        report["ablation"] = result.to_dict()
        report["metrics"] = {f"median_{name}": median for name, median in result.medians().items()}
        save_report_json(report, cfg)
        generate_full_process_report(report, cfg)
