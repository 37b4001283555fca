# =============================================================================
# 🔁 Pipeline & Ablation Orchestration (utils/experiment.py)
# -----------------------------------------------------------------------------
# Purpose:             Runs pretrain -> source-only evaluation -> adapt -> evaluation, and ablation grids
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-26
# Last Updated:        2026-10-15
#
# Description:
#   run_pipeline() chains the stages of one experiment and returns every artifact with both
#   accuracies. run_ablation() repeats the pipeline across seeds and a list of named variants
#   (loss-term subsets, affinity on/off, deduplicated expanded neighbors, NRC++, the larger-K
#   baseline) and reports per-seed and median target accuracy. The pretrained model for a
#   seed is shared by every variant of that seed.
#
# File Location:        /utils/experiment.py
# Called By:            tools/ablation_tool.py, tools/diagnose_tool.py, tests/test_acceptance.py
# Int. Dependencies:    utils/trainer, utils/model, utils/data, utils/diagnostics, utils/manager/log_manager
# Ext. Dependencies:    numpy, csv, dataclasses, pathlib, typing
#
# Notes:
#   - Hidden target labels are used for evaluation only; adapt() never receives them.
#   - The "source_only" variant skips adaptation and reports the pretrained accuracy.
# =============================================================================

__all__ = [
    "ABLATION_VARIANTS",
    "variant_config",
    "PipelineResult",
    "run_pipeline",
    "AblationResult",
    "run_ablation",
]

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from utils.data import DatasetManifest
from utils.diagnostics import accuracy, mean_per_class_accuracy
from utils.manager.log_manager import LogManager
from utils.model import ModelConfig, ModelParams, predict
from utils.shared.nrc_exceptions import InvalidInputError
from utils.trainer import AdaptConfig, AdaptResult, EpochCallback, PretrainConfig, adapt, pretrain_source

_NO_EXTRAS = {"use_loss_e": False, "use_loss_self": False}

# Overrides applied to the base AdaptConfig. None means no adaptation.
ABLATION_VARIANTS: Dict[str, Optional[dict]] = {
    "source_only": None,
    "div_only": {"use_loss_n": False, "use_loss_e": False, "use_loss_self": False, "mode": "nrc"},
    "div_n_no_affinity": {**_NO_EXTRAS, "use_affinity": False, "mode": "nrc"},
    "div_n_affinity": {**_NO_EXTRAS, "mode": "nrc"},
    "div_n_e_no_affinity": {"use_loss_self": False, "use_affinity": False, "mode": "nrc"},
    "nrc": {"mode": "nrc"},
    "nrc_deduped": {"mode": "nrc", "dedupe_expanded": True},
    "nrc_no_self": {"mode": "nrc", "use_loss_self": False},
    "larger_k": {"mode": "nrc", "use_loss_e": False},
    "nrc_plus_plus": {"mode": "nrc++"},
}


def variant_config(base: AdaptConfig, name: str) -> Optional[AdaptConfig]:
    """
    AdaptConfig for a named variant, or None for ``source_only``.

    ``larger_k`` replaces expanded neighbors by K' = K + K*M plain nearest neighbors.
    """
    if name not in ABLATION_VARIANTS:
        raise InvalidInputError(f"unknown ablation variant {name!r}; choose from {list(ABLATION_VARIANTS)}")
    overrides = ABLATION_VARIANTS[name]
    if overrides is None:
        return None
    overrides = dict(overrides)
    if name == "larger_k":
        overrides["K"] = base.K + base.K * base.M
    return replace(base, **overrides)


@dataclass
class PipelineResult:
    pretrained: ModelParams
    adapted: Optional[AdaptResult]
    source_only_accuracy: Optional[float]
    adapted_accuracy: Optional[float]
    source_only_per_class: Optional[float] = None
    adapted_per_class: Optional[float] = None

    @property
    def gain(self) -> Optional[float]:
        if self.source_only_accuracy is None or self.adapted_accuracy is None:
            return None
        return self.adapted_accuracy - self.source_only_accuracy


def _evaluate(params: ModelParams, x, y, num_classes: int):
    if y is None:
        return None, None
    _, p = predict(params, x)
    return accuracy(p, y), mean_per_class_accuracy(p, y, num_classes)


def run_pipeline(manifest: DatasetManifest, model_config: ModelConfig, pretrain_config: PretrainConfig,
                 adapt_config: Optional[AdaptConfig], logger: Optional[LogManager] = None,
                 pretrained: Optional[ModelParams] = None,
                 epoch_callback: Optional[EpochCallback] = None) -> PipelineResult:
    """
    Pretrain on the source domain (unless ``pretrained`` is given), then adapt on target features.

    Args:
        manifest: Dataset; target_y, when present, is used for evaluation only.
        model_config: Architecture for pretraining.
        pretrain_config: Source schedule.
        adapt_config: Adaptation settings; None stops after source-only evaluation.
        logger: Optional LogManager.
        pretrained: Reuse an existing source model.
        epoch_callback: Forwarded to adapt().
    """
    log = logger if logger is not None else LogManager.quiet()
    if pretrained is None:
        with log.step("Pretrain on source"):
            pretrained = pretrain_source(pretrain_config, model_config, manifest.source_x, manifest.source_y,
                                         num_classes=manifest.num_classes, logger=log)
    src_acc, src_pc = _evaluate(pretrained, manifest.target_x, manifest.target_y, manifest.num_classes)
    if src_acc is not None:
        log.info(f"Source-only target accuracy: {src_acc:.4f}", indent=1)
    if adapt_config is None:
        return PipelineResult(pretrained, None, src_acc, src_acc, src_pc, src_pc)

    with log.step(f"Adapt to target ({adapt_config.mode})"):
        result = adapt(adapt_config, pretrained, manifest.target_x, logger=log, epoch_callback=epoch_callback)
    acc, pc = _evaluate(result.params, manifest.target_x, manifest.target_y, manifest.num_classes)
    if acc is not None:
        log.info(f"Adapted target accuracy: {acc:.4f}", indent=1)
    return PipelineResult(pretrained, result, src_acc, acc, src_pc, pc)


@dataclass
class AblationResult:
    """Target accuracy per variant and seed."""
    seeds: List[int]
    accuracies: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def variants(self) -> List[str]:
        return list(self.accuracies)

    def median(self, variant: str) -> float:
        return float(np.median(self.accuracies[variant]))

    def medians(self) -> Dict[str, float]:
        return {name: self.median(name) for name in self.accuracies}

    def rows(self) -> List[dict]:
        return [
            {"variant": name, **{f"seed_{s}": acc for s, acc in zip(self.seeds, accs)}, "median": self.median(name)}
            for name, accs in self.accuracies.items()
        ]

    def to_dict(self) -> dict:
        return {"seeds": list(self.seeds), "rows": self.rows()}

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = ["variant"] + [f"seed_{s}" for s in self.seeds] + ["median"]
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=header, lineterminator="\n")
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: (repr(float(v)) if k != "variant" else v) for k, v in row.items()})
        return path


def run_ablation(manifest: DatasetManifest, model_config: ModelConfig, pretrain_config: PretrainConfig,
                 adapt_config: AdaptConfig, seeds: Sequence[int] = (0, 1, 2, 3, 4),
                 variants: Optional[Sequence[str]] = None, logger: Optional[LogManager] = None,
                 progressor=None) -> AblationResult:
    """
    Evaluate each variant for each seed. Pretraining and adaptation both use the seed.

    Raises:
        InvalidInputError: Unknown variant, no seeds, or a manifest without hidden target labels.
    """
    log = logger if logger is not None else LogManager.quiet()
    names = list(variants) if variants else list(ABLATION_VARIANTS)
    for name in names:
        variant_config(adapt_config, name)
    if not seeds:
        raise InvalidInputError("ablation needs at least one seed")
    if manifest.target_y is None:
        raise InvalidInputError("ablation needs hidden target labels for evaluation")

    result = AblationResult(seeds=[int(s) for s in seeds], accuracies={name: [] for name in names})
    done = 0
    for seed in result.seeds:
        with log.step(f"Ablation seed {seed}"):
            pretrained = pretrain_source(replace(pretrain_config, seed=seed), model_config,
                                         manifest.source_x, manifest.source_y,
                                         num_classes=manifest.num_classes, logger=log)
            for name in names:
                config = variant_config(adapt_config, name)
                if config is not None:
                    config = replace(config, seed=seed)
                outcome = run_pipeline(manifest, model_config, pretrain_config, config,
                                       logger=log, pretrained=pretrained)
                result.accuracies[name].append(float(outcome.adapted_accuracy))
                log.info(f"{name}: {outcome.adapted_accuracy:.4f}", indent=1)
                done += 1
                if progressor is not None:
                    progressor.update(done)
    return result
