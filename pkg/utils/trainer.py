# =============================================================================
# 🏋️ Optimizer, Source Pretraining & Adaptation Loop (utils/trainer.py)
# -----------------------------------------------------------------------------
# Purpose:             Heavy-ball SGD with parameter groups, label-smoothed pretraining and the NRC loop
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-22
# Last Updated:        2026-10-14
#
# Description:
#   pretrain_source() fits the network on labeled source data. adapt() then adapts a copy of
#   the pretrained parameters to unlabeled target features only. Every adaptation iteration:
#     1. draw the next batch of a seeded per-epoch permutation
#     2. forward the batch (batch norm in train mode by default)
#     3. write the batch's (z, p) into the memory banks
#     4. build the neighbor graph for the batch against the updated bank
#     5. evaluate the enabled loss terms with lambda_div decay
#     6. backpropagate dL/dp and take one SGD step
#   Each iteration appends one row to the training log (iter, l_n, l_e, l_self, l_div, l_d,
#   lambda_div, total).
#
# File Location:        /utils/trainer.py
# Called By:            utils/experiment.py, tools/pretrain_tool.py, tools/adapt_tool.py
# Int. Dependencies:    utils/model, utils/banks, utils/graph, utils/losses, utils/numerics,
#                       utils/manager/log_manager, utils/shared/nrc_exceptions
# Ext. Dependencies:    numpy, csv, math, dataclasses, pathlib, typing
#
# Notes:
#   - adapt() takes no source arguments; it cannot read source data.
#   - The last partial batch of an epoch is kept. A size-1 remainder is merged into the
#     previous batch when batch norm uses batch statistics.
#   - With every loss term disabled no optimizer step is taken, so parameters stay unchanged.
# =============================================================================

__all__ = [
    "PretrainConfig",
    "AdaptConfig",
    "OptimizerState",
    "TrainingLog",
    "AdaptResult",
    "sgd_step",
    "epoch_batches",
    "pretrain_source",
    "adapt",
]

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from utils.banks import MemoryBanks, fifo_push, initialize_banks, update_banks
from utils.graph import build_neighbor_graph
from utils.losses import LOG_COLUMNS, LossFlags, total_loss
from utils.manager.log_manager import LogManager
from utils.model import (
    ModelConfig,
    ModelParams,
    backward,
    forward,
    init_params,
    parameter_group,
    source_pretrain_loss,
)
from utils.numerics import as_matrix
from utils.shared.nrc_exceptions import ConfigValidationError, InvalidInputError, NumericFailureError

LR_GROUPS = ("backbone", "head")


def _check_lr(lr: Dict[str, float], context: str) -> Dict[str, float]:
    lr = dict(lr)
    if set(lr) != set(LR_GROUPS):
        raise ConfigValidationError(f"{context} must define exactly {list(LR_GROUPS)}", invalid_keys=[context])
    if any(v < 0 for v in lr.values()):
        raise ConfigValidationError(f"{context} values must be non-negative", invalid_keys=[context])
    return {k: float(v) for k, v in lr.items()}


class _SectionConfig:
    section: str = ""

    @classmethod
    def from_mapping(cls, values: Optional[dict]):
        values = dict(values or {})
        unknown = sorted(set(values) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigValidationError(f"{cls.section} has unknown keys: {unknown}", invalid_keys=unknown)
        if isinstance(values.get("lr"), dict):
            values["lr"] = {**cls.__dataclass_fields__["lr"].default_factory(), **values["lr"]}
        return cls(**values)

    @classmethod
    def from_config(cls, cfg):
        return cls.from_mapping(cfg.get(cls.section, {}))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PretrainConfig(_SectionConfig):
    """Source pretraining schedule (the ``pretrain`` config section)."""
    section = "pretrain"

    epochs: int = 20
    batch_size: int = 64
    lr: Dict[str, float] = field(default_factory=lambda: {"backbone": 0.01, "head": 0.1})
    momentum: float = 0.9
    weight_decay: float = 0.0
    smoothing: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.lr = _check_lr(self.lr, "pretrain.lr")
        if self.epochs < 0:
            raise ConfigValidationError("pretrain.epochs must be >= 0", invalid_keys=["pretrain.epochs"])
        if self.batch_size < 1:
            raise ConfigValidationError("pretrain.batch_size must be >= 1", invalid_keys=["pretrain.batch_size"])
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigValidationError("pretrain.momentum must lie in [0, 1)", invalid_keys=["pretrain.momentum"])
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigValidationError("pretrain.smoothing must lie in [0, 1)", invalid_keys=["pretrain.smoothing"])
        if self.weight_decay < 0:
            raise ConfigValidationError("pretrain.weight_decay must be >= 0", invalid_keys=["pretrain.weight_decay"])


@dataclass
class AdaptConfig(_SectionConfig):
    """
    Adaptation hyperparameters (the ``adapt`` config section; keys mirror these field names).

    Defaults follow the small-benchmark setting K=3, M=2, U=20, V=5 with r = 0.1. See
    large_neighborhood() for the K = M = 5 setting used on larger, cleaner target sets.
    """
    section = "adapt"

    K: int = 3
    M: int = 2
    U: int = 20
    V: int = 5
    r: float = 0.1
    r_expanded: float = 0.1
    batch_size: int = 64
    epochs: int = 10
    lr: Dict[str, float] = field(default_factory=lambda: {"backbone": 0.01, "head": 0.1})
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    mode: str = "nrc"
    use_affinity: bool = True
    dedupe_expanded: bool = False
    use_loss_n: bool = True
    use_loss_e: bool = True
    use_loss_self: bool = True
    use_loss_div: bool = True
    use_loss_d: bool = True
    bank_mode: str = "full"
    bank_capacity: Optional[int] = None
    batch_norm_train: bool = True
    div_prior: Optional[List[float]] = None

    def __post_init__(self):
        self.lr = _check_lr(self.lr, "adapt.lr")
        problems = []
        if self.K < 1 or self.M < 1:
            problems.append("K and M must be >= 1")
        if self.mode not in ("nrc", "nrc++"):
            problems.append(f"mode must be 'nrc' or 'nrc++', got {self.mode!r}")
        if self.mode == "nrc++" and not self.U > self.V >= 1:
            problems.append(f"nrc++ needs U > V >= 1, got U={self.U}, V={self.V}")
        if not -1.0 <= self.r <= 1.0 or not -1.0 <= self.r_expanded <= 1.0:
            problems.append("r and r_expanded must lie in [-1, 1]")
        if not 0.0 <= self.momentum < 1.0:
            problems.append("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            problems.append("weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            problems.append("batch_size must be >= 1 and epochs >= 0")
        if self.bank_mode not in ("full", "fifo"):
            problems.append(f"bank_mode must be 'full' or 'fifo', got {self.bank_mode!r}")
        if self.bank_mode == "fifo":
            if self.bank_capacity is None or self.bank_capacity < self.batch_size:
                problems.append("fifo bank_capacity must be set and >= batch_size")
        if self.div_prior is not None:
            prior = np.asarray(self.div_prior, dtype=np.float64)
            if prior.ndim != 1 or np.any(prior <= 0) or not math.isclose(prior.sum(), 1.0, abs_tol=1e-6):
                problems.append("div_prior must be a positive vector summing to 1")
            self.div_prior = [float(v) for v in prior]
        if problems:
            raise ConfigValidationError("invalid adapt config: " + "; ".join(problems),
                                        validation_context={"problems": problems})

    @classmethod
    def large_neighborhood(cls, **overrides) -> "AdaptConfig":
        """K = M = 5 preset."""
        return cls(**{"K": 5, "M": 5, **overrides})

    @property
    def flags(self) -> LossFlags:
        return LossFlags(mode=self.mode, use_loss_n=self.use_loss_n, use_loss_e=self.use_loss_e,
                         use_loss_self=self.use_loss_self, use_loss_div=self.use_loss_div,
                         use_loss_d=self.use_loss_d)


@dataclass
class OptimizerState:
    """Per-parameter momentum buffers, keyed like ModelParams.named_parameters()."""
    velocity: Dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "OptimizerState":
        return cls({name: np.zeros_like(arr) for name, arr in params.named_parameters().items()})


def sgd_step(params: ModelParams, grads: Dict[str, np.ndarray], state: OptimizerState,
             lr: Dict[str, float], momentum: float, weight_decay: float = 0.0) -> None:
    """
    One heavy-ball step per parameter, in place: g += wd * theta; v = m * v + g; theta -= lr_group * v.

    Args:
        params: Parameters updated in place.
        grads: Gradients keyed like ``params.named_parameters()``.
        state: Momentum buffers, updated in place.
        lr: Learning rate for each group ("backbone", "head").
        momentum: Momentum factor in [0, 1).
        weight_decay: L2 coefficient added to the gradient.

    Raises:
        InvalidInputError: Missing gradient or shape mismatch.
    """
    named = params.named_parameters()
    num_layers = len(params.extractor)
    for name, theta in named.items():
        if name not in grads or name not in state.velocity:
            raise InvalidInputError(f"missing gradient or momentum buffer for {name}")
        g = np.asarray(grads[name], dtype=np.float64)
        v = state.velocity[name]
        if g.shape != theta.shape or v.shape != theta.shape:
            raise InvalidInputError(f"shape mismatch for {name}: param {theta.shape}, grad {g.shape}, buffer {v.shape}")
        if weight_decay:
            g = g + weight_decay * theta
        v *= momentum
        v += g
        theta -= lr[parameter_group(name, num_layers)] * v


def epoch_batches(rng: np.random.Generator, n: int, batch_size: int, merge_singleton: bool) -> List[np.ndarray]:
    """Seeded permutation split into batches; the last partial batch is kept."""
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if merge_singleton and len(batches) > 1 and batches[-1].size == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def _make_logger(logger: Optional[LogManager]) -> LogManager:
    return logger if logger is not None else LogManager.quiet()


def pretrain_source(config: PretrainConfig, model_config: ModelConfig, source_x, source_y,
                    num_classes: Optional[int] = None, logger: Optional[LogManager] = None,
                    progressor=None) -> ModelParams:
    """
    Fit a fresh model on labeled source data with label-smoothed cross-entropy.

    Args:
        config: Pretraining schedule.
        model_config: Architecture.
        source_x: (n_s, d_in) features.
        source_y: (n_s,) labels in [0, C).
        num_classes: C; defaults to max(label) + 1.
        logger: Optional LogManager.
        progressor: Optional ProgressorManager advanced once per epoch.

    Returns:
        ModelParams: Trained parameters. With ``epochs == 0`` the seeded initialization.
    """
    log = _make_logger(logger)
    x = as_matrix(source_x, "source_x")
    y = np.asarray(source_y)
    if y.shape != (x.shape[0],):
        raise InvalidInputError(f"source labels must have shape ({x.shape[0]},), got {y.shape}")
    if x.shape[0] == 0:
        raise InvalidInputError("source set is empty")
    if not np.issubdtype(y.dtype, np.integer) or y.min() < 0:
        raise InvalidInputError("source labels must be non-negative integers")
    y = y.astype(np.int64)
    num_classes = int(num_classes if num_classes is not None else y.max() + 1)
    if y.max() >= num_classes:
        raise InvalidInputError(f"source labels must lie in [0, {num_classes})")
    missing = sorted(set(range(num_classes)) - set(np.unique(y).tolist()))
    if missing:
        log.warning(f"Classes absent from the source set: {missing}")

    rng = np.random.default_rng(config.seed)
    params = init_params(x.shape[1], num_classes, model_config, rng)
    state = OptimizerState.zeros_like(params)
    uses_bn = model_config.batch_norm

    for epoch in range(config.epochs):
        losses = []
        for idx in epoch_batches(rng, x.shape[0], config.batch_size, merge_singleton=uses_bn):
            if uses_bn and idx.size < 2:
                continue
            _, p, cache = forward(params, x[idx], mode="train")
            loss, d_p = source_pretrain_loss(p, y[idx], config.smoothing)
            if not math.isfinite(loss):
                raise NumericFailureError(f"non-finite source loss at epoch {epoch + 1}")
            sgd_step(params, backward(cache, d_p), state, config.lr, config.momentum, config.weight_decay)
            losses.append(loss)
        if not params.is_finite():
            raise NumericFailureError(f"non-finite parameters after source epoch {epoch + 1}")
        log.debug(f"source epoch {epoch + 1}/{config.epochs} loss={np.mean(losses):.4f}", indent=1)
        if progressor is not None:
            progressor.update(epoch + 1)
    return params


class TrainingLog:
    """Per-iteration loss breakdown rows, written as CSV with round-trip float formatting."""

    columns = LOG_COLUMNS

    def __init__(self):
        self.rows: List[list] = []

    def append(self, row: list) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows], dtype=np.float64)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "TrainingLog":
        log = cls()
        with Path(path).open("r", newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader)
            if header != cls.columns:
                raise InvalidInputError(f"unexpected training log header {header}")
            for row in reader:
                log.append([int(row[0])] + [float(v) for v in row[1:]])
        return log


@dataclass
class AdaptResult:
    params: ModelParams
    log: TrainingLog
    banks: MemoryBanks
    iterations: int


EpochCallback = Callable[[int, ModelParams, MemoryBanks], None]


def adapt(config: AdaptConfig, pretrained: ModelParams, target_x,
          logger: Optional[LogManager] = None, progressor=None,
          epoch_callback: Optional[EpochCallback] = None) -> AdaptResult:
    """
    Adapt a copy of ``pretrained`` to unlabeled target features.

    Args:
        config: Adaptation hyperparameters.
        pretrained: Source model; never modified.
        target_x: (n_t, d_in) unlabeled target features.
        logger: Optional LogManager.
        progressor: Optional ProgressorManager advanced once per epoch.
        epoch_callback: Called as ``callback(epoch, params, banks)`` once after the banks are
            built (epoch 0) and after every epoch.

    Returns:
        AdaptResult: adapted parameters, training log, final banks and iteration count.

    Raises:
        InvalidInputError: batch_size > n_t, dimension mismatch or a bank too small for K/M/U.
        NumericFailureError: A loss or parameter became non-finite.
    """
    log = _make_logger(logger)
    x = as_matrix(target_x, "target_x")
    n = x.shape[0]
    if n == 0:
        raise InvalidInputError("target set is empty")
    if x.shape[1] != pretrained.input_dim:
        raise InvalidInputError(f"target has {x.shape[1]} columns, model expects {pretrained.input_dim}")
    if config.batch_size > n:
        raise InvalidInputError(f"batch_size {config.batch_size} exceeds target size {n}")
    if config.div_prior is not None and len(config.div_prior) != pretrained.num_classes:
        raise InvalidInputError(f"div_prior has {len(config.div_prior)} entries, model has {pretrained.num_classes} classes")

    flags = config.flags
    bank_size = n if config.bank_mode == "full" else min(int(config.bank_capacity), n)
    needed = max(config.K, config.M) + 1
    if flags.density_enabled:
        needed = max(needed, config.U + 1)
    if bank_size < needed:
        raise InvalidInputError(f"memory bank of {bank_size} rows is too small for K={config.K}, M={config.M}"
                                + (f", U={config.U}" if flags.density_enabled else ""))

    uses_bn = any(layer.batch_norm is not None for layer in pretrained.extractor)
    bn_mode = "train" if config.batch_norm_train else "eval"
    if uses_bn and bn_mode == "train" and n < 2:
        raise InvalidInputError("train-mode batch norm needs at least 2 target samples")

    rng = np.random.default_rng(config.seed)
    params = pretrained.copy()
    banks = initialize_banks(params, x, mode=config.bank_mode, capacity=config.bank_capacity, rng=rng)
    state = OptimizerState.zeros_like(params)
    iters_per_epoch = math.ceil(n / config.batch_size)
    max_iter = max(config.epochs * iters_per_epoch, 1)
    prior = np.asarray(config.div_prior) if config.div_prior is not None else None
    training_log = TrainingLog()

    log.debug(f"adapt: n_t={n} mode={config.mode} bank={config.bank_mode} max_iter={max_iter}")
    if epoch_callback is not None:
        epoch_callback(0, params, banks)

    iteration = 0
    for epoch in range(config.epochs):
        for idx in epoch_batches(rng, n, config.batch_size, merge_singleton=uses_bn and bn_mode == "train"):
            _, p, cache = forward(params, x[idx], mode=bn_mode, update_running_stats=flags.any_enabled)
            z = cache.z
            if config.bank_mode == "full":
                update_banks(banks, idx, z, p)
                rows = idx
            else:
                rows = fifo_push(banks, idx, z, p)

            graph = build_neighbor_graph(
                banks.features, rows, config.K, config.M, config.r,
                r_expanded=config.r_expanded, use_affinity=config.use_affinity,
                dedupe_expanded=config.dedupe_expanded, with_density=flags.density_enabled,
                U=config.U, V=config.V,
            )
            breakdown = total_loss(p, graph, banks.scores, iteration, max_iter, flags, prior)
            if not math.isfinite(breakdown.total) or not np.all(np.isfinite(breakdown.dL_dp)):
                raise NumericFailureError(f"non-finite loss at iteration {iteration}")
            training_log.append(breakdown.log_row(iteration))

            if flags.any_enabled:
                grads = backward(cache, breakdown.dL_dp)
                sgd_step(params, grads, state, config.lr, config.momentum, config.weight_decay)
                if not params.is_finite():
                    raise NumericFailureError(f"non-finite parameters after iteration {iteration}")
            iteration += 1

        log.debug(f"adapt epoch {epoch + 1}/{config.epochs} last total={training_log.rows[-1][-1]:.5f}", indent=1)
        if progressor is not None:
            progressor.update(epoch + 1)
        if epoch_callback is not None:
            epoch_callback(epoch + 1, params, banks)

    return AdaptResult(params=params, log=training_log, banks=banks, iterations=iteration)
