# =============================================================================
# 🏦 Feature & Score Memory Banks (utils/banks.py)
# -----------------------------------------------------------------------------
# Purpose:             Index-aligned feature bank F and score bank S with full and FIFO variants
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-16
# Last Updated:        2026-10-11
#
# Description:
#   The adaptation loop supervises each batch with predictions stored for the rest of the
#   target set. A full bank keeps one row per target sample (row index = dataset index) and
#   overwrites the rows of the current batch before every loss computation. A FIFO bank keeps
#   a fixed number of the most recently seen (index, feature, score) entries and discards the
#   oldest ones as batches are pushed.
#
# File Location:        /utils/banks.py
# Called By:            utils/trainer.py, utils/diagnostics.py, tools/diagnose_tool.py
# Int. Dependencies:    utils/model, utils/numerics, utils/shared/nrc_exceptions
# Ext. Dependencies:    numpy, dataclasses, typing
#
# Notes:
#   - Banks store copies; the losses read them as constants.
#   - In FIFO mode the ring is the whole retrieval population and rows are ordered oldest first.
#   - A dataset index may appear more than once in a FIFO ring; the newest entry wins in
#     newest_rows().
# =============================================================================

__all__ = [
    "FeatureBank",
    "ScoreBank",
    "MemoryBanks",
    "initialize_banks",
    "update_banks",
    "fifo_push",
]

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from utils.model import ModelParams, predict
from utils.numerics import as_matrix
from utils.shared.nrc_exceptions import InvalidInputError

BANK_MODES = ("full", "fifo")


@dataclass
class _Bank:
    storage: np.ndarray
    dataset_indices: np.ndarray
    mode: str = "full"
    capacity: Optional[int] = None

    def __post_init__(self):
        if self.mode not in BANK_MODES:
            raise InvalidInputError(f"bank mode must be one of {BANK_MODES}, got {self.mode!r}")
        if self.mode == "fifo" and (self.capacity is None or self.capacity < 1):
            raise InvalidInputError("fifo bank needs a positive capacity")
        self.dataset_indices = np.asarray(self.dataset_indices, dtype=np.int64)
        if self.storage.shape[0] != self.dataset_indices.shape[0]:
            raise InvalidInputError("bank storage and dataset index list disagree in length")

    def __len__(self) -> int:
        return int(self.storage.shape[0])

    @property
    def width(self) -> int:
        return int(self.storage.shape[1])

    def snapshot(self) -> np.ndarray:
        return self.storage.copy()

    def newest_rows(self) -> dict:
        """Map dataset index -> bank row of its newest entry."""
        return {int(idx): row for row, idx in enumerate(self.dataset_indices)}


@dataclass
class FeatureBank(_Bank):
    """Raw features z (not normalized; cosine retrieval normalizes at query time)."""


@dataclass
class ScoreBank(_Bank):
    """Probability rows p, index-aligned with the paired FeatureBank."""


class MemoryBanks(NamedTuple):
    features: FeatureBank
    scores: ScoreBank

    @property
    def mode(self) -> str:
        return self.features.mode

    @property
    def capacity(self) -> Optional[int]:
        return self.features.capacity

    def __len__(self) -> int:
        return len(self.features)


def initialize_banks(model: ModelParams, target, mode: str = "full", capacity: Optional[int] = None,
                     rng: Optional[np.random.Generator] = None) -> MemoryBanks:
    """
    Fill both banks with one eval-mode forward pass over the whole target set.

    Args:
        model: Current parameters.
        target: (n_t, d_in) target features.
        mode: "full" (one row per sample) or "fifo".
        capacity: Ring size for "fifo" mode.
        rng: Generator choosing which samples prefill a FIFO ring. Without one, the first
            ``capacity`` samples are used.

    Returns:
        MemoryBanks: (FeatureBank, ScoreBank).

    Raises:
        InvalidInputError: Empty target set, dimension mismatch, or a bad FIFO capacity.
    """
    x = as_matrix(target, "target")
    n = x.shape[0]
    if n == 0:
        raise InvalidInputError("cannot build memory banks from an empty target set")
    if x.shape[1] != model.input_dim:
        raise InvalidInputError(f"target has {x.shape[1]} columns, model expects {model.input_dim}")

    if mode == "full":
        indices = np.arange(n, dtype=np.int64)
    elif mode == "fifo":
        if capacity is None or capacity < 1:
            raise InvalidInputError("fifo mode needs a positive capacity")
        size = min(capacity, n)
        order = rng.permutation(n) if rng is not None else np.arange(n)
        indices = np.asarray(order[:size], dtype=np.int64)
    else:
        raise InvalidInputError(f"bank mode must be one of {BANK_MODES}, got {mode!r}")

    z, p = predict(model, x[indices])
    return MemoryBanks(
        FeatureBank(storage=z.copy(), dataset_indices=indices.copy(), mode=mode, capacity=capacity),
        ScoreBank(storage=p.copy(), dataset_indices=indices.copy(), mode=mode, capacity=capacity),
    )


def _check_batch(banks: MemoryBanks, batch_indices, z_batch, p_batch):
    idx = np.asarray(batch_indices)
    if idx.ndim != 1:
        raise InvalidInputError("batch indices must be a 1-D sequence")
    if idx.size and not np.issubdtype(idx.dtype, np.integer):
        raise InvalidInputError("batch indices must be integers")
    z = as_matrix(z_batch, "z_batch")
    p = as_matrix(p_batch, "p_batch")
    if z.shape[0] != idx.size or p.shape[0] != idx.size:
        raise InvalidInputError("batch indices, features and scores disagree in length")
    if z.shape[1] != banks.features.width or p.shape[1] != banks.scores.width:
        raise InvalidInputError("batch widths do not match the bank widths")
    return idx.astype(np.int64), z, p


def update_banks(banks: MemoryBanks, batch_indices, z_batch, p_batch) -> None:
    """
    Overwrite the full-mode rows of the current batch with detached copies of (z, p).

    Raises:
        InvalidInputError: Index out of range, shape mismatch, or a FIFO bank.
    """
    if banks.mode != "full":
        raise InvalidInputError("update_banks needs a full-mode bank; use fifo_push for FIFO banks")
    idx, z, p = _check_batch(banks, batch_indices, z_batch, p_batch)
    n = len(banks)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise InvalidInputError(f"batch index out of range [0, {n})")
    banks.features.storage[idx] = z
    banks.scores.storage[idx] = p


def fifo_push(banks: MemoryBanks, batch_indices, z_batch, p_batch) -> np.ndarray:
    """
    Append a batch to a FIFO ring and evict the oldest entries beyond capacity.

    Returns:
        np.ndarray: Bank rows now holding the pushed batch (in batch order).

    Raises:
        InvalidInputError: Not a FIFO bank, or the batch exceeds the capacity.
    """
    if banks.mode != "fifo":
        raise InvalidInputError("fifo_push needs a fifo-mode bank")
    idx, z, p = _check_batch(banks, batch_indices, z_batch, p_batch)
    capacity = int(banks.capacity)
    if idx.size > capacity:
        raise InvalidInputError(f"batch of {idx.size} exceeds fifo capacity {capacity}")
    if idx.size and idx.min() < 0:
        raise InvalidInputError("batch indices must be non-negative")

    for bank, rows in ((banks.features, z), (banks.scores, p)):
        storage = np.concatenate([bank.storage, rows], axis=0)
        indices = np.concatenate([bank.dataset_indices, idx])
        overflow = max(0, storage.shape[0] - capacity)
        bank.storage = storage[overflow:].copy()
        bank.dataset_indices = indices[overflow:].copy()
    size = len(banks)
    return np.arange(size - idx.size, size, dtype=np.int64)
