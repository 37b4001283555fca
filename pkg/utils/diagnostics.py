# =============================================================================
# 🔬 Evaluation Metrics & Neighbor Diagnostics (utils/diagnostics.py)
# -----------------------------------------------------------------------------
# Purpose:             Accuracy metrics, neighbor purity reports and training-curve tracking
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-24
# Last Updated:        2026-10-15
#
# Description:
#   accuracy() / per_class_accuracy() score predictions against labels. neighbor_purity()
#   measures, for a range of K, how often kNN, reciprocal (RNN) and non-reciprocal (nRNN)
#   neighbors carry the query's predicted label and the query's true label, plus the share
#   of samples whose K neighbors all agree with them. SharedCurveTracker plugs into
#   trainer.adapt() as an epoch callback and records accuracy and all-K-shared ratios.
#
# File Location:        /utils/diagnostics.py
# Called By:            tools/diagnose_tool.py, tools/evaluate_tool.py, utils/experiment.py, tests
# Int. Dependencies:    utils/banks, utils/graph, utils/model, utils/numerics, utils/shared/nrc_exceptions
# Ext. Dependencies:    numpy, csv, dataclasses, pathlib, typing
#
# Notes:
#   - Predicted labels come from the score bank, not a fresh forward pass.
#   - Hidden target labels are indexed by dataset index and mapped through the bank's
#     dataset index list, so FIFO banks work too.
#   - A relation with no neighbors reports a fraction of 1.0 (vacuously pure) and count 0.
# =============================================================================

__all__ = [
    "accuracy",
    "per_class_accuracy",
    "mean_per_class_accuracy",
    "PurityPoint",
    "NeighborPurityReport",
    "neighbor_purity",
    "purity_table",
    "write_purity_csv",
    "SharedCurveTracker",
    "moving_average",
]

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from utils.banks import MemoryBanks
from utils.graph import knn_indices
from utils.model import ModelParams, predict
from utils.numerics import as_matrix
from utils.shared.nrc_exceptions import InvalidInputError

RELATIONS = ("knn", "rnn", "nrnn")


def _predicted(p) -> np.ndarray:
    p = np.asarray(p)
    if p.ndim == 2:
        return np.argmax(p, axis=1)
    return p.astype(np.int64)


def _check_pair(p, labels):
    pred = _predicted(p)
    y = np.asarray(labels, dtype=np.int64)
    if pred.size == 0 or y.size == 0:
        raise InvalidInputError("accuracy needs at least one sample")
    if pred.shape != y.shape:
        raise InvalidInputError(f"predictions {pred.shape} and labels {y.shape} do not align")
    return pred, y


def accuracy(p, labels) -> float:
    """
    Fraction of rows whose argmax equals the label. ``p`` may be scores or label vectors.

    Raises:
        InvalidInputError: Empty input or mismatched shapes.
    """
    pred, y = _check_pair(p, labels)
    return float(np.mean(pred == y))


def per_class_accuracy(p, labels, num_classes: Optional[int] = None) -> np.ndarray:
    """Recall of each class; NaN for classes absent from ``labels``."""
    pred, y = _check_pair(p, labels)
    if num_classes is None:
        num_classes = np.asarray(p).shape[1] if np.asarray(p).ndim == 2 else int(max(pred.max(), y.max())) + 1
    recalls = np.full(num_classes, np.nan)
    for c in range(num_classes):
        members = y == c
        if members.any():
            recalls[c] = float(np.mean(pred[members] == c))
    return recalls


def mean_per_class_accuracy(p, labels, num_classes: Optional[int] = None) -> float:
    """Mean of class-wise recalls over the classes present in ``labels``."""
    return float(np.nanmean(per_class_accuracy(p, labels, num_classes)))


@dataclass
class PurityPoint:
    """Statistics for one K."""
    K: int
    counts: Dict[str, int]
    same_pred: Dict[str, float]
    correct: Optional[Dict[str, float]]
    all_shared: float
    all_shared_correct: Optional[float]


@dataclass
class NeighborPurityReport:
    """
    Per-K purity curve.

    ``same_pred[rel]`` is the fraction of rel-neighbors whose predicted label equals the query's
    predicted label; ``correct[rel]`` the fraction whose predicted label equals the query's
    true label. ``all_shared`` is the share of samples whose K neighbors all carry the sample's
    predicted label, and ``all_shared_correct`` additionally requires that label to be right.
    """
    M: int
    points: List[PurityPoint] = field(default_factory=list)

    @property
    def k_values(self) -> List[int]:
        return [pt.K for pt in self.points]

    @property
    def has_labels(self) -> bool:
        return bool(self.points) and self.points[0].correct is not None

    def at(self, K: int) -> PurityPoint:
        for pt in self.points:
            if pt.K == K:
                return pt
        raise KeyError(f"K={K} not in report (have {self.k_values})")

    def rows(self) -> List[dict]:
        out = []
        for pt in self.points:
            for rel in RELATIONS:
                out.append({
                    "K": pt.K,
                    "relation": rel,
                    "count": pt.counts[rel],
                    "same_pred": pt.same_pred[rel],
                    "correct": pt.correct[rel] if pt.correct is not None else None,
                })
            out.append({
                "K": pt.K,
                "relation": "all_shared",
                "count": int(pt.counts["samples"]),
                "same_pred": pt.all_shared,
                "correct": pt.all_shared_correct,
            })
        return out

    def to_dict(self) -> dict:
        return {"M": self.M, "rows": self.rows()}


def _fraction(hits: np.ndarray) -> float:
    return float(hits.mean()) if hits.size else 1.0


def neighbor_purity(banks: MemoryBanks, k_values: Sequence[int] = (1, 2, 3, 4, 5), M: Optional[int] = None,
                    true_labels=None, predicted=None) -> NeighborPurityReport:
    """
    Neighbor quality over the whole bank for each K in ``k_values``.

    Args:
        banks: Memory banks; neighbors come from the feature bank.
        k_values: Neighborhood sizes to evaluate.
        M: Reverse-list size for reciprocity (j is reciprocal for i when i is in N_M(j)).
            None uses M = K at every point.
        true_labels: Optional hidden labels indexed by dataset index.
        predicted: Optional labels per bank row; defaults to the argmax of the score bank.

    Returns:
        NeighborPurityReport
    """
    features = banks.features.storage
    n = features.shape[0]
    ks = sorted({int(k) for k in k_values})
    if not ks or ks[0] < 1:
        raise InvalidInputError(f"k_values must be positive, got {list(k_values)}")
    if M is not None and M < 1:
        raise InvalidInputError(f"M must be >= 1, got {M}")
    pred = _predicted(banks.scores.storage if predicted is None else predicted)
    if pred.shape != (n,):
        raise InvalidInputError(f"predicted labels must have shape ({n},)")
    truth = None
    if true_labels is not None:
        y = np.asarray(true_labels, dtype=np.int64)
        truth = y[banks.features.dataset_indices]

    L = max(ks[-1], M or 0)
    full = knn_indices(features, features, L, exclude=np.arange(n))
    report = NeighborPurityReport(M=int(M) if M is not None else 0)
    rows = np.arange(n)[:, None]

    for K in ks:
        knn = full[:, :K]
        reverse = full[:, :(M if M is not None else K)]
        reciprocal = (reverse[knn] == rows[:, :, None]).any(axis=2)
        same = pred[knn] == pred[:, None]
        split = {"knn": np.ones_like(reciprocal), "rnn": reciprocal, "nrnn": ~reciprocal}

        counts = {rel: int(mask.sum()) for rel, mask in split.items()}
        counts["samples"] = n
        same_pred = {rel: _fraction(same[mask]) for rel, mask in split.items()}
        all_shared_rows = same.all(axis=1)
        correct = None
        all_shared_correct = None
        if truth is not None:
            right = pred[knn] == truth[:, None]
            correct = {rel: _fraction(right[mask]) for rel, mask in split.items()}
            all_shared_correct = _fraction(all_shared_rows & (pred == truth))
        report.points.append(PurityPoint(K=K, counts=counts, same_pred=same_pred, correct=correct,
                                         all_shared=_fraction(all_shared_rows),
                                         all_shared_correct=all_shared_correct))
    return report


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


PURITY_COLUMNS = ["K", "relation", "pre_count", "pre_same_pred", "pre_correct",
                  "post_count", "post_same_pred", "post_correct"]


def purity_table(pre: NeighborPurityReport, post: Optional[NeighborPurityReport] = None) -> List[dict]:
    """
    Pre- and post-adaptation curves side by side, one dict per (K, relation).

    Post values are None when ``post`` is None; correct values are None without ground truth.
    """
    post_rows = {(r["K"], r["relation"]): r for r in post.rows()} if post is not None else {}
    table = []
    for row in pre.rows():
        other = post_rows.get((row["K"], row["relation"]), {})
        table.append({
            "K": row["K"],
            "relation": row["relation"],
            "pre_count": row["count"],
            "pre_same_pred": row["same_pred"],
            "pre_correct": row["correct"],
            "post_count": other.get("count"),
            "post_same_pred": other.get("same_pred"),
            "post_correct": other.get("correct"),
        })
    return table


def write_purity_csv(path: Union[str, Path], pre: NeighborPurityReport,
                     post: Optional[NeighborPurityReport] = None) -> Path:
    """Write purity_table() as CSV; missing values are blank."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(PURITY_COLUMNS)
        for row in purity_table(pre, post):
            writer.writerow([
                row["K"], row["relation"],
                "" if row["pre_count"] is None else row["pre_count"],
                _fmt(row["pre_same_pred"]), _fmt(row["pre_correct"]),
                "" if row["post_count"] is None else row["post_count"],
                _fmt(row["post_same_pred"]), _fmt(row["post_correct"]),
            ])
    return path


class SharedCurveTracker:
    """
    Epoch callback for trainer.adapt() recording target accuracy and all-K-shared ratios.

    Labels are only read here, outside the trainer. Epoch 0 (banks freshly built) and the
    final epoch are always recorded; others every ``track_every`` epochs.
    """
    COLUMNS = ["epoch", "accuracy", "all_shared", "all_shared_correct"]

    def __init__(self, target_x, target_labels=None, shared_k: int = 5, track_every: int = 1,
                 total_epochs: Optional[int] = None, logger=None):
        self.target_x = as_matrix(target_x, "target_x")
        self.target_labels = None if target_labels is None else np.asarray(target_labels, dtype=np.int64)
        self.shared_k = int(shared_k)
        self.track_every = max(int(track_every), 1)
        self.total_epochs = total_epochs
        self.logger = logger
        self.rows: List[list] = []

    def __call__(self, epoch: int, params: ModelParams, banks: MemoryBanks) -> None:
        last = self.total_epochs is not None and epoch == self.total_epochs
        if epoch % self.track_every and not last:
            return
        acc = None
        if self.target_labels is not None:
            _, p = predict(params, self.target_x)
            acc = accuracy(p, self.target_labels)
        point = neighbor_purity(banks, [self.shared_k], true_labels=self.target_labels).at(self.shared_k)
        self.rows.append([epoch, acc, point.all_shared, point.all_shared_correct])
        if self.logger is not None:
            shown = "n/a" if acc is None else f"{acc:.4f}"
            self.logger.debug(f"epoch {epoch}: acc={shown} all-{self.shared_k}-shared={point.all_shared:.4f}",
                              indent=1)

    def column(self, name: str) -> np.ndarray:
        j = self.COLUMNS.index(name)
        return np.array([np.nan if row[j] is None else row[j] for row in self.rows], dtype=np.float64)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for epoch, acc, shared, shared_correct in self.rows:
                writer.writerow([epoch, _fmt(acc), _fmt(shared), _fmt(shared_correct)])
        return path


def moving_average(values, window: int = 5) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start)."""
    v = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise InvalidInputError("window must be >= 1")
    csum = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)
