# =============================================================================
# 📉 Clustering Objective Terms (utils/losses.py)
# -----------------------------------------------------------------------------
# Purpose:             Neighborhood, expanded, self, diversity and density losses plus their composition
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-18
# Last Updated:        2026-10-13
#
# Description:
#   Every term returns (value, dL/dp) for the current batch probabilities p. Bank scores are
#   read as constants, so gradients flow only into p. All terms are batch means.
#
#     L_N    = -1/n sum_i sum_{k in N_K(i)} A_ik S_k . p_i
#     L_E    = -1/n sum_i sum_{m in E_M(i)} r_e  S_m . p_i     (one term per multiset occurrence)
#     L_self = -1/n sum_i S_i . p_i
#     L_div  = KL(mean(p) || q),  q uniform unless a prior is supplied
#     L_D    = -1/n sum_i sum_{j in D(i)} B_ij S_j . p_i
#
#   total = L_N + L_D + L_E + L_self + lambda_div * L_div with
#   lambda_div = (1 + 10 * iter / max_iter)^-1.
#
# File Location:        /utils/losses.py
# Called By:            utils/trainer.py, tests
# Int. Dependencies:    utils/graph, utils/numerics, utils/shared/nrc_exceptions
# Ext. Dependencies:    numpy, dataclasses, typing
# =============================================================================

__all__ = [
    "LossFlags",
    "LossBreakdown",
    "LOG_COLUMNS",
    "loss_n",
    "loss_e",
    "loss_self",
    "loss_div",
    "loss_d",
    "lambda_schedule",
    "total_loss",
]

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from utils.graph import NeighborGraph
from utils.numerics import LOG_FLOOR, as_matrix
from utils.shared.nrc_exceptions import InvalidInputError

LOG_COLUMNS = ["iter", "l_n", "l_e", "l_self", "l_div", "l_d", "lambda_div", "total"]


def _scores(score_bank) -> np.ndarray:
    return np.asarray(getattr(score_bank, "storage", score_bank), dtype=np.float64)


def _weighted_pull(p: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    n = p.shape[0]
    if n == 0:
        raise InvalidInputError("loss needs a non-empty batch")
    value = -float(np.sum(targets * p)) / n
    return value, -targets / n


def loss_n(p_batch, knn_k, affinity, score_bank) -> Tuple[float, np.ndarray]:
    """Affinity-weighted agreement with the K nearest neighbors' bank scores."""
    p = as_matrix(p_batch, "p_batch")
    knn_k = np.asarray(knn_k, dtype=np.int64)
    a = np.asarray(affinity, dtype=np.float64)
    if knn_k.shape[0] != p.shape[0] or a.shape != knn_k.shape:
        raise InvalidInputError(f"graph shape {knn_k.shape} / affinity {a.shape} does not match batch of {p.shape[0]}")
    s = _scores(score_bank)
    targets = np.einsum("nk,nkc->nc", a, s[knn_k])
    return _weighted_pull(p, targets)


def loss_e(p_batch, expanded, expanded_mask, score_bank, r: float = 0.1) -> Tuple[float, np.ndarray]:
    """
    Expanded-neighbor agreement with a fixed small affinity ``r``.

    ``expanded``/``expanded_mask`` come from graph.expand_neighbors; each kept entry counts
    once per occurrence, so duplicates contribute multiple times.
    """
    p = as_matrix(p_batch, "p_batch")
    members = np.asarray(expanded, dtype=np.int64)
    mask = np.asarray(expanded_mask, dtype=bool)
    if members.shape != mask.shape or members.shape[0] != p.shape[0]:
        raise InvalidInputError("expanded neighbor table does not match the batch")
    s = _scores(score_bank)
    targets = float(r) * np.einsum("nm,nmc->nc", mask.astype(np.float64), s[members])
    return _weighted_pull(p, targets)


def loss_self(p_batch, s_batch) -> Tuple[float, np.ndarray]:
    """Agreement with the sample's own bank score (a constant snapshot)."""
    p = as_matrix(p_batch, "p_batch")
    s = as_matrix(s_batch, "s_batch")
    if s.shape != p.shape:
        raise InvalidInputError(f"bank rows {s.shape} do not match batch {p.shape}")
    return _weighted_pull(p, s)


def loss_div(p_batch, prior=None) -> Tuple[float, np.ndarray]:
    """
    KL divergence between the batch-mean prediction and the prior (uniform by default).

    Args:
        p_batch: (n, C) probabilities.
        prior: Optional length-C positive vector summing to 1.

    Returns:
        (value, dL_dp)
    """
    p = as_matrix(p_batch, "p_batch")
    n, num_classes = p.shape
    if n == 0:
        raise InvalidInputError("loss_div needs a non-empty batch")
    if prior is None:
        q = np.full(num_classes, 1.0 / num_classes)
    else:
        q = np.asarray(prior, dtype=np.float64).ravel()
        if q.shape != (num_classes,) or np.any(q <= 0):
            raise InvalidInputError(f"prior must be a positive vector of length {num_classes}")
    p_bar = p.mean(axis=0)
    clamped = np.maximum(p_bar, LOG_FLOOR)
    log_ratio = np.log(clamped) - np.log(q)
    value = float(np.sum(p_bar * log_ratio))
    d_pbar = log_ratio + (p_bar > LOG_FLOOR)
    grad = np.broadcast_to(d_pbar / n, p.shape).copy()
    return value, grad


def loss_d(p_batch, pair_query, pair_neighbor, pair_weight, score_bank) -> Tuple[float, np.ndarray]:
    """
    Density-set agreement. Pairs come from graph.affinity_b; a query with no pairs (an
    outlier with empty D(i)) contributes nothing.
    """
    p = as_matrix(p_batch, "p_batch")
    q_pos = np.asarray(pair_query, dtype=np.int64)
    neigh = np.asarray(pair_neighbor, dtype=np.int64)
    w = np.asarray(pair_weight, dtype=np.float64)
    if not (q_pos.shape == neigh.shape == w.shape):
        raise InvalidInputError("density pair arrays differ in length")
    if q_pos.size and (q_pos.min() < 0 or q_pos.max() >= p.shape[0]):
        raise InvalidInputError("density pair refers to a query outside the batch")
    s = _scores(score_bank)
    targets = np.zeros_like(p)
    np.add.at(targets, q_pos, w[:, None] * s[neigh])
    return _weighted_pull(p, targets)


def lambda_schedule(iteration: int, max_iter: int) -> float:
    """(1 + 10 * iteration / max_iter)^-1."""
    if max_iter <= 0:
        raise InvalidInputError(f"max_iter must be positive, got {max_iter}")
    if not 0 <= iteration <= max_iter:
        raise InvalidInputError(f"iteration {iteration} outside [0, {max_iter}]")
    return 1.0 / (1.0 + 10.0 * iteration / max_iter)


@dataclass(frozen=True)
class LossFlags:
    mode: str = "nrc"
    use_loss_n: bool = True
    use_loss_e: bool = True
    use_loss_self: bool = True
    use_loss_div: bool = True
    use_loss_d: bool = True

    @property
    def density_enabled(self) -> bool:
        return self.mode == "nrc++" and self.use_loss_d

    @property
    def any_enabled(self) -> bool:
        return self.use_loss_n or self.use_loss_e or self.use_loss_self or self.use_loss_div or self.density_enabled


@dataclass
class LossBreakdown:
    l_n: float
    l_e: float
    l_self: float
    l_div: float
    l_d: float
    lambda_div: float
    total: float
    dL_dp: np.ndarray

    def log_row(self, iteration: int) -> list:
        return [iteration, self.l_n, self.l_e, self.l_self, self.l_div, self.l_d, self.lambda_div, self.total]


def total_loss(p_batch, graph: NeighborGraph, score_bank, iteration: int, max_iter: int,
               flags: LossFlags = LossFlags(), div_prior=None) -> LossBreakdown:
    """
    Sum the enabled terms. Disabled terms report 0 and add no gradient; NRC mode never
    includes the density term.

    Args:
        p_batch: (n, C) probabilities of the batch, in the order of ``graph.query_rows``.
        graph: Graph built for this batch from the current bank snapshot.
        score_bank: ScoreBank (or matrix) the graph indexes into.
        iteration: Current iteration for the lambda_div decay.
        max_iter: Total iterations.
        flags: Which terms are enabled.
        div_prior: Optional class prior for L_div.

    Returns:
        LossBreakdown
    """
    p = as_matrix(p_batch, "p_batch")
    if graph.num_queries != p.shape[0]:
        raise InvalidInputError(f"graph has {graph.num_queries} queries, batch has {p.shape[0]} rows")
    s = _scores(score_bank)
    grad = np.zeros_like(p)
    lam = lambda_schedule(iteration, max_iter)

    l_n = l_e = l_self = l_div = l_d = 0.0
    if flags.use_loss_n:
        l_n, g = loss_n(p, graph.knn, graph.affinity_a, s)
        grad += g
    if flags.density_enabled:
        if graph.density_query is None:
            raise InvalidInputError("density loss enabled but the graph has no density sets")
        l_d, g = loss_d(p, graph.density_query, graph.density_neighbor, graph.affinity_b, s)
        grad += g
    if flags.use_loss_e:
        l_e, g = loss_e(p, graph.expanded, graph.expanded_mask, s, graph.r_expanded)
        grad += g
    if flags.use_loss_self:
        l_self, g = loss_self(p, s[graph.query_rows])
        grad += g
    if flags.use_loss_div:
        l_div, g = loss_div(p, div_prior)
        grad += lam * g

    total = l_n + l_d + l_e + l_self + lam * l_div
    return LossBreakdown(l_n=l_n, l_e=l_e, l_self=l_self, l_div=l_div, l_d=l_d,
                         lambda_div=lam, total=total, dL_dp=grad)
