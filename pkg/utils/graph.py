# =============================================================================
# 🕸️ Neighborhood Graph Construction (utils/graph.py)
# -----------------------------------------------------------------------------
# Purpose:             Cosine kNN retrieval, reciprocity, affinities A/B, expanded neighbors and density sets
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-17
# Last Updated:        2026-10-13
#
# Description:
#   Builds every neighborhood structure the clustering losses consume from a feature-bank
#   snapshot:
#     - N_K(i): K nearest bank rows by cosine similarity, self excluded
#     - reciprocity: j in N_K(i) is reciprocal when i is also in N_M(j); affinity A is 1 for
#       reciprocal pairs and r otherwise
#     - expanded neighbors E_M(i): the multiset union of N_M(j) for j in N_K(i), ego removed,
#       duplicates kept (optionally deduplicated for ablations)
#     - density sets D(i) = { j : i in N_U(j) } over the whole bank, with affinity B = 1 when
#       j is also in N_V(i) and r otherwise
#   Also writes an optional CSV dump of the graph for inspection.
#
# File Location:        /utils/graph.py
# Called By:            utils/trainer.py, utils/diagnostics.py, tools/diagnose_tool.py
# Int. Dependencies:    utils/numerics, utils/shared/nrc_exceptions
# Ext. Dependencies:    numpy, csv, dataclasses, pathlib, typing
#
# Notes:
#   - Neighbor lists are ordered by descending similarity, ties by ascending bank row.
#   - Lists computed with a larger L have the lists for any smaller K as their prefix, so one
#     retrieval with L = max(K, M, U, V) serves every structure.
#   - Rows of a reverse-lookup table that were never retrieved hold -1.
# =============================================================================

__all__ = [
    "NeighborGraph",
    "knn_indices",
    "affinity_a",
    "expand_neighbors",
    "density_sets",
    "affinity_b",
    "build_neighbor_graph",
    "dump_graph_csv",
]

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from utils.numerics import as_matrix, cosine_similarity_matrix
from utils.shared.nrc_exceptions import InvalidInputError


def _storage(bank) -> np.ndarray:
    return as_matrix(getattr(bank, "storage", bank), "bank")


def knn_indices(bank, queries, K: int, exclude=None) -> np.ndarray:
    """
    Exact cosine top-K retrieval with deterministic ordering.

    Args:
        bank: FeatureBank or (n_b, d) matrix.
        queries: (n_q, d) matrix.
        K: Neighbors per query.
        exclude: Optional (n_q,) bank row to skip for each query (its own row); -1 skips nothing.

    Returns:
        np.ndarray: (n_q, K) int64 bank rows, by descending similarity then ascending row.

    Raises:
        InvalidInputError: If K < 1 or K exceeds the number of eligible bank rows.
    """
    b = _storage(bank)
    q = as_matrix(queries, "queries")
    n_b = b.shape[0]
    n_q = q.shape[0]
    excluding = exclude is not None
    if K < 1:
        raise InvalidInputError(f"K must be >= 1, got {K}")
    if K > n_b - (1 if excluding else 0):
        raise InvalidInputError(f"K={K} too large for a bank of {n_b} rows" + (" with self-exclusion" if excluding else ""))

    sims = cosine_similarity_matrix(q, b)
    if excluding:
        ex = np.asarray(exclude, dtype=np.int64)
        if ex.shape != (n_q,):
            raise InvalidInputError(f"exclude must have shape ({n_q},), got {ex.shape}")
        if np.any(ex >= n_b):
            raise InvalidInputError("exclude refers to a row outside the bank")
        hit = ex >= 0
        sims[np.nonzero(hit)[0], ex[hit]] = -np.inf
    if n_q == 0:
        return np.zeros((0, K), dtype=np.int64)

    # K-th largest value per row, then strict winners plus the lowest-index ties
    kth = -np.partition(-sims, K - 1, axis=1)[:, K - 1]
    above = sims > kth[:, None]
    tied = sims == kth[:, None]
    room = K - above.sum(axis=1)
    take_tied = tied & (np.cumsum(tied, axis=1) <= room[:, None])
    selected = above | take_tied

    cols = np.nonzero(selected)[1].reshape(n_q, K)
    vals = np.take_along_axis(sims, cols, axis=1)
    order = np.argsort(-vals, axis=1, kind="stable")
    return np.take_along_axis(cols, order, axis=1).astype(np.int64)


def affinity_a(knn_k, reverse_lists, query_rows, r: float,
               use_affinity: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    Affinity of each (query, neighbor) pair: 1 if reciprocal, r otherwise.

    Args:
        knn_k: (n_q, K) bank rows of N_K for each query.
        reverse_lists: (n_b, M) table with N_M(j) in row j for every neighbor j in ``knn_k``.
        query_rows: (n_q,) bank row of each query.
        r: Affinity of non-reciprocal neighbors.
        use_affinity: When False every weight is 1 (ablation); reciprocity is still reported.

    Returns:
        (weights, reciprocal): (n_q, K) float weights and the boolean reciprocity mask.
    """
    knn_k = np.asarray(knn_k, dtype=np.int64)
    rev = np.asarray(reverse_lists, dtype=np.int64)
    rows = np.asarray(query_rows, dtype=np.int64)
    if rows.shape[0] != knn_k.shape[0]:
        raise InvalidInputError("query_rows and knn_k disagree in length")
    neighbor_lists = rev[knn_k]  # (n_q, K, M)
    if np.any(neighbor_lists < 0):
        raise InvalidInputError("reverse table is missing rows for some neighbors")
    reciprocal = np.any(neighbor_lists == rows[:, None, None], axis=2)
    if use_affinity:
        weights = np.where(reciprocal, 1.0, float(r))
    else:
        weights = np.ones(knn_k.shape, dtype=np.float64)
    return weights, reciprocal


def expand_neighbors(knn_k, reverse_lists, query_rows, dedupe: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Expanded neighborhood multiset E_M for each query.

    Args:
        knn_k: (n_q, K) N_K rows.
        reverse_lists: (n_b, M) table with N_M(j) for every neighbor j.
        query_rows: (n_q,) ego rows, removed wherever they appear.
        dedupe: Keep only the first occurrence of each row (ablation variant).

    Returns:
        (members, mask): (n_q, K*M) candidate rows and the boolean mask of kept entries. The
        multiset of query q is ``members[q][mask[q]]``.
    """
    knn_k = np.asarray(knn_k, dtype=np.int64)
    rev = np.asarray(reverse_lists, dtype=np.int64)
    rows = np.asarray(query_rows, dtype=np.int64)
    n_q = knn_k.shape[0]
    members = rev[knn_k].reshape(n_q, -1)
    if np.any(members < 0):
        raise InvalidInputError("reverse table is missing rows for some neighbors")
    mask = members != rows[:, None]
    if dedupe and members.shape[1]:
        order = np.argsort(members, axis=1, kind="stable")
        sorted_members = np.take_along_axis(members, order, axis=1)
        first = np.ones_like(sorted_members, dtype=bool)
        first[:, 1:] = sorted_members[:, 1:] != sorted_members[:, :-1]
        keep = np.empty_like(first)
        np.put_along_axis(keep, order, first, axis=1)
        mask &= keep
    return members, mask


def density_sets(bank, U: int, knn=None) -> List[np.ndarray]:
    """
    D(i) = { j : i in N_U(j) } over the whole bank, self excluded from every N_U.

    Args:
        bank: FeatureBank or (n_b, d) matrix.
        U: Neighborhood size used for the reverse count.
        knn: Optional precomputed (n_b, >= U) whole-bank neighbor table (self-excluded).

    Returns:
        list[np.ndarray]: Sorted int64 members of D(i) for every bank row i.

    Raises:
        InvalidInputError: If U >= bank size or U < 1.
    """
    b = _storage(bank)
    n_b = b.shape[0]
    if U < 1 or U >= n_b:
        raise InvalidInputError(f"U must lie in [1, {n_b - 1}] for a bank of {n_b} rows, got {U}")
    if knn is None:
        knn = knn_indices(b, b, U, exclude=np.arange(n_b))
    table = np.asarray(knn, dtype=np.int64)[:, :U]
    if table.shape != (n_b, U):
        raise InvalidInputError(f"knn table must cover every bank row with >= {U} columns")

    sources = np.repeat(np.arange(n_b, dtype=np.int64), U)
    targets = table.ravel()
    order = np.lexsort((sources, targets))
    counts = np.bincount(targets, minlength=n_b)
    return np.split(sources[order], np.cumsum(counts)[:-1])


def affinity_b(sets: List[np.ndarray], knn_v, query_rows, r: float,
               use_affinity: bool = True) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Density-affinity pairs for each query: B = 1 when j in D(i) is also in N_V(i), r otherwise.

    Args:
        sets: Density sets from density_sets().
        knn_v: (n_q, V) N_V rows of each query.
        query_rows: (n_q,) bank row of each query.
        r: Weight of non-dense pairs.
        use_affinity: When False every emitted weight is 1.

    Returns:
        (pair_query, pair_neighbor, pair_weight): flat arrays; ``pair_query`` is the position of
        the query in the batch. Queries with an empty D(i) emit nothing.
    """
    knn_v = np.asarray(knn_v, dtype=np.int64)
    rows = np.asarray(query_rows, dtype=np.int64)
    q_pos, neigh, weight = [], [], []
    for q, i in enumerate(rows):
        members = sets[int(i)]
        if members.size == 0:
            continue
        dense = np.isin(members, knn_v[q])
        q_pos.append(np.full(members.size, q, dtype=np.int64))
        neigh.append(members)
        if use_affinity:
            weight.append(np.where(dense, 1.0, float(r)))
        else:
            weight.append(np.ones(members.size))
    if not q_pos:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)
    return np.concatenate(q_pos), np.concatenate(neigh), np.concatenate(weight)


@dataclass
class NeighborGraph:
    """Every neighborhood structure for one batch of queries against one bank snapshot."""
    query_rows: np.ndarray
    knn: np.ndarray
    reciprocal: np.ndarray
    affinity_a: np.ndarray
    expanded: np.ndarray
    expanded_mask: np.ndarray
    r: float
    r_expanded: float
    density_sets: Optional[List[np.ndarray]] = None
    density_query: Optional[np.ndarray] = None
    density_neighbor: Optional[np.ndarray] = None
    affinity_b: Optional[np.ndarray] = None

    @property
    def num_queries(self) -> int:
        return int(self.knn.shape[0])

    def expanded_multiset(self, q: int) -> np.ndarray:
        return self.expanded[q][self.expanded_mask[q]]


def build_neighbor_graph(bank, query_rows, K: int, M: int, r: float = 0.1, *,
                         r_expanded: float = 0.1, use_affinity: bool = True,
                         dedupe_expanded: bool = False, with_density: bool = False,
                         U: Optional[int] = None, V: Optional[int] = None) -> NeighborGraph:
    """
    Build the graph for queries that are themselves rows of the bank.

    Queries are the bank rows ``query_rows`` (the just-updated rows of the current batch), so
    each query excludes its own row. With density enabled one whole-bank retrieval with
    L = max(K, M, U, V) serves every structure; otherwise only the query rows and their
    neighbors are retrieved.
    """
    b = _storage(bank)
    n_b = b.shape[0]
    rows = np.asarray(query_rows, dtype=np.int64)
    if rows.ndim != 1 or (rows.size and (rows.min() < 0 or rows.max() >= n_b)):
        raise InvalidInputError(f"query rows must be valid rows of a bank with {n_b} entries")
    if M < 1:
        raise InvalidInputError(f"M must be >= 1, got {M}")

    if with_density:
        if U is None or V is None:
            raise InvalidInputError("density graph needs U and V")
        if not 1 <= V < U:
            raise InvalidInputError(f"density graph needs U > V >= 1, got U={U}, V={V}")
        L = max(K, M, U, V)
        full = knn_indices(b, b, L, exclude=np.arange(n_b))
        knn_q = full[rows]
        reverse = full[:, :M]
    else:
        knn_q = knn_indices(b, b[rows], K, exclude=rows)
        reverse = np.full((n_b, M), -1, dtype=np.int64)
        needed = np.unique(knn_q)
        if needed.size:
            reverse[needed] = knn_indices(b, b[needed], M, exclude=needed)

    knn_k = knn_q[:, :K]
    weights_a, reciprocal = affinity_a(knn_k, reverse, rows, r, use_affinity=use_affinity)
    members, mask = expand_neighbors(knn_k, reverse, rows, dedupe=dedupe_expanded)
    graph = NeighborGraph(query_rows=rows, knn=knn_k, reciprocal=reciprocal, affinity_a=weights_a,
                          expanded=members, expanded_mask=mask, r=float(r), r_expanded=float(r_expanded))
    if with_density:
        sets = density_sets(b, U, knn=full)
        graph.density_sets = sets
        graph.density_query, graph.density_neighbor, graph.affinity_b = affinity_b(
            sets, knn_q[:, :V], rows, r, use_affinity=use_affinity)
    return graph


def dump_graph_csv(graph: NeighborGraph, path: Union[str, Path]) -> Path:
    """
    Write the graph as CSV rows ``query_index,neighbor_index,relation,weight``.

    Relations: ``knn`` (weight A), ``rnn`` (reciprocal subset, weight 1), ``expanded`` (one row
    per multiset occurrence, weight r_expanded) and ``density`` (weight B). Indices are bank rows.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["query_index", "neighbor_index", "relation", "weight"])
        for q, i in enumerate(graph.query_rows):
            for k, j in enumerate(graph.knn[q]):
                writer.writerow([int(i), int(j), "knn", repr(float(graph.affinity_a[q, k]))])
            for k, j in enumerate(graph.knn[q]):
                if graph.reciprocal[q, k]:
                    writer.writerow([int(i), int(j), "rnn", repr(1.0)])
            for m in graph.expanded_multiset(q):
                writer.writerow([int(i), int(m), "expanded", repr(graph.r_expanded)])
        if graph.density_query is not None:
            for q, j, w in zip(graph.density_query, graph.density_neighbor, graph.affinity_b):
                writer.writerow([int(graph.query_rows[q]), int(j), "density", repr(float(w))])
    return path
