# =============================================================================
# 🧮 Dense Numeric Kernels (utils/numerics.py)
# -----------------------------------------------------------------------------
# Purpose:             Row softmax, cosine similarity and the finite-difference gradient oracle
# Project:             NRC Source-Free Adaptation Toolkit
# Version:             1.0.0
# Author:              NRC Toolkit Maintainers
# Created:             2026-09-14
# Last Updated:        2026-10-09
#
# Description:
#   Small, pure numpy kernels shared by the model, graph and loss modules. Matrices are
#   2-D float64 numpy arrays (row-major). Every public function checks its inputs for
#   finiteness and raises InvalidInputError instead of propagating NaN/Inf.
#
# File Location:        /utils/numerics.py
# Called By:            utils/model.py, utils/graph.py, utils/losses.py, tests
# Int. Dependencies:    utils/shared/nrc_exceptions
# Ext. Dependencies:    numpy, typing
#
# Notes:
#   - Zero-norm vectors get cosine similarity 0 through the EPS denominator floor.
#   - finite_difference_gradient works on arrays of any shape.
# =============================================================================

__all__ = [
    "EPS",
    "LOG_FLOOR",
    "as_matrix",
    "softmax_rows",
    "cosine_similarity",
    "normalize_rows",
    "cosine_similarity_matrix",
    "finite_difference_gradient",
    "max_relative_error",
]

from typing import Callable

import numpy as np

from utils.shared.nrc_exceptions import InvalidInputError

EPS = 1e-12
LOG_FLOOR = 1e-12


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """
    Coerce ``values`` to a finite 2-D float64 array.

    Args:
        values: Array-like of shape (rows, cols).
        name: Label used in error messages.

    Returns:
        np.ndarray: A float64 array (a copy only when conversion requires one).

    Raises:
        InvalidInputError: If the input is not 2-D or contains NaN/Inf.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def softmax_rows(logits) -> np.ndarray:
    """
    Row-wise softmax with per-row max subtraction.

    Args:
        logits: (n, C) finite matrix.

    Returns:
        np.ndarray: (n, C) matrix whose rows are probability vectors.
    """
    x = as_matrix(logits, "logits")
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cosine_similarity(a, b) -> float:
    """
    Cosine similarity a·b / (max(|a|, EPS) * max(|b|, EPS)), clamped to [-1, 1].

    Raises:
        InvalidInputError: If the vectors differ in length or are not finite.
    """
    va = np.asarray(a, dtype=np.float64).ravel()
    vb = np.asarray(b, dtype=np.float64).ravel()
    if va.shape != vb.shape:
        raise InvalidInputError(f"vector length mismatch: {va.size} vs {vb.size}")
    if not (np.all(np.isfinite(va)) and np.all(np.isfinite(vb))):
        raise InvalidInputError("cosine_similarity received non-finite input")
    denom = max(float(np.linalg.norm(va)), EPS) * max(float(np.linalg.norm(vb)), EPS)
    return float(np.clip(np.dot(va, vb) / denom, -1.0, 1.0))


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """Divide each row by max(norm, EPS)."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, EPS)


def cosine_similarity_matrix(queries, bank) -> np.ndarray:
    """
    All-pairs cosine similarity between query rows and bank rows.

    Args:
        queries: (n_q, d) matrix.
        bank: (n_b, d) matrix.

    Returns:
        np.ndarray: (n_q, n_b) similarities clamped to [-1, 1].
    """
    q = as_matrix(queries, "queries")
    b = as_matrix(bank, "bank")
    if q.shape[1] != b.shape[1]:
        raise InvalidInputError(f"dimension mismatch: queries have {q.shape[1]} cols, bank has {b.shape[1]}")
    return np.clip(normalize_rows(q) @ normalize_rows(b).T, -1.0, 1.0)


def finite_difference_gradient(f: Callable[[np.ndarray], float], theta, h: float = 1e-5) -> np.ndarray:
    """
    Central-difference gradient of a scalar function.

    Each coordinate k is perturbed in place on a private copy:
    (f(theta + h e_k) - f(theta - h e_k)) / (2h).

    Args:
        f: Scalar function of an array shaped like ``theta``.
        theta: Evaluation point (any shape).
        h: Step size.

    Returns:
        np.ndarray: Gradient with the same shape as ``theta``.
    """
    point = np.array(theta, dtype=np.float64, copy=True)
    grad = np.zeros_like(point)
    flat = point.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        f_plus = float(f(point))
        flat[k] = orig - h
        f_minus = float(f(point))
        flat[k] = orig
        gflat[k] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Largest |a - n| / max(|a|, |n|, floor) over all entries."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {n.shape}")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))
