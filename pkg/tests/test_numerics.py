import numpy as np
import pytest

from utils.numerics import (
    EPS,
    cosine_similarity,
    cosine_similarity_matrix,
    finite_difference_gradient,
    max_relative_error,
    softmax_rows,
)
from utils.shared.nrc_exceptions import InvalidInputError


def test_softmax_rows_sum_to_one_and_survive_large_logits():
    logits = np.array([[1000.0, 1000.0, 999.0], [-5.0, 0.0, 5.0]])
    p = softmax_rows(logits)
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert p[0, 0] == pytest.approx(p[0, 1])


def test_softmax_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        softmax_rows(np.array([[np.nan, 1.0]]))


def test_cosine_similarity_zero_vector_is_zero():
    assert cosine_similarity([0.0, 0.0], [1.0, 2.0]) == 0.0


def test_cosine_similarity_parallel_and_opposite():
    assert cosine_similarity([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0)
    assert cosine_similarity([1.0, 0.0], [-3.0, 0.0]) == pytest.approx(-1.0)


def test_cosine_similarity_length_mismatch():
    with pytest.raises(InvalidInputError):
        cosine_similarity([1.0, 2.0], [1.0, 2.0, 3.0])


def test_cosine_similarity_matrix_matches_pairwise(rng):
    q = rng.normal(size=(4, 3))
    b = rng.normal(size=(6, 3))
    sims = cosine_similarity_matrix(q, b)
    assert sims.shape == (4, 6)
    for i in range(4):
        for j in range(6):
            assert sims[i, j] == pytest.approx(cosine_similarity(q[i], b[j]))
    assert np.all(np.abs(sims) <= 1.0)


def test_cosine_similarity_matrix_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        cosine_similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))


def test_finite_difference_matches_quadratic():
    theta = np.array([[1.0, -2.0], [0.5, 3.0]])
    grad = finite_difference_gradient(lambda t: float(np.sum(t ** 2)), theta)
    np.testing.assert_allclose(grad, 2 * theta, rtol=1e-6)
    # the evaluation point is not modified
    np.testing.assert_array_equal(theta, [[1.0, -2.0], [0.5, 3.0]])


def test_max_relative_error_uses_floor():
    assert max_relative_error([0.0], [EPS]) < 1e-5
    assert max_relative_error([1.0, 2.0], [1.0, 2.2]) == pytest.approx(0.2 / 2.2)
    assert max_relative_error(np.zeros(0), np.zeros(0)) == 0.0
    with pytest.raises(InvalidInputError):
        max_relative_error([1.0], [1.0, 2.0])


def test_softmax_is_invariant_to_a_per_row_shift(rng):
    logits = rng.normal(size=(6, 4))
    shift = rng.normal(scale=50.0, size=(6, 1))
    np.testing.assert_allclose(softmax_rows(logits + shift), softmax_rows(logits), rtol=1e-12, atol=1e-15)


def test_cosine_similarity_matrix_is_symmetric_and_scale_invariant(rng):
    a = rng.normal(size=(5, 3))
    b = rng.normal(size=(7, 3))
    sims = cosine_similarity_matrix(a, b)
    np.testing.assert_allclose(cosine_similarity_matrix(b, a), sims.T, atol=1e-15)
    scaled_a = a * rng.uniform(0.01, 100.0, size=(5, 1))
    scaled_b = b * rng.uniform(0.01, 100.0, size=(7, 1))
    np.testing.assert_allclose(cosine_similarity_matrix(scaled_a, scaled_b), sims, atol=1e-12)
