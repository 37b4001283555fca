import numpy as np
import pytest

from utils.graph import build_neighbor_graph
from utils.losses import (
    LOG_COLUMNS,
    LossFlags,
    lambda_schedule,
    loss_d,
    loss_div,
    loss_e,
    loss_n,
    loss_self,
    total_loss,
)
from utils.numerics import finite_difference_gradient, max_relative_error, softmax_rows
from utils.shared.nrc_exceptions import InvalidInputError


@pytest.fixture
def scores(rng):
    return softmax_rows(rng.normal(size=(12, 3)))


@pytest.fixture
def batch(rng):
    return softmax_rows(rng.normal(size=(4, 3)))


def _assert_gradient(fn, p):
    _, grad = fn(p)
    numeric = finite_difference_gradient(lambda q: fn(q)[0], p)
    assert max_relative_error(grad, numeric) <= 1e-4


def test_loss_n_value_and_gradient(batch, scores):
    knn = np.array([[1, 2], [0, 3], [5, 6], [7, 8]])
    aff = np.array([[1.0, 0.1], [0.1, 0.1], [1.0, 1.0], [0.1, 1.0]])
    value, _ = loss_n(batch, knn, aff, scores)
    expected = -np.mean([sum(aff[q, k] * batch[q] @ scores[knn[q, k]] for k in range(2)) for q in range(4)])
    assert value == pytest.approx(expected)
    _assert_gradient(lambda p: loss_n(p, knn, aff, scores), batch)


def test_loss_e_counts_duplicates(batch, scores):
    members = np.array([[5, 5, 6, 0]] * 4)
    mask = np.array([[True, True, True, False]] * 4)
    value, _ = loss_e(batch, members, mask, scores, r=0.1)
    expected = -np.mean([0.1 * batch[q] @ (2 * scores[5] + scores[6]) for q in range(4)])
    assert value == pytest.approx(expected)
    deduped, _ = loss_e(batch, members, np.array([[True, False, True, False]] * 4), scores, r=0.1)
    assert deduped != pytest.approx(value)
    _assert_gradient(lambda p: loss_e(p, members, mask, scores, 0.1), batch)


def test_loss_e_with_empty_multisets_is_zero(batch, scores):
    members = np.zeros((4, 2), dtype=np.int64)
    value, grad = loss_e(batch, members, np.zeros((4, 2), dtype=bool), scores)
    assert value == 0.0
    np.testing.assert_array_equal(grad, 0.0)


def test_loss_self_equals_negative_mean_squared_norm_when_bank_matches(batch):
    value, grad = loss_self(batch, batch.copy())
    assert value == pytest.approx(-np.mean(np.sum(batch ** 2, axis=1)))
    np.testing.assert_allclose(grad, -batch / 4)


def test_loss_div_is_zero_for_uniform_mean():
    p = np.array([[0.9, 0.1], [0.1, 0.9]])
    value, _ = loss_div(p)
    assert value == pytest.approx(0.0, abs=1e-12)


def test_loss_div_matches_kl_and_gradient(batch):
    value, _ = loss_div(batch)
    p_bar = batch.mean(axis=0)
    assert value == pytest.approx(np.sum(p_bar * np.log(p_bar * 3)))
    _assert_gradient(loss_div, batch)


def test_loss_div_with_prior(batch):
    prior = np.array([0.5, 0.3, 0.2])
    value, _ = loss_div(batch, prior)
    p_bar = batch.mean(axis=0)
    assert value == pytest.approx(np.sum(p_bar * np.log(p_bar / prior)))
    _assert_gradient(lambda p: loss_div(p, prior), batch)
    with pytest.raises(InvalidInputError):
        loss_div(batch, [0.5, 0.5])


def test_loss_div_is_finite_with_a_zero_column():
    p = np.array([[1.0, 0.0], [1.0, 0.0]])
    value, grad = loss_div(p)
    assert np.isfinite(value)
    assert np.all(np.isfinite(grad))


def test_loss_d_sums_pairs_per_query(batch, scores):
    q = np.array([0, 0, 2])
    j = np.array([4, 9, 1])
    w = np.array([1.0, 0.1, 1.0])
    value, _ = loss_d(batch, q, j, w, scores)
    expected = -(batch[0] @ scores[4] + 0.1 * batch[0] @ scores[9] + batch[2] @ scores[1]) / 4
    assert value == pytest.approx(expected)
    _assert_gradient(lambda p: loss_d(p, q, j, w, scores), batch)


def test_loss_d_without_pairs_is_zero(batch, scores):
    empty = np.zeros(0, dtype=np.int64)
    value, grad = loss_d(batch, empty, empty, np.zeros(0), scores)
    assert value == 0.0
    np.testing.assert_array_equal(grad, 0.0)


def test_lambda_schedule_endpoints():
    assert lambda_schedule(0, 100) == 1.0
    assert lambda_schedule(100, 100) == pytest.approx(1.0 / 11.0)
    assert lambda_schedule(50, 100) == pytest.approx(1.0 / 6.0)
    with pytest.raises(InvalidInputError):
        lambda_schedule(101, 100)
    with pytest.raises(InvalidInputError):
        lambda_schedule(0, 0)


def _graph(rng, with_density=False):
    bank = rng.normal(size=(12, 4))
    return build_neighbor_graph(bank, np.array([0, 3, 7, 11]), 3, 2, r=0.1, r_expanded=0.1,
                                with_density=with_density, U=5, V=2)


def test_total_loss_sums_enabled_terms(rng, batch, scores):
    graph = _graph(rng, with_density=True)
    out = total_loss(batch, graph, scores, 10, 100, LossFlags(mode="nrc++"))
    lam = lambda_schedule(10, 100)
    assert out.lambda_div == lam
    assert out.total == pytest.approx(out.l_n + out.l_d + out.l_e + out.l_self + lam * out.l_div)
    assert out.l_d != 0.0
    assert len(out.log_row(10)) == len(LOG_COLUMNS)


def test_total_loss_gradient_matches_finite_differences(rng, batch, scores):
    graph = _graph(rng, with_density=True)
    flags = LossFlags(mode="nrc++")
    grad = total_loss(batch, graph, scores, 3, 20, flags).dL_dp
    numeric = finite_difference_gradient(lambda p: total_loss(p, graph, scores, 3, 20, flags).total, batch)
    assert max_relative_error(grad, numeric) <= 1e-4


def test_nrc_mode_never_includes_density_term(rng, batch, scores):
    graph = _graph(rng, with_density=True)
    out = total_loss(batch, graph, scores, 0, 10, LossFlags(mode="nrc"))
    assert out.l_d == 0.0


def test_disabled_terms_report_zero(rng, batch, scores):
    graph = _graph(rng)
    flags = LossFlags(use_loss_n=False, use_loss_e=False, use_loss_self=False, use_loss_div=False)
    out = total_loss(batch, graph, scores, 0, 10, flags)
    assert not flags.any_enabled
    assert out.total == 0.0
    np.testing.assert_array_equal(out.dL_dp, 0.0)


def test_density_flag_requires_density_sets(rng, batch, scores):
    with pytest.raises(InvalidInputError):
        total_loss(batch, _graph(rng), scores, 0, 10, LossFlags(mode="nrc++"))


def test_total_loss_rejects_mismatched_batch(rng, scores):
    with pytest.raises(InvalidInputError):
        total_loss(np.full((3, 3), 1 / 3), _graph(rng), scores, 0, 10)


def test_duplicate_expanded_neighbors_add_exactly_their_weight(batch, scores):
    r = 0.25
    members = np.array([[2, 2, 2, 9]] * 4)
    with_dups, _ = loss_e(batch, members, np.ones((4, 4), dtype=bool), scores, r)
    deduped, _ = loss_e(batch, members, np.array([[True, False, False, True]] * 4), scores, r)
    duplicated_terms = -r * 2 * np.sum(batch @ scores[2]) / 4
    assert with_dups - deduped == pytest.approx(duplicated_terms, abs=1e-15)


@pytest.mark.parametrize("mode", ["nrc", "nrc++"])
def test_total_loss_is_invariant_under_bank_permutation(rng, batch, mode):
    features = rng.normal(size=(20, 4))
    bank_scores = softmax_rows(rng.normal(size=(20, 3)))
    rows = np.array([1, 6, 13, 19])
    perm = rng.permutation(20)
    inverse = np.argsort(perm)
    flags = LossFlags(mode=mode)
    graph = build_neighbor_graph(features, rows, 3, 2, with_density=True, U=5, V=2)
    moved = build_neighbor_graph(features[perm], inverse[rows], 3, 2, with_density=True, U=5, V=2)
    a = total_loss(batch, graph, bank_scores, 4, 50, flags)
    b = total_loss(batch, moved, bank_scores[perm], 4, 50, flags)
    assert b.total == pytest.approx(a.total, abs=1e-12)
    np.testing.assert_allclose(b.dL_dp, a.dL_dp, atol=1e-12)
