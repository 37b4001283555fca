import struct

import numpy as np
import pytest

from utils.graph import build_neighbor_graph
from utils.losses import LossFlags, loss_d, loss_div, loss_e, loss_n, loss_self, total_loss
from utils.model import (
    ModelConfig,
    backward,
    forward,
    init_params,
    load_checkpoint,
    parameter_group,
    predict,
    save_checkpoint,
    source_pretrain_loss,
)
from utils.numerics import finite_difference_gradient, max_relative_error, softmax_rows
from utils.shared.nrc_exceptions import CheckpointFormatError, ConfigValidationError, InvalidInputError

GRAD_TOL = 1e-4


def _check_gradients(params, x, mode, loss_fn):
    _, p, cache = forward(params, x, mode=mode, update_running_stats=False)
    _, d_p = loss_fn(p)
    grads = backward(cache, d_p)
    named = params.named_parameters()
    assert set(grads) == set(named)
    for name, arr in named.items():
        def f(theta, arr=arr):
            saved = arr.copy()
            arr[...] = theta
            _, p_new, _ = forward(params, x, mode=mode, update_running_stats=False)
            arr[...] = saved
            return loss_fn(p_new)[0]

        numeric = finite_difference_gradient(f, arr)
        assert grads[name].shape == arr.shape
        assert max_relative_error(grads[name], numeric) <= GRAD_TOL, name


def _linear_loss(seed, shape):
    w = np.random.default_rng(seed).normal(size=shape)

    def loss(p):
        n = p.shape[0]
        return float(np.sum(w * p)) / n, w / n

    return loss


@pytest.mark.parametrize("mode", ["train", "eval"])
def test_backward_matches_finite_differences_for_cross_entropy(small_model, rng, mode):
    x = rng.normal(size=(8, 4))
    y = np.array([0, 1, 2, 0, 1, 2, 0, 1])
    _check_gradients(small_model, x, mode, lambda p: source_pretrain_loss(p, y, 0.1))


@pytest.mark.parametrize("mode", ["train", "eval"])
def test_backward_matches_finite_differences_for_diversity_and_linear_terms(small_model, rng, mode):
    x = rng.normal(size=(7, 4))
    linear = _linear_loss(5, (7, 3))

    def combined(p):
        v1, g1 = linear(p)
        v2, g2 = loss_div(p)
        return v1 + 0.5 * v2, g1 + 0.5 * g2

    _check_gradients(small_model, x, mode, combined)


def test_backward_without_batch_norm(rng):
    params = init_params(3, 4, ModelConfig(hidden_dims=[5, 5], feature_dim=4, batch_norm=False), rng)
    x = rng.normal(size=(6, 3))
    _check_gradients(params, x, "train", _linear_loss(9, (6, 4)))


def _adaptation_term(name, graph, scores):
    if name == "l_n":
        return lambda p: loss_n(p, graph.knn, graph.affinity_a, scores)
    if name == "l_e":
        return lambda p: loss_e(p, graph.expanded, graph.expanded_mask, scores, graph.r_expanded)
    if name == "l_self":
        return lambda p: loss_self(p, scores[graph.query_rows])
    return lambda p: loss_d(p, graph.density_query, graph.density_neighbor, graph.affinity_b, scores)


@pytest.mark.parametrize("mode", ["train", "eval"])
@pytest.mark.parametrize("term", ["l_n", "l_e", "l_self", "l_d"])
def test_each_adaptation_term_backpropagates_through_the_network(small_model, rng, term, mode):
    x = rng.normal(size=(8, 4))
    features = rng.normal(size=(30, 5))
    scores = softmax_rows(rng.normal(size=(30, 3)))
    graph = build_neighbor_graph(features, np.arange(8), 3, 2, with_density=True, U=6, V=3)
    assert graph.density_query.size > 0
    _check_gradients(small_model, x, mode, _adaptation_term(term, graph, scores))


def test_forward_shapes_and_probabilities(small_model, rng):
    z, p, cache = forward(small_model, rng.normal(size=(10, 4)), mode="train")
    assert z.shape == (10, 5)
    assert p.shape == (10, 3)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert cache.mode == "train"


def test_eval_forward_is_deterministic_and_leaves_buffers(small_model, rng):
    x = rng.normal(size=(5, 4))
    before = small_model.extractor[0].batch_norm.running_mean.copy()
    _, p1 = predict(small_model, x)
    _, p2 = predict(small_model, x)
    np.testing.assert_array_equal(p1, p2)
    np.testing.assert_array_equal(small_model.extractor[0].batch_norm.running_mean, before)


def test_eval_forward_of_single_row_matches_batch(small_model, rng):
    x = rng.normal(size=(5, 4))
    _, p_batch = predict(small_model, x)
    _, p_row = predict(small_model, x[2:3])
    np.testing.assert_allclose(p_row[0], p_batch[2])


def test_train_forward_updates_running_statistics(small_model, rng):
    x = rng.normal(size=(12, 4)) + 3.0
    before = small_model.extractor[0].batch_norm.running_mean.copy()
    forward(small_model, x, mode="train")
    assert not np.array_equal(small_model.extractor[0].batch_norm.running_mean, before)


def test_train_forward_can_freeze_running_statistics(small_model, rng):
    x = rng.normal(size=(12, 4)) + 3.0
    before = small_model.extractor[0].batch_norm.running_var.copy()
    forward(small_model, x, mode="train", update_running_stats=False)
    np.testing.assert_array_equal(small_model.extractor[0].batch_norm.running_var, before)


def test_train_mode_rejects_single_sample_batch(small_model):
    with pytest.raises(InvalidInputError):
        forward(small_model, np.ones((1, 4)), mode="train")


def test_forward_rejects_wrong_width_and_mode(small_model):
    with pytest.raises(InvalidInputError):
        forward(small_model, np.ones((3, 5)))
    with pytest.raises(InvalidInputError):
        forward(small_model, np.ones((3, 4)), mode="test")


def test_weight_norm_apply_is_idempotent(small_model):
    clf = small_model.classifier
    clf.direction *= 3.0
    w_before = clf.effective_weight()
    w1 = clf.apply()
    w2 = clf.apply()
    np.testing.assert_allclose(w1, w_before)
    np.testing.assert_allclose(w1, w2)
    np.testing.assert_allclose(np.linalg.norm(clf.direction, axis=1), 1.0)


def test_parameter_groups():
    assert parameter_group("extractor.0.weight", 2) == "backbone"
    assert parameter_group("extractor.1.bn.gamma", 2) == "head"
    assert parameter_group("classifier.magnitude", 2) == "head"


def test_init_params_is_seeded():
    cfg = ModelConfig(hidden_dims=[8], feature_dim=4)
    a = init_params(3, 2, cfg, np.random.default_rng(7))
    b = init_params(3, 2, cfg, np.random.default_rng(7))
    for (_, x), (_, y) in zip(a.state_arrays(), b.state_arrays()):
        np.testing.assert_array_equal(x, y)


def test_init_params_rejects_single_class(rng):
    with pytest.raises(InvalidInputError):
        init_params(3, 1, ModelConfig(), rng)


def test_model_config_validation():
    with pytest.raises(ConfigValidationError):
        ModelConfig(feature_dim=0)
    with pytest.raises(ConfigValidationError):
        ModelConfig(bn_eps=0.0)
    assert ModelConfig.from_mapping({"feature_dim": 7, "extra": 1}).feature_dim == 7


def test_source_pretrain_loss_values():
    p = np.full((2, 2), 0.5)
    loss, grad = source_pretrain_loss(p, np.array([0, 1]), smoothing=0.0)
    assert loss == pytest.approx(np.log(2.0))
    np.testing.assert_allclose(grad, [[-1.0, 0.0], [0.0, -1.0]])


def test_source_pretrain_loss_rejects_bad_labels():
    with pytest.raises(InvalidInputError):
        source_pretrain_loss(np.full((2, 2), 0.5), np.array([0, 2]))


def test_checkpoint_round_trip_is_exact(small_model, tmp_path, rng):
    forward(small_model, rng.normal(size=(9, 4)), mode="train")
    path = save_checkpoint(small_model, tmp_path / "m.nrcm")
    loaded = load_checkpoint(path)
    original = dict(small_model.state_arrays())
    restored = dict(loaded.state_arrays())
    assert original.keys() == restored.keys()
    for name in original:
        np.testing.assert_array_equal(original[name], restored[name])
    assert loaded.bn_momentum == small_model.bn_momentum
    assert [layer.relu for layer in loaded.extractor] == [layer.relu for layer in small_model.extractor]
    save_checkpoint(loaded, tmp_path / "again.nrcm")
    assert (tmp_path / "again.nrcm").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_bad_magic(small_model, tmp_path):
    path = save_checkpoint(small_model, tmp_path / "m.nrcm")
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointFormatError) as err:
        load_checkpoint(path)
    assert err.value.offset == 0


def test_checkpoint_rejects_unknown_version(small_model, tmp_path):
    path = save_checkpoint(small_model, tmp_path / "m.nrcm")
    data = bytearray(path.read_bytes())
    data[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointFormatError) as err:
        load_checkpoint(path)
    assert err.value.offset == 4


def test_checkpoint_rejects_truncation_and_trailing_bytes(small_model, tmp_path):
    path = save_checkpoint(small_model, tmp_path / "m.nrcm")
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(CheckpointFormatError, match="truncated"):
        load_checkpoint(path)
    path.write_bytes(data + b"\x00")
    with pytest.raises(CheckpointFormatError, match="trailing"):
        load_checkpoint(path)


def test_checkpoint_rejects_non_finite_values(small_model, tmp_path):
    path = save_checkpoint(small_model, tmp_path / "m.nrcm")
    data = bytearray(path.read_bytes())
    data[-8:] = struct.pack("<d", float("nan"))
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointFormatError, match="non-finite"):
        load_checkpoint(path)


def test_checkpoint_rejects_layer_dimensions_larger_than_the_file(small_model, tmp_path):
    path = save_checkpoint(small_model, tmp_path / "m.nrcm")
    data = bytearray(path.read_bytes())
    data[40:48] = struct.pack("<II", 0xFFFFFFFF, 0xFFFFFFFF)
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointFormatError, match="extractor.0.weight") as err:
        load_checkpoint(path)
    assert err.value.offset == 40 + 10 * len(small_model.extractor)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_composite_adaptation_loss_gradients_through_default_network(seed):
    rng = np.random.default_rng(seed)
    params = init_params(2, 4, ModelConfig(), rng)
    x = rng.normal(size=(8, 2))
    features = rng.normal(size=(30, 32))
    scores = softmax_rows(rng.normal(size=(30, 4)))
    graph = build_neighbor_graph(features, np.arange(8), 3, 2, with_density=True, U=6, V=3)
    flags = LossFlags(mode="nrc++")

    def loss(p):
        out = total_loss(p, graph, scores, 5, 40, flags)
        return out.total, out.dL_dp

    _check_gradients(params, x, "train", loss)
