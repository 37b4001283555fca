import csv

import numpy as np
import pytest

from utils.banks import FeatureBank, MemoryBanks, ScoreBank, initialize_banks
from utils.diagnostics import (
    PURITY_COLUMNS,
    SharedCurveTracker,
    accuracy,
    mean_per_class_accuracy,
    moving_average,
    neighbor_purity,
    per_class_accuracy,
    purity_table,
    write_purity_csv,
)
from utils.graph import knn_indices
from utils.shared.nrc_exceptions import InvalidInputError
from utils.trainer import AdaptConfig, adapt


def _banks(features, predicted, num_classes=3):
    n = features.shape[0]
    scores = np.eye(num_classes)[predicted]
    idx = np.arange(n)
    return MemoryBanks(FeatureBank(storage=features, dataset_indices=idx),
                       ScoreBank(storage=scores, dataset_indices=idx))


def test_accuracy_metrics():
    p = np.eye(3)[[0, 1, 1, 2]]
    labels = np.array([0, 1, 2, 2])
    assert accuracy(p, labels) == 0.75
    recalls = per_class_accuracy(p, labels)
    np.testing.assert_allclose(recalls, [1.0, 1.0, 0.5])
    assert mean_per_class_accuracy(p, labels) == pytest.approx(2.5 / 3)


def test_per_class_accuracy_skips_absent_classes():
    p = np.eye(3)[[0, 0]]
    recalls = per_class_accuracy(p, np.array([0, 0]))
    assert recalls[0] == 1.0
    assert np.isnan(recalls[1]) and np.isnan(recalls[2])
    assert mean_per_class_accuracy(p, np.array([0, 0])) == 1.0


def test_accuracy_rejects_empty_and_mismatched_input():
    with pytest.raises(InvalidInputError):
        accuracy(np.zeros((0, 3)), np.zeros(0))
    with pytest.raises(InvalidInputError):
        accuracy(np.eye(3), np.array([0, 1]))


def test_purity_counts_match_direct_computation(rng):
    features = rng.normal(size=(20, 3))
    predicted = rng.integers(0, 3, size=20)
    truth = rng.integers(0, 3, size=20)
    report = neighbor_purity(_banks(features, predicted), k_values=[2, 4], M=3, true_labels=truth)
    table = knn_indices(features, features, 4, exclude=np.arange(20))

    for K in (2, 4):
        pt = report.at(K)
        same, right, rec_same, rec_total = [], [], [], 0
        for i in range(20):
            for j in table[i, :K]:
                same.append(predicted[j] == predicted[i])
                right.append(predicted[j] == truth[i])
                if i in table[j, :3]:
                    rec_total += 1
                    rec_same.append(predicted[j] == predicted[i])
        assert pt.counts["knn"] == 20 * K
        assert pt.counts["rnn"] == rec_total
        assert pt.counts["rnn"] + pt.counts["nrnn"] == 20 * K
        assert pt.same_pred["knn"] == pytest.approx(np.mean(same))
        assert pt.correct["knn"] == pytest.approx(np.mean(right))
        assert pt.same_pred["rnn"] == pytest.approx(np.mean(rec_same) if rec_same else 1.0)


def test_identical_predictions_give_full_purity(rng):
    report = neighbor_purity(_banks(rng.normal(size=(15, 2)), np.zeros(15, dtype=int)), k_values=[1, 3])
    for pt in report.points:
        assert pt.all_shared == 1.0
        assert pt.same_pred["knn"] == 1.0
        assert pt.correct is None
    assert not report.has_labels


def test_purity_truth_follows_dataset_indices(rng):
    features = rng.normal(size=(6, 2))
    predicted = np.array([0, 1, 0, 1, 0, 1])
    banks = MemoryBanks(FeatureBank(storage=features, dataset_indices=[5, 4, 3, 2, 1, 0]),
                        ScoreBank(storage=np.eye(2)[predicted], dataset_indices=[5, 4, 3, 2, 1, 0]))
    truth = predicted[::-1]
    report = neighbor_purity(banks, k_values=[1], true_labels=truth)
    assert report.at(1).all_shared_correct == report.at(1).all_shared


def test_purity_rejects_bad_k(rng):
    with pytest.raises(InvalidInputError):
        neighbor_purity(_banks(rng.normal(size=(5, 2)), np.zeros(5, dtype=int)), k_values=[0])


def test_purity_table_and_csv(rng, tmp_path):
    banks = _banks(rng.normal(size=(12, 2)), rng.integers(0, 3, size=12))
    pre = neighbor_purity(banks, k_values=[1, 2], M=2)
    table = purity_table(pre)
    assert len(table) == 2 * 4
    assert table[0]["post_count"] is None
    assert {row["relation"] for row in table} == {"knn", "rnn", "nrnn", "all_shared"}

    path = write_purity_csv(tmp_path / "purity.csv", pre, pre)
    with path.open() as f:
        rows = list(csv.reader(f))
    assert rows[0] == PURITY_COLUMNS
    assert len(rows) == 1 + 8
    assert rows[1][2] == rows[1][5]
    assert rows[1][4] == ""


def test_shared_curve_tracker_records_epochs(tiny_manifest, tmp_path):
    from utils.model import ModelConfig
    from utils.trainer import PretrainConfig, pretrain_source

    params = pretrain_source(PretrainConfig(epochs=5, batch_size=32), ModelConfig(hidden_dims=[8], feature_dim=4),
                             tiny_manifest.source_x, tiny_manifest.source_y)
    tracker = SharedCurveTracker(tiny_manifest.target_x, tiny_manifest.target_y, shared_k=3,
                                 track_every=2, total_epochs=3)
    adapt(AdaptConfig(batch_size=32, epochs=3), params, tiny_manifest.target_x, epoch_callback=tracker)
    assert tracker.column("epoch").tolist() == [0.0, 2.0, 3.0]
    acc = tracker.column("accuracy")
    assert np.all((acc >= 0) & (acc <= 1))
    path = tracker.to_csv(tmp_path / "curve.csv")
    assert path.read_text(encoding="utf-8").splitlines()[0] == ",".join(SharedCurveTracker.COLUMNS)


def test_shared_curve_tracker_without_labels(small_model, rng):
    x = rng.normal(size=(10, 4))
    tracker = SharedCurveTracker(x, None, shared_k=2)
    tracker(0, small_model, initialize_banks(small_model, x))
    assert tracker.rows[0][1] is None
    assert np.isnan(tracker.column("all_shared_correct")[0])


def test_moving_average():
    np.testing.assert_allclose(moving_average([1, 2, 3, 4], window=2), [1.0, 1.5, 2.5, 3.5])
    np.testing.assert_allclose(moving_average([5.0], window=5), [5.0])
    with pytest.raises(InvalidInputError):
        moving_average([1.0], window=0)
