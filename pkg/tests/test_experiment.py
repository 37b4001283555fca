import csv

import numpy as np
import pytest

from utils.experiment import ABLATION_VARIANTS, AblationResult, run_ablation, run_pipeline, variant_config
from utils.model import ModelConfig
from utils.shared.nrc_exceptions import InvalidInputError
from utils.trainer import AdaptConfig, PretrainConfig

MODEL = ModelConfig(hidden_dims=[16], feature_dim=8)
PRETRAIN = PretrainConfig(epochs=6, batch_size=32)
ADAPT = AdaptConfig(K=3, M=2, U=8, V=3, batch_size=30, epochs=2)


def test_variant_config_overrides():
    base = AdaptConfig(K=3, M=2)
    assert variant_config(base, "source_only") is None
    larger = variant_config(base, "larger_k")
    assert larger.K == 3 + 3 * 2
    assert not larger.use_loss_e
    assert variant_config(base, "div_only").flags.use_loss_n is False
    assert variant_config(base, "nrc_deduped").dedupe_expanded
    assert variant_config(base, "nrc_plus_plus").mode == "nrc++"
    assert base.K == 3
    with pytest.raises(InvalidInputError):
        variant_config(base, "everything")


def test_every_variant_builds_a_valid_config():
    for name in ABLATION_VARIANTS:
        variant_config(ADAPT, name)


def test_run_pipeline_reports_both_accuracies(tiny_manifest):
    manifest = tiny_manifest
    result = run_pipeline(manifest, MODEL, PRETRAIN, ADAPT)
    assert 0.0 <= result.source_only_accuracy <= 1.0
    assert 0.0 <= result.adapted_accuracy <= 1.0
    assert result.gain == pytest.approx(result.adapted_accuracy - result.source_only_accuracy)
    assert result.adapted.iterations == 2 * 3

    source_only = run_pipeline(manifest, MODEL, PRETRAIN, None, pretrained=result.pretrained)
    assert source_only.adapted is None
    assert source_only.adapted_accuracy == result.source_only_accuracy
    assert source_only.gain == 0.0


def test_run_pipeline_without_hidden_labels(tiny_manifest):
    manifest = tiny_manifest
    manifest.target_y = None
    result = run_pipeline(manifest, MODEL, PRETRAIN, ADAPT)
    assert result.adapted_accuracy is None
    assert result.gain is None


def test_run_ablation_is_seeded_and_writes_csv(tiny_manifest, tmp_path):
    manifest = tiny_manifest
    variants = ["source_only", "div_only", "nrc"]
    a = run_ablation(manifest, MODEL, PRETRAIN, ADAPT, seeds=[0, 1], variants=variants)
    b = run_ablation(manifest, MODEL, PRETRAIN, ADAPT, seeds=[0, 1], variants=variants)
    assert a.accuracies == b.accuracies
    assert a.variants == variants
    assert all(len(accs) == 2 for accs in a.accuracies.values())

    path = a.to_csv(tmp_path / "ablation.csv")
    with path.open() as f:
        rows = list(csv.DictReader(f))
    assert [row["variant"] for row in rows] == variants
    assert float(rows[2]["median"]) == pytest.approx(a.median("nrc"))


def test_run_ablation_rejects_bad_requests(tiny_manifest):
    manifest = tiny_manifest
    with pytest.raises(InvalidInputError):
        run_ablation(manifest, MODEL, PRETRAIN, ADAPT, seeds=[0], variants=["nope"])
    with pytest.raises(InvalidInputError):
        run_ablation(manifest, MODEL, PRETRAIN, ADAPT, seeds=[])
    manifest.target_y = None
    with pytest.raises(InvalidInputError):
        run_ablation(manifest, MODEL, PRETRAIN, ADAPT, seeds=[0], variants=["nrc"])


def test_ablation_result_median_and_rows():
    result = AblationResult(seeds=[3, 4, 5], accuracies={"nrc": [0.9, 0.7, 0.8]})
    assert result.median("nrc") == pytest.approx(0.8)
    assert result.rows() == [{"variant": "nrc", "seed_3": 0.9, "seed_4": 0.7, "seed_5": 0.8,
                              "median": pytest.approx(0.8)}]
    assert result.to_dict()["seeds"] == [3, 4, 5]
    assert np.isclose(result.medians()["nrc"], 0.8)
