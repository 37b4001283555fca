import copy
import sys
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from utils.data import SyntheticConfig, generate_synthetic_shift  # noqa: E402
from utils.manager.config_manager import ConfigManager  # noqa: E402
from utils.model import ModelConfig, init_params  # noqa: E402

SAMPLE_CONFIG = {
    "schema_version": "1.0.0",
    "debug_messages": False,
    "logs": {"path": "logs", "report_path": "report", "enable_file_output": False, "show_progress": False},
    "model": {"hidden_dims": [16], "feature_dim": 8, "batch_norm": True},
    "pretrain": {"epochs": 8, "batch_size": 32, "seed": 0},
    "adapt": {"K": 3, "M": 2, "U": 8, "V": 3, "batch_size": 32, "epochs": 2, "seed": 0},
    "synthetic": {"num_classes": 3, "d_in": 2, "n_per_class": 40, "seed": 0},
    "diagnostics": {"k_values": [1, 2, 3], "M": 2, "shared_k": 3, "track_every": 1},
}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model(rng):
    """Two-layer extractor with batch norm, d_in=4, d_z=5, C=3."""
    return init_params(4, 3, ModelConfig(hidden_dims=[6], feature_dim=5), rng)


@pytest.fixture
def tiny_manifest():
    return generate_synthetic_shift(SyntheticConfig(num_classes=3, n_per_class=30, seed=3))


@pytest.fixture
def sample_config_dict():
    return copy.deepcopy(SAMPLE_CONFIG)


@pytest.fixture
def write_config(tmp_path):
    """Write a config mapping as YAML and return its path."""
    import yaml

    def _write(values, name="config.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(values, sort_keys=False), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def quiet_cfg(tmp_path, sample_config_dict):
    return ConfigManager(sample_config_dict, project_base=tmp_path / "run", console=False)
