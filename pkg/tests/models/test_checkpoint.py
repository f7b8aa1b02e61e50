"""Test checkpoint persistence"""

import json

import numpy as np
import pytest

from dacsm.models import CheckpointError, DacsmModel, load_checkpoint, save_checkpoint
from dacsm.models.checkpoint import from_checkpoint, to_checkpoint


@pytest.fixture
def model(tiny_arch) -> DacsmModel:
    """Create test fixture for a model with random parameters"""
    return DacsmModel.initialize(tiny_arch, seed=3)


def test_save_and_load(model, tmp_path):
    """Test that a saved model comes back with identical arrays"""
    path = save_checkpoint(model, tmp_path / "nested" / "checkpoint.json")
    restored = load_checkpoint(path)
    assert restored.architecture == model.architecture
    assert set(restored.params) == set(model.params)
    for key, value in model.params.items():
        np.testing.assert_array_equal(restored.params[key], value)

    raw = json.loads(path.read_text())
    assert raw["schema_version"] == "1"
    assert raw["params"]["head.weights"]["shape"] == [3, 2, 8]


def test_missing_and_corrupted_files(tmp_path):
    """Test unreadable checkpoints"""
    missing = tmp_path / "absent.json"
    with pytest.raises(CheckpointError, match="absent.json"):
        load_checkpoint(missing)
    corrupted = tmp_path / "corrupted.json"
    corrupted.write_text('{"schema_version": "1", "params": ')
    with pytest.raises(CheckpointError):
        load_checkpoint(corrupted)
    binary = tmp_path / "binary.json"
    binary.write_bytes(b"\xff\xfe\x00garbage")
    with pytest.raises(CheckpointError, match="cannot be read"):
        load_checkpoint(binary)
    with pytest.raises(CheckpointError, match="cannot be read"):
        load_checkpoint(tmp_path)


def test_incompatible_checkpoints(model):
    """Test version, key and shape validation"""
    checkpoint = to_checkpoint(model)

    wrong_version = checkpoint.model_copy(update={"schema_version": "0"})
    with pytest.raises(CheckpointError, match="schema version"):
        from_checkpoint(wrong_version)

    missing = checkpoint.model_copy(
        update={"params": {k: v for k, v in checkpoint.params.items() if k != "norm.gain"}}
    )
    with pytest.raises(CheckpointError, match="norm.gain"):
        from_checkpoint(missing)

    params = dict(checkpoint.params)
    entry = params["norm.gain"]
    params["norm.gain"] = entry.model_copy(update={"shape": [2, 4]})
    with pytest.raises(CheckpointError, match="shape"):
        from_checkpoint(checkpoint.model_copy(update={"params": params}))
