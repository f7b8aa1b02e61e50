"""Test the adaptation loop and its outputs"""

import importlib
import json

import numpy as np
import pandas as pd
import pytest

from dacsm.models import DacsmModel, load_checkpoint
from dacsm.pipeline import NonFiniteLossError, generate_domains, run_training, train
from dacsm.pipeline.train import (
    CHECKPOINT_FILE,
    METRICS_FILE,
    SUMMARY_FILE,
    MetricsLog,
    augment_source,
    run_id,
)
from dacsm.schemas import EpochMetrics, EvalReport, LossReport, RunConfig

train_module = importlib.import_module("dacsm.pipeline.train")


@pytest.fixture
def domains(tiny_config):
    """Create test fixture for the tiny source and target domains"""
    return generate_domains(tiny_config.data)


def _with_train(config: RunConfig, **train_fields) -> RunConfig:
    raw = config.model_dump(mode="json")
    raw["train"].update(train_fields)
    return RunConfig.model_validate(raw)


def test_zero_epochs_returns_initial_params(tiny_config, domains):
    """Test that no epochs means no updates"""
    config = _with_train(tiny_config, epochs=0)
    initial = DacsmModel.initialize(config.architecture(), config.train.seed)
    result = train(config, *domains)
    assert result.history == []
    for key, value in initial.params.items():
        np.testing.assert_array_equal(result.model.params[key], value)


def test_zero_learning_rate_keeps_params(tiny_config, domains):
    """Test the null optimizer"""
    config = _with_train(tiny_config, learning_rate=0.0)
    initial = DacsmModel.initialize(config.architecture(), config.train.seed)
    result = train(config, *domains)
    assert len(result.history) == 2
    for key, value in initial.params.items():
        np.testing.assert_array_equal(result.model.params[key], value)


def test_schedule(tiny_config, domains):
    """Test warm-up, pseudo-label refresh and the metrics history"""
    config = _with_train(tiny_config, epochs=3, warmup_epochs=1, refresh_interval=2)
    result = train(config, *domains)
    assert [m.epoch for m in result.history] == [0, 1, 2]
    assert [m.pseudo_refreshed for m in result.history] == [True, False, True]
    assert result.history[0].losses.cls_t == 0.0
    assert result.history[1].losses.cls_t > 0.0
    assert len(result.pairs) == len(domains[1])
    for metrics in result.history:
        assert 0.0 <= metrics.pseudo_label_accuracy <= 100.0
        assert metrics.a_distance is not None
        assert 0.0 <= metrics.a_distance <= 2.0
        assert metrics.attention_entropy > 0.0
        assert metrics.layer_cka is None
        assert np.isfinite(metrics.losses.total)
    assert not np.array_equal(
        result.model.params["patch_projection"],
        DacsmModel.initialize(config.architecture(), config.train.seed).params[
            "patch_projection"
        ],
    )


def test_layer_similarity_for_deeper_models(tiny_config, domains):
    """Test that a two-layer model reports cross-layer CKA"""
    raw = _with_train(tiny_config, epochs=1, warmup_epochs=0).model_dump(mode="json")
    raw["backbone"]["depth"] = 2
    result = train(RunConfig.model_validate(raw), *domains)
    assert 0.0 <= result.history[0].layer_cka <= 1.0 + 1e-9


def test_non_finite_loss_aborts(tiny_config, domains, monkeypatch):
    """Test that a NaN loss term stops training with its name and step"""
    real_total_loss = train_module.total_loss

    def poisoned(*args, **kwargs):
        loss, report = real_total_loss(*args, **kwargs)
        return loss, report.model_copy(update={"dst": float("nan")})

    monkeypatch.setattr(train_module, "total_loss", poisoned)
    with pytest.raises(NonFiniteLossError) as excinfo:
        train(tiny_config, *domains)
    assert excinfo.value.term == "dst"
    assert excinfo.value.step == 0


def test_augment_source():
    """Test crop-and-resize augmentation"""
    rng = np.random.default_rng(0)
    image = rng.uniform(size=(8, 8, 3))
    assert augment_source(image, 12, 0.875, 4, rng).shape == (12, 12, 3)
    assert augment_source(image, 8, 0.875, 4, rng).shape == (8, 8, 3)
    np.testing.assert_array_equal(augment_source(image, 8, 1.0, 4, rng), image)


def test_run_id(tiny_config, tmp_path):
    """Test that the digest ignores the output location but not the settings"""
    moved = tiny_config.model_copy(update={"output_dir": tmp_path / "elsewhere"})
    assert run_id(moved) == run_id(tiny_config)
    assert run_id(tiny_config).startswith("dacsm.run:")
    assert run_id(_with_train(tiny_config, seed=99)) != run_id(tiny_config)


def test_metrics_log(tmp_path, caplog):
    """Test the CSV header, appended rows and the overwrite warning"""
    path = tmp_path / METRICS_FILE
    log = MetricsLog(path, 2)
    assert list(log.read().columns) == EpochMetrics.columns(2)
    assert log.read().empty

    metrics = EpochMetrics(
        epoch=0,
        losses=LossReport(cls_s=1.0, total=1.0),
        report=EvalReport(per_class=[50.0, 100.0], average=75.0, ece=0.1, n_samples=4),
        a_distance=1.5,
        attention_entropy=0.7,
        pseudo_label_accuracy=50.0,
        pseudo_refreshed=True,
    )
    log.append(metrics)
    frame = log.read()
    assert len(frame) == 1
    assert frame.loc[0, "acc_class_1"] == 100.0
    assert frame.loc[0, "target_accuracy"] == 75.0

    MetricsLog(path, 2)
    assert "Overwriting metrics file" in caplog.text
    assert MetricsLog(path, 2).read().empty


def test_run_training_outputs(tiny_config):
    """Test the files written by a run and their agreement"""
    summary = run_training(tiny_config, ["train.epochs=2"])
    out = tiny_config.output_dir
    metrics = pd.read_csv(out / METRICS_FILE)
    assert list(metrics["epoch"]) == [0, 1]
    assert summary.epochs_completed == 2
    assert summary.overrides == ["train.epochs=2"]
    assert summary.final_report.average == pytest.approx(
        metrics["target_accuracy"].iloc[-1]
    )

    stored = json.loads((out / SUMMARY_FILE).read_text())
    assert stored["run_id"] == summary.run_id
    assert stored["schema_version"] == "1"

    model = load_checkpoint(out / CHECKPOINT_FILE)
    assert model.architecture == tiny_config.architecture()


def test_run_training_is_reproducible(tiny_config, tmp_path):
    """Test that two runs of one config write identical metrics"""
    first = tiny_config.model_copy(update={"output_dir": tmp_path / "first"})
    second = tiny_config.model_copy(update={"output_dir": tmp_path / "second"})
    run_training(first)
    run_training(second)
    assert (tmp_path / "first" / METRICS_FILE).read_bytes() == (
        tmp_path / "second" / METRICS_FILE
    ).read_bytes()


def test_zero_epoch_run(tiny_config):
    """Test that an empty schedule still writes a summary"""
    config = _with_train(tiny_config, epochs=0)
    summary = run_training(config)
    assert summary.epochs_completed == 0
    assert summary.final_report == summary.initial_report
    assert pd.read_csv(config.output_dir / METRICS_FILE).empty


@pytest.mark.slow
def test_default_run_improves_target_accuracy():
    """Test that adaptation beats the source-only starting point"""
    config = RunConfig()
    source, target = generate_domains(config.data)
    result = train(config, source, target)
    assert result.history[-1].report.average > result.initial_report.average
