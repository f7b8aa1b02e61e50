"""Test accuracy, calibration and discrepancy diagnostics"""

import numpy as np
import pytest

from dacsm.models import DacsmModel
from dacsm.numerics import DimensionError, InsufficientSamplesError, ParameterError
from dacsm.pipeline import a_distance_proxy, evaluate, expected_calibration_error
from dacsm.pipeline.evaluate import (
    layer_cka,
    linear_cka,
    mean_attention_entropy,
    report_from_logits,
)
from dacsm.pipeline.synthetic import DomainSet
from dacsm.schemas import Architecture


def test_constant_and_oracle_predictions():
    """Test per-class percentages of trivial predictors"""
    labels = np.repeat(np.arange(4), 5)
    constant = np.tile([1.0, 0.0, 0.0, 0.0], (20, 1))
    report = report_from_logits(constant, labels, 4)
    assert report.per_class == [100.0, 0.0, 0.0, 0.0]
    assert report.average == pytest.approx(25.0)
    assert report.n_samples == 20

    oracle = np.eye(4)[labels]
    assert report_from_logits(oracle, labels, 4).average == pytest.approx(100.0)


def test_absent_class_is_left_out_of_the_average():
    """Test classes without samples"""
    report = report_from_logits(np.eye(3)[[0, 0, 1]], [0, 0, 1], 3)
    assert report.per_class == [100.0, 100.0, 0.0]
    assert report.average == pytest.approx(100.0)
    with pytest.raises(InsufficientSamplesError):
        report_from_logits(np.empty((0, 3)), [], 3)


def test_expected_calibration_error():
    """Test perfectly and maximally miscalibrated predictions"""
    labels = np.array([0, 1, 1, 0])
    certain = np.eye(2)[labels]
    assert expected_calibration_error(certain, labels) == pytest.approx(0.0)
    assert expected_calibration_error(certain, 1 - labels) == pytest.approx(1.0)
    half = np.full((4, 2), 0.5)
    assert expected_calibration_error(half, labels) == pytest.approx(0.0)


def test_a_distance_proxy():
    """Test separable and indistinguishable domains"""
    rng = np.random.default_rng(0)
    features = rng.normal(size=(100, 4))
    assert a_distance_proxy(features, features + 10.0) == pytest.approx(2.0)
    same = a_distance_proxy(features, features.copy())
    assert 0.0 <= same < 0.6
    with pytest.raises(InsufficientSamplesError):
        a_distance_proxy(features[:19], features)


def test_mean_attention_entropy():
    """Test uniform maps and the empty case"""
    assert mean_attention_entropy([np.full((2, 3, 4), 0.25)]) == pytest.approx(np.log(4))
    assert mean_attention_entropy([]) == 0.0


def test_evaluate(tiny_arch):
    """Test model evaluation against the model's own predictions"""
    rng = np.random.default_rng(0)
    model = DacsmModel.initialize(tiny_arch, 0)
    images = rng.uniform(size=(6, 8, 8, 3))
    predictions = model.predict(images)
    report = evaluate(model, DomainSet("target", images, predictions))
    assert report.average == pytest.approx(100.0)
    assert report.n_samples == 6
    assert report.ece is not None

    empty = DomainSet("target", np.empty((0, 8, 8, 3)), np.empty(0, dtype=int))
    with pytest.raises(InsufficientSamplesError):
        evaluate(model, empty)


def test_evaluate_runs_one_pass_per_image():
    """Test that evaluation cost does not grow with the number of scales"""
    arch = Architecture(
        embed_dim=8,
        depth=1,
        heads=2,
        patch_size=4,
        mlp_ratio=2,
        channels=3,
        n_classes=3,
        image_side=8,
        scale_sides=[8, 12, 16],
    )
    model = DacsmModel.initialize(arch, 0)
    images = np.random.default_rng(1).uniform(size=(5, 8, 8, 3))
    model.stats.reset()
    evaluate(model, DomainSet("target", images, np.zeros(5, dtype=int)))
    assert model.stats.stream_passes == model.stats.tokenize_calls == len(images)


def test_linear_cka():
    """Test similarity of identical, transformed and mismatched representations"""
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 6))
    assert linear_cka(x, x) == pytest.approx(1.0)
    rotation, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    assert linear_cka(x, 3.0 * x @ rotation + 2.0) == pytest.approx(1.0)
    unrelated = linear_cka(x, rng.normal(size=(30, 4)))
    assert 0.0 <= unrelated < 0.8

    with pytest.raises(DimensionError):
        linear_cka(x, x[:10])
    with pytest.raises(InsufficientSamplesError):
        linear_cka(x[:1], x[:1])
    with pytest.raises(ParameterError):
        linear_cka(x, np.ones((30, 2)))


def test_layer_cka():
    """Test the mean similarity to the last layer"""
    rng = np.random.default_rng(1)
    x = rng.normal(size=(20, 4))
    assert layer_cka([x]) is None
    assert layer_cka([x, 2.0 * x]) == pytest.approx(1.0)
    other = rng.normal(size=(20, 4))
    expected = (1.0 + linear_cka(other, x)) / 2
    assert layer_cka([x, other, x]) == pytest.approx(expected)
