"""Provide utilities for tests."""

import numpy as np
import pytest

from dacsm.schemas import Architecture, RunConfig


@pytest.fixture(scope="session")
def tiny_arch() -> Architecture:
    """Return a two-layer, two-scale architecture small enough for exhaustive checks"""
    return Architecture(
        embed_dim=8,
        depth=2,
        heads=2,
        patch_size=4,
        mlp_ratio=2,
        channels=3,
        n_classes=3,
        image_side=8,
        scale_sides=[8, 12],
    )


@pytest.fixture
def tiny_raw() -> dict:
    """Return the raw mapping of a run that trains in a few seconds"""
    return {
        "backbone": {
            "embed_dim": 8,
            "depth": 1,
            "heads": 2,
            "patch_size": 4,
            "mlp_ratio": 2,
        },
        "data": {"n_classes": 2, "samples_per_class": 10, "image_side": 8},
        "train": {
            "epochs": 2,
            "warmup_epochs": 1,
            "refresh_interval": 1,
            "batch_size": 10,
            "learning_rate": 0.01,
            "scales": {"sides": [8, 12]},
        },
    }


@pytest.fixture
def tiny_config(tiny_raw, tmp_path) -> RunConfig:
    """Return the tiny run configuration writing into a temporary directory"""
    return RunConfig.model_validate({**tiny_raw, "output_dir": str(tmp_path / "run")})


@pytest.fixture
def rng() -> np.random.Generator:
    """Return a fixed random generator"""
    return np.random.default_rng(1234)
