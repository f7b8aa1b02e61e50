"""Versioned JSON checkpoints keyed by parameter path"""

import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from dacsm.models.dat import DacsmModel, init_params
from dacsm.schemas import SCHEMA_VERSION, Checkpoint, CheckpointEntry

_logger = logging.getLogger(__name__)


class CheckpointError(Exception):
    """A checkpoint is missing, unreadable or incompatible"""


def to_checkpoint(model: DacsmModel) -> Checkpoint:
    """Wrap model parameters in the checkpoint envelope"""
    return Checkpoint(
        architecture=model.architecture,
        params={
            path: CheckpointEntry(shape=list(value.shape), data=value.ravel().tolist())
            for path, value in sorted(model.params.items())
        },
    )


def save_checkpoint(model: DacsmModel, path: Path) -> Path:
    """Write ``model`` to ``path`` as JSON

    :return: the written path
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_checkpoint(model).model_dump_json())
    _logger.info("Wrote checkpoint with %s arrays to %s", len(model.params), path)
    return path


def from_checkpoint(checkpoint: Checkpoint) -> DacsmModel:
    """Rebuild a model, checking every array against its architecture

    :raise CheckpointError: on a version mismatch or missing, extra or misshapen arrays
    """
    if checkpoint.schema_version != SCHEMA_VERSION:
        err_msg = (
            f"Checkpoint schema version {checkpoint.schema_version} is not supported "
            f"(expected {SCHEMA_VERSION})"
        )
        raise CheckpointError(err_msg)
    arch = checkpoint.architecture
    expected = {
        k: v.shape for k, v in init_params(arch, np.random.default_rng(0)).items()
    }
    missing = sorted(set(expected) - set(checkpoint.params))
    extra = sorted(set(checkpoint.params) - set(expected))
    if missing or extra:
        err_msg = f"Checkpoint parameters do not match architecture (missing {missing}, unexpected {extra})"
        raise CheckpointError(err_msg)

    params = {}
    for path, entry in checkpoint.params.items():
        shape = tuple(entry.shape)
        if shape != expected[path] or len(entry.data) != int(np.prod(shape)):
            err_msg = f"Parameter {path} has shape {shape} with {len(entry.data)} values, expected {expected[path]}"
            raise CheckpointError(err_msg)
        params[path] = np.asarray(entry.data, dtype=np.float64).reshape(shape)
    return DacsmModel(arch, params)


def load_checkpoint(path: Path) -> DacsmModel:
    """Read a checkpoint file

    :raise CheckpointError: if the file is missing, corrupted or incompatible
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as e:
        err_msg = f"Checkpoint not found: {path}"
        raise CheckpointError(err_msg) from e
    except (OSError, UnicodeDecodeError) as e:
        err_msg = f"Checkpoint {path} cannot be read: {e}"
        raise CheckpointError(err_msg) from e
    try:
        checkpoint = Checkpoint.model_validate_json(text)
    except ValidationError as e:
        err_msg = f"Checkpoint {path} is corrupted or has an unknown layout: {e.error_count()} errors"
        raise CheckpointError(err_msg) from e
    return from_checkpoint(checkpoint)
