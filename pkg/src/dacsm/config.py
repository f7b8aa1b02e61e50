"""Load run configuration from YAML files and ``--set`` overrides"""

import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import yaml
from pydantic import ValidationError

from dacsm.schemas import RunConfig

_logger = logging.getLogger(__name__)


class ConfigError(Exception):
    """A configuration file or override could not be turned into a valid RunConfig"""

    def __init__(self, message: str, key: str | None = None) -> None:
        """Initialize error

        :param str message: description of the problem
        :param str | None key: dotted path of the offending key, if known
        """
        super().__init__(message)
        self.key = key


def parse_override(override: str) -> tuple[list[str], Any]:
    """Split ``a.b.c=value`` into a key path and a YAML-parsed value

    :param str override: ``--set`` argument
    :return: key path and value
    :raise ConfigError: if the override has no ``=`` or an empty key
    """
    key, sep, raw = override.partition("=")
    key = key.strip()
    if not sep or not key:
        err_msg = f"Override must look like key=value, got {override!r}"
        raise ConfigError(err_msg, key or None)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        err_msg = f"Cannot parse value of {key}: {e}"
        raise ConfigError(err_msg, key) from e
    return key.split("."), value


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Apply ``--set`` overrides to a raw configuration mapping in place

    Intermediate sections are created when absent; validation later rejects keys that
    do not exist in the schema.

    :param dict raw: mapping loaded from the YAML file
    :param Sequence[str] overrides: ``key=value`` strings, applied in order
    :return: the updated mapping
    """
    for override in overrides:
        path, value = parse_override(override)
        node = raw
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                err_msg = f"{'.'.join(path)} descends into a non-mapping value"
                raise ConfigError(err_msg, ".".join(path))
            node = child
        node[path[-1]] = value
        _logger.debug("Override %s = %r", ".".join(path), value)
    return raw


def _error_key(error: ValidationError) -> str | None:
    first = error.errors()[0] if error.errors() else None
    if first is None or not first["loc"]:
        return None
    return ".".join(str(part) for part in first["loc"])


def validate_config(raw: dict) -> RunConfig:
    """Validate a raw mapping into a RunConfig

    :raise ConfigError: naming the first offending key
    """
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        key = _error_key(e)
        detail = e.errors()[0]["msg"] if e.errors() else str(e)
        err_msg = f"Invalid configuration at {key or '<root>'}: {detail}"
        raise ConfigError(err_msg, key) from e


def load_config(
    path: Path | None = None,
    overrides: Sequence[str] = (),
    seed: int | None = None,
    output_dir: Path | None = None,
) -> RunConfig:
    """Build the run configuration from a YAML file plus command-line adjustments

    :param Path | None path: YAML file; ``None`` means all defaults
    :param Sequence[str] overrides: ``key=value`` strings
    :param int | None seed: if given, replaces both the training and the data seed
    :param Path | None output_dir: if given, replaces ``output_dir``
    :return: validated configuration
    :raise ConfigError: if the file is unreadable or the result is invalid
    """
    raw: dict = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            err_msg = f"Config file not found: {path}"
            raise ConfigError(err_msg) from e
        except (OSError, UnicodeDecodeError) as e:
            err_msg = f"Config file {path} cannot be read: {e}"
            raise ConfigError(err_msg) from e
        except yaml.YAMLError as e:
            err_msg = f"Config file {path} is not valid YAML: {e}"
            raise ConfigError(err_msg) from e
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            err_msg = f"Config file {path} must hold a mapping at the top level"
            raise ConfigError(err_msg)
        raw = loaded

    extra = list(overrides)
    if seed is not None:
        extra += [f"train.seed={seed}", f"data.seed={seed}"]
    apply_overrides(raw, extra)
    if output_dir is not None:
        raw["output_dir"] = str(output_dir)
    return validate_config(raw)


def dump_config(config: RunConfig, path: Path) -> None:
    """Write a configuration back out as YAML"""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False))
