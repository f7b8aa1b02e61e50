"""Command-line entry point for training, evaluation and property suites"""

import logging
from collections.abc import Sequence
from pathlib import Path

import asyncclick as click
import pandas as pd

from dacsm.config import ConfigError, load_config
from dacsm.models import CheckpointError, load_checkpoint
from dacsm.pipeline import (
    NonFiniteLossError,
    SpecError,
    evaluate,
    generate_domains,
    run_ablation,
    run_training,
    summarize_ablation,
)
from dacsm.schemas import ModelVariant, VerifySuite
from dacsm.verify import run_suite

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PROPERTY_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

EVAL_FILE = "eval.json"
ABLATION_FILE = "ablation.csv"


def _configure_logging() -> None:
    """Configure logging."""
    logging.basicConfig(
        filename=f"{__package__}.log",
        format="[%(asctime)s] - %(name)s - %(levelname)s : %(message)s",
    )
    logging.getLogger(__package__).setLevel(logging.DEBUG)


def _report_table(per_class: Sequence[float], average: float, ece: float) -> str:
    table = pd.DataFrame(
        {"accuracy": [*per_class, average]},
        index=[*(f"class {c}" for c in range(len(per_class))), "average"],
    )
    return f"{table.round(2).to_string()}\nECE: {ece:.4f}"


def cmd_train(
    config_path: Path | None = None,
    overrides: Sequence[str] = (),
    seed: int | None = None,
    out: Path | None = None,
) -> int:
    """Train one run and write its metrics, summary and checkpoint

    :param Path | None config_path: YAML config file, defaults when ``None``
    :param Sequence[str] overrides: ``key=value`` strings
    :param int | None seed: replaces the training and data seeds
    :param Path | None out: replaces the output directory
    :return: exit code
    """
    try:
        config = load_config(config_path, overrides, seed, out)
        summary = run_training(config, overrides)
    except (ConfigError, SpecError) as e:
        _logger.error("Training not started: %s", e)
        click.echo(f"Configuration error: {e}", err=True)
        return EXIT_USAGE
    except NonFiniteLossError as e:
        click.echo(f"Training aborted: {e}", err=True)
        return EXIT_NUMERIC
    click.echo(f"Run {summary.run_id}: {summary.epochs_completed} epochs")
    click.echo(
        _report_table(
            summary.final_report.per_class,
            summary.final_report.average,
            summary.final_report.ece,
        )
    )
    click.echo(f"Outputs written to {config.output_dir}")
    return EXIT_OK


def cmd_eval(
    checkpoint: Path,
    config_path: Path | None = None,
    overrides: Sequence[str] = (),
    seed: int | None = None,
    out: Path | None = None,
) -> int:
    """Evaluate a checkpoint on the target domain of a config

    :param Path checkpoint: checkpoint file written by ``train``
    :param Path | None config_path: YAML config file describing the data
    :param Sequence[str] overrides: ``key=value`` strings
    :param int | None seed: replaces the training and data seeds
    :param Path | None out: directory for ``eval.json``; the checkpoint's directory if ``None``
    :return: exit code
    """
    try:
        config = load_config(config_path, overrides, seed)
        model = load_checkpoint(checkpoint)
    except (ConfigError, CheckpointError) as e:
        _logger.error("Evaluation not started: %s", e)
        click.echo(f"Error: {e}", err=True)
        return EXIT_USAGE

    arch, data = model.architecture, config.data
    if (arch.n_classes, arch.channels, arch.image_side) != (
        data.n_classes,
        data.channels,
        data.image_side,
    ):
        err_msg = (
            f"Checkpoint {checkpoint} expects {arch.n_classes} classes of "
            f"{arch.image_side}x{arch.image_side}x{arch.channels} images, config "
            f"describes {data.n_classes} classes of "
            f"{data.image_side}x{data.image_side}x{data.channels}"
        )
        _logger.error(err_msg)
        click.echo(f"Error: {err_msg}", err=True)
        return EXIT_USAGE

    try:
        _, target = generate_domains(data)
    except SpecError as e:
        click.echo(f"Configuration error: {e}", err=True)
        return EXIT_USAGE
    report = evaluate(model, target)
    out_dir = Path(out) if out is not None else Path(checkpoint).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / EVAL_FILE).write_text(report.model_dump_json(indent=2))
    click.echo(_report_table(report.per_class, report.average, report.ece))
    _logger.info("Evaluated %s: average accuracy %.2f", checkpoint, report.average)
    return EXIT_OK


def cmd_verify(suite_name: str, seed: int = 0) -> int:
    """Run a property suite and print one line per property

    :param str suite_name: ``all``, ``appendix-a``, ``appendix-b``, ``appendix-c`` or
        ``gradients``
    :param int seed: seed of the randomized instances
    :return: 0 iff every property holds, 1 if one fails, 2 for an unknown suite
    """
    try:
        suite = VerifySuite(suite_name)
    except ValueError:
        choices = ", ".join(s.value for s in VerifySuite)
        click.echo(f"Unknown suite {suite_name!r}; choose one of {choices}", err=True)
        return EXIT_USAGE
    results = run_suite(suite, seed)
    table = pd.DataFrame(
        [
            {
                "suite": r.suite,
                "property": r.name,
                "result": "pass" if r.passed else "FAIL",
                "detail": r.detail,
            }
            for r in results
        ]
    )
    click.echo(table.to_string(index=False))
    failed = [r.name for r in results if not r.passed]
    if failed:
        _logger.warning("Failing properties: %s", failed)
        return EXIT_PROPERTY_FAILED
    return EXIT_OK


def cmd_ablation(
    config_path: Path | None = None,
    overrides: Sequence[str] = (),
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    out: Path | None = None,
) -> int:
    """Compare the four component configurations over several seeds

    :return: exit code
    """
    try:
        config = load_config(config_path, overrides, output_dir=out)
        runs = run_ablation(config, seeds, tuple(ModelVariant))
    except (ConfigError, SpecError) as e:
        click.echo(f"Configuration error: {e}", err=True)
        return EXIT_USAGE
    except NonFiniteLossError as e:
        click.echo(f"Ablation aborted: {e}", err=True)
        return EXIT_NUMERIC
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs.to_csv(out_dir / ABLATION_FILE, index=False)
    click.echo(summarize_ablation(runs).round(3).to_string())
    return EXIT_OK


_config_option = click.option(
    "--config",
    "config_path",
    type=click.Path(path_type=Path),
    default=None,
    help="YAML run configuration",
)
_set_option = click.option(
    "--set",
    "overrides",
    multiple=True,
    help="Override a config field, e.g. --set train.epochs=5 (repeatable)",
)
_out_option = click.option(
    "--out", type=click.Path(path_type=Path), default=None, help="Output directory"
)


@click.group()
async def cli() -> None:
    """Desk-scale cross-domain adaptation runs and property checks"""
    _configure_logging()


@cli.command()
@_config_option
@_set_option
@click.option("--seed", type=int, default=None, help="Training and data seed")
@_out_option
@click.pass_context
async def train(
    ctx: click.Context,
    config_path: Path | None,
    overrides: tuple[str, ...],
    seed: int | None,
    out: Path | None,
) -> None:
    """Train one model and write metrics, summary and checkpoint"""
    ctx.exit(cmd_train(config_path, overrides, seed, out))


@cli.command(name="eval")
@click.argument("checkpoint", type=click.Path(path_type=Path))
@_config_option
@_set_option
@click.option("--seed", type=int, default=None, help="Data seed")
@_out_option
@click.pass_context
async def eval_command(
    ctx: click.Context,
    checkpoint: Path,
    config_path: Path | None,
    overrides: tuple[str, ...],
    seed: int | None,
    out: Path | None,
) -> None:
    """Evaluate a checkpoint on the configured target domain"""
    ctx.exit(cmd_eval(checkpoint, config_path, overrides, seed, out))


@cli.command()
@click.argument("suite", default=VerifySuite.ALL.value)
@click.option("--seed", type=int, default=0, help="Seed of the random instances")
@click.pass_context
async def verify(ctx: click.Context, suite: str, seed: int) -> None:
    """Run a property suite"""
    ctx.exit(cmd_verify(suite, seed))


@cli.command()
@_config_option
@_set_option
@click.option(
    "--seed", "seeds", type=int, multiple=True, help="Seed to average over (repeatable)"
)
@_out_option
@click.pass_context
async def ablation(
    ctx: click.Context,
    config_path: Path | None,
    overrides: tuple[str, ...],
    seeds: tuple[int, ...],
    out: Path | None,
) -> None:
    """Train every component configuration and summarize"""
    ctx.exit(cmd_ablation(config_path, overrides, seeds or (0, 1, 2, 3, 4), out))


def main() -> None:
    """Console script entry point"""
    cli(_anyio_backend="asyncio")


if __name__ == "__main__":
    main()
