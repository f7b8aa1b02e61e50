"""Component ablations averaged over seeds"""

import logging
from collections.abc import Sequence

import pandas as pd

from dacsm.pipeline.synthetic import generate_domains
from dacsm.pipeline.train import train
from dacsm.schemas import ModelVariant, RunConfig

_logger = logging.getLogger(__name__)

NOISE_VARIANTS = {ModelVariant.DAT_NOISE, ModelVariant.FULL}
CSM_VARIANTS = {ModelVariant.DAT_CSM, ModelVariant.FULL}


def variant_config(config: RunConfig, variant: ModelVariant, seed: int) -> RunConfig:
    """Copy of ``config`` with the components of ``variant`` switched on and ``seed`` set"""
    raw = config.model_dump(mode="json")
    raw["train"]["seed"] = seed
    raw["data"]["seed"] = seed
    raw["train"]["noise"]["enabled"] = variant in NOISE_VARIANTS
    raw["train"]["csm"] = variant in CSM_VARIANTS
    return RunConfig.model_validate(raw)


def run_ablation(
    config: RunConfig,
    seeds: Sequence[int],
    variants: Sequence[ModelVariant] = tuple(ModelVariant),
) -> pd.DataFrame:
    """Train every variant on every seed

    :param RunConfig config: base configuration; noise and CSM switches are overridden
    :param Sequence[int] seeds: one run per seed and variant
    :param Sequence[ModelVariant] variants: configurations to compare
    :return: one row per run with columns ``variant``, ``seed``, ``target_accuracy``,
        ``initial_accuracy`` and ``a_distance``
    """
    rows = []
    for seed in seeds:
        for variant in variants:
            run_config = variant_config(config, variant, seed)
            source, target = generate_domains(run_config.data)
            result = train(run_config, source, target)
            last = result.history[-1] if result.history else None
            rows.append(
                {
                    "variant": variant.value,
                    "seed": seed,
                    "initial_accuracy": result.initial_report.average,
                    "target_accuracy": (
                        last.report.average if last else result.initial_report.average
                    ),
                    "a_distance": last.a_distance if last else None,
                }
            )
            _logger.info(
                "Ablation %s seed %s: accuracy %.2f",
                variant.value,
                seed,
                rows[-1]["target_accuracy"],
            )
    return pd.DataFrame(rows)


def summarize_ablation(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation over seeds of accuracy and A-distance, per variant

    :param pd.DataFrame runs: table returned by :func:`run_ablation`
    :return: one row per variant in run order, with columns ``target_accuracy_mean``,
        ``target_accuracy_std``, ``a_distance_mean`` and ``a_distance_std``; the
        standard deviations are NaN for a single seed
    """
    order = list(dict.fromkeys(runs["variant"]))
    metrics = runs.astype({"target_accuracy": float, "a_distance": float})
    summary = metrics.groupby("variant", sort=False)[["target_accuracy", "a_distance"]].agg(
        ["mean", "std"]
    )
    summary.columns = [f"{metric}_{stat}" for metric, stat in summary.columns]
    return summary.loc[order]
