"""Warm-up, pseudo-label refresh and SGD over paired source/target samples"""

import hashlib
import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from dacsm.config import dump_config
from dacsm.losses import total_loss
from dacsm.models import DacsmModel, forward_quad, rescale, save_checkpoint
from dacsm.numerics import Graph, Tensor
from dacsm.pipeline.evaluate import (
    MIN_DOMAIN_SAMPLES,
    a_distance_proxy,
    layer_cka,
    mean_attention_entropy,
    report_from_logits,
)
from dacsm.pipeline.optim import SGDMomentum
from dacsm.pipeline.pairing import assign_pseudo_labels, pseudo_label_accuracy
from dacsm.pipeline.synthetic import DomainSet, generate_domains
from dacsm.schemas import (
    DomainPair,
    EpochMetrics,
    EvalReport,
    LossReport,
    RunConfig,
    RunSummary,
)

_logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
SUMMARY_FILE = "summary.json"
CHECKPOINT_FILE = "checkpoint.json"
CONFIG_FILE = "config.yaml"


class NonFiniteLossError(Exception):
    """A loss term became NaN or infinite during training"""

    def __init__(self, term: str, step: int, value: float) -> None:
        """Initialize error

        :param str term: name of the offending loss term
        :param int step: optimization step at which it occurred
        :param float value: offending value
        """
        super().__init__(f"Loss term {term} is {value} at step {step}")
        self.term = term
        self.step = step
        self.value = value


@dataclass
class TrainResult:
    """Trained model with its metrics history"""

    model: DacsmModel
    history: list[EpochMetrics] = field(default_factory=list)
    initial_report: EvalReport | None = None
    pairs: list[DomainPair] = field(default_factory=list)


class MetricsLog:
    """Per-epoch metrics CSV, rewritten at the start of every run"""

    def __init__(self, path: Path, n_classes: int) -> None:
        """Initialize log, replacing a previous run's file with a bare header

        :param Path path: CSV location
        :param int n_classes: number of per-class accuracy columns
        """
        self.path = path
        self.columns = EpochMetrics.columns(n_classes)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            _logger.warning("Overwriting metrics file %s", self.path)
        pd.DataFrame(columns=self.columns).to_csv(self.path, index=False)

    def append(self, metrics: EpochMetrics) -> None:
        """Add one epoch row"""
        pd.DataFrame([metrics.to_row()], columns=self.columns).to_csv(
            self.path, mode="a", header=False, index=False
        )

    def read(self) -> pd.DataFrame:
        """Load every row written so far"""
        return pd.read_csv(self.path)


def run_id(config: RunConfig) -> str:
    """Digest of the canonical JSON form of ``config``, output location excluded"""
    blob = json.dumps(
        config.model_dump(mode="json", exclude={"output_dir"}),
        sort_keys=True,
        separators=(",", ":"),
        indent=None,
    ).encode("utf-8")
    digest = hashlib.md5(blob)  # noqa: S324
    return f"dacsm.run:{digest.hexdigest()}"


def augment_source(
    image: Tensor,
    out_side: int,
    crop_ratio: float,
    patch_size: int,
    rng: np.random.Generator,
) -> Tensor:
    """Resize up, randomly crop back to the original side, then resize to ``out_side``"""
    side = image.shape[0]
    if crop_ratio < 1.0:
        enlarged = round(side / crop_ratio)
        big = rescale(image, enlarged)
        top, left = rng.integers(0, enlarged - side + 1, size=2)
        image = big[top : top + side, left : left + side]
    return image if out_side == side else rescale(image, out_side, patch_size)


class Trainer:
    """Owns the model, the optimizer and every random stream of one run"""

    def __init__(
        self,
        config: RunConfig,
        source: DomainSet,
        target: DomainSet,
        model: DacsmModel | None = None,
    ) -> None:
        """Initialize trainer

        :param RunConfig config: run configuration
        :param DomainSet source: labeled source domain
        :param DomainSet target: target domain; its labels are only read for monitoring
        :param DacsmModel | None model: starting point; freshly initialized from the seed when ``None``
        """
        self.config = config
        self.train_config = config.train
        self.source = source
        self.target = target
        self.model = model or DacsmModel.initialize(config.architecture(), config.train.seed)
        self.optimizer = SGDMomentum(
            self.model.params,
            lr=self.train_config.learning_rate,
            momentum=self.train_config.momentum,
            weight_decay=self.train_config.weight_decay,
        )
        seed = self.train_config.seed
        self.batch_rng = np.random.default_rng([seed, 2])
        self.noise_rng = np.random.default_rng([self.train_config.noise.seed, seed, 3])
        self.step_count = 0
        self.pairs: list[DomainPair] = []

    def _check_finite(self, report: LossReport) -> None:
        for term, value in report.model_dump().items():
            if not math.isfinite(value):
                _logger.error("Non-finite %s (%s) at step %s", term, value, self.step_count)
                raise NonFiniteLossError(term, self.step_count, value)

    def train_step(
        self, batch: Sequence[DomainPair], scale_index: int, use_pseudo: bool
    ) -> tuple[LossReport, list[Tensor]]:
        """Forward every pair of ``batch`` on one graph and apply one SGD update

        :param Sequence[DomainPair] batch: pairs of the mini-batch
        :param int scale_index: CSM scale of every source image in the batch
        :param bool use_pseudo: whether the target classification term is active
        :return: mean loss report and the cross-attention maps of the batch
        """
        tc = self.train_config
        arch = self.model.architecture
        side = arch.scale_sides[scale_index]
        graph = Graph()
        backbone = self.model.bind(graph)

        total = None
        reports, maps = [], []
        for pair in batch:
            src = augment_source(
                self.source.images[pair.source_index],
                side,
                tc.crop_ratio,
                arch.patch_size,
                self.batch_rng,
            )
            output = forward_quad(
                backbone,
                src,
                scale_index,
                self.target.images[pair.target_index],
                tc.noise,
                self.noise_rng,
                noise_layers=tc.noise_layers,
                residual_source=tc.residual_source,
            )
            loss, report = total_loss(
                output,
                int(self.source.labels[pair.source_index]),
                pair.pseudo_label if use_pseudo else None,
                tc.loss,
                backbone.head,
                scale_index,
                backbone.head_bias,
            )
            self._check_finite(report)
            total = loss if total is None else total + loss
            reports.append(report)
            maps += output.cross_attention

        mean = total * (1.0 / len(batch))
        self.optimizer.step(graph.backward(mean))
        self.step_count += 1
        batch_report = LossReport.mean(reports)
        _logger.debug(
            "Step %s scale %s total %.5f", self.step_count, side, batch_report.total
        )
        return batch_report, maps

    def run_epoch(self, epoch: int) -> EpochMetrics:
        """Train for one epoch and compute its metrics"""
        tc = self.train_config
        refreshed = epoch % tc.refresh_interval == 0
        if refreshed:
            self.pairs = assign_pseudo_labels(self.model, self.source, self.target)
            _logger.info(
                "Epoch %s: refreshed %s pseudo-labels (accuracy %.3f)",
                epoch,
                len(self.pairs),
                pseudo_label_accuracy(self.pairs, self.target),
            )
        use_pseudo = epoch >= tc.warmup_epochs
        arch = self.model.architecture

        order = self.batch_rng.permutation(len(self.pairs))
        reports, entropies = [], []
        for start in range(0, len(order), tc.batch_size):
            batch = [self.pairs[i] for i in order[start : start + tc.batch_size]]
            scale_index = (
                int(self.batch_rng.integers(arch.n_scales))
                if tc.csm
                else arch.base_scale_index
            )
            report, maps = self.train_step(batch, scale_index, use_pseudo)
            reports.append(report)
            entropies.append(mean_attention_entropy(maps))

        eval_report, a_distance, cka = self.evaluate_domains()
        metrics = EpochMetrics(
            epoch=epoch,
            losses=LossReport.mean(reports),
            report=eval_report,
            a_distance=a_distance,
            attention_entropy=float(np.mean(entropies)) if entropies else 0.0,
            layer_cka=cka,
            pseudo_label_accuracy=pseudo_label_accuracy(self.pairs, self.target) * 100,
            pseudo_refreshed=refreshed,
        )
        _logger.info(
            "Epoch %s: loss %.4f, target accuracy %.2f",
            epoch,
            metrics.losses.total,
            eval_report.average,
        )
        return metrics

    def evaluate_domains(self) -> tuple[EvalReport, float | None, float | None]:
        """Target accuracy, the A-distance proxy and target layer CKA of the current model"""
        features_t, logits_t, layers_t = self.model.inspect(self.target.images)
        report = report_from_logits(
            logits_t, self.target.labels, self.model.architecture.n_classes
        )
        cka = layer_cka(layers_t) if len(self.target) > 1 else None
        if min(len(self.source), len(self.target)) < MIN_DOMAIN_SAMPLES:
            return report, None, cka
        features_s = self.model.embed(self.source.images)
        return (
            report,
            a_distance_proxy(features_s, features_t, seed=self.train_config.seed),
            cka,
        )

    def fit(self, metrics_log: MetricsLog | None = None) -> TrainResult:
        """Run every epoch of the schedule"""
        initial_report, _, _ = self.evaluate_domains()
        result = TrainResult(self.model, initial_report=initial_report)
        for epoch in range(self.train_config.epochs):
            metrics = self.run_epoch(epoch)
            result.history.append(metrics)
            if metrics_log is not None:
                metrics_log.append(metrics)
        result.pairs = self.pairs
        return result


def train(
    config: RunConfig,
    source: DomainSet,
    target: DomainSet,
    model: DacsmModel | None = None,
    metrics_log: MetricsLog | None = None,
) -> TrainResult:
    """Adapt a model from ``source`` to ``target``

    :param RunConfig config: run configuration
    :param DomainSet source: labeled source domain
    :param DomainSet target: target domain
    :param DacsmModel | None model: starting point, updated in place; initialized from the seed if absent
    :param MetricsLog | None metrics_log: optional CSV sink for the per-epoch metrics
    :return: trained model and metrics history
    :raise NonFiniteLossError: if a loss term becomes NaN or infinite
    """
    return Trainer(config, source, target, model).fit(metrics_log)


def run_training(config: RunConfig, overrides: Sequence[str] = ()) -> RunSummary:
    """Generate the data, train, and write metrics, summary and checkpoint

    :param RunConfig config: run configuration; files go to ``config.output_dir``
    :param Sequence[str] overrides: ``--set`` strings recorded in the summary
    :return: run summary
    """
    out_dir = Path(config.output_dir)
    identifier = run_id(config)
    _logger.info("Starting run %s in %s", identifier, out_dir)
    source, target = generate_domains(config.data)
    metrics_log = MetricsLog(out_dir / METRICS_FILE, config.data.n_classes)
    dump_config(config, out_dir / CONFIG_FILE)
    result = train(config, source, target, metrics_log=metrics_log)

    final_report, final_a_distance = (
        (result.history[-1].report, result.history[-1].a_distance)
        if result.history
        else (result.initial_report, None)
    )
    summary = RunSummary(
        run_id=identifier,
        epochs_completed=len(result.history),
        initial_report=result.initial_report,
        final_report=final_report,
        final_a_distance=final_a_distance,
        overrides=list(overrides),
        config=config,
    )
    (out_dir / SUMMARY_FILE).write_text(summary.model_dump_json(indent=2))
    save_checkpoint(result.model, out_dir / CHECKPOINT_FILE)
    _logger.info("Finished run %s after %s epochs", identifier, summary.epochs_completed)
    return summary
