"""Module containing schemas"""

from enum import Enum
from pathlib import Path

from pydantic import BaseModel, Field, field_validator, model_validator

from dacsm import RUNS_DIR_PATH

SCHEMA_VERSION = "1"


class Base(BaseModel, extra="forbid"):
    """Base class for pydantic models"""


class ResidualSource(str, Enum):
    """Stream whose tokens feed the residual of a cross-attention block"""

    QUERY = "query"
    KEY_VALUE = "key_value"


class KLDirection(str, Enum):
    """Argument order of the distillation divergence"""

    TEACHER_STUDENT = "teacher_student"
    STUDENT_TEACHER = "student_teacher"


class VerifySuite(str, Enum):
    """Property suites runnable from the command line"""

    ALL = "all"
    TEMPERATURE_LIMIT = "appendix-a"
    QUERY_CONSISTENCY = "appendix-b"
    SCALE_MATCHING = "appendix-c"
    GRADIENTS = "gradients"


class ModelVariant(str, Enum):
    """Ablation configurations"""

    BASE_DAT = "base_dat"
    DAT_NOISE = "dat_noise"
    DAT_CSM = "dat_csm"
    FULL = "full"


class NoiseSpec(Base):
    """Gaussian perturbation of cross-attention keys and values"""

    sigma: float = 0.1
    seed: int = 0
    enabled: bool = True

    @property
    def active(self) -> bool:
        """Whether any noise is actually drawn"""
        return self.enabled and self.sigma > 0


class LossWeights(Base):
    """Weights of the five adaptation loss terms"""

    w_cls_s: float = Field(default=1.0, ge=0)
    w_cls_s2t: float = Field(default=1.0, ge=0)
    w_dst: float = Field(default=1.0, ge=0)
    w_cls_t: float = Field(default=1.0, ge=0)
    w_style: float = Field(default=0.01, ge=0)
    tau_distill: float = Field(default=2.0, gt=0)
    kl_direction: KLDirection = KLDirection.TEACHER_STUDENT


class ScaleSet(Base):
    """Square side lengths the source images are resized to"""

    sides: list[int] = Field(default_factory=lambda: [16, 24, 32])

    @field_validator("sides")
    @classmethod
    def _check_sides(cls, sides: list[int]) -> list[int]:
        if not sides:
            err_msg = "scale set needs at least one side"
            raise ValueError(err_msg)
        if any(side < 1 for side in sides):
            err_msg = f"scale sides must be positive, got {sides}"
            raise ValueError(err_msg)
        if len(set(sides)) != len(sides):
            err_msg = f"scale sides must be unique, got {sides}"
            raise ValueError(err_msg)
        return sides

    @property
    def k(self) -> int:
        """Number of scales"""
        return len(self.sides)


class DomainStyle(Base):
    """Appearance and object-size statistics of one synthetic domain"""

    channel_shift: list[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    contrast: float = Field(default=1.0, gt=0)
    texture_noise: float = Field(default=0.05, ge=0)
    object_scale: tuple[float, float] = (0.6, 0.9)


def _target_style() -> DomainStyle:
    return DomainStyle(
        channel_shift=[0.4, -0.3, 0.2],
        contrast=0.6,
        texture_noise=0.15,
        object_scale=(0.35, 0.55),
    )


class SyntheticDomainSpec(Base):
    """Two-domain shape classification task with a style gap and a scale gap"""

    n_classes: int = 4
    samples_per_class: int = 32
    image_side: int = 16
    channels: int = 3
    position_jitter: float = Field(default=0.15, ge=0)
    source: DomainStyle = Field(default_factory=DomainStyle)
    target: DomainStyle = Field(default_factory=_target_style)
    seed: int = 7


class BackboneSettings(Base):
    """Transformer size knobs"""

    embed_dim: int = Field(default=32, ge=1)
    depth: int = Field(default=2, ge=1)
    heads: int = Field(default=4, ge=1)
    patch_size: int = Field(default=8, ge=1)
    mlp_ratio: int = Field(default=2, ge=1)
    classifier_bias: bool = False
    init_std: float = Field(default=0.02, gt=0)


class Architecture(BackboneSettings):
    """Everything needed to rebuild a model from its parameter arrays"""

    channels: int = 3
    n_classes: int = 4
    image_side: int = 16
    scale_sides: list[int] = Field(default_factory=lambda: [16])

    @model_validator(mode="after")
    def _check_shapes(self) -> "Architecture":
        if self.embed_dim % self.heads:
            err_msg = f"heads ({self.heads}) must divide embed_dim ({self.embed_dim})"
            raise ValueError(err_msg)
        bad = [s for s in self.scale_sides if s % self.patch_size]
        if bad:
            err_msg = f"scale sides {bad} are not divisible by patch size {self.patch_size}"
            raise ValueError(err_msg)
        if self.image_side not in self.scale_sides:
            err_msg = f"image side {self.image_side} missing from scale sides {self.scale_sides}"
            raise ValueError(err_msg)
        return self

    @property
    def n_scales(self) -> int:
        """Number of positional banks and sub-centers per class"""
        return len(self.scale_sides)

    @property
    def base_scale_index(self) -> int:
        """Bank index of the original image resolution"""
        return self.scale_sides.index(self.image_side)


class TrainConfig(Base):
    """Optimization schedule and adaptation switches"""

    epochs: int = Field(default=30, ge=0)
    warmup_epochs: int = Field(default=10, ge=0)
    refresh_interval: int = Field(default=5, ge=1)
    batch_size: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=0.02, ge=0)
    momentum: float = Field(default=0.9, ge=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    noise_layers: list[int] | None = None
    loss: LossWeights = Field(default_factory=LossWeights)
    scales: ScaleSet = Field(default_factory=ScaleSet)
    csm: bool = True
    crop_ratio: float = Field(default=0.875, gt=0, le=1)
    residual_source: ResidualSource = ResidualSource.QUERY
    seed: int = 7

    @model_validator(mode="after")
    def _check_schedule(self) -> "TrainConfig":
        if self.epochs > 0 and self.warmup_epochs >= self.epochs:
            err_msg = (
                f"warmup_epochs ({self.warmup_epochs}) must be below epochs ({self.epochs})"
            )
            raise ValueError(err_msg)
        if self.noise.sigma < 0:
            err_msg = f"noise sigma must be nonnegative, got {self.noise.sigma}"
            raise ValueError(err_msg)
        return self


class RunConfig(Base):
    """Complete run configuration as read from the YAML file"""

    schema_version: str = SCHEMA_VERSION
    output_dir: Path = Field(default_factory=lambda: RUNS_DIR_PATH / "default")
    backbone: BackboneSettings = Field(default_factory=BackboneSettings)
    data: SyntheticDomainSpec = Field(default_factory=SyntheticDomainSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)

    @model_validator(mode="after")
    def _check_architecture(self) -> "RunConfig":
        self.architecture()
        if self.train.residual_source == ResidualSource.KEY_VALUE and self.train.csm:
            err_msg = "residual_source key_value needs equal token counts, disable csm"
            raise ValueError(err_msg)
        return self

    def architecture(self) -> Architecture:
        """Model shape implied by the backbone, data and scale settings"""
        sides = (
            list(self.train.scales.sides)
            if self.train.csm
            else [self.data.image_side]
        )
        return Architecture(
            **self.backbone.model_dump(),
            channels=self.data.channels,
            n_classes=self.data.n_classes,
            image_side=self.data.image_side,
            scale_sides=sides,
        )


class LossReport(Base):
    """Value of each adaptation loss term and their weighted total"""

    cls_s: float = 0.0
    cls_s2t: float = 0.0
    dst: float = 0.0
    cls_t: float = 0.0
    style: float = 0.0
    total: float = 0.0

    @classmethod
    def mean(cls, reports: list["LossReport"]) -> "LossReport":
        """Average a list of reports field by field"""
        if not reports:
            return cls()
        fields = cls.model_fields
        return cls(
            **{f: sum(getattr(r, f) for r in reports) / len(reports) for f in fields}
        )


class DomainPair(Base):
    """A target sample paired with its nearest source sample"""

    source_index: int
    target_index: int
    pseudo_label: int
    distance: float


class EvalReport(Base):
    """Classification accuracy on a labeled set"""

    per_class: list[float]
    average: float
    ece: float | None = None
    n_samples: int


class EpochMetrics(Base):
    """Everything logged after one training epoch"""

    epoch: int
    losses: LossReport
    report: EvalReport
    a_distance: float | None = None
    attention_entropy: float
    layer_cka: float | None = None
    pseudo_label_accuracy: float
    pseudo_refreshed: bool

    @staticmethod
    def columns(n_classes: int) -> list[str]:
        """Metrics CSV header for ``n_classes`` classes"""
        return [
            "epoch",
            *LossReport.model_fields,
            "target_accuracy",
            *(f"acc_class_{c}" for c in range(n_classes)),
            "ece",
            "a_distance",
            "attention_entropy",
            "layer_cka",
            "pseudo_label_accuracy",
            "pseudo_refreshed",
        ]

    def to_row(self) -> dict[str, float | int | bool | None]:
        """Flatten into one metrics CSV row"""
        row: dict[str, float | int | bool | None] = {"epoch": self.epoch}
        row.update(self.losses.model_dump())
        row["target_accuracy"] = self.report.average
        for c, acc in enumerate(self.report.per_class):
            row[f"acc_class_{c}"] = acc
        row["ece"] = self.report.ece
        row["a_distance"] = self.a_distance
        row["attention_entropy"] = self.attention_entropy
        row["layer_cka"] = self.layer_cka
        row["pseudo_label_accuracy"] = self.pseudo_label_accuracy
        row["pseudo_refreshed"] = self.pseudo_refreshed
        return row


class RunSummary(Base):
    """Final JSON summary of a training run"""

    schema_version: str = SCHEMA_VERSION
    run_id: str
    epochs_completed: int
    initial_report: EvalReport
    final_report: EvalReport
    final_a_distance: float | None = None
    overrides: list[str] = Field(default_factory=list)
    config: RunConfig


class PropertyResult(Base):
    """Outcome of one property check"""

    suite: str
    name: str
    passed: bool
    detail: str = ""
    metrics: dict[str, float] = Field(default_factory=dict)


class CheckpointEntry(Base):
    """One parameter array in row-major order"""

    shape: list[int]
    data: list[float]


class Checkpoint(Base):
    """Versioned parameter checkpoint keyed by parameter path"""

    schema_version: str = SCHEMA_VERSION
    architecture: Architecture
    params: dict[str, CheckpointEntry]
