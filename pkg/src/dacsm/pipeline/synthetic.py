"""Synthetic two-domain shape classification task

Both domains draw the same shape classes. They differ only in appearance (channel
shift, contrast, texture noise) and in object size.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from dacsm.numerics import Tensor
from dacsm.schemas import DomainStyle, SyntheticDomainSpec

_logger = logging.getLogger(__name__)

Mask = Callable[[np.ndarray, np.ndarray, float], np.ndarray]

BAR_WIDTH = 0.35
RING_INNER = 0.55


class SpecError(Exception):
    """A synthetic domain specification cannot produce a dataset"""


def _disk(x: np.ndarray, y: np.ndarray, s: float) -> np.ndarray:
    return np.hypot(x, y) < s


def _square(x: np.ndarray, y: np.ndarray, s: float) -> np.ndarray:
    return np.maximum(np.abs(x), np.abs(y)) < 0.85 * s


def _cross(x: np.ndarray, y: np.ndarray, s: float) -> np.ndarray:
    w = BAR_WIDTH * s
    return ((np.abs(x) < w) & (np.abs(y) < s)) | ((np.abs(y) < w) & (np.abs(x) < s))


def _ring(x: np.ndarray, y: np.ndarray, s: float) -> np.ndarray:
    r = np.hypot(x, y)
    return (r < s) & (r > RING_INNER * s)


def _diamond(x: np.ndarray, y: np.ndarray, s: float) -> np.ndarray:
    return np.abs(x) + np.abs(y) < s


def _hbar(x: np.ndarray, y: np.ndarray, s: float) -> np.ndarray:
    return (np.abs(y) < BAR_WIDTH * s) & (np.abs(x) < s)


def _vbar(x: np.ndarray, y: np.ndarray, s: float) -> np.ndarray:
    return (np.abs(x) < BAR_WIDTH * s) & (np.abs(y) < s)


def _triangle(x: np.ndarray, y: np.ndarray, s: float) -> np.ndarray:
    return (y < s) & (y > -s) & (np.abs(x) < 0.5 * (y + s))


SHAPES: dict[str, Mask] = {
    "disk": _disk,
    "square": _square,
    "cross": _cross,
    "ring": _ring,
    "diamond": _diamond,
    "hbar": _hbar,
    "vbar": _vbar,
    "triangle": _triangle,
}


@dataclass(frozen=True)
class DomainSet:
    """Images of one domain with their class labels

    Target labels are kept for evaluation and monitoring only.
    """

    name: str
    images: Tensor
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        """Number of distinct labels present"""
        return len(np.unique(self.labels))


def _check_spec(spec: SyntheticDomainSpec) -> None:
    problems = []
    if not 1 <= spec.n_classes <= len(SHAPES):
        problems.append(f"n_classes must be between 1 and {len(SHAPES)}, got {spec.n_classes}")
    if spec.samples_per_class < 1:
        problems.append(f"samples_per_class must be positive, got {spec.samples_per_class}")
    if spec.image_side < 1 or spec.channels < 1:
        problems.append(
            f"image side and channels must be positive, got {spec.image_side} and {spec.channels}"
        )
    for style_name, style in (("source", spec.source), ("target", spec.target)):
        if len(style.channel_shift) != spec.channels:
            problems.append(
                f"{style_name}.channel_shift has {len(style.channel_shift)} entries for {spec.channels} channels"
            )
        low, high = style.object_scale
        if not 0 < low <= high:
            problems.append(f"{style_name}.object_scale must satisfy 0 < low <= high, got {style.object_scale}")
    if problems:
        err_msg = "; ".join(problems)
        raise SpecError(err_msg)


def render(
    shape: str,
    side: int,
    scale: float,
    center: tuple[float, float],
    foreground: float,
    style: DomainStyle,
    rng: np.random.Generator,
) -> Tensor:
    """Draw one shape and apply a domain's appearance

    :param str shape: key of :data:`SHAPES`
    :param int side: image side in pixels
    :param float scale: object half-extent as a fraction of the half image side
    :param tuple[float, float] center: object center in ``[-1, 1]`` coordinates
    :param float foreground: intensity of the object before styling
    :param DomainStyle style: appearance of the domain
    :param np.random.Generator rng: source of the texture noise
    :return: ``side x side x C`` image
    """
    coords = (np.arange(side) + 0.5) / side * 2.0 - 1.0
    y, x = np.meshgrid(coords - center[1], coords - center[0], indexing="ij")
    mask = SHAPES[shape](x, y, scale).astype(np.float64) * foreground
    shift = np.asarray(style.channel_shift, dtype=np.float64)
    base = style.contrast * (mask - 0.5) + 0.5
    noise = rng.normal(0.0, style.texture_noise, size=(side, side, len(shift)))
    return base[..., None] + shift + noise


def _generate(
    name: str, spec: SyntheticDomainSpec, style: DomainStyle, rng: np.random.Generator
) -> DomainSet:
    shapes = list(SHAPES)[: spec.n_classes]
    images, labels = [], []
    for label, shape in enumerate(shapes):
        for _ in range(spec.samples_per_class):
            scale = rng.uniform(*style.object_scale)
            room = max(1.0 - scale, 0.0)
            jitter = min(spec.position_jitter, room)
            center = tuple(rng.uniform(-jitter, jitter, size=2))
            foreground = rng.uniform(0.7, 1.0)
            images.append(render(shape, spec.image_side, scale, center, foreground, style, rng))
            labels.append(label)
    return DomainSet(name, np.stack(images), np.asarray(labels, dtype=int))


def generate_domains(spec: SyntheticDomainSpec) -> tuple[DomainSet, DomainSet]:
    """Generate the labeled source domain and the target domain

    Regenerating with the same spec yields bit-identical arrays.

    :param SyntheticDomainSpec spec: task description
    :return: ``(source, target)``
    :raise SpecError: if the spec is degenerate
    """
    _check_spec(spec)
    source = _generate("source", spec, spec.source, np.random.default_rng([spec.seed, 0]))
    target = _generate("target", spec, spec.target, np.random.default_rng([spec.seed, 1]))
    _logger.info(
        "Generated %s source and %s target images of %s classes",
        len(source),
        len(target),
        spec.n_classes,
    )
    return source, target
