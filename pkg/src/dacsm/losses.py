"""Adaptation loss terms and their weighted total"""

from collections.abc import Sequence

import numpy as np
import numpy.typing as npt

from dacsm.models.csm import source_logits, target_logits
from dacsm.models.dat import QuadOutput
from dacsm.numerics import ContractError, Tensor, Var
from dacsm.numerics.graph import lift, owning_graph
from dacsm.numerics.linalg import channel_stats
from dacsm.numerics.ops import log_softmax_rows, norm, softmax_rows, stop_gradient
from dacsm.schemas import KLDirection, LossReport, LossWeights


class LabelError(Exception):
    """A label is not a valid one-hot vector or class index"""


def one_hot(label: int, n_classes: int) -> Tensor:
    """One-hot encoding of ``label``

    :raise LabelError: if ``label`` is out of range
    """
    if not 0 <= label < n_classes:
        err_msg = f"Label {label} outside the {n_classes} classes"
        raise LabelError(err_msg)
    y = np.zeros(n_classes)
    y[label] = 1.0
    return y


def _check_one_hot(y: npt.ArrayLike, n_classes: int) -> Tensor:
    arr = np.asarray(y, dtype=np.float64)
    if arr.shape != (n_classes,) or not np.all((arr == 0) | (arr == 1)) or arr.sum() != 1:
        err_msg = f"Expected a one-hot vector of length {n_classes}, got {arr.tolist()}"
        raise LabelError(err_msg)
    return arr


def cross_entropy(logits: Var | npt.ArrayLike, y: npt.ArrayLike) -> Var:
    """Softmax cross-entropy against a one-hot label

    :param Var | npt.ArrayLike logits: unnormalized scores of length ``C``
    :param npt.ArrayLike y: one-hot label of length ``C``
    :return: scalar loss; its gradient is ``softmax(logits) - y``
    :raise LabelError: if ``y`` is not one-hot
    """
    logits = lift(logits, owning_graph(logits))
    target = _check_one_hot(y, logits.shape[-1])
    return -(log_softmax_rows(logits) * target).sum()


def distillation(
    logits_student: Var | npt.ArrayLike,
    logits_teacher: Var | npt.ArrayLike,
    tau: float,
    direction: KLDirection = KLDirection.TEACHER_STUDENT,
) -> Var:
    """KL divergence between temperature-softened teacher and student predictions

    No gradient reaches the teacher logits.

    :param Var | npt.ArrayLike logits_student: logits being trained
    :param Var | npt.ArrayLike logits_teacher: logits providing the soft target
    :param float tau: positive temperature
    :param KLDirection direction: ``teacher_student`` computes ``KL(teacher || student)``
    :raise ParameterError: if ``tau`` is not positive
    """
    graph = owning_graph(logits_student, logits_teacher)
    student = lift(logits_student, graph)
    teacher = stop_gradient(lift(logits_teacher, graph))
    log_p_teacher = log_softmax_rows(teacher, tau)
    log_p_student = log_softmax_rows(student, tau)
    if direction == KLDirection.TEACHER_STUDENT:
        return (softmax_rows(teacher, tau) * (log_p_teacher - log_p_student)).sum()
    return (softmax_rows(student, tau) * (log_p_student - log_p_teacher)).sum()


def style_loss(layers_s: Sequence[Var], layers_t: Sequence[Var]) -> Var:
    """Mean over layers of the distance between channel means plus channel stds

    :param Sequence[Var] layers_s: source token features, one ``N x D`` matrix per layer
    :param Sequence[Var] layers_t: target token features, one per layer
    :raise ContractError: if the layer counts differ or are zero
    """
    if len(layers_s) != len(layers_t) or not layers_s:
        err_msg = f"Style loss needs equal, nonzero layer counts, got {len(layers_s)} and {len(layers_t)}"
        raise ContractError(err_msg)
    terms = []
    for f_s, f_t in zip(layers_s, layers_t, strict=True):
        mu_s, sd_s = channel_stats(f_s)
        mu_t, sd_t = channel_stats(f_t)
        terms.append(norm(mu_s - mu_t) + norm(sd_s - sd_t))
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / len(terms))


def total_loss(
    output: QuadOutput,
    label: int | None,
    pseudo: int | None,
    weights: LossWeights,
    head: Var,
    scale_index: int,
    head_bias: Var | None = None,
) -> tuple[Var, LossReport]:
    """Weighted sum of the five adaptation terms for one source/target pair

    Source and source-to-target features are scored at sub-center ``scale_index``;
    target and target-to-source features use the per-class maximum. Without a
    pseudo-label the target classification term is skipped.

    :param QuadOutput output: result of ``forward_quad``
    :param int | None label: source class
    :param int | None pseudo: pseudo-label of the target, ``None`` during warm-up
    :param LossWeights weights: term weights and distillation settings
    :param Var head: ``C x K x D`` sub-center bank
    :param int scale_index: scale of the source image
    :param Var | None head_bias: optional classifier bias
    :return: scalar total and the per-term report
    :raise ContractError: if the source label is missing
    """
    if label is None:
        err_msg = "total_loss needs the source label"
        raise ContractError(err_msg)
    quad = output.quad
    n_classes = head.shape[0]
    y = one_hot(label, n_classes)

    logits_t, _ = target_logits(head, quad.f_t, head_bias)
    logits_t2s, _ = target_logits(head, quad.f_t2s, head_bias)
    terms: dict[str, Var | None] = {
        "cls_s": cross_entropy(source_logits(head, quad.f_s, scale_index, head_bias), y),
        "cls_s2t": cross_entropy(
            source_logits(head, quad.f_s2t, scale_index, head_bias), y
        ),
        "dst": distillation(logits_t, logits_t2s, weights.tau_distill, weights.kl_direction),
        "cls_t": None if pseudo is None else cross_entropy(logits_t, one_hot(pseudo, n_classes)),
        "style": style_loss(output.layers_s, output.layers_t),
    }
    factors = {
        "cls_s": weights.w_cls_s,
        "cls_s2t": weights.w_cls_s2t,
        "dst": weights.w_dst,
        "cls_t": weights.w_cls_t,
        "style": weights.w_style,
    }

    total = head.graph.constant(0.0)
    for name, term in terms.items():
        if term is not None and factors[name] != 0:
            total = total + term * factors[name]
    report = LossReport(
        **{name: 0.0 if term is None else float(term.value) for name, term in terms.items()},
        total=float(total.value),
    )
    return total, report
