"""Shared-weight transformer evaluated under four attention wirings

One parameter set produces the source, source-to-target, target-to-source and target
class features. Every image is tokenized once per forward pass; all later layers
operate on tokens.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from dacsm.models.attention import (
    AttentionOutput,
    AttentionParams,
    MLPParams,
    attend,
    attention_divergence,
    residual_block,
)
from dacsm.models.csm import target_logits
from dacsm.models.tokens import (
    PositionalError,
    TokenSequence,
    interpolate_pos_embedding,
    patchify,
)
from dacsm.numerics import DimensionError, Graph, Tensor, Var
from dacsm.numerics.graph import lift, owning_graph
from dacsm.numerics.ops import concat, layer_norm
from dacsm.schemas import Architecture, NoiseSpec, ResidualSource

_logger = logging.getLogger(__name__)

SUBCENTER_JITTER = 0.01


@dataclass
class ForwardStats:
    """Instrumentation counters"""

    tokenize_calls: int = 0
    stream_passes: int = 0

    def reset(self) -> None:
        """Zero both counters"""
        self.tokenize_calls = 0
        self.stream_passes = 0


@dataclass(frozen=True)
class LayerParams:
    """Pre-norm, attention and feed-forward weights of one layer"""

    norm_gain: Var
    norm_bias: Var
    attn: AttentionParams
    mlp: MLPParams


@dataclass(frozen=True)
class FeatureQuad:
    """Final CLS features of the four streams"""

    f_s: Var
    f_s2t: Var
    f_t2s: Var
    f_t: Var


@dataclass(frozen=True)
class QuadOutput:
    """Result of :func:`forward_quad`"""

    quad: FeatureQuad
    layers_s: list[Var]
    layers_t: list[Var]
    cross_attention: list[Tensor] = field(default_factory=list)


def init_params(arch: Architecture, rng: np.random.Generator) -> dict[str, Tensor]:
    """Draw a fresh parameter set

    Projection matrices use fan-in scaled Gaussians, embeddings use ``init_std``. The
    positional bank of the original resolution is random; every other bank is
    interpolated from it. Sub-centers are jittered copies of one classifier.

    :param Architecture arch: model shape
    :param np.random.Generator rng: source of randomness
    :return: arrays keyed by parameter path
    """
    d, p, c = arch.embed_dim, arch.patch_size, arch.channels
    hidden = d * arch.mlp_ratio

    def dense(fan_in: int, fan_out: int) -> Tensor:
        return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))

    params: dict[str, Tensor] = {
        "patch_projection": dense(p * p * c, d),
        "cls_embedding": rng.normal(0.0, arch.init_std, size=d),
    }
    base_side = arch.image_side // p
    base_bank = rng.normal(0.0, arch.init_std, size=(base_side * base_side + 1, d))
    for k, side in enumerate(arch.scale_sides):
        params[f"pos_embeddings.{k}"] = (
            base_bank
            if k == arch.base_scale_index
            else interpolate_pos_embedding(base_bank, side // p)
        )
    for layer in range(arch.depth):
        prefix = f"layers.{layer}"
        params[f"{prefix}.norm1.gain"] = np.ones(d)
        params[f"{prefix}.norm1.bias"] = np.zeros(d)
        for name in ("w_q", "w_k", "w_v"):
            params[f"{prefix}.attn.{name}"] = dense(d, d)
        params[f"{prefix}.mlp.norm.gain"] = np.ones(d)
        params[f"{prefix}.mlp.norm.bias"] = np.zeros(d)
        params[f"{prefix}.mlp.w1"] = dense(d, hidden)
        params[f"{prefix}.mlp.b1"] = np.zeros(hidden)
        params[f"{prefix}.mlp.w2"] = dense(hidden, d)
        params[f"{prefix}.mlp.b2"] = np.zeros(d)
    params["norm.gain"] = np.ones(d)
    params["norm.bias"] = np.zeros(d)
    shared = rng.normal(0.0, 1.0 / np.sqrt(d), size=(arch.n_classes, 1, d))
    params["head.weights"] = shared + rng.normal(
        0.0, SUBCENTER_JITTER, size=(arch.n_classes, arch.n_scales, d)
    )
    if arch.classifier_bias:
        params["head.bias"] = np.zeros(arch.n_classes)
    return params


class BoundBackbone:
    """Parameters registered on one graph"""

    def __init__(
        self,
        arch: Architecture,
        graph: Graph,
        params: Mapping[str, Var],
        stats: ForwardStats | None = None,
    ) -> None:
        """Initialize bound parameters

        :param Architecture arch: model shape
        :param Graph graph: tape the parameter nodes belong to
        :param Mapping[str, Var] params: parameter nodes keyed by path
        :param ForwardStats | None stats: counters incremented by tokenization and stream passes
        """
        self.arch = arch
        self.graph = graph
        self.params = dict(params)
        self.stats = stats if stats is not None else ForwardStats()

    def __getitem__(self, path: str) -> Var:
        return self.params[path]

    def layer(self, index: int) -> LayerParams:
        """Weights of layer ``index``"""
        prefix = f"layers.{index}"
        return LayerParams(
            norm_gain=self[f"{prefix}.norm1.gain"],
            norm_bias=self[f"{prefix}.norm1.bias"],
            attn=AttentionParams(
                self[f"{prefix}.attn.w_q"],
                self[f"{prefix}.attn.w_k"],
                self[f"{prefix}.attn.w_v"],
                self.arch.heads,
            ),
            mlp=MLPParams(
                self[f"{prefix}.mlp.norm.gain"],
                self[f"{prefix}.mlp.norm.bias"],
                self[f"{prefix}.mlp.w1"],
                self[f"{prefix}.mlp.b1"],
                self[f"{prefix}.mlp.w2"],
                self[f"{prefix}.mlp.b2"],
            ),
        )

    @property
    def head(self) -> Var:
        """Sub-center classifier weights, ``C x K x D``"""
        return self["head.weights"]

    @property
    def head_bias(self) -> Var | None:
        """Classifier bias, if the architecture has one"""
        return self.params.get("head.bias")

    def final_feature(self, tokens: Var) -> Var:
        """Normalized CLS row of the last layer"""
        return layer_norm(tokens[0], self["norm.gain"], self["norm.bias"])


def tokenize(
    image: npt.ArrayLike, backbone: BoundBackbone, scale_index: int
) -> TokenSequence:
    """Embed an image as CLS plus patch tokens with positional bank ``scale_index``

    :param npt.ArrayLike image: ``H x W x C`` image
    :param BoundBackbone backbone: bound parameters
    :param int scale_index: positional bank to add
    :return: ``(N + 1) x D`` token sequence
    :raise TilingError: if the image cannot be cut into whole patches
    :raise PositionalError: if the bank does not exist or holds a different token count
    """
    arch = backbone.arch
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != arch.channels:
        err_msg = f"Expected an H x W x {arch.channels} image, got shape {arr.shape}"
        raise DimensionError(err_msg)
    patches = patchify(arr, arch.patch_size)
    if not 0 <= scale_index < arch.n_scales:
        err_msg = f"Scale index {scale_index} outside the {arch.n_scales} positional banks"
        raise PositionalError(err_msg)
    bank = backbone[f"pos_embeddings.{scale_index}"]
    if bank.shape[0] != patches.shape[0] + 1:
        err_msg = (
            f"Positional bank {scale_index} has {bank.shape[0]} rows but the image "
            f"yields {patches.shape[0] + 1} tokens"
        )
        raise PositionalError(err_msg)
    cls = backbone["cls_embedding"].reshape(1, arch.embed_dim)
    projected = backbone.graph.constant(patches) @ backbone["patch_projection"]
    tokens = concat([cls, projected], axis=0) + bank
    backbone.stats.tokenize_calls += 1
    return TokenSequence(tokens, scale_index, tuple(arr.shape))


def _layer_step(
    layer: LayerParams,
    q_tokens: Var,
    kv_tokens: Var,
    noise: NoiseSpec | None,
    rng: np.random.Generator | None,
    residual_source: ResidualSource,
) -> tuple[Var, AttentionOutput]:
    q = layer_norm(q_tokens, layer.norm_gain, layer.norm_bias)
    kv = q if kv_tokens is q_tokens else layer_norm(kv_tokens, layer.norm_gain, layer.norm_bias)
    out = attend(layer.attn, q, kv, noise, rng)
    base = q_tokens if residual_source == ResidualSource.QUERY else kv_tokens
    return residual_block(base, out.out, layer.mlp), out


def run_stream(backbone: BoundBackbone, tokens: TokenSequence) -> tuple[Var, list[Var]]:
    """Self-attention pass through every layer

    :return: final CLS feature and the output tokens of each layer
    """
    backbone.stats.stream_passes += 1
    z = tokens.tokens
    layers = []
    for index in range(backbone.arch.depth):
        z, _ = _layer_step(backbone.layer(index), z, z, None, None, ResidualSource.QUERY)
        layers.append(z)
    return backbone.final_feature(z), layers


def forward_quad(
    backbone: BoundBackbone,
    src_image: npt.ArrayLike,
    src_scale: int,
    tgt_image: npt.ArrayLike,
    noise: NoiseSpec | None = None,
    rng: np.random.Generator | None = None,
    *,
    noise_layers: Sequence[int] | None = None,
    residual_source: ResidualSource = ResidualSource.QUERY,
) -> QuadOutput:
    """Run the four streams on one source/target pair

    The source and target streams are plain self-attention. At layer ``l`` the
    source-to-target stream attends from its own layer ``l - 1`` tokens (the source
    tokens at ``l = 1``) to the target stream's layer ``l - 1`` tokens, and the
    target-to-source stream mirrors it. Noise is only injected in the two cross
    streams, at the layers listed in ``noise_layers`` (all when ``None``).

    :param BoundBackbone backbone: bound parameters
    :param npt.ArrayLike src_image: source image at the side of bank ``src_scale``
    :param int src_scale: positional bank of the source image
    :param npt.ArrayLike tgt_image: target image at the original resolution
    :param NoiseSpec | None noise: key/value perturbation of the cross streams
    :param np.random.Generator | None rng: generator for the noise
    :param Sequence[int] | None noise_layers: layers receiving noise
    :param ResidualSource residual_source: stream feeding the cross residuals
    :return: four CLS features, per-layer source/target tokens and cross maps
    """
    arch = backbone.arch
    zs = tokenize(src_image, backbone, src_scale)
    zt = tokenize(tgt_image, backbone, arch.base_scale_index)
    backbone.stats.stream_passes += 4

    s = s2t = zs.tokens
    t = t2s = zt.tokens
    layers_s, layers_t, cross = [], [], []
    for index in range(arch.depth):
        layer = backbone.layer(index)
        layer_noise = noise if noise_layers is None or index in noise_layers else None
        s_next, _ = _layer_step(layer, s, s, None, None, ResidualSource.QUERY)
        t_next, _ = _layer_step(layer, t, t, None, None, ResidualSource.QUERY)
        s2t, a_s2t = _layer_step(layer, s2t, t, layer_noise, rng, residual_source)
        t2s, a_t2s = _layer_step(layer, t2s, s, layer_noise, rng, residual_source)
        s, t = s_next, t_next
        layers_s.append(s)
        layers_t.append(t)
        cross += [a_s2t.weights, a_t2s.weights]

    quad = FeatureQuad(
        f_s=backbone.final_feature(s),
        f_s2t=backbone.final_feature(s2t),
        f_t2s=backbone.final_feature(t2s),
        f_t=backbone.final_feature(t),
    )
    return QuadOutput(quad, layers_s, layers_t, cross)


def query_divergence(
    backbone: BoundBackbone,
    src_image: npt.ArrayLike,
    tgt_image: npt.ArrayLike,
    residual_source: ResidualSource = ResidualSource.QUERY,
) -> float:
    """Attention divergence between the source stream and the source-to-target stream

    Both images must have the original resolution. After one layer, the next layer's
    attention over the source tokens is evaluated once with the source stream as
    queries and once with the source-to-target stream as queries.

    :return: mean per-token divergence
    """
    arch = backbone.arch
    base = arch.base_scale_index
    zs = tokenize(src_image, backbone, base).tokens
    zt = tokenize(tgt_image, backbone, base).tokens
    first = backbone.layer(0)
    s, _ = _layer_step(first, zs, zs, None, None, ResidualSource.QUERY)
    s2t, _ = _layer_step(first, zs, zt, None, None, residual_source)
    block = backbone.layer(min(1, arch.depth - 1))
    norm_s = layer_norm(s, block.norm_gain, block.norm_bias)
    norm_s2t = layer_norm(s2t, block.norm_gain, block.norm_bias)
    return float(attention_divergence(block.attn, norm_s, norm_s2t).mean())


def classify(
    g: Var | npt.ArrayLike, f: Var | npt.ArrayLike, bias: Var | npt.ArrayLike | None = None
) -> Var:
    """Linear logits ``f @ g`` (plus ``bias``) of a ``D x C`` classifier

    :raise DimensionError: if the feature width does not match ``g``
    """
    graph = owning_graph(g, f, bias)
    g, f = lift(g, graph), lift(f, graph)
    if g.ndim != 2 or f.ndim != 1 or f.shape[0] != g.shape[0]:
        err_msg = f"Feature of shape {f.shape} does not fit classifier of shape {g.shape}"
        raise DimensionError(err_msg)
    logits = f @ g
    return logits if bias is None else logits + lift(bias, graph)


class DacsmModel:
    """Parameter arrays plus the architecture they were built for"""

    def __init__(self, architecture: Architecture, params: Mapping[str, Tensor]) -> None:
        """Initialize model

        :param Architecture architecture: model shape
        :param Mapping[str, Tensor] params: arrays keyed by parameter path
        """
        self.architecture = architecture
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        self.stats = ForwardStats()

    @classmethod
    def initialize(cls, architecture: Architecture, seed: int) -> "DacsmModel":
        """Build a model with freshly drawn parameters"""
        return cls(architecture, init_params(architecture, np.random.default_rng(seed)))

    def copy(self) -> "DacsmModel":
        """Deep copy of the parameters"""
        return DacsmModel(self.architecture, self.params)

    def bind(self, graph: Graph | None = None, trainable: bool = True) -> BoundBackbone:
        """Register the parameters on a graph

        :param Graph | None graph: tape to use; a fresh one when ``None``
        :param bool trainable: leaves named by path when true, constants otherwise
        """
        graph = graph if graph is not None else Graph()
        nodes = {
            path: graph.leaf(value, path) if trainable else graph.constant(value)
            for path, value in self.params.items()
        }
        return BoundBackbone(self.architecture, graph, nodes, self.stats)

    def _infer(
        self, image: npt.ArrayLike, scale_index: int | None = None
    ) -> tuple[Var, Var, list[Var]]:
        backbone = self.bind(trainable=False)
        if scale_index is None:
            scale_index = self.architecture.base_scale_index
        tokens = tokenize(image, backbone, scale_index)
        feature, layers = run_stream(backbone, tokens)
        logits, _ = target_logits(backbone.head, feature, backbone.head_bias)
        return feature, logits, layers

    def embed(
        self, images: Sequence[npt.ArrayLike], scale_index: int | None = None
    ) -> Tensor:
        """Final CLS features of the self-attention stream, one row per image

        :param Sequence[npt.ArrayLike] images: images at the side of bank ``scale_index``
        :param int | None scale_index: positional bank; the original resolution when ``None``
        """
        return np.stack([self._infer(image, scale_index)[0].value for image in images])

    def logits(self, images: Sequence[npt.ArrayLike]) -> Tensor:
        """Max-over-sub-center logits at the original resolution"""
        return np.stack([self._infer(image)[1].value for image in images])

    def embed_and_logits(self, images: Sequence[npt.ArrayLike]) -> tuple[Tensor, Tensor]:
        """Features and logits from a single pass per image"""
        features, logits, _ = self.inspect(images)
        return features, logits

    def inspect(
        self, images: Sequence[npt.ArrayLike]
    ) -> tuple[Tensor, Tensor, list[Tensor]]:
        """Features, logits and per-layer CLS rows from a single pass per image

        :param Sequence[npt.ArrayLike] images: images at the original resolution
        :return: ``n x D`` features, ``n x C`` logits and one ``n x D`` matrix of CLS
            rows per layer
        """
        outputs = [self._infer(image) for image in images]
        depth = self.architecture.depth
        return (
            np.stack([f.value for f, _, _ in outputs]),
            np.stack([g.value for _, g, _ in outputs]),
            [np.stack([layers[i].value[0] for _, _, layers in outputs]) for i in range(depth)],
        )

    def predict(self, images: Sequence[npt.ArrayLike]) -> np.ndarray:
        """Predicted class per image"""
        return np.argmax(self.logits(images), axis=1)
