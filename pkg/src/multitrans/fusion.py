"""The fusion head: splice the two modality CLS representations into a
two-token sequence, mix them with one self-attention pass, flatten, and
classify with a linear + softmax layer. Unimodal modes bypass fusion with a
dedicated linear head on the single encoder output.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autograd as ag
from . import encoders as enc
from . import transformer as tf
from .autograd import Tensor

MODES = ("multimodal", "text_only", "image_only")
NUM_CLASSES = 2


@dataclass
class FusionConfig:
    heads: int = 4
    hidden_dim: int = 0  # 0 = no hidden layer in the classifier
    bias: bool = True


@dataclass
class FusionParams:
    attn: tf.AttentionParams
    hidden: Optional[tf.LinearParams]
    out: tf.LinearParams


@dataclass
class ModelConfig:
    dim: int = 64
    text: Optional[enc.TextEncoderConfig] = None
    image: Optional[enc.ImageEncoderConfig] = None
    fusion: FusionConfig = None

    def __post_init__(self):
        if self.fusion is None:
            self.fusion = FusionConfig()
        for sub in (self.text, self.image):
            if sub is not None and sub.dim != self.dim:
                raise ValueError("encoder dim must match the shared model dim")


def splice(text_cls: Tensor, image_cls: Tensor) -> Tensor:
    """Stack the two modality vectors as a (2, d) sequence, text first."""
    if text_cls.shape != image_cls.shape or text_cls.data.ndim != 1:
        raise ag.ShapeError(
            f"splice: need equal 1-d vectors, got {text_cls.shape} and {image_cls.shape}"
        )
    d = text_cls.shape[0]
    return ag.concat(
        [ag.reshape(text_cls, (1, d)), ag.reshape(image_cls, (1, d))], axis=0
    )


def fuse(seq: Tensor, p: FusionParams, attn_sink=None) -> Tensor:
    """One self-attention pass over the modality tokens; shape-preserving."""
    return tf.multi_head_self_attention(seq, p.attn, attn_sink=attn_sink)


def classify_logits(fused: Tensor, p: FusionParams) -> Tensor:
    flat = ag.reshape(fused, (1, fused.data.size))
    if p.hidden is not None:
        flat = ag.gelu(tf.linear(flat, p.hidden))
    return tf.linear(flat, p.out)


def classify(fused: Tensor, p: FusionParams) -> Tensor:
    """Probability pair (P(good), P(poor)); rows sum to 1."""
    logits = classify_logits(fused, p)
    return ag.reshape(ag.softmax(logits, axis=1), (NUM_CLASSES,))


@dataclass
class MultitransModel:
    """A built model: configuration, mode, and exactly the parameters the
    mode needs (unimodal models carry no trace of the other encoder)."""

    config: ModelConfig
    mode: str
    text_params: Optional[enc.TextEncoderParams] = None
    image_params: Optional[enc.ImageEncoderParams] = None
    fusion_params: Optional[FusionParams] = None
    unimodal_head: Optional[tf.LinearParams] = None

    def named_parameters(self):
        out = {}
        for group, obj in (
            ("text", self.text_params),
            ("image", self.image_params),
            ("fusion", self.fusion_params),
            ("head", self.unimodal_head),
        ):
            if obj is not None:
                out.update(dict(tf.named_tensors(obj, group)))
        return out

    def forward_logits(self, sample, attn_sink=None) -> Tensor:
        """(1, 2) class logits for one sample."""
        if self.mode == "multimodal":
            t = enc.encode_text(
                sample.tokens, sample.segments, self.config.text, self.text_params,
                attn_sink=attn_sink,
            )
            im = enc.encode_image(
                sample.image, self.config.image, self.image_params, attn_sink=attn_sink
            )
            fused = fuse(splice(t, im), self.fusion_params, attn_sink=attn_sink)
            return classify_logits(fused, self.fusion_params)
        if self.mode == "text_only":
            if sample.tokens is None:
                raise ValueError("text_only mode needs the text modality")
            t = enc.encode_text(
                sample.tokens, sample.segments, self.config.text, self.text_params,
                attn_sink=attn_sink,
            )
            return tf.linear(ag.reshape(t, (1, self.config.dim)), self.unimodal_head)
        if self.mode == "image_only":
            if sample.image is None:
                raise ValueError("image_only mode needs the image modality")
            im = enc.encode_image(
                sample.image, self.config.image, self.image_params, attn_sink=attn_sink
            )
            return tf.linear(ag.reshape(im, (1, self.config.dim)), self.unimodal_head)
        raise ValueError(f"unknown mode {self.mode!r}")

    def forward(self, sample, attn_sink=None) -> Tensor:
        """Probability pair (P(good), P(poor)) for one sample."""
        logits = self.forward_logits(sample, attn_sink=attn_sink)
        return ag.reshape(ag.softmax(logits, axis=1), (NUM_CLASSES,))


def build_model(cfg: ModelConfig, mode: str, rng, dtype=np.float32) -> MultitransModel:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    model = MultitransModel(config=cfg, mode=mode)
    if mode in ("multimodal", "text_only"):
        if cfg.text is None:
            raise ValueError("model config has no text encoder")
        model.text_params = enc.init_text_encoder(cfg.text, rng, dtype)
    if mode in ("multimodal", "image_only"):
        if cfg.image is None:
            raise ValueError("model config has no image encoder")
        model.image_params = enc.init_image_encoder(cfg.image, rng, dtype)
    if mode == "multimodal":
        model.fusion_params = FusionParams(
            attn=tf.init_attention(rng, cfg.dim, cfg.fusion.heads, bias=cfg.fusion.bias, dtype=dtype),
            hidden=(
                tf.init_linear(rng, 2 * cfg.dim, cfg.fusion.hidden_dim, bias=cfg.fusion.bias, dtype=dtype)
                if cfg.fusion.hidden_dim
                else None
            ),
            out=tf.init_linear(
                rng,
                cfg.fusion.hidden_dim if cfg.fusion.hidden_dim else 2 * cfg.dim,
                NUM_CLASSES,
                bias=cfg.fusion.bias,
                dtype=dtype,
            ),
        )
    else:
        model.unimodal_head = tf.init_linear(rng, cfg.dim, NUM_CLASSES, bias=True, dtype=dtype)
    return model
