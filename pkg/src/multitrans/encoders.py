"""The two modality encoders: a BERT-style text encoder (word + segment +
position embeddings) and a ViT-style image encoder (patchify + linear
projection + CLS token), each returning its final-layer CLS hidden state.

Ablation variants are config flags: cross-layer parameter sharing for text,
windowed/shifted attention or an extra distillation-style token for images.
"""

import re
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import autograd as ag
from . import transformer as tf
from .autograd import Tensor

PAD_ID, UNK_ID, CLS_ID = 0, 1, 2
RESERVED_TOKENS = ["<pad>", "<unk>", "<cls>"]

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@dataclass
class TextEncoderConfig:
    vocab_size: int = 512
    max_seq_len: int = 32
    num_segments: int = 2
    dim: int = 64
    depth: int = 2
    heads: int = 4
    expansion: int = 4
    share_block_params: bool = False
    activation: str = "gelu"
    bias: bool = True

    def __post_init__(self):
        if self.max_seq_len < 2:
            raise ValueError("max_seq_len must be at least 2")
        if max(PAD_ID, UNK_ID, CLS_ID) >= self.vocab_size:
            raise ValueError("vocab too small for the reserved special ids")


@dataclass
class ImageEncoderConfig:
    height: int = 32
    width: int = 32
    channels: int = 1
    patch_size: int = 8
    dim: int = 64
    depth: int = 2
    heads: int = 4
    expansion: int = 4
    variant: str = "standard"  # standard | windowed | distill_token
    window_size: int = 4
    activation: str = "gelu"
    bias: bool = True

    def __post_init__(self):
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ValueError(
                f"image {self.height}x{self.width} not divisible by patch {self.patch_size}"
            )
        if self.variant not in ("standard", "windowed", "distill_token"):
            raise ValueError(f"unknown image variant {self.variant!r}")

    @property
    def num_patches(self):
        return (self.height // self.patch_size) * (self.width // self.patch_size)

    @property
    def patch_dim(self):
        return self.patch_size * self.patch_size * self.channels


@dataclass
class TextEncoderParams:
    word: Tensor
    segment: Tensor
    position: Tensor
    cls_vec: Tensor  # (1, d)
    blocks: List[tf.TransformerBlockParams]  # length 1 when params are shared


@dataclass
class ImageEncoderParams:
    patch_proj: tf.LinearParams
    position: Tensor
    cls_vec: Tensor
    blocks: List[tf.TransformerBlockParams]
    distill_vec: Optional[Tensor] = None


class Vocab:
    """Line-per-token vocabulary; the first three ids are pad/unk/cls."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[:3] != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with <pad>, <unk>, <cls>")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.tokens:
                fh.write(t + "\n")


def tokenize(text: str, vocab: Vocab, max_seq_len: int) -> List[int]:
    """Lowercase, split on word/punctuation boundaries, map unknowns to unk."""
    words = _TOKEN_RE.findall(text.lower())
    ids = [vocab.index.get(w, UNK_ID) for w in words]
    return ids[: max_seq_len - 1]


def _table(rng, rows, dim, dtype):
    return Tensor(rng.normal(0.0, tf.INIT_STD, size=(rows, dim)), requires_grad=True, dtype=dtype)


def init_text_encoder(cfg: TextEncoderConfig, rng, dtype=np.float32) -> TextEncoderParams:
    n_blocks = 1 if cfg.share_block_params else cfg.depth
    return TextEncoderParams(
        word=_table(rng, cfg.vocab_size, cfg.dim, dtype),
        segment=_table(rng, cfg.num_segments, cfg.dim, dtype),
        position=_table(rng, cfg.max_seq_len, cfg.dim, dtype),
        cls_vec=_table(rng, 1, cfg.dim, dtype),
        blocks=[
            tf.init_block(rng, cfg.dim, cfg.heads, cfg.expansion, cfg.activation, cfg.bias, dtype)
            for _ in range(n_blocks)
        ],
    )


def init_image_encoder(cfg: ImageEncoderConfig, rng, dtype=np.float32) -> ImageEncoderParams:
    seq_len = 1 + cfg.num_patches + (1 if cfg.variant == "distill_token" else 0)
    return ImageEncoderParams(
        patch_proj=tf.init_linear(rng, cfg.patch_dim, cfg.dim, bias=cfg.bias, dtype=dtype),
        position=_table(rng, seq_len, cfg.dim, dtype),
        cls_vec=_table(rng, 1, cfg.dim, dtype),
        distill_vec=_table(rng, 1, cfg.dim, dtype) if cfg.variant == "distill_token" else None,
        blocks=[
            tf.init_block(rng, cfg.dim, cfg.heads, cfg.expansion, cfg.activation, cfg.bias, dtype)
            for _ in range(cfg.depth)
        ],
    )


def _block_for(blocks, i):
    return blocks[0] if len(blocks) == 1 else blocks[i]


def embed_text(token_ids, segment_ids, cfg: TextEncoderConfig, params: TextEncoderParams) -> Tensor:
    """CLS row plus one row per token: word + segment + position sums."""
    token_ids = list(token_ids)
    segment_ids = list(segment_ids)
    if len(token_ids) != len(segment_ids):
        raise ag.ShapeError("token and segment id sequences must have equal length")
    if len(token_ids) > cfg.max_seq_len - 1:
        raise ag.ShapeError(
            f"sequence of {len(token_ids)} tokens exceeds max_seq_len {cfg.max_seq_len}"
        )
    for s in segment_ids:
        if not 0 <= s < cfg.num_segments:
            raise IndexError(f"segment id {s} out of range")
    if token_ids:
        tok = ag.embedding_lookup(params.word, token_ids)
        x = ag.concat([params.cls_vec, tok], axis=0)
    else:
        x = params.cls_vec
    seg = ag.embedding_lookup(params.segment, [0] + segment_ids)
    pos = ag.slice_(params.position, 0, 1 + len(token_ids), axis=0)
    return ag.add(ag.add(x, seg), pos)


def encode_text(
    token_ids,
    segment_ids,
    cfg: TextEncoderConfig,
    params: TextEncoderParams,
    attn_sink=None,
) -> Tensor:
    """Embed, run the block stack with global attention, return the CLS state."""
    x = embed_text(token_ids, segment_ids, cfg, params)
    for i in range(cfg.depth):
        x = tf.transformer_block(x, _block_for(params.blocks, i), attn_sink=attn_sink)
    return ag.reshape(ag.slice_(x, 0, 1, axis=0), (cfg.dim,))


def patchify(image: Tensor, patch_size: int) -> Tensor:
    """Split (H, W, C) into non-overlapping flattened patches, row-major,
    channel-fastest within each patch."""
    if image.data.ndim != 3:
        raise ag.ShapeError(f"patchify: expected (H, W, C), got {image.shape}")
    h, w, c = image.shape
    p = patch_size
    if h % p or w % p:
        raise ag.ShapeError(f"patchify: {h}x{w} not divisible by {p}")
    arr = image.data.reshape(h // p, p, w // p, p, c).transpose(0, 2, 1, 3, 4)
    out = np.ascontiguousarray(arr.reshape((h // p) * (w // p), p * p * c))
    return Tensor(out, dtype=image.dtype)


def _image_windows(cfg: ImageEncoderConfig, block_index: int):
    if cfg.variant != "windowed":
        return None
    # alternate unshifted / half-shifted windows across depth (Swin-style)
    shift = 0 if block_index % 2 == 0 else cfg.window_size // 2
    return tf.WindowSpec(cfg.window_size, shift)


def encode_image(
    image: Tensor,
    cfg: ImageEncoderConfig,
    params: ImageEncoderParams,
    attn_sink=None,
) -> Tensor:
    """Patchify, project, prepend CLS (+ distillation token), add positions,
    run the block stack, return the CLS hidden state."""
    if image.shape != (cfg.height, cfg.width, cfg.channels):
        raise ag.ShapeError(
            f"image {image.shape} does not match config "
            f"({cfg.height}, {cfg.width}, {cfg.channels})"
        )
    patches = tf.linear(patchify(image, cfg.patch_size), params.patch_proj)
    prefix = [params.cls_vec]
    if params.distill_vec is not None:
        prefix.append(params.distill_vec)
    x = ag.concat(prefix + [patches], axis=0)
    x = ag.add(x, params.position)
    n_extra = len(prefix)
    for i in range(cfg.depth):
        win = _image_windows(cfg, i)
        if win is not None and n_extra == 2:
            raise ag.ShapeError("windowed attention and distill token cannot combine")
        x = tf.transformer_block(x, params.blocks[i], window=win, attn_sink=attn_sink)
    return ag.reshape(ag.slice_(x, 0, 1, axis=0), (cfg.dim,))
