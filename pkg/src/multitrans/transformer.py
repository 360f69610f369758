"""Encoder building blocks: linear layers, multi-head self-attention (global
and windowed/shifted), and the pre-norm transformer block.

All functions are stateless given their parameter containers; parameters are
plain dataclasses of Tensors so they can be enumerated generically for the
optimizer and the checkpoint writer.
"""

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor

INIT_STD = 0.02
MASK_NEG = -1e9


def named_tensors(obj, prefix=""):
    """Yield (name, Tensor) for every Tensor reachable in a params dataclass."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            sub = f"{prefix}.{f.name}" if prefix else f.name
            yield from named_tensors(v, sub)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            yield from named_tensors(v, f"{prefix}.{i}")
    # scalars / strings / None carry no parameters


@dataclass
class LinearParams:
    w: Tensor
    b: Optional[Tensor] = None


@dataclass
class NormParams:
    gamma: Tensor
    beta: Tensor


@dataclass
class AttentionParams:
    dim: int
    heads: int
    q: LinearParams
    k: LinearParams
    v: LinearParams
    o: LinearParams

    @property
    def head_dim(self):
        return self.dim // self.heads


@dataclass
class MlpParams:
    fc1: LinearParams
    fc2: LinearParams
    activation: str = "gelu"


@dataclass
class TransformerBlockParams:
    norm1: NormParams
    attn: AttentionParams
    norm2: NormParams
    mlp: MlpParams


@dataclass(frozen=True)
class WindowSpec:
    """Window partition over the non-CLS tokens; shift is 0 or half a window."""

    window_size: int
    shift: int = 0

    def __post_init__(self):
        if self.shift not in (0, self.window_size // 2):
            raise ValueError(
                f"shift must be 0 or {self.window_size // 2}, got {self.shift}"
            )


def init_linear(rng, d_in, d_out, bias=True, dtype=np.float32):
    w = Tensor(rng.normal(0.0, INIT_STD, size=(d_in, d_out)), requires_grad=True, dtype=dtype)
    b = Tensor(np.zeros(d_out), requires_grad=True, dtype=dtype) if bias else None
    return LinearParams(w, b)


def init_norm(d, dtype=np.float32):
    return NormParams(
        Tensor(np.ones(d), requires_grad=True, dtype=dtype),
        Tensor(np.zeros(d), requires_grad=True, dtype=dtype),
    )


def init_attention(rng, dim, heads, bias=True, dtype=np.float32):
    if dim % heads != 0:
        raise ValueError(f"dim {dim} not divisible by heads {heads}")
    mk = lambda: init_linear(rng, dim, dim, bias=bias, dtype=dtype)
    return AttentionParams(dim, heads, mk(), mk(), mk(), mk())


def init_block(rng, dim, heads, expansion=4, activation="gelu", bias=True, dtype=np.float32):
    d_ff = expansion * dim
    return TransformerBlockParams(
        norm1=init_norm(dim, dtype),
        attn=init_attention(rng, dim, heads, bias=bias, dtype=dtype),
        norm2=init_norm(dim, dtype),
        mlp=MlpParams(
            init_linear(rng, dim, d_ff, bias=bias, dtype=dtype),
            init_linear(rng, d_ff, dim, bias=bias, dtype=dtype),
            activation,
        ),
    )


def linear(x: Tensor, p: LinearParams) -> Tensor:
    y = ag.matmul(x, p.w)
    if p.b is not None:
        y = ag.add(y, p.b)
    return y


def window_mask(seq_len: int, spec: WindowSpec, cls_present: bool = True) -> np.ndarray:
    """Boolean (L, L) mask of allowed attention pairs.

    Non-CLS tokens attend within their (cyclically shifted) window; the CLS
    token attends to and is attended by everything.
    """
    n = seq_len - 1 if cls_present else seq_len
    w, s = spec.window_size, spec.shift
    if n % w != 0:
        raise ag.ShapeError(f"window size {w} does not divide {n} tokens")
    wid = ((np.arange(n) + s) % n) // w
    allowed = wid[:, None] == wid[None, :]
    if not cls_present:
        return allowed
    full = np.zeros((seq_len, seq_len), dtype=bool)
    full[0, :] = True
    full[:, 0] = True
    full[1:, 1:] = allowed
    return full


def multi_head_self_attention(
    x: Tensor,
    p: AttentionParams,
    mask: Optional[np.ndarray] = None,
    attn_sink: Optional[list] = None,
) -> Tensor:
    """Scaled dot-product attention, heads concatenated then projected.

    mask is a boolean (L, L) array of allowed pairs; disallowed scores get a
    large negative additive bias. attn_sink, when given, collects each head's
    post-softmax attention matrix (numpy) for inspection.
    """
    if x.data.ndim != 2 or x.shape[1] != p.dim:
        raise ag.ShapeError(f"attention: input {x.shape} vs model dim {p.dim}")
    seq_len = x.shape[0]
    if mask is not None and mask.all():
        mask = None  # degenerate mask: identical to global attention
    bias = None
    if mask is not None:
        bias = Tensor(np.where(mask, 0.0, MASK_NEG), dtype=x.dtype)

    q = linear(x, p.q)
    k = linear(x, p.k)
    v = linear(x, p.v)
    dh = p.head_dim
    scale = 1.0 / math.sqrt(dh)
    head_outs = []
    for h in range(p.heads):
        qh = ag.slice_(q, h * dh, (h + 1) * dh, axis=1)
        kh = ag.slice_(k, h * dh, (h + 1) * dh, axis=1)
        vh = ag.slice_(v, h * dh, (h + 1) * dh, axis=1)
        scores = ag.scale(ag.matmul(qh, ag.transpose(kh)), scale)
        if bias is not None:
            scores = ag.add(scores, bias)
        attn = ag.softmax(scores, axis=1)
        if attn_sink is not None:
            attn_sink.append(attn.data.copy())
        head_outs.append(ag.matmul(attn, vh))
    merged = head_outs[0] if p.heads == 1 else ag.concat(head_outs, axis=1)
    return linear(merged, p.o)


def windowed_self_attention(
    x: Tensor,
    p: AttentionParams,
    spec: WindowSpec,
    cls_present: bool = True,
    attn_sink: Optional[list] = None,
) -> Tensor:
    mask = window_mask(x.shape[0], spec, cls_present=cls_present)
    return multi_head_self_attention(x, p, mask=mask, attn_sink=attn_sink)


def transformer_block(
    x: Tensor,
    p: TransformerBlockParams,
    window: Optional[WindowSpec] = None,
    attn_sink: Optional[list] = None,
) -> Tensor:
    """Pre-norm residual block: x + Attn(LN(x)), then y + MLP(LN(y))."""
    h = ag.layer_norm(x, p.norm1.gamma, p.norm1.beta)
    if window is None:
        a = multi_head_self_attention(h, p.attn, attn_sink=attn_sink)
    else:
        a = windowed_self_attention(h, p.attn, window, attn_sink=attn_sink)
    y = ag.add(x, a)
    h2 = ag.layer_norm(y, p.norm2.gamma, p.norm2.beta)
    act = ag.gelu if p.mlp.activation == "gelu" else ag.relu
    m = linear(act(linear(h2, p.mlp.fc1)), p.mlp.fc2)
    return ag.add(y, m)
