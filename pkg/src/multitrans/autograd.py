"""Minimal dense-tensor library with reverse-mode automatic differentiation.

A global :class:`Tape` records every differentiable operation in execution
order (a valid topological order by construction); :func:`backward` replays
it in exact reverse to accumulate gradients. Arrays are numpy, float32 by
default; gradient checks run the same graph in float64.

Broadcasting is deliberately restricted to full-shape and
row-vector-over-rows — the model never needs more.
"""

import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import kernels

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    pass


_node_ids = itertools.count()


class Tensor:
    """Shape-carrying buffer of reals with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "node_id")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.node_id = next(_node_ids)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


@dataclass
class _Record:
    output: Tensor
    inputs: tuple
    backward: object  # callable(grad_out) -> sequence of per-input grads


@dataclass
class Tape:
    records: list = field(default_factory=list)
    recording: bool = True

    def clear(self):
        self.records.clear()


TAPE = Tape()


@contextmanager
def no_grad():
    """Disable recording; outputs created inside never require grad."""
    prev = TAPE.recording
    TAPE.recording = False
    try:
        yield
    finally:
        TAPE.recording = prev


def _make(out_data, inputs, backward_fn):
    rg = TAPE.recording and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=rg, dtype=out_data.dtype)
    if rg:
        TAPE.records.append(_Record(out, tuple(inputs), backward_fn))
    return out


# ---------------------------------------------------------------------------
# linear algebra and elementwise ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), bwd)


def _broadcast_check(a, b, opname):
    if a.shape == b.shape:
        return "full"
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return "row"
    raise ShapeError(f"{opname}: incompatible shapes {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    mode = _broadcast_check(a, b, "add")
    out = a.data + b.data

    def bwd(g):
        gb = g if mode == "full" else g.sum(axis=0)
        return g, gb

    return _make(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    mode = _broadcast_check(a, b, "mul")
    out = a.data * b.data

    def bwd(g):
        ga = g * b.data
        gb = g * a.data if mode == "full" else (g * a.data).sum(axis=0)
        return ga, gb

    return _make(out, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    out = a.data * a.data.dtype.type(c)

    def bwd(g):
        return (g * a.data.dtype.type(c),)

    return _make(out, (a,), bwd)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def bwd(g):
        return (g * (x.data > 0),)

    return _make(out, (x,), bwd)


def gelu(x: Tensor) -> Tensor:
    out = kernels.gelu_forward(x.data)

    def bwd(g):
        return (kernels.gelu_backward(x.data, g),)

    return _make(out, (x,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.data.ndim not in (1, 2):
        raise ShapeError(f"softmax: expected 1-d or 2-d input, got {x.shape}")
    nd = x.data.ndim
    ax = axis if axis >= 0 else nd + axis
    if ax < 0 or ax >= nd:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise FloatingPointError("softmax: non-finite input")

    if nd == 1:
        out2 = kernels.softmax_rows(x.data[None, :])
        out = out2[0]

        def bwd(g):
            return (kernels.softmax_rows_backward(out2, g[None, :])[0],)

    elif ax == 1:
        out = kernels.softmax_rows(x.data)

        def bwd(g):
            return (kernels.softmax_rows_backward(out, g),)

    else:  # axis 0 of a 2-d array: run on the transpose
        outT = kernels.softmax_rows(np.ascontiguousarray(x.data.T))
        out = outT.T

        def bwd(g):
            return (kernels.softmax_rows_backward(outT, np.ascontiguousarray(g.T)).T,)

    return _make(np.ascontiguousarray(out), (x,), bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    if x.data.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(
            f"layer_norm: x {x.shape} needs 1-d gamma/beta of length {x.shape[-1]}, "
            f"got {gamma.shape} / {beta.shape}"
        )
    out, xhat, inv_std = kernels.layer_norm_forward(x.data, gamma.data, beta.data, eps)

    def bwd(g):
        return kernels.layer_norm_backward(g, xhat, inv_std, gamma.data)

    return _make(out, (x, gamma, beta), bwd)


# ---------------------------------------------------------------------------
# reductions and shape ops


def reduce_sum(x: Tensor) -> Tensor:
    out = x.data.sum(dtype=x.data.dtype)

    def bwd(g):
        return (np.full_like(x.data, g),)

    return _make(np.asarray(out), (x,), bwd)


def reduce_mean(x: Tensor) -> Tensor:
    n = x.data.size
    out = x.data.mean(dtype=x.data.dtype)

    def bwd(g):
        return (np.full_like(x.data, g / n),)

    return _make(np.asarray(out), (x,), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    out = x.data.reshape(shape)

    def bwd(g):
        return (g.reshape(x.data.shape),)

    return _make(out, (x,), bwd)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-d input, got {x.shape}")
    out = np.ascontiguousarray(x.data.T)

    def bwd(g):
        return (np.ascontiguousarray(g.T),)

    return _make(out, (x,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(
            np.ascontiguousarray(np.take(g, range(offsets[i], offsets[i + 1]), axis=axis))
            for i in range(len(tensors))
        )

    return _make(out, tuple(tensors), bwd)


def slice_(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    if axis not in (0, 1) or axis >= x.data.ndim:
        raise ShapeError(f"slice: axis {axis} invalid for shape {x.shape}")
    idx = (slice(start, stop),) if axis == 0 else (slice(None), slice(start, stop))
    out = np.ascontiguousarray(x.data[idx])

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return (gx,)

    return _make(out, (x,), bwd)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = list(ids)
    v = table.shape[0]
    for i in ids:
        if not 0 <= i < v:
            raise IndexError(f"embedding_lookup: id {i} out of range for table of {v} rows")
    idx = np.asarray(ids, dtype=np.int64)
    out = table.data[idx].copy()

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _make(out, (table,), bwd)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; rate 0 is the identity. Off during eval/grad checks."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    s = x.data.dtype.type(1.0 / (1.0 - rate))
    out = x.data * keep * s

    def bwd(g):
        return (g * keep * s,)

    return _make(out, (x,), bwd)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-softmax of the true class, fused log-sum-exp."""
    labels = list(labels)
    if logits.data.ndim != 2 or len(labels) != logits.shape[0]:
        raise ShapeError(
            f"cross_entropy: logits {logits.shape} vs {len(labels)} labels"
        )
    n, c = logits.shape
    for y in labels:
        if not 0 <= y < c:
            raise IndexError(f"cross_entropy: label {y} out of range for {c} classes")
    idx = np.asarray(labels, dtype=np.int64)
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    out = np.asarray((lse - z[np.arange(n), idx]).mean(), dtype=z.dtype)

    def bwd(g):
        p = kernels.softmax_rows(z)
        p[np.arange(n), idx] -= 1.0
        return ((g / n) * p,)

    return _make(out, (logits,), bwd)


# ---------------------------------------------------------------------------
# backward pass and gradient checking


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from loss."""
    if loss.data.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    for rec in reversed(TAPE.records):
        g = rec.output.grad
        if g is None:
            continue
        grads = rec.backward(g)
        for t, gi in zip(rec.inputs, grads):
            if gi is None or not t.requires_grad:
                continue
            t.grad = gi.copy() if t.grad is None else t.grad + gi


@dataclass
class GradCheckReport:
    """Per-coordinate comparison of autodiff vs central finite differences."""

    analytic: np.ndarray
    numeric: np.ndarray
    rel_err: np.ndarray
    max_rel_err: float
    tol: float

    @property
    def passed(self):
        return bool(self.max_rel_err < self.tol)

    @property
    def failed_coords(self):
        return int((self.rel_err >= self.tol).sum())


def grad_check(f, x: Tensor, step: float = 1e-3, tol: float = 1e-4) -> GradCheckReport:
    """Check autodiff gradients of scalar-valued f at x in float64.

    f must be deterministic (dropout off); it is re-evaluated 2 times per
    coordinate for central differences.
    """
    x64 = Tensor(x.data.astype(np.float64), requires_grad=True)
    saved = TAPE.records[:]
    TAPE.records = []
    try:
        loss = f(x64)
        backward(loss)
        analytic = x64.grad.copy() if x64.grad is not None else np.zeros_like(x64.data)
    finally:
        TAPE.records = saved

    flat = x64.data.reshape(-1)
    numeric = np.zeros_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = f(x64).item()
            flat[i] = orig - step
            fm = f(x64).item()
            flat[i] = orig
            numeric[i] = (fp - fm) / (2 * step)
    numeric = numeric.reshape(x64.data.shape)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    # absolute agreement at tiny magnitudes counts as a pass
    rel[np.abs(analytic - numeric) < 1e-9] = 0.0
    return GradCheckReport(analytic, numeric, rel, float(rel.max()), tol)
