"""Finite-difference verification suite.

Every differentiable op is checked against central differences in float64 on
several seeded shapes, and one full multimodal forward/backward is checked
parameter by parameter on a micro-sized model. The CLI `grad-check` command
and the acceptance tests both run through here.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from . import autograd as ag
from . import encoders as enc
from . import fusion
from . import transformer as tf
from .autograd import Tensor


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tol: float

    @property
    def passed(self):
        return self.max_rel_err < self.tol


def _w(rng, shape):
    # fixed random weighting to turn any output into a scalar loss
    return Tensor(rng.normal(size=shape), dtype=np.float64)


def _wsum(t, w):
    return ag.reduce_sum(ag.mul(t, w))


def _faulty_gelu(x):
    out = ag.gelu(x)

    def bwd(g):
        return (1.05 * g,)  # deliberately wrong backward rule (negative control)

    return ag._make(out.data, (x,), bwd)


def op_checks(seed=0, inject_fault=False):
    """Yield (name, f, x) triples; f maps a float64 Tensor to a scalar Tensor."""
    rng = np.random.default_rng(seed)

    def t(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)

    checks = []
    for m, k, n in [(3, 4, 2), (1, 5, 1), (6, 3, 6)]:
        b = t(k, n)
        w = _w(rng, (m, n))
        checks.append((f"matmul.a[{m}x{k}x{n}]", lambda x, b=b, w=w: _wsum(ag.matmul(x, b), w), t(m, k)))
        a = t(m, k)
        checks.append((f"matmul.b[{m}x{k}x{n}]", lambda x, a=a, w=w: _wsum(ag.matmul(a, x), w), t(k, n)))
    for shape in [(3, 4), (1, 6), (5, 5)]:
        w = _w(rng, shape)
        row = t(shape[1])
        checks.append((f"add.full{shape}", lambda x, o=t(*shape), w=w: _wsum(ag.add(x, o), w), t(*shape)))
        checks.append((f"add.row{shape}", lambda x, o=t(*shape), w=w: _wsum(ag.add(o, x), w), t(shape[1])))
        checks.append((f"mul.full{shape}", lambda x, o=t(*shape), w=w: _wsum(ag.mul(x, o), w), t(*shape)))
        checks.append((f"mul.row{shape}", lambda x, o=t(*shape), w=w: _wsum(ag.mul(o, x), w), t(shape[1])))
        checks.append((f"scale{shape}", lambda x, w=w: _wsum(ag.scale(x, 1.7), w), t(*shape)))
        checks.append((f"gelu{shape}", lambda x, w=w: _wsum(ag.gelu(x), w), t(*shape)))
        # keep relu inputs away from the kink, where FD is undefined
        xr = Tensor(rng.normal(size=shape) + np.where(rng.random(shape) < 0.5, -0.5, 0.5),
                    requires_grad=True, dtype=np.float64)
        checks.append((f"relu{shape}", lambda x, w=w: _wsum(ag.relu(x), w), xr))
        checks.append((f"softmax.ax1{shape}", lambda x, w=w: _wsum(ag.softmax(x, axis=1), w), t(*shape)))
        checks.append((f"softmax.ax0{shape}", lambda x, w=w: _wsum(ag.softmax(x, axis=0), w), t(*shape)))
        g, bta = t(shape[1]), t(shape[1])
        checks.append((f"layer_norm.x{shape}", lambda x, g=g, b=bta, w=w: _wsum(ag.layer_norm(x, g, b), w), t(*shape)))
        xs = t(*shape)
        checks.append((f"layer_norm.gamma{shape}", lambda x, xs=xs, b=bta, w=w: _wsum(ag.layer_norm(xs, x, b), w), t(shape[1])))
        checks.append((f"layer_norm.beta{shape}", lambda x, xs=xs, g=g, w=w: _wsum(ag.layer_norm(xs, g, x), w), t(shape[1])))
        checks.append((f"reduce_sum{shape}", lambda x: ag.reduce_sum(x), t(*shape)))
        checks.append((f"reduce_mean{shape}", lambda x: ag.reduce_mean(x), t(*shape)))
        checks.append((f"transpose{shape}", lambda x, w=w: _wsum(ag.transpose(x), Tensor(w.data.T.copy())), t(*shape)))
        checks.append((f"reshape{shape}", lambda x, s=shape, w=w: _wsum(ag.reshape(x, (s[0] * s[1],)),
                                                                        Tensor(w.data.reshape(-1).copy())), t(*shape)))
    for rows, cols in [(2, 3), (4, 2), (3, 5)]:
        w2 = _w(rng, (2 * rows, cols))
        checks.append((f"concat.ax0[{rows}x{cols}]",
                       lambda x, o=t(rows, cols), w=w2: _wsum(ag.concat([x, o], axis=0), w), t(rows, cols)))
        w3 = _w(rng, (rows, 2 * cols))
        checks.append((f"concat.ax1[{rows}x{cols}]",
                       lambda x, o=t(rows, cols), w=w3: _wsum(ag.concat([o, x], axis=1), w), t(rows, cols)))
        w4 = _w(rng, (1, cols))
        checks.append((f"slice.rows[{rows}x{cols}]",
                       lambda x, w=w4: _wsum(ag.slice_(x, 0, 1, axis=0), w), t(rows, cols)))
        w5 = _w(rng, (rows, 1))
        checks.append((f"slice.cols[{rows}x{cols}]",
                       lambda x, c=cols, w=w5: _wsum(ag.slice_(x, c - 1, c, axis=1), w), t(rows, cols)))
    for v, d, ids in [(5, 3, [0, 3, 3]), (4, 2, [1]), (6, 4, [5, 0, 2, 2])]:
        w6 = _w(rng, (len(ids), d))
        checks.append((f"embedding[{v}x{d}]",
                       lambda x, ids=ids, w=w6: _wsum(ag.embedding_lookup(x, ids), w), t(v, d)))
    for n, c in [(4, 2), (1, 3), (5, 5)]:
        labels = list(rng.integers(0, c, size=n))
        checks.append((f"cross_entropy[{n}x{c}]",
                       lambda x, labels=labels: ag.cross_entropy(x, labels), t(n, c)))
    # composite blocks
    for L, d, h in [(3, 4, 2), (5, 6, 3), (4, 8, 4)]:
        p = tf.init_attention(rng, d, h, dtype=np.float64)
        w7 = _w(rng, (L, d))
        checks.append((f"mhsa[{L}x{d}h{h}]",
                       lambda x, p=p, w=w7: _wsum(tf.multi_head_self_attention(x, p), w), t(L, d)))
    for L, d, h, win in [(5, 4, 2, 2), (9, 6, 2, 4), (5, 8, 4, 2)]:
        p = tf.init_attention(rng, d, h, dtype=np.float64)
        spec = tf.WindowSpec(win, win // 2)
        w8 = _w(rng, (L, d))
        checks.append((f"windowed_mhsa[{L}x{d}w{win}]",
                       lambda x, p=p, s=spec, w=w8: _wsum(tf.windowed_self_attention(x, p, s), w), t(L, d)))
    for L, d, h in [(3, 4, 2), (4, 6, 2), (5, 8, 4)]:
        p = tf.init_block(rng, d, h, expansion=2, dtype=np.float64)
        w9 = _w(rng, (L, d))
        checks.append((f"block[{L}x{d}h{h}]",
                       lambda x, p=p, w=w9: _wsum(tf.transformer_block(x, p), w), t(L, d)))
    if inject_fault:
        w10 = _w(rng, (3, 3))
        checks.append(("faulty_gelu[negative-control]",
                       lambda x, w=w10: _wsum(_faulty_gelu(x), w), t(3, 3)))
    return checks


def run_op_checks(seed=0, step=1e-3, tol=1e-4, inject_fault=False) -> List[CheckResult]:
    results = []
    for name, f, x in op_checks(seed, inject_fault):
        rep = ag.grad_check(f, x, step=step, tol=tol)
        results.append(CheckResult(name, rep.max_rel_err, tol))
    return results


def micro_model_config() -> fusion.ModelConfig:
    """Smallest config that exercises every mechanism; sized so that full
    finite differences over all parameters stay fast."""
    return fusion.ModelConfig(
        dim=8,
        text=enc.TextEncoderConfig(vocab_size=16, max_seq_len=8, dim=8, depth=1, heads=2, expansion=2),
        image=enc.ImageEncoderConfig(height=8, width=8, channels=1, patch_size=4, dim=8, depth=1, heads=2, expansion=2),
        fusion=fusion.FusionConfig(heads=2),
    )


class _MicroSample:
    def __init__(self, rng, cfg):
        self.tokens = list(rng.integers(3, cfg.text.vocab_size, size=4))
        self.segments = [0] * 4
        self.image = Tensor(rng.random((cfg.image.height, cfg.image.width, 1)), dtype=np.float64)
        self.label = int(rng.integers(0, 2))


def run_model_check(seed=0, step=1e-3, tol=1e-3) -> List[CheckResult]:
    """Check every parameter of a micro multimodal model end to end."""
    cfg = micro_model_config()
    rng = np.random.default_rng(seed)
    model = fusion.build_model(cfg, "multimodal", rng, dtype=np.float64)
    samples = [_MicroSample(rng, cfg) for _ in range(2)]
    labels = [s.label for s in samples]
    params = model.named_parameters()

    def loss_fn():
        logits = ag.concat([model.forward_logits(s) for s in samples], axis=0)
        return ag.cross_entropy(logits, labels)

    saved = ag.TAPE.records[:]
    ag.TAPE.records = []
    try:
        for p in params.values():
            p.grad = None
        ag.backward(loss_fn())
        analytic = {k: p.grad.copy() for k, p in params.items()}
    finally:
        ag.TAPE.records = saved

    results = []
    with ag.no_grad():
        for name, p in sorted(params.items()):
            flat = p.data.reshape(-1)
            numeric = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                fp = loss_fn().item()
                flat[i] = orig - step
                fm = loss_fn().item()
                flat[i] = orig
                numeric[i] = (fp - fm) / (2 * step)
            a = analytic[name].reshape(-1)
            denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
            rel = np.abs(a - numeric) / denom
            rel[np.abs(a - numeric) < 1e-9] = 0.0
            results.append(CheckResult(f"model.{name}", float(rel.max()), tol))
    return results
