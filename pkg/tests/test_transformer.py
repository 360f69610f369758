"""Attention and transformer-block tests, anchored on brute-force oracles:
a naive triple-loop attention implementation and explicit mask constructions.
"""

import numpy as np
import pytest

from multitrans import autograd as ag
from multitrans import transformer as tf
from multitrans.autograd import Tensor


def _naive_mhsa(x, p, mask=None):
    """Triple-loop scaled dot-product attention; numpy only, no autodiff."""
    L, d = x.shape
    dh = p.head_dim
    q = x @ p.q.w.data + p.q.b.data
    k = x @ p.k.w.data + p.k.b.data
    v = x @ p.v.w.data + p.v.b.data
    merged = np.zeros((L, d), dtype=np.float64)
    for h in range(p.heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(L):
            scores = np.empty(L)
            for j in range(L):
                scores[j] = q[i, sl] @ k[j, sl] / np.sqrt(dh)
                if mask is not None and not mask[i, j]:
                    scores[j] += tf.MASK_NEG
            e = np.exp(scores - scores.max())
            a = e / e.sum()
            for j in range(L):
                merged[i, sl] += a[j] * v[j, sl]
    return merged @ p.o.w.data + p.o.b.data


@pytest.mark.parametrize("L,d,heads", [(4, 6, 2), (7, 8, 4), (3, 4, 1)])
def test_mhsa_matches_naive_oracle(L, d, heads, rng):
    p = tf.init_attention(rng, d, heads, dtype=np.float64)
    x = rng.normal(size=(L, d))
    got = tf.multi_head_self_attention(Tensor(x, dtype=np.float64), p).data
    np.testing.assert_allclose(got, _naive_mhsa(x, p), atol=1e-6)


def test_windowed_matches_naive_masked_oracle(rng):
    L, d, heads = 9, 8, 2
    p = tf.init_attention(rng, d, heads, dtype=np.float64)
    spec = tf.WindowSpec(4, 2)
    x = rng.normal(size=(L, d))
    mask = tf.window_mask(L, spec)
    got = tf.windowed_self_attention(Tensor(x, dtype=np.float64), p, spec).data
    np.testing.assert_allclose(got, _naive_mhsa(x, p, mask), atol=1e-6)


def test_full_window_equals_global(rng):
    # one window covering everything collapses to unmasked attention
    L, d = 5, 8
    p = tf.init_attention(rng, d, 4, dtype=np.float64)
    x = Tensor(rng.normal(size=(L, d)), dtype=np.float64)
    spec = tf.WindowSpec(L - 1, 0)  # window spans all non-CLS tokens... plus CLS global
    full = tf.multi_head_self_attention(x, p).data
    win = tf.windowed_self_attention(x, p, spec).data
    np.testing.assert_allclose(win, full, atol=1e-6)


def test_attention_rows_are_distributions(rng):
    p = tf.init_attention(rng, 8, 2)
    sink = []
    tf.multi_head_self_attention(Tensor(rng.normal(size=(6, 8))), p, attn_sink=sink)
    assert len(sink) == 2
    for a in sink:
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-6)
        assert (a >= 0).all()


def test_window_mask_structure():
    # 8 non-CLS tokens, window 4, no shift: two blocks of 4; CLS row/col global
    m = tf.window_mask(9, tf.WindowSpec(4, 0))
    assert m[0].all() and m[:, 0].all()
    inner = m[1:, 1:]
    expect = np.zeros((8, 8), dtype=bool)
    expect[:4, :4] = True
    expect[4:, 4:] = True
    np.testing.assert_array_equal(inner, expect)


def test_window_mask_shift_is_cyclic():
    # shift 2 with window 4 over 8 tokens groups {6,7,0,1} and {2,3,4,5}
    m = tf.window_mask(9, tf.WindowSpec(4, 2))[1:, 1:]
    group_a = [6, 7, 0, 1]
    for i in group_a:
        for j in group_a:
            assert m[i, j]
        assert not m[i, 3]


def test_window_mask_indivisible_rejected():
    with pytest.raises(ag.ShapeError):
        tf.window_mask(8, tf.WindowSpec(4, 0))  # 7 tokens, window 4


def test_window_spec_shift_validation():
    tf.WindowSpec(4, 2)
    with pytest.raises(ValueError):
        tf.WindowSpec(4, 1)


def test_block_preserves_shape_and_differs_from_input(rng):
    p = tf.init_block(rng, 8, 2)
    x = Tensor(rng.normal(size=(5, 8)), dtype=np.float32)
    y = tf.transformer_block(x, p)
    assert y.shape == (5, 8)
    assert np.abs(y.data - x.data).max() > 0


def test_block_relu_activation_runs(rng):
    p = tf.init_block(rng, 8, 2, activation="relu")
    y = tf.transformer_block(Tensor(rng.normal(size=(3, 8)), dtype=np.float32), p)
    assert np.isfinite(y.data).all()


def test_named_tensors_enumeration(rng):
    p = tf.init_block(rng, 8, 2)
    names = dict(tf.named_tensors(p, "blk"))
    assert "blk.attn.q.w" in names and "blk.mlp.fc1.b" in names
    # 4 attn linears *2 + 2 norms *2 + 2 mlp linears *2 = 16 tensors
    assert len(names) == 16


def test_init_attention_head_divisibility(rng):
    with pytest.raises(ValueError):
        tf.init_attention(rng, 6, 4)


def test_linear_without_bias(rng):
    p = tf.init_linear(rng, 4, 3, bias=False)
    assert p.b is None
    x = rng.normal(size=(2, 4)).astype(np.float32)
    np.testing.assert_allclose(
        tf.linear(Tensor(x), p).data, x @ p.w.data, atol=1e-6
    )
