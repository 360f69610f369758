"""The compiled kernels and the numpy fallback must be interchangeable: same
signatures, same math, near-identical outputs in both dtypes."""

import numpy as np
import pytest

from multitrans import kernels
from multitrans.kernels import fallback

try:
    from multitrans.kernels import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = [fallback] if _ckernels is None else [fallback, _ckernels]
DTYPES = [np.float32, np.float64]


def _tol(dtype):
    return 1e-6 if dtype == np.float32 else 1e-12


@pytest.mark.parametrize("dtype", DTYPES)
def test_gelu_frozen_values(dtype):
    # tanh-approximation GELU at hand-picked points (computed once from the
    # closed form 0.5*x*(1+tanh(0.79788456*(x+0.044715*x^3))))
    x = np.array([-3.0, -1.0, 0.0, 0.5, 1.0, 3.0], dtype=dtype)
    expected = np.array(
        [-0.0036373921, -0.1588080094, 0.0, 0.3457140098, 0.8411919906, 2.9963626079],
        dtype=np.float64,
    )
    for mod in BACKENDS:
        np.testing.assert_allclose(mod.gelu_forward(x), expected, atol=1e-6)


@pytest.mark.parametrize("mod", BACKENDS)
@pytest.mark.parametrize("dtype", DTYPES)
def test_softmax_rows_sum_to_one(mod, dtype, rng):
    x = rng.normal(size=(17, 9)).astype(dtype) * 5
    out = mod.softmax_rows(x)
    assert out.dtype == dtype
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)
    assert (out > 0).all()


@pytest.mark.parametrize("mod", BACKENDS)
@pytest.mark.parametrize("dtype", DTYPES)
def test_softmax_rows_shift_invariant(mod, dtype, rng):
    x = rng.normal(size=(5, 7)).astype(dtype)
    np.testing.assert_allclose(
        mod.softmax_rows(x), mod.softmax_rows(x + dtype(100.0)), atol=1e-5
    )


@pytest.mark.parametrize("mod", BACKENDS)
@pytest.mark.parametrize("dtype", DTYPES)
def test_layer_norm_rows_standardized(mod, dtype, rng):
    x = rng.normal(size=(11, 16)).astype(dtype) * 3 + 2
    gamma = np.ones(16, dtype=dtype)
    beta = np.zeros(16, dtype=dtype)
    out, xhat, inv_std = mod.layer_norm_forward(x, gamma, beta, 1e-5)
    np.testing.assert_allclose(out, xhat, atol=1e-6)
    np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-5)
    np.testing.assert_allclose(out.std(axis=1), 1.0, atol=1e-3)
    assert inv_std.shape == (11,)


@pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")
@pytest.mark.parametrize("dtype", DTYPES)
def test_backend_parity(dtype, rng):
    """Compiled and fallback kernels agree on every function, both dtypes."""
    x = np.ascontiguousarray(rng.normal(size=(13, 24)).astype(dtype))
    g = np.ascontiguousarray(rng.normal(size=(13, 24)).astype(dtype))
    gamma = rng.normal(size=24).astype(dtype)
    beta = rng.normal(size=24).astype(dtype)
    tol = _tol(dtype)

    np.testing.assert_allclose(
        _ckernels.gelu_forward(x), fallback.gelu_forward(x), rtol=tol, atol=tol
    )
    np.testing.assert_allclose(
        _ckernels.gelu_backward(x, g), fallback.gelu_backward(x, g), rtol=tol, atol=tol
    )
    sc = _ckernels.softmax_rows(x)
    sf = fallback.softmax_rows(x)
    np.testing.assert_allclose(sc, sf, rtol=tol, atol=tol)
    np.testing.assert_allclose(
        _ckernels.softmax_rows_backward(sc, g),
        fallback.softmax_rows_backward(sf, g),
        rtol=tol,
        atol=tol,
    )
    oc = _ckernels.layer_norm_forward(x, gamma, beta, 1e-5)
    of = fallback.layer_norm_forward(x, gamma, beta, 1e-5)
    for a, b in zip(oc, of):
        np.testing.assert_allclose(a, b, rtol=10 * tol, atol=10 * tol)
    bc = _ckernels.layer_norm_backward(g, oc[1], oc[2], gamma)
    bf = fallback.layer_norm_backward(g, of[1], of[2], gamma)
    for a, b in zip(bc, bf):
        np.testing.assert_allclose(a, b, rtol=10 * tol, atol=10 * tol)


def test_active_backend_exports():
    assert kernels.BACKEND in ("compiled", "fallback")
    for name in (
        "gelu_forward",
        "gelu_backward",
        "softmax_rows",
        "softmax_rows_backward",
        "layer_norm_forward",
        "layer_norm_backward",
    ):
        assert callable(getattr(kernels, name))


def test_dtype_preserved(rng):
    for dtype in DTYPES:
        x = rng.normal(size=(4, 6)).astype(dtype)
        assert kernels.gelu_forward(x).dtype == dtype
        assert kernels.softmax_rows(x).dtype == dtype
