"""Pure-numpy implementations of the fused hot-loop kernels.

Same contracts as the compiled versions in ``_ckernels.pyx``; used when the
extension is unavailable or explicitly disabled. All functions preserve the
input dtype (float32 during training, float64 during gradient checks).
"""

import numpy as np

# tanh approximation of GELU (BERT convention); smooth, so safe for
# central-difference checks
_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu_forward(x):
    u = _GELU_C * (x + _GELU_A * x * x * x)
    return (0.5 * x * (1.0 + np.tanh(u))).astype(x.dtype, copy=False)


def gelu_backward(x, grad_out):
    u = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    g = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
    return (grad_out * g).astype(x.dtype, copy=False)


def softmax_rows(x):
    """Row-wise softmax of a 2-d array with max-subtraction."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=1, keepdims=True)).astype(x.dtype, copy=False)


def softmax_rows_backward(out, grad_out):
    dot = (grad_out * out).sum(axis=1, keepdims=True)
    return (out * (grad_out - dot)).astype(out.dtype, copy=False)


def layer_norm_forward(x, gamma, beta, eps):
    """Normalize each row of a 2-d array, then scale/shift.

    Returns (out, xhat, inv_std); xhat and inv_std are saved for backward.
    """
    mean = x.mean(axis=1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    out = xhat * gamma + beta
    return (
        out.astype(x.dtype, copy=False),
        xhat.astype(x.dtype, copy=False),
        inv_std[:, 0].astype(x.dtype, copy=False),
    )


def layer_norm_backward(grad_out, xhat, inv_std, gamma):
    d = xhat.shape[1]
    gxhat = grad_out * gamma
    s1 = gxhat.sum(axis=1, keepdims=True)
    s2 = (gxhat * xhat).sum(axis=1, keepdims=True)
    gx = (inv_std[:, None] / d) * (d * gxhat - s1 - xhat * s2)
    ggamma = (grad_out * xhat).sum(axis=0)
    gbeta = grad_out.sum(axis=0)
    dt = xhat.dtype
    return (
        gx.astype(dt, copy=False),
        ggamma.astype(dt, copy=False),
        gbeta.astype(dt, copy=False),
    )
