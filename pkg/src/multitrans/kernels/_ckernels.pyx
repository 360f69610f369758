# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused Cython kernels for the hot inner loops.

Each function mirrors a counterpart in ``fallback.py`` exactly (same
signatures, same math). The win over numpy comes from fusing the
elementwise/row passes into single loops, which matters at the small
sequence lengths this model runs at.
"""

import numpy as np

cimport cython
from libc.math cimport exp, sqrt, tanh

ctypedef fused floating:
    float
    double

DEF GELU_C = 0.7978845608028654
DEF GELU_A = 0.044715


def gelu_forward(x):
    out = np.empty_like(x)
    if x.dtype == np.float32:
        _gelu_forward[cython.float](x.reshape(-1), out.reshape(-1))
    else:
        _gelu_forward[cython.double](x.reshape(-1), out.reshape(-1))
    return out


def gelu_backward(x, grad_out):
    out = np.empty_like(x)
    if x.dtype == np.float32:
        _gelu_backward[cython.float](x.reshape(-1), grad_out.reshape(-1), out.reshape(-1))
    else:
        _gelu_backward[cython.double](x.reshape(-1), grad_out.reshape(-1), out.reshape(-1))
    return out


def softmax_rows(x):
    out = np.empty_like(x)
    if x.dtype == np.float32:
        _softmax_rows[cython.float](x, out)
    else:
        _softmax_rows[cython.double](x, out)
    return out


def softmax_rows_backward(out, grad_out):
    gin = np.empty_like(out)
    if out.dtype == np.float32:
        _softmax_rows_backward[cython.float](out, grad_out, gin)
    else:
        _softmax_rows_backward[cython.double](out, grad_out, gin)
    return gin


def layer_norm_forward(x, gamma, beta, eps):
    out = np.empty_like(x)
    xhat = np.empty_like(x)
    inv_std = np.empty(x.shape[0], dtype=x.dtype)
    if x.dtype == np.float32:
        _layer_norm_forward[cython.float](x, gamma, beta, float(eps), out, xhat, inv_std)
    else:
        _layer_norm_forward[cython.double](x, gamma, beta, float(eps), out, xhat, inv_std)
    return out, xhat, inv_std


def layer_norm_backward(grad_out, xhat, inv_std, gamma):
    gx = np.empty_like(xhat)
    ggamma = np.zeros(xhat.shape[1], dtype=xhat.dtype)
    gbeta = np.zeros(xhat.shape[1], dtype=xhat.dtype)
    if xhat.dtype == np.float32:
        _layer_norm_backward[cython.float](grad_out, xhat, inv_std, gamma, gx, ggamma, gbeta)
    else:
        _layer_norm_backward[cython.double](grad_out, xhat, inv_std, gamma, gx, ggamma, gbeta)
    return gx, ggamma, gbeta


cdef void _gelu_forward(floating[:] x, floating[:] out) noexcept nogil:
    cdef Py_ssize_t i
    cdef double v, u
    for i in range(x.shape[0]):
        v = x[i]
        u = GELU_C * (v + GELU_A * v * v * v)
        out[i] = <floating>(0.5 * v * (1.0 + tanh(u)))


cdef void _gelu_backward(floating[:] x, floating[:] gout, floating[:] gin) noexcept nogil:
    cdef Py_ssize_t i
    cdef double v, u, t, du, g
    for i in range(x.shape[0]):
        v = x[i]
        u = GELU_C * (v + GELU_A * v * v * v)
        t = tanh(u)
        du = GELU_C * (1.0 + 3.0 * GELU_A * v * v)
        g = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du
        gin[i] = <floating>(gout[i] * g)


cdef void _softmax_rows(floating[:, :] x, floating[:, :] out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double m, s
    for i in range(x.shape[0]):
        m = x[i, 0]
        for j in range(1, x.shape[1]):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(x.shape[1]):
            out[i, j] = <floating>exp(x[i, j] - m)
            s += out[i, j]
        for j in range(x.shape[1]):
            out[i, j] = <floating>(out[i, j] / s)


cdef void _softmax_rows_backward(floating[:, :] out, floating[:, :] gout,
                                 floating[:, :] gin) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(out.shape[0]):
        dot = 0.0
        for j in range(out.shape[1]):
            dot += gout[i, j] * out[i, j]
        for j in range(out.shape[1]):
            gin[i, j] = <floating>(out[i, j] * (gout[i, j] - dot))


cdef void _layer_norm_forward(floating[:, :] x, floating[:] gamma, floating[:] beta,
                              double eps, floating[:, :] out, floating[:, :] xhat,
                              floating[:] inv_std) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef Py_ssize_t d = x.shape[1]
    cdef double mean, var, istd, h
    for i in range(x.shape[0]):
        mean = 0.0
        for j in range(d):
            mean += x[i, j]
        mean /= d
        var = 0.0
        for j in range(d):
            var += (x[i, j] - mean) * (x[i, j] - mean)
        var /= d
        istd = 1.0 / sqrt(var + eps)
        inv_std[i] = <floating>istd
        for j in range(d):
            h = (x[i, j] - mean) * istd
            xhat[i, j] = <floating>h
            out[i, j] = <floating>(h * gamma[j] + beta[j])


cdef void _layer_norm_backward(floating[:, :] gout, floating[:, :] xhat,
                               floating[:] inv_std, floating[:] gamma,
                               floating[:, :] gx, floating[:] ggamma,
                               floating[:] gbeta) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef Py_ssize_t d = xhat.shape[1]
    cdef double s1, s2, gh
    for i in range(xhat.shape[0]):
        s1 = 0.0
        s2 = 0.0
        for j in range(d):
            gh = gout[i, j] * gamma[j]
            s1 += gh
            s2 += gh * xhat[i, j]
        for j in range(d):
            gh = gout[i, j] * gamma[j]
            gx[i, j] = <floating>((inv_std[i] / d) * (d * gh - s1 - xhat[i, j] * s2))
            ggamma[j] += <floating>(gout[i, j] * xhat[i, j])
            gbeta[j] += gout[i, j]
