# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled training kernels; semantics mirror ``numpy_backend``.

Single fused pass per mini-batch keeps temporaries out of the Python heap,
which pays off at the small layer widths and batch sizes this package
trains at.  Loop order is fixed, so results are deterministic run to run.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log

cnp.import_array()

NAME = "native"


cdef void _gemm_nn(double[:, ::1] a, double[:, ::1] w, double[:, ::1] out) noexcept nogil:
    # out = a @ w
    cdef Py_ssize_t B = a.shape[0], M = a.shape[1], N = w.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double aik
    for i in range(B):
        for j in range(N):
            out[i, j] = 0.0
        for k in range(M):
            aik = a[i, k]
            if aik == 0.0:
                continue
            for j in range(N):
                out[i, j] += aik * w[k, j]


cdef void _gemm_tn(double[:, ::1] a, double[:, ::1] d, double[:, ::1] out) noexcept nogil:
    # out = a.T @ d
    cdef Py_ssize_t B = a.shape[0], M = a.shape[1], N = d.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double aki
    for i in range(M):
        for j in range(N):
            out[i, j] = 0.0
    for k in range(B):
        for i in range(M):
            aki = a[k, i]
            if aki == 0.0:
                continue
            for j in range(N):
                out[i, j] += aki * d[k, j]


cdef void _gemm_nt(double[:, ::1] d, double[:, ::1] w, double[:, ::1] out) noexcept nogil:
    # out = d @ w.T
    cdef Py_ssize_t B = d.shape[0], N = d.shape[1], M = w.shape[0]
    cdef Py_ssize_t i, m, j
    cdef double s
    for i in range(B):
        for m in range(M):
            s = 0.0
            for j in range(N):
                s += d[i, j] * w[m, j]
            out[i, m] = s


cdef void _leaky_inplace(double[:, ::1] z, double slope) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            if z[i, j] <= 0.0:
                z[i, j] *= slope


cdef void _scale_by_leaky_grad(double[:, ::1] d, double[:, ::1] act, double slope) noexcept nogil:
    # multiply d by the activation derivative recovered from post-activation sign
    cdef Py_ssize_t i, j
    for i in range(d.shape[0]):
        for j in range(d.shape[1]):
            if act[i, j] <= 0.0:
                d[i, j] *= slope


cdef double _softmax_ce_delta(double[:, ::1] logits, cnp.int64_t[::1] y,
                              double[:, ::1] delta) noexcept nogil:
    # delta <- (softmax(logits) - onehot(y)) / B ; returns mean cross-entropy
    cdef Py_ssize_t B = logits.shape[0], C = logits.shape[1]
    cdef Py_ssize_t i, j
    cdef double m, s, e, loss = 0.0
    for i in range(B):
        m = logits[i, 0]
        for j in range(1, C):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(C):
            e = exp(logits[i, j] - m)
            delta[i, j] = e
            s += e
        for j in range(C):
            delta[i, j] /= s
        loss -= log(delta[i, y[i]])
        delta[i, y[i]] -= 1.0
        for j in range(C):
            delta[i, j] /= B
    return loss / B


cdef void _abs_add(double[:, ::1] acc, double[:, ::1] g) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(g.shape[0]):
        for j in range(g.shape[1]):
            acc[i, j] += fabs(g[i, j])


cdef void _masked_update(double[:, ::1] w, double[:, ::1] mask, double[:, ::1] g,
                         double lr) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            if mask[i, j] != 0.0:
                w[i, j] -= lr * g[i, j]


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward_batch(list weights, x, double slope):
    cdef Py_ssize_t L = len(weights), i
    x = np.ascontiguousarray(x, dtype=np.float64)
    acts = []
    a = x
    for i in range(L):
        w = weights[i]
        z = np.empty((a.shape[0], w.shape[1]), dtype=np.float64)
        _gemm_nn(a, w, z)
        if i < L - 1:
            _leaky_inplace(z, slope)
        acts.append(z)
        a = z
    return acts


def loss_and_grads(list weights, x, y, double slope):
    cdef Py_ssize_t L = len(weights), i
    x = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.int64_t[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    acts = forward_batch(weights, x, slope)
    logits = acts[L - 1]
    delta = np.empty_like(logits)
    cdef double loss = _softmax_ce_delta(logits, yv, delta)

    grads = [None] * L
    for i in range(L - 1, -1, -1):
        a_prev = x if i == 0 else acts[i - 1]
        g = np.empty_like(weights[i])
        _gemm_tn(a_prev, delta, g)
        grads[i] = g
        if i > 0:
            nd = np.empty((delta.shape[0], weights[i].shape[0]), dtype=np.float64)
            _gemm_nt(delta, weights[i], nd)
            _scale_by_leaky_grad(nd, acts[i - 1], slope)
            delta = nd
    return loss, grads


def train_batch(list weights, list masks, x, y, double lr, double slope, accum=None):
    cdef Py_ssize_t L = len(weights), i
    loss, grads = loss_and_grads(weights, x, y, slope)
    for i in range(L):
        if accum is not None:
            _abs_add(accum[i], grads[i])
        _masked_update(weights[i], masks[i], grads[i], lr)
    return loss
