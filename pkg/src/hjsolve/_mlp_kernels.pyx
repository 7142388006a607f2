# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MLP forward/backward kernels.

Same signatures and conventions as ``_mlp_kernels_py``. Dense products go
through the BLAS exported by scipy; bias, ReLU and masking are fused loops.
Row-major arrays are handed to column-major BLAS as their transposes.
"""
import numpy as np

from scipy.linalg.cython_blas cimport dgemm, dgemv


def mlp_forward(X, list weights, list biases):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_layers = len(weights)
    cdef double[:, ::1] h = X
    cdef double[:, ::1] W
    cdef double[:, ::1] z
    cdef double[::1] b
    cdef double[::1] out
    cdef int m, k, nn = <int>n, inc = 1
    cdef double one = 1.0, zero = 0.0, v, b_out
    cdef Py_ssize_t i, j, layer

    acts = [X]
    out_arr = np.empty(n)
    if n == 0:
        for layer in range(n_layers - 1):
            acts.append(np.empty((0, weights[layer].shape[0])))
        return out_arr, acts

    for layer in range(n_layers - 1):
        W = weights[layer]
        b = biases[layer]
        m = <int>W.shape[0]
        k = <int>W.shape[1]
        z_arr = np.empty((n, m))
        z = z_arr
        dgemm("T", "N", &m, &nn, &k, &one, &W[0, 0], &k, &h[0, 0], &k,
              &zero, &z[0, 0], &m)
        for j in range(n):
            for i in range(m):
                v = z[j, i] + b[i]
                z[j, i] = v if v > 0.0 else 0.0
        acts.append(z_arr)
        h = z

    W = weights[n_layers - 1]
    k = <int>W.shape[1]
    b_out = biases[n_layers - 1][0]
    out = out_arr
    dgemv("T", &k, &nn, &one, &h[0, 0], &k, &W[0, 0], &inc, &zero,
          &out[0], &inc)
    for j in range(n):
        out[j] += b_out
    return out_arr, acts


def mlp_backward(list weights, list acts, upstream, list grad_w, list grad_b):
    cdef Py_ssize_t n = upstream.shape[0]
    cdef Py_ssize_t n_layers = len(weights)
    cdef double[::1] g = upstream
    cdef double[:, ::1] a
    cdef double[:, ::1] W
    cdef double[:, ::1] dW
    cdef double[::1] db
    cdef double[:, ::1] G
    cdef double[:, ::1] G_new
    cdef int din, dout, nn = <int>n, inc = 1
    cdef double one = 1.0, zero = 0.0, s
    cdef Py_ssize_t i, j, layer

    if n == 0:
        return

    # output layer: dW += a^T g, db += sum(g)
    a = acts[n_layers - 1]
    dW = grad_w[n_layers - 1]
    db = grad_b[n_layers - 1]
    din = <int>a.shape[1]
    dgemv("N", &din, &nn, &one, &a[0, 0], &din, &g[0], &inc, &one,
          &dW[0, 0], &inc)
    s = 0.0
    for j in range(n):
        s += g[j]
    db[0] += s
    if n_layers == 1:
        return

    W = weights[n_layers - 1]
    G_arr = np.empty((n, din))
    G = G_arr
    for j in range(n):
        for i in range(din):
            G[j, i] = g[j] * W[0, i] if a[j, i] > 0.0 else 0.0

    for layer in range(n_layers - 2, -1, -1):
        a = acts[layer]
        dW = grad_w[layer]
        db = grad_b[layer]
        W = weights[layer]
        dout = <int>W.shape[0]
        din = <int>W.shape[1]
        dgemm("N", "T", &din, &dout, &nn, &one, &a[0, 0], &din, &G[0, 0],
              &dout, &one, &dW[0, 0], &din)
        for j in range(n):
            for i in range(dout):
                db[i] += G[j, i]
        if layer > 0:
            G_new_arr = np.empty((n, din))
            G_new = G_new_arr
            dgemm("N", "N", &din, &nn, &dout, &one, &W[0, 0], &din, &G[0, 0],
                  &dout, &zero, &G_new[0, 0], &din)
            for j in range(n):
                for i in range(din):
                    if a[j, i] <= 0.0:
                        G_new[j, i] = 0.0
            G = G_new
