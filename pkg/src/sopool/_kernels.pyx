# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled segment kernels; mirrors ``sopool._fallback`` function by function."""
import numpy as np
from libc.math cimport exp


def segment_cross(const double[:, ::1] X, const double[:, ::1] Y, const long long[::1] offsets):
    cdef Py_ssize_t B = offsets.shape[0] - 1
    cdef Py_ssize_t p = X.shape[1], q = Y.shape[1]
    cdef Py_ssize_t b, i, j, c, base
    cdef double xij
    out = np.zeros((B, p * q))
    cdef double[:, ::1] o = out
    with nogil:
        for b in range(B):
            for i in range(offsets[b], offsets[b + 1]):
                for j in range(p):
                    xij = X[i, j]
                    base = j * q
                    for c in range(q):
                        o[b, base + c] += xij * Y[i, c]
    return out


def row_products(const double[:, ::1] H, const double[:, ::1] M):
    cdef Py_ssize_t n = H.shape[0], k = M.shape[0], f = H.shape[1]
    cdef Py_ssize_t r, j, c
    cdef double acc
    out = np.empty((n, k))
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(n):
            for j in range(k):
                acc = 0.0
                for c in range(f):
                    acc = acc + H[r, c] * M[j, c]
                o[r, j] = acc
    return out


def segment_cross_backward(const double[:, ::1] G, const double[:, ::1] X,
                           const double[:, ::1] Y, const long long[::1] offsets):
    cdef Py_ssize_t B = offsets.shape[0] - 1
    cdef Py_ssize_t p = X.shape[1], q = Y.shape[1]
    cdef Py_ssize_t b, i, j, c, base
    cdef double acc, xij, g
    dX_arr = np.zeros((X.shape[0], p))
    dY_arr = np.zeros((Y.shape[0], q))
    cdef double[:, ::1] dX = dX_arr
    cdef double[:, ::1] dY = dY_arr
    with nogil:
        for b in range(B):
            for i in range(offsets[b], offsets[b + 1]):
                for j in range(p):
                    base = j * q
                    acc = 0.0
                    xij = X[i, j]
                    for c in range(q):
                        g = G[b, base + c]
                        acc = acc + g * Y[i, c]
                        dY[i, c] += xij * g
                    dX[i, j] = acc
    return dX_arr, dY_arr


def csr_max(const long long[::1] indptr, const long long[::1] indices, const double[:, ::1] H):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t f = H.shape[1]
    cdef Py_ssize_t r, e, c, src
    cdef double v
    out_arr = np.empty((n, f))
    arg_arr = np.empty((n, f), dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef long long[:, ::1] arg = arg_arr
    with nogil:
        for r in range(n):
            src = indices[indptr[r]]
            for c in range(f):
                out[r, c] = H[src, c]
                arg[r, c] = src
            for e in range(indptr[r] + 1, indptr[r + 1]):
                src = indices[e]
                for c in range(f):
                    v = H[src, c]
                    if v > out[r, c]:
                        out[r, c] = v
                        arg[r, c] = src
    return out_arr, arg_arr


def scatter_rows_add(const long long[:, ::1] arg, const double[:, ::1] G, Py_ssize_t n_src):
    cdef Py_ssize_t r, c
    out_arr = np.zeros((n_src, G.shape[1]))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for r in range(G.shape[0]):
            for c in range(G.shape[1]):
                out[arg[r, c], c] += G[r, c]
    return out_arr


def segment_softmax(const double[::1] s, const long long[::1] offsets):
    cdef Py_ssize_t b, i
    cdef double m, total
    out_arr = np.empty(s.shape[0])
    cdef double[::1] out = out_arr
    with nogil:
        for b in range(offsets.shape[0] - 1):
            m = s[offsets[b]]
            for i in range(offsets[b] + 1, offsets[b + 1]):
                if s[i] > m:
                    m = s[i]
            total = 0.0
            for i in range(offsets[b], offsets[b + 1]):
                out[i] = exp(s[i] - m)
                total = total + out[i]
            for i in range(offsets[b], offsets[b + 1]):
                out[i] = out[i] / total
    return out_arr


def segment_softmax_backward(const double[::1] p, const double[::1] g, const long long[::1] offsets):
    cdef Py_ssize_t b, i
    cdef double dot
    out_arr = np.empty(p.shape[0])
    cdef double[::1] out = out_arr
    with nogil:
        for b in range(offsets.shape[0] - 1):
            dot = 0.0
            for i in range(offsets[b], offsets[b + 1]):
                dot = dot + p[i] * g[i]
            for i in range(offsets[b], offsets[b + 1]):
                out[i] = p[i] * (g[i] - dot)
    return out_arr
