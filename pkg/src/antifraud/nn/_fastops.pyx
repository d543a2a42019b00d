# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused affine+tanh over node rows and segmented max
aggregation with argmax routing. Mirrors `_kernels_py` exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh

cnp.import_array()

BACKEND_NAME = "compiled"


def rows_affine_tanh_fwd(cnp.ndarray[cnp.float64_t, ndim=2] X,
                         cnp.ndarray[cnp.float64_t, ndim=2] W):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t din = X.shape[1]
    cdef Py_ssize_t dout = W.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] H = np.empty((n, dout), dtype=np.float64)
    cdef double[:, ::1] Xv = np.ascontiguousarray(X)
    cdef double[:, ::1] Wv = np.ascontiguousarray(W)
    cdef double[:, ::1] Hv = H
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(dout):
            acc = 0.0
            for k in range(din):
                acc += Wv[j, k] * Xv[i, k]
            Hv[i, j] = tanh(acc)
    return H


def rows_affine_tanh_bwd(cnp.ndarray[cnp.float64_t, ndim=2] X,
                         cnp.ndarray[cnp.float64_t, ndim=2] W,
                         cnp.ndarray[cnp.float64_t, ndim=2] H,
                         cnp.ndarray[cnp.float64_t, ndim=2] dH,
                         dX, dW):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t din = X.shape[1]
    cdef Py_ssize_t dout = W.shape[0]
    cdef double[:, ::1] Xv = np.ascontiguousarray(X)
    cdef double[:, ::1] Wv = np.ascontiguousarray(W)
    cdef double[:, ::1] Hv = np.ascontiguousarray(H)
    cdef double[:, ::1] dHv = np.ascontiguousarray(dH)
    cdef double[:, ::1] dXv
    cdef double[:, ::1] dWv
    cdef bint want_dx = dX is not None
    cdef bint want_dw = dW is not None
    cdef Py_ssize_t i, j, k
    cdef double g
    if want_dx:
        dXv = dX
    if want_dw:
        dWv = dW
    for i in range(n):
        for j in range(dout):
            g = dHv[i, j] * (1.0 - Hv[i, j] * Hv[i, j])
            if g == 0.0:
                continue
            if want_dx:
                for k in range(din):
                    dXv[i, k] += g * Wv[j, k]
            if want_dw:
                for k in range(din):
                    dWv[j, k] += g * Xv[i, k]


def segment_max_fwd(cnp.ndarray[cnp.float64_t, ndim=2] H,
                    cnp.ndarray[cnp.int64_t, ndim=1] indptr,
                    cnp.ndarray[cnp.int64_t, ndim=1] src):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = H.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, d), dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] arg = np.full((n, d), -1, dtype=np.int64)
    cdef double[:, ::1] Hv = np.ascontiguousarray(H)
    cdef double[:, ::1] outv = out
    cdef cnp.int64_t[:, ::1] argv = arg
    cdef cnp.int64_t[::1] iptr = indptr
    cdef cnp.int64_t[::1] srcv = src
    cdef Py_ssize_t v, k, j, s
    cdef double val
    for v in range(n):
        for k in range(iptr[v], iptr[v + 1]):
            s = srcv[k]
            if k == iptr[v]:
                for j in range(d):
                    outv[v, j] = Hv[s, j]
                    argv[v, j] = s
            else:
                for j in range(d):
                    val = Hv[s, j]
                    if val > outv[v, j]:
                        outv[v, j] = val
                        argv[v, j] = s
    return out, arg


def segment_max_bwd(cnp.ndarray[cnp.float64_t, ndim=2] dOut,
                    cnp.ndarray[cnp.int64_t, ndim=2] arg,
                    cnp.ndarray[cnp.float64_t, ndim=2] dH):
    cdef Py_ssize_t n = dOut.shape[0]
    cdef Py_ssize_t d = dOut.shape[1]
    cdef double[:, ::1] dOutv = np.ascontiguousarray(dOut)
    cdef cnp.int64_t[:, ::1] argv = np.ascontiguousarray(arg)
    cdef double[:, ::1] dHv = dH
    cdef Py_ssize_t v, j
    cdef cnp.int64_t s
    for v in range(n):
        for j in range(d):
            s = argv[v, j]
            if s >= 0:
                dHv[s, j] += dOutv[v, j]
