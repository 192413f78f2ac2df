# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the per-cell double-integral reductions.

Each cell is reduced sequentially in ascending node order, so the results do
not depend on the number of threads.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport pow

cnp.import_array()


def pair_sums(const double[:, :, ::1] X, const double[:, :, ::1] Y,
              const double[:, :, ::1] GX, const double[:, :, ::1] GY,
              const double[::1] w, double power, int nthreads=1):
    cdef Py_ssize_t nc = X.shape[0], npt = X.shape[1], dim = X.shape[2]
    cdef Py_ssize_t k, p, a
    cdef double acc, num, dist2, t
    cdef double half = -0.5 * power
    out = np.zeros(nc)
    cdef double[::1] res = out
    if nthreads < 1:
        nthreads = 1
    for k in prange(nc, nogil=True, num_threads=nthreads, schedule="static"):
        acc = 0.0
        for p in range(npt):
            num = 0.0
            dist2 = 0.0
            for a in range(dim):
                t = GX[k, p, a] - GY[k, p, a]
                num = num + t * t
                t = X[k, p, a] - Y[k, p, a]
                dist2 = dist2 + t * t
            acc = acc + w[p] * num * pow(dist2, half)
        res[k] = acc
    return out


def weighted_sq_sums(const double[:, :, ::1] A, const double[:, :, ::1] B,
                     const double[:, ::1] w, int nthreads=1):
    cdef Py_ssize_t nc = A.shape[0], npt = A.shape[1], m = A.shape[2]
    cdef Py_ssize_t k, p, a
    cdef double acc, s, t
    out = np.zeros(nc)
    cdef double[::1] res = out
    if nthreads < 1:
        nthreads = 1
    for k in prange(nc, nogil=True, num_threads=nthreads, schedule="static"):
        acc = 0.0
        for p in range(npt):
            s = 0.0
            for a in range(m):
                t = A[k, p, a] - B[k, p, a]
                s = s + t * t
            acc = acc + w[k, p] * s
        res[k] = acc
    return out
