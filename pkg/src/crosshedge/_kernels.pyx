# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: counter-based Gaussian draws and tridiagonal solves.

Must stay bit-compatible with ``_kernels_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t
from scipy.special.cython_special cimport ndtri

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t CHANNEL_MULT = 0xD1B54A32D192ED03ULL
cdef double TWO_M53 = 1.1102230246251565e-16


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t stream_key(uint64_t seed, uint64_t channel, uint64_t stream) nogil:
    cdef uint64_t h = mix64(seed + GOLDEN)
    h = mix64(h ^ ((channel + 1) * CHANNEL_MULT))
    return mix64(h + (stream + 1) * GOLDEN)


def gaussian(uint64_t seed, uint64_t channel, int64_t[::1] streams, uint64_t step):
    """Standard normals for (seed, channel, stream, step), one per stream."""
    cdef Py_ssize_t n = streams.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef uint64_t key, u
    cdef uint64_t offset = (step + 1) * GOLDEN
    with nogil:
        for i in range(n):
            key = stream_key(seed, channel, <uint64_t>streams[i])
            u = mix64(key + offset)
            o[i] = ndtri((<double>(u >> 11) + 0.5) * TWO_M53)
    return out


def tridiag_solve(double[::1] lower, double[::1] diag, double[::1] upper, double[::1] rhs):
    """Thomas algorithm; lower[0] and upper[n-1] are ignored."""
    cdef Py_ssize_t n = diag.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xo = np.empty(n, dtype=np.float64)
    cdef double[::1] x = xo
    cdef double[::1] c = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double m
    with nogil:
        c[0] = upper[0] / diag[0]
        x[0] = rhs[0] / diag[0]
        for i in range(1, n):
            m = diag[i] - lower[i] * c[i - 1]
            c[i] = upper[i] / m
            x[i] = (rhs[i] - lower[i] * x[i - 1]) / m
        for i in range(n - 2, -1, -1):
            x[i] = x[i] - c[i] * x[i + 1]
    return xo
