# cython: language_level=3
"""Compiled dense kernels for the NCE update.

Built with -ffast-math so exp vectorizes; callers must pass finite input.
Results match the numpy versions in ``_pykernels`` to rounding.
"""
import numpy as np

from libc.math cimport exp, fabs, log

ctypedef double f64
ctypedef long long i64

# each factor in a row product is at most 2, so 512 of them cannot overflow
DEF BLOCK = 512


def scatter_add_rows(f64[:, ::1] target, const i64[::1] rows,
                     const f64[:, ::1] delta, f64 step):
    """In place: ``target[rows[i]] += step * delta[i]`` (rows must be unique)."""
    cdef Py_ssize_t n = rows.shape[0], m = delta.shape[1], i, j
    cdef f64* dst
    cdef const f64* src
    with nogil:
        for i in range(n):
            dst = &target[rows[i], 0]
            src = &delta[i, 0]
            for j in range(m):
                dst[j] += step * src[j]


def softplus_sigmoid(const f64[:, ::1] pre):
    """Row sums of softplus(pre) and the elementwise logistic of pre.

    softplus(x) = max(x, 0) + log(1 + e^-|x|); the log terms are multiplied
    together and logged once per block of columns.
    """
    cdef Py_ssize_t n = pre.shape[0], m = pre.shape[1], i, j, lo, hi
    cdef f64 x, e, d, acc, prod
    sums = np.empty(n, dtype=np.float64)
    sig = np.empty((n, m), dtype=np.float64)
    cdef f64[::1] s = sums
    cdef f64[:, ::1] g = sig
    cdef const f64* p
    cdef f64* q
    with nogil:
        for i in range(n):
            p = &pre[i, 0]
            q = &g[i, 0]
            acc = 0.0
            lo = 0
            while lo < m:
                hi = min(lo + BLOCK, m)
                prod = 1.0
                for j in range(lo, hi):
                    x = p[j]
                    e = exp(-fabs(x))
                    d = 1.0 + e
                    acc += 0.5 * (x + fabs(x))
                    q[j] = (1.0 if x >= 0 else e) / d
                    prod *= d
                acc += log(prod)
                lo = hi
            s[i] = acc
    return sums, sig


def csc_rows_times(const f64[:, ::1] table, const i64[::1] cols, const i64[::1] colptr,
                   const i64[::1] rows, const f64[::1] data, Py_ssize_t n_rows):
    """``X @ table[cols]`` for X in CSC form (columns remapped to ``cols``).

    Column order reads each table row once, sequentially; the output is small.
    """
    cdef Py_ssize_t nc = cols.shape[0], m = table.shape[1], c, e, j
    cdef f64 v
    cdef const f64* src
    cdef f64* dst
    out = np.zeros((n_rows, m), dtype=np.float64)
    cdef f64[:, ::1] o = out
    with nogil:
        for c in range(nc):
            src = &table[cols[c], 0]
            for e in range(colptr[c], colptr[c + 1]):
                v = data[e]
                dst = &o[rows[e], 0]
                for j in range(m):
                    dst[j] += v * src[j]
    return out


def csc_scatter_update(f64[:, ::1] target, const i64[::1] cols, const i64[::1] colptr,
                       const i64[::1] rows, const f64[::1] data, const f64[:, ::1] hidden,
                       f64 step):
    """In place: ``target[cols] += step * (X.T @ hidden)`` for X in CSC form."""
    cdef Py_ssize_t nc = cols.shape[0], m = hidden.shape[1], c, e, j
    cdef f64 v
    cdef const f64* src
    cdef f64* dst
    with nogil:
        for c in range(nc):
            dst = &target[cols[c], 0]
            for e in range(colptr[c], colptr[c + 1]):
                v = step * data[e]
                src = &hidden[rows[e], 0]
                for j in range(m):
                    dst[j] += v * src[j]
