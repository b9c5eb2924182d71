# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the solver inner loop.

All routines operate on raw CSR/CSC index arrays (int32) and float64 data.
The triangular solves assume a lower-triangular factor stored in CSC with
sorted row indices, so the diagonal entry is the first one in each column.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def lower_solve_csc(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices,
                    double[::1] data, double[::1] b):
    """Solve L x = b in place (forward substitution), b becomes x."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t j, p, start, end
    cdef double xj
    for j in range(n):
        start = indptr[j]
        end = indptr[j + 1]
        xj = b[j] / data[start]
        b[j] = xj
        for p in range(start + 1, end):
            b[indices[p]] -= data[p] * xj


def lower_t_solve_csc(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices,
                      double[::1] data, double[::1] b):
    """Solve L^T x = b in place (back substitution), b becomes x."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t j, p, start, end
    cdef double acc
    for j in range(n - 1, -1, -1):
        start = indptr[j]
        end = indptr[j + 1]
        acc = b[j]
        for p in range(start + 1, end):
            acc -= data[p] * b[indices[p]]
        b[j] = acc / data[start]


def csr_matvec(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices,
               double[::1] data, double[::1] x, double[::1] out):
    """out = A x for A in CSR layout."""
    cdef Py_ssize_t m = indptr.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef double acc
    for i in range(m):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc


def csr_rmatvec(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices,
                double[::1] data, double[::1] x, double[::1] out):
    """out = A^T x for A in CSR layout; out must be pre-zeroed."""
    cdef Py_ssize_t m = indptr.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef double xi
    for i in range(m):
        xi = x[i]
        if xi != 0.0:
            for p in range(indptr[i], indptr[i + 1]):
                out[indices[p]] += data[p] * xi
