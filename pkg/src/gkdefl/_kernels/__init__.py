"""Kernel backend selection.

The hot operations of every solver in this package are sparse triangular
solves (applying the Cholesky factor of the velocity block) and sparse
matrix-vector products. Both exist in two interchangeable implementations:

* ``_core`` -- Cython extension compiled at install time;
* a numpy/scipy fallback used when the extension is unavailable.

Set ``GKD_KERNELS=python`` or ``GKD_KERNELS=compiled`` to force a backend
(the latter raises if the extension did not build). ``benchmarks/
bench_kernels.py`` compares the two.
"""

import os

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

try:
    from . import _core
except ImportError:
    _core = None

_forced = os.environ.get("GKD_KERNELS", "").strip().lower()
if _forced not in ("", "compiled", "python"):
    raise ValueError(f"GKD_KERNELS must be 'compiled' or 'python', got {_forced!r}")
if _forced == "compiled" and _core is None:
    raise ImportError("GKD_KERNELS=compiled but the gkdefl._kernels._core extension is missing")

_use_compiled = _core is not None and _forced != "python"


def backend_name():
    return "compiled" if _use_compiled else "python"


def have_compiled():
    return _core is not None


def _csr_parts(A):
    A = sp.csr_matrix(A)
    A.sort_indices()
    return (np.ascontiguousarray(A.indptr, dtype=np.int32),
            np.ascontiguousarray(A.indices, dtype=np.int32),
            np.ascontiguousarray(A.data, dtype=np.float64))


class TriangularSolver:
    """Applies L^{-1} and L^{-T} for a sparse lower-triangular factor L.

    The factor must carry an explicit, strictly positive diagonal (true for
    any Cholesky factor).
    """

    def __init__(self, L, compiled=None):
        L = sp.csc_matrix(L)
        L.sort_indices()
        if L.shape[0] != L.shape[1]:
            raise ValueError("triangular factor must be square")
        self.n = L.shape[0]
        self._compiled = _use_compiled if compiled is None else compiled
        if self._compiled:
            self._indptr = np.ascontiguousarray(L.indptr, dtype=np.int32)
            self._indices = np.ascontiguousarray(L.indices, dtype=np.int32)
            self._data = np.ascontiguousarray(L.data, dtype=np.float64)
        else:
            # CSR copies once; scipy's triangular solve wants CSR input
            self._L_csr = L.tocsr()
            self._Lt_csr = L.T.tocsr()

    def solve_lower(self, b):
        """x with L x = b."""
        if self._compiled:
            x = np.array(b, dtype=np.float64, copy=True)
            _core.lower_solve_csc(self._indptr, self._indices, self._data, x)
            return x
        return spsolve_triangular(self._L_csr, b, lower=True)

    def solve_lower_t(self, b):
        """x with L^T x = b."""
        if self._compiled:
            x = np.array(b, dtype=np.float64, copy=True)
            _core.lower_t_solve_csc(self._indptr, self._indices, self._data, x)
            return x
        return spsolve_triangular(self._Lt_csr, b, lower=False)


class MatVec:
    """Forward and adjoint products with a fixed sparse matrix."""

    def __init__(self, A, compiled=None):
        A = sp.csr_matrix(A)
        self.shape = A.shape
        self._compiled = _use_compiled if compiled is None else compiled
        if self._compiled:
            self._indptr, self._indices, self._data = _csr_parts(A)
        else:
            self._A = A
            self._At = A.T.tocsr()

    def mv(self, x):
        """A x."""
        if self._compiled:
            out = np.empty(self.shape[0], dtype=np.float64)
            _core.csr_matvec(self._indptr, self._indices, self._data,
                             np.ascontiguousarray(x, dtype=np.float64), out)
            return out
        return self._A @ x

    def rmv(self, y):
        """A^T y."""
        if self._compiled:
            out = np.zeros(self.shape[1], dtype=np.float64)
            _core.csr_rmatvec(self._indptr, self._indices, self._data,
                              np.ascontiguousarray(y, dtype=np.float64), out)
            return out
        return self._At @ y
