"""Sparse SPD operator services: factorization, inverse application, W-norms.

The (1,1)-block W of a saddle-point system is factorized once as
P W P^T = L L^T (sparse Cholesky with a fill-reducing ordering) and the
factor is reused by every solver. Triangular solves go through the kernel
backend in :mod:`gkdefl._kernels`.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _kernels
from .errors import (
    DimensionMismatch,
    FactorizationFailed,
    NotPositiveDefinite,
    NotSymmetric,
)

SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class Tolerances:
    """Accuracy knobs shared across modules; all strictly positive."""

    factor_tol: float = 1e-12
    ortho_tol: float = 1e-10
    solve_tol: float = 1e-8

    def __post_init__(self):
        for name in ("factor_tol", "ortho_tol", "solve_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


DEFAULT_TOL = Tolerances()


def check_symmetric(W, rtol=SYMMETRY_RTOL):
    """Raise NotSymmetric unless max|W - W^T| <= rtol * max|W|."""
    W = sp.csr_matrix(W)
    if W.shape[0] != W.shape[1]:
        raise NotSymmetric(f"matrix is {W.shape[0]}x{W.shape[1]}, not square")
    diff = (W - W.T).tocoo()
    defect = 0.0 if diff.nnz == 0 else float(np.abs(diff.data).max())
    scale = float(np.abs(W.data).max()) if W.nnz else 0.0
    if defect > rtol * max(scale, 1e-300):
        raise NotSymmetric(f"symmetry defect {defect:.3e} exceeds {rtol:.1e} * {scale:.3e}")
    return W


class SPDFactor:
    """Sparse Cholesky factor of an SPD matrix with fill-reducing ordering.

    Satisfies P W P^T = L L^T where P permutes index i to ``perm[i]``.
    The permutation is internal: callers only see ``solve`` acting as W^{-1}.
    """

    def __init__(self, L, perm, W, factor_tol):
        self.L = sp.csc_matrix(L)
        self.perm = np.asarray(perm, dtype=np.intp)
        self.m = self.L.shape[0]
        self._W = W
        self._tri = _kernels.TriangularSolver(self.L)
        self._iperm = np.argsort(self.perm)
        self.factor_tol = factor_tol
        self._probe_check()

    def _probe_check(self):
        # deterministic probe: apply_inverse(W x) must reproduce x
        rng = np.random.default_rng(12345)
        x = rng.standard_normal(self.m)
        err = np.linalg.norm(self.solve(self._W @ x) - x) / np.linalg.norm(x)
        if not err <= self.factor_tol * 1e3:
            raise FactorizationFailed(
                f"factor probe residual {err:.3e} exceeds {self.factor_tol * 1e3:.1e}")

    def solve(self, x):
        """W^{-1} x via two triangular solves in the permuted ordering."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.m,):
            raise DimensionMismatch(f"expected vector of length {self.m}, got {x.shape}")
        z = x[self.perm]
        z = self._tri.solve_lower(z)
        z = self._tri.solve_lower_t(z)
        out = np.empty_like(z)
        out[self.perm] = z
        return out

    def solve_many(self, X):
        """W^{-1} applied to each column of a dense matrix."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            out[:, j] = self.solve(X[:, j])
        return out

    def whiten(self, x):
        """L^{-1} P x: maps to the coordinates in which W becomes identity."""
        return self._tri.solve_lower(np.asarray(x, dtype=np.float64)[self.perm])

    def unwhiten_t(self, y):
        """P^T L^{-T} y: adjoint-inverse map back from whitened coordinates."""
        z = self._tri.solve_lower_t(np.asarray(y, dtype=np.float64))
        out = np.empty_like(z)
        out[self.perm] = z
        return out

    def colorize(self, x):
        """(P^T L) x: multiplies by the implicit square root G with G G^T = W."""
        out = np.empty(self.m)
        out[self.perm] = self.L @ np.asarray(x, dtype=np.float64)
        return out

    def colorize_t(self, x):
        """L^T P x: adjoint of :meth:`colorize` (G^T x)."""
        return self.L.T @ np.asarray(x, dtype=np.float64)[self.perm]


def spd_factorize(W, tol=DEFAULT_TOL):
    """Sparse Cholesky of an SPD matrix.

    Uses SuperLU in symmetric mode with diagonal pivoting disabled, which
    yields W[p,p] = L U with U = D L^T; the Cholesky factor is L sqrt(D).

    Raises NotSymmetric or NotPositiveDefinite when W fails the respective
    check.
    """
    W = check_symmetric(W).tocsc()
    m = W.shape[0]
    if m == 0:
        raise FactorizationFailed("empty matrix")
    try:
        lu = splu(W, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                  options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        msg = str(exc)
        if "singular" in msg.lower():
            raise NotPositiveDefinite(f"factorization hit a zero pivot: {msg}") from exc
        raise FactorizationFailed(msg) from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise FactorizationFailed("symmetric factorization produced unsymmetric pivoting")
    d = lu.U.diagonal()
    if np.any(d <= 0.0):
        raise NotPositiveDefinite(
            f"nonpositive pivot {d.min():.3e} encountered; matrix is not positive definite")
    L = lu.L @ sp.diags(np.sqrt(d))
    perm = np.argsort(lu.perm_c)
    return SPDFactor(L, perm, W.tocsr(), tol.factor_tol)


def apply_inverse(factor, x):
    """y = W^{-1} x for a factorized W."""
    return factor.solve(x)


def w_inner(W, x, y):
    """Inner product x^T W y."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or W.shape[1] != x.shape[0]:
        raise DimensionMismatch(
            f"W is {W.shape}, x has shape {x.shape}, y has shape {y.shape}")
    return float(x @ (W @ y))


def w_norm(W, x):
    """Norm sqrt(x^T W x); clamps tiny negative round-off to zero."""
    return float(np.sqrt(max(w_inner(W, x, x), 0.0)))
