"""Implicit deflation operators built from elliptic singular triplets.

For triplets (U, sigma, V) with A V = W U Sigma, U^T W U = I, V^T V = I the
operators are

    M = V Sigma^{-1} U^T          (approximate left-inverse of A)
    P = I_m - A M                 (W-orthogonal projector)
    Q = I_n - M A                 (orthogonal projector)

None of them is ever materialized: every application is a chain of thin
products. The deflated solve replaces only the forward product A x by
(A Q) x = (P A) x inside CRAIG (one-sided augmentation) and hands the
constraint side Q^T r to the solver; :func:`correct_solution` then restores
the removed solution component.

``mode='simplified'`` replaces M A by V V^T (exact for exact triplets),
which avoids all products of order m in the Q applications.
"""

import os
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg

from . import _kernels
from .errors import DimensionMismatch, SingularTriplet
from .linops import DEFAULT_TOL
from .solver import CraigOptions, _craig_engine

SIGMA_DROP_RTOL = 1e-14


@dataclass
class EllipticTriplets:
    """Partial elliptic SVD: U (m x k), sigma descending, V (n x k).

    ``exactness`` is 'exact' or 'approximate'; approximate triplets carry
    the producer's per-triplet residual norms in ``residuals``.
    """

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    exactness: str = "exact"
    residuals: np.ndarray = None

    def __post_init__(self):
        self.U = np.atleast_2d(np.asarray(self.U, dtype=np.float64))
        self.V = np.atleast_2d(np.asarray(self.V, dtype=np.float64))
        self.sigma = np.asarray(self.sigma, dtype=np.float64).ravel()
        if self.U.shape[1] != len(self.sigma) or self.V.shape[1] != len(self.sigma):
            raise DimensionMismatch(
                f"U has {self.U.shape[1]} columns, V {self.V.shape[1]}, "
                f"sigma {len(self.sigma)} values")
        if len(self.sigma) > 1 and np.any(np.diff(self.sigma) > 1e-12 * self.sigma[0]):
            raise ValueError("sigma must be stored in descending order")

    @property
    def k(self):
        return len(self.sigma)

    def orthogonality_defects(self, W):
        """(max|U^T W U - I|, max|V^T V - I|)."""
        if self.k == 0:
            return 0.0, 0.0
        du = np.abs(self.U.T @ (W @ self.U) - np.eye(self.k)).max()
        dv = np.abs(self.V.T @ self.V - np.eye(self.k)).max()
        return float(du), float(dv)

    def validate(self, system, ortho_tol=DEFAULT_TOL.ortho_tol):
        du, dv = self.orthogonality_defects(system.W)
        if max(du, dv) > ortho_tol:
            raise ValueError(
                f"triplet orthogonality defect {max(du, dv):.3e} exceeds {ortho_tol:.1e}")
        return self


def save_triplets(triplets, directory, prefix="triplets"):
    """Write U.mtx, sigma.mtx, V.mtx (Matrix-Market array format)."""
    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name, arr in (("U", triplets.U), ("sigma", triplets.sigma.reshape(-1, 1)),
                      ("V", triplets.V)):
        path = os.path.join(directory, f"{prefix}_{name}.mtx")
        scipy.io.mmwrite(path, np.atleast_2d(np.asarray(arr, dtype=np.float64)),
                         precision=17)
        paths[name] = path
    return paths


def load_triplets(directory, prefix="triplets", exactness="approximate"):
    read = {name: np.asarray(scipy.io.mmread(os.path.join(directory, f"{prefix}_{name}.mtx")))
            for name in ("U", "sigma", "V")}
    return EllipticTriplets(read["U"], read["sigma"].ravel(), read["V"],
                            exactness=exactness)


class DeflationOperators:
    """Implicit M, P, Q over a triplet set bound to one system.

    ``mode='general'`` uses M = V Sigma^{-1} U^T everywhere;
    ``'simplified'`` replaces M A (hence Q) by V V^T. The coupling matrix
    may be a non-diagonal k x k Sigma = U^T A V produced by
    :meth:`from_basis` for bases that are not singular vectors.
    """

    def __init__(self, triplets, system, mode="general", sigma_matrix=None):
        if mode not in ("general", "simplified"):
            raise ValueError(f"unknown deflation mode {mode!r}")
        self.triplets = triplets
        self.mode = mode
        self.system = system
        self.U = triplets.U
        self.V = triplets.V
        self.k = triplets.k
        self._amv = _kernels.MatVec(system.A)
        self._lu = None
        if self.k and sigma_matrix is not None:
            self._lu = scipy.linalg.lu_factor(np.asarray(sigma_matrix, dtype=np.float64))
        elif self.k:
            sig = triplets.sigma
            if mode == "general" and np.any(sig <= SIGMA_DROP_RTOL * sig[0]):
                raise SingularTriplet(
                    f"sigma ratio below {SIGMA_DROP_RTOL:.0e}; "
                    "general-mode deflation would be singular")

    @classmethod
    def from_basis(cls, U, V, system, mode="general"):
        """Operators from a W-orthonormal U and orthonormal V that span the
        target subspaces without being singular vectors; Sigma := U^T A V."""
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        V = np.atleast_2d(np.asarray(V, dtype=np.float64))
        sigma_matrix = U.T @ (system.A @ V) if U.shape[1] else None
        svals = (np.linalg.svd(sigma_matrix, compute_uv=False)
                 if U.shape[1] else np.zeros(0))
        trip = EllipticTriplets(U, svals, V, exactness="approximate")
        return cls(trip, system, mode=mode, sigma_matrix=sigma_matrix)

    # -- small solves with the coupling matrix ------------------------------
    def _sigma_solve(self, rhs, transpose=False):
        if self._lu is not None:
            return scipy.linalg.lu_solve(self._lu, rhs, trans=1 if transpose else 0)
        return rhs / self.triplets.sigma

    # -- operator applications ----------------------------------------------
    def apply_M(self, x):
        """M x = V Sigma^{-1} U^T x (length m -> n)."""
        if self.k == 0:
            return np.zeros(self.system.n)
        return self.V @ self._sigma_solve(self.U.T @ x)

    def apply_Mt(self, y):
        """M^T y = U Sigma^{-T} V^T y (length n -> m)."""
        if self.k == 0:
            return np.zeros(self.system.m)
        return self.U @ self._sigma_solve(self.V.T @ y, transpose=True)

    def apply_P(self, x):
        """P x = x - A M x."""
        if self.k == 0:
            return np.asarray(x, dtype=np.float64)
        return x - self._amv.mv(self.apply_M(x))

    def apply_Pt(self, x):
        """P^T x = x - M^T A^T x."""
        if self.k == 0:
            return np.asarray(x, dtype=np.float64)
        return x - self.apply_Mt(self._amv.rmv(x))

    def apply_Q(self, y):
        """Q y = y - M A y (general) or y - V V^T y (simplified)."""
        if self.k == 0:
            return np.asarray(y, dtype=np.float64)
        if self.mode == "simplified":
            return y - self.V @ (self.V.T @ y)
        return y - self.apply_M(self._amv.mv(y))

    def apply_Qt(self, y):
        """Q^T y = y - A^T M^T y (general) or y - V V^T y (simplified)."""
        if self.k == 0:
            return np.asarray(y, dtype=np.float64)
        if self.mode == "simplified":
            return y - self.V @ (self.V.T @ y)
        return y - self._amv.rmv(self.apply_Mt(y))

    def forward(self, x):
        """Deflated product (P A) x = (A Q) x as thin chains."""
        if self.k == 0:
            return self._amv.mv(x)
        if self.mode == "simplified":
            return self._amv.mv(x - self.V @ (self.V.T @ x))
        t = self._amv.mv(x)
        return t - self._amv.mv(self.apply_M(t))


def make_deflation(triplets, system, mode="general"):
    """Operator handle for a triplet set; see :class:`DeflationOperators`."""
    return DeflationOperators(triplets, system, mode=mode)


def deflated_matvec(A, defl, x):
    """(P A) x for a vector x of length n.

    General mode computes A x - A V Sigma^{-1} U^T A x, simplified mode
    A (x - V V^T x); both avoid any m x m or n x n intermediate.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.shape[1],):
        raise DimensionMismatch(f"x must have length {A.shape[1]}, got {x.shape}")
    return defl.forward(x)


def deflated_solve(system, defl, opts=None, reference=None, iterate_callback=None):
    """Augmented CRAIG on the deflated system (W, A Q, g, Q^T r).

    Only the forward product is deflated; A^T u products are untouched. The
    triplet bases are passed to the bidiagonalization so each new Krylov
    direction is projected off the deflated subspace (a no-op in exact
    arithmetic for exact triplets, and the only thing preventing the
    removed directions from re-entering at a geometric rate in finite
    precision). Returns the report of the deflated system: pass (u, p)
    through :func:`correct_solution` to recover the original solution.
    """
    opts = opts or CraigOptions()
    factor = system.factor()
    amv = _kernels.MatVec(system.A)
    wmv = _kernels.MatVec(system.W)
    b = defl.apply_Qt(system.r - amv.rmv(factor.solve(system.g)))
    report = _craig_engine(system, factor, defl.forward, amv.rmv, b, opts,
                           reference=reference, iterate_callback=iterate_callback,
                           wmv=wmv.mv,
                           stab_U=defl.U if defl.k else None,
                           stab_V=defl.V if defl.k else None)
    report.label = system.label
    return report


def correct_solution(defl, system, u_hat, p_hat):
    """Map the deflated solve's (u_hat, p_hat) to the original solution.

    p = Q p_hat + M g - M W M^T r,  u = P^T u_hat + M^T r, with M W M^T r
    evaluated as the chain U^T, Sigma^{-1}, V, W (never a dense matrix).
    """
    u_hat = np.asarray(u_hat, dtype=np.float64)
    p_hat = np.asarray(p_hat, dtype=np.float64)
    if u_hat.shape != (system.m,) or p_hat.shape != (system.n,):
        raise DimensionMismatch(
            f"expected lengths {system.m}/{system.n}, got {u_hat.shape}/{p_hat.shape}")
    if defl.k == 0:
        return u_hat, p_hat
    mt_r = defl.apply_Mt(system.r)
    p = defl.apply_Q(p_hat) + defl.apply_M(system.g) - defl.apply_M(system.W @ mt_r)
    u = defl.apply_Pt(u_hat) + mt_r
    return u, p
