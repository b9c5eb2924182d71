"""Block-diagonally preconditioned MINRES on the monolithic system.

Symmetric preconditioning by blkdiag(L, I)^{-1} turns [[W, A], [A^T, 0]]
into K = [[I, At], [At^T, 0]] with At = L^{-1} A, whose spectrum is
{1 (m-n times)} plus the pair branches 1/2 +- sqrt(sigma_i^2 + 1/4) over
the elliptic singular values sigma_i. Deflation follows the projected-
operator recipe: MINRES runs on (I - K Y E^{-1} Y^T) K with E = Y^T K Y and
every iterate is corrected by Y E^{-1} Y^T (b - K x).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import IllConditionedCoarse, SingularTriplet
from .linops import DEFAULT_TOL


@dataclass(frozen=True)
class MinresOptions:
    max_iter: int = None
    tol: float = DEFAULT_TOL.solve_tol

    def __post_init__(self):
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


class MonolithicSystem:
    """Implicit preconditioned operator K and its right-hand side."""

    def __init__(self, system):
        self.system = system
        self.factor = system.factor()
        self._amv = _kernels.MatVec(system.A)
        self.m, self.n = system.A.shape

    def matvec(self, z):
        x, y = z[:self.m], z[self.m:]
        top = x + self.factor.whiten(self._amv.mv(y))
        bottom = self._amv.rmv(self.factor.unwhiten_t(x))
        return np.concatenate([top, bottom])

    def rhs(self):
        return np.concatenate([self.factor.whiten(self.system.g), self.system.r])

    def initial_guess(self):
        """x0 = [L^{-1} g; 0]: leaves exactly the constraint residual
        [0; r - A^T W^{-1} g], the same starting residual CRAIG eliminates
        up front by its W^{-1} g shift."""
        return np.concatenate([self.factor.whiten(self.system.g),
                               np.zeros(self.n)])

    def to_solution(self, z):
        """Back-map the whitened velocity part: u = L^{-T}-side of z."""
        return self.factor.unwhiten_t(z[:self.m]), z[self.m:].copy()

    def symmetry_defect(self, seed=0):
        """max |<Kz1, z2> - <z1, Kz2>| on unit probes (should be ~1e-16)."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(4):
            z1 = rng.standard_normal(self.m + self.n)
            z2 = rng.standard_normal(self.m + self.n)
            z1 /= np.linalg.norm(z1)
            z2 /= np.linalg.norm(z2)
            worst = max(worst, abs(self.matvec(z1) @ z2 - z1 @ self.matvec(z2)))
        return worst


@dataclass
class MinresReport:
    u: np.ndarray
    p: np.ndarray
    iterations: int
    resid_precond: np.ndarray
    converged: bool
    err_true: np.ndarray = None

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,resid_precond,err_true\n")
            for k in range(self.iterations):
                err = "" if self.err_true is None else repr(float(self.err_true[k]))
                fh.write("%d,%r,%s\n" % (k + 1, float(self.resid_precond[k]), err))
        return path


def _minres_core(op, b, tol, max_iter, callback=None, x0=None):
    """Textbook MINRES (Lanczos + Givens); returns (x, resids, converged).

    ``resids`` holds phibar after each iteration, a monotone recurrence for
    the residual norm (identical to the true residual in exact arithmetic).
    """
    N = len(b)
    x = np.zeros(N) if x0 is None else np.array(x0, dtype=np.float64)
    r0 = b if x0 is None else b - op(x)
    beta1 = np.linalg.norm(r0)
    if beta1 == 0.0:
        return x, np.zeros(0), True
    y = r0.copy()
    r1 = r0.copy()
    r2 = r0.copy()
    oldb, beta = 0.0, beta1
    dbar, epsln = 0.0, 0.0
    phibar = beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(N)
    w2 = np.zeros(N)
    resids = []
    converged = False
    for itn in range(1, max_iter + 1):
        v = y / beta
        y = op(v)
        if itn >= 2:
            y -= (beta / oldb) * r1
        alfa = v @ y
        y -= (alfa / beta) * r2
        r1 = r2
        r2 = y.copy()
        oldb, beta = beta, np.linalg.norm(y)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.sqrt(gbar * gbar + beta * beta), 1e-300)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        resids.append(phibar)
        if callback is not None:
            callback(itn, x)
        if phibar <= tol * beta1:
            converged = True
            break
        if beta <= 1e-300:
            converged = True
            break
    return x, np.array(resids), converged


def minres_preconditioned(system, opts=None, reference=None, iterate_callback=None):
    """Preconditioned MINRES; maps the solution back through the factor.

    ``reference`` is an optional (u, p) pair for the true-error column;
    ``iterate_callback(k, u, p)`` sees every back-mapped iterate.
    """
    opts = opts or MinresOptions()
    mono = MonolithicSystem(system)
    max_iter = opts.max_iter if opts.max_iter is not None else 3 * (mono.m + mono.n)
    errs = [] if reference is not None else None
    ref_vec = None if reference is None else np.concatenate(reference)
    ref_norm = 1.0 if ref_vec is None else max(np.linalg.norm(ref_vec), 1e-300)

    def cb(k, z):
        if errs is None and iterate_callback is None:
            return
        u, p = mono.to_solution(z)
        if errs is not None:
            errs.append(np.linalg.norm(np.concatenate([u, p]) - ref_vec) / ref_norm)
        if iterate_callback is not None:
            iterate_callback(k, u, p)

    z, resids, converged = _minres_core(mono.matvec, mono.rhs(), opts.tol,
                                        max_iter, callback=cb,
                                        x0=mono.initial_guess())
    u, p = mono.to_solution(z)
    return MinresReport(u, p, len(resids), resids, converged,
                        err_true=np.array(errs) if errs is not None else None)


def saddle_eig_from_sigma(sigma):
    """Eigenvalue pair 1/2 +- sqrt(sigma^2 + 1/4) of the preconditioned matrix."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    root = np.sqrt(sigma * sigma + 0.25)
    return 0.5 + root, 0.5 - root


def saddle_eigvecs_from_triplets(triplets, system):
    """Deflation basis of K from elliptic triplets: 2 columns per triplet.

    Each triplet (u, sigma, v) yields eigenvectors [G^T u; (sigma/lambda) v]
    for both branches lambda of :func:`saddle_eig_from_sigma` (from
    lambda^2 - lambda - sigma^2 = 0). Columns are normalized.
    """
    factor = system.factor()
    m, n = system.A.shape
    cols = []
    for i in range(triplets.k):
        sigma = triplets.sigma[i]
        lam_p, lam_m = saddle_eig_from_sigma(sigma)
        if abs(lam_m) < 1e-300:
            raise SingularTriplet("sigma = 0 degenerates the minus-branch eigenvector")
        ut = factor.colorize_t(triplets.U[:, i])
        for lam in (lam_p, lam_m):
            y = np.concatenate([ut, (sigma / lam) * triplets.V[:, i]])
            cols.append(y / np.linalg.norm(y))
    if not cols:
        return np.zeros((m + n, 0))
    return np.column_stack(cols)


def minres_deflated(system, Y, opts=None, reference=None, iterate_callback=None):
    """MINRES on the projected operator with per-iterate coarse correction.

    Empty Y reduces to :func:`minres_preconditioned`. Raises
    IllConditionedCoarse when cond(Y^T K Y) exceeds 1e12.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] == 0:
        return minres_preconditioned(system, opts, reference=reference,
                                     iterate_callback=iterate_callback)
    opts = opts or MinresOptions()
    mono = MonolithicSystem(system)
    max_iter = opts.max_iter if opts.max_iter is not None else 3 * (mono.m + mono.n)
    KY = np.column_stack([mono.matvec(Y[:, j]) for j in range(Y.shape[1])])
    E = Y.T @ KY
    if np.linalg.cond(E) > 1e12:
        raise IllConditionedCoarse(f"cond(Y^T K Y) = {np.linalg.cond(E):.3e}")
    lu = scipy.linalg.lu_factor(E)
    b = mono.rhs()

    def project(t):
        return t - KY @ scipy.linalg.lu_solve(lu, Y.T @ t)

    def op(z):
        return project(mono.matvec(z))

    def correct(z):
        return z + Y @ scipy.linalg.lu_solve(lu, Y.T @ (b - mono.matvec(z)))

    errs = [] if reference is not None else None
    ref_vec = None if reference is None else np.concatenate(reference)
    ref_norm = 1.0 if ref_vec is None else max(np.linalg.norm(ref_vec), 1e-300)

    def cb(k, z):
        if errs is None and iterate_callback is None:
            return
        u, p = mono.to_solution(correct(z))
        if errs is not None:
            errs.append(np.linalg.norm(np.concatenate([u, p]) - ref_vec) / ref_norm)
        if iterate_callback is not None:
            iterate_callback(k, u, p)

    x0 = mono.initial_guess()
    z, resids, converged = _minres_core(op, project(b), opts.tol, max_iter,
                                        callback=cb, x0=x0)
    u, p = mono.to_solution(correct(z))
    return MinresReport(u, p, len(resids), resids, converged,
                        err_true=np.array(errs) if errs is not None else None)
