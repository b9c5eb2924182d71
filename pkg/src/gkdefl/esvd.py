"""Elliptic singular triplets by three routes.

* :func:`esvd_direct` whitens A with the Cholesky factor of W and takes a
  dense SVD (exact triplets, desk scale only).
* :func:`esvd_restarted` runs a restarted, augmented Golub-Kahan
  bidiagonalization: each restart compresses the current search space onto
  the k target triplets plus the continuation vector and explores a fresh
  block of directions (approximate triplets, matrix-free).
* :func:`esvd_recycled` harvests the bidiagonalization scalars and vectors
  that a CRAIG solve produced anyway, combining the SVDs of two nested
  projected matrices per window (approximate triplets, zero extra products
  with A inside the solver).
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels
from .deflation import EllipticTriplets
from .errors import InsufficientTrace, SizeExceeded
from .solver import GkbProcess

DENSE_SVD_MAX_COLS = 4096


@dataclass(frozen=True)
class EsvdOptions:
    """Options for the iterative routes.

    ``eta`` is the maximum search-subspace dimension (must exceed k; the
    recycled route needs eta >= 2k+1). ``reorth`` in {'none','local','full'};
    smallest-value targeting defaults to 'full' because it is the most
    round-off sensitive. The restarted route stops on the first target
    triplet's scalar residual; ``stop_all_k`` demands it of every triplet.
    """

    k: int
    target: str = "smallest"
    eta: int = None
    tol: float = 1e-8
    max_iter: int = 100
    reorth: str = None
    stop_all_k: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.target not in ("smallest", "largest"):
            raise ValueError("target must be 'smallest' or 'largest'")
        if self.eta is not None and self.eta <= self.k:
            raise ValueError("eta must exceed k")
        if self.reorth is not None and self.reorth not in ("none", "local", "full"):
            raise ValueError("reorth must be 'none', 'local' or 'full'")

    def resolved(self, n):
        eta = self.eta if self.eta is not None else min(n, max(2 * self.k + 1, 20))
        eta = min(eta, n)
        reorth = self.reorth or ("full" if self.target == "smallest" else "local")
        return eta, reorth


@dataclass
class TripletResiduals:
    """Per-triplet accuracy measures, both relative to sigma[0].

    ``scalar`` re-measures the adjoint identity ||A^T u_i - sigma_i v_i||
    (equal to the beta*|last entry of U_s| stopping quantity in exact
    arithmetic); ``vector`` measures ||A v_i - sigma_i W u_i||.
    """

    scalar: np.ndarray
    vector: np.ndarray

    def max(self):
        vals = [v.max() for v in (self.scalar, self.vector) if len(v)]
        return float(max(vals)) if vals else 0.0


def triplet_residuals(system, triplets):
    """Recompute both residual measures for any triplet set."""
    k = triplets.k
    if k == 0:
        return TripletResiduals(np.zeros(0), np.zeros(0))
    A, W = system.A, system.W
    scale = triplets.sigma[0] if triplets.sigma[0] > 0 else 1.0
    adj = A.T @ triplets.U - triplets.V * triplets.sigma
    fwd = A @ triplets.V - (W @ triplets.U) * triplets.sigma
    return TripletResiduals(np.linalg.norm(adj, axis=0) / scale,
                            np.linalg.norm(fwd, axis=0) / scale)


@dataclass
class EsvdResult:
    triplets: EllipticTriplets
    residuals: TripletResiduals
    restarts: int
    converged: bool


def _select_target(svals, k, target):
    """Column indices of the k target values in a descending SVD."""
    if target == "largest":
        return np.arange(min(k, len(svals)))
    return np.arange(max(len(svals) - k, 0), len(svals))


def _tie_break(sigma, V):
    """Stable order for (numerically) equal values: ascending index of the
    dominant component of the right vector."""
    order = np.arange(len(sigma))
    i = 0
    while i < len(sigma):
        j = i + 1
        while j < len(sigma) and abs(sigma[j] - sigma[i]) <= 1e-12 * max(sigma[0], 1e-300):
            j += 1
        if j - i > 1:
            block = order[i:j]
            dom = [int(np.argmax(np.abs(V[:, c]))) for c in block]
            order[i:j] = block[np.argsort(dom, kind="stable")]
        i = j
    return order


def esvd_direct(system, k, target="smallest", max_cols=DENSE_SVD_MAX_COLS, force=False):
    """Exact triplets via a dense SVD of the whitened block L^{-1} A.

    Left vectors are mapped back with the inverse-transpose factor so that
    U^T W U = I. Refuses for more than ``max_cols`` columns unless forced.
    """
    m, n = system.A.shape
    if n > max_cols and not force:
        raise SizeExceeded(
            f"dense route refused for {n} > {max_cols} columns; use esvd_restarted")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    factor = system.factor()
    Adense = system.A.toarray()
    Awhite = np.empty_like(Adense)
    for j in range(n):
        Awhite[:, j] = factor.whiten(Adense[:, j])
    Uw, svals, Vt = np.linalg.svd(Awhite, full_matrices=False)
    order = _tie_break(svals, Vt.T)
    svals, Uw, Vt = svals[order], Uw[:, order], Vt[order]
    cols = _select_target(svals, k, target)
    U = np.column_stack([factor.unwhiten_t(Uw[:, j]) for j in cols])
    t = EllipticTriplets(U, svals[cols], Vt[cols].T, exactness="exact",
                         residuals=np.zeros(len(cols)))
    return t


def gkb_restarted(system, factor, v_start, u0, steps, reorth="full",
                  reorth_bases=None):
    """One augmented bidiagonalization sweep.

    ``u0`` is the left vector the first new direction is W-orthogonalized
    against (zero/None on the first call); ``reorth_bases=(U, V)`` adds
    orthogonalization against already-accepted triplet vectors.
    """
    amv = _kernels.MatVec(system.A)
    wmv = _kernels.MatVec(system.W)
    if u0 is not None and not np.any(u0):
        u0 = None
    reorth_U = reorth_V = None
    if reorth_bases is not None:
        reorth_U, reorth_V = reorth_bases
    proc = GkbProcess(amv.mv, amv.rmv, factor, wmv.mv, v_start, u0=u0,
                      reorth=reorth, reorth_U=reorth_U, reorth_V=reorth_V,
                      keep_vectors=True)
    for _ in range(steps):
        if proc.step() is None:
            break
    return proc.factors()


def esvd_restarted(system, opts, rng=None):
    """Restarted augmented bidiagonalization eigensolver.

    Returns an :class:`EsvdResult`. The stopping scalar is
    beta * |last entry of the first target column of U_s| / sigma_first;
    on convergence the *previous* outer iterate is returned. When max_iter
    is exhausted the latest iterate is returned with ``converged=False``.
    """
    n = system.n
    eta, reorth = opts.resolved(n)
    k = opts.k
    if eta <= k + 1:
        raise ValueError(f"eta = {eta} leaves no room for new directions beyond k = {k}")
    rng = rng or np.random.default_rng(0)
    factor = system.factor()
    amv = _kernels.MatVec(system.A)

    fac = gkb_restarted(system, factor, rng.standard_normal(n), None, eta,
                        reorth=reorth)
    U_b, V_b, B = fac.U, fac.V, fac.B()
    resid, beta = fac.residual, fac.beta_next

    prev = None
    converged = False
    restarts = 0
    U_i = V_i = None
    sig = scal = None
    for i in range(1, opts.max_iter + 1):
        restarts = i
        Us, svals, Vst = np.linalg.svd(B)
        cols = _select_target(svals, k, opts.target)
        Us_k, sig, Vs_k = Us[:, cols], svals[cols], Vst[cols].T
        U_i = U_b @ Us_k
        V_i = V_b @ Vs_k
        scal = beta * np.abs(Us_k[-1, :]) / max(sig[0], 1e-300)
        stop_val = scal.max() if opts.stop_all_k else scal[0]
        if stop_val < opts.tol:
            converged = True
            if prev is not None:
                U_i, V_i, sig, scal = prev
            break
        prev = (U_i, V_i, sig, scal)
        if i == opts.max_iter:
            break

        # augment: normalized continuation vector plus one fresh left vector
        v_new = resid / beta
        t = amv.mv(v_new)
        d = U_i.T @ t
        w = factor.solve(t) - U_i @ d
        if reorth == "full":
            w = w - U_i @ (U_i.T @ (system.W @ w))
        alpha = float(np.sqrt(max(w @ (system.W @ w), 0.0)))
        u_new = w / alpha
        sig_aug = np.zeros((k + 1, k + 1))
        np.fill_diagonal(sig_aug[:k, :k], sig)
        sig_aug[:k, k] = d
        sig_aug[k, k] = alpha

        # the continuation residual of the restarted factorization; it is
        # orthogonal to the restart basis [V_i, v_new] in exact arithmetic
        # (not to the discarded directions, which it legitimately revisits)
        v_next = amv.rmv(u_new) - alpha * v_new
        basis = np.column_stack([V_i, v_new])
        for _ in range(2 if reorth == "full" else 1):
            v_next = v_next - basis @ (basis.T @ v_next)
        beta_next = float(np.linalg.norm(v_next))

        U_aug = np.column_stack([U_i, u_new])
        V_aug = np.column_stack([V_i, v_new])
        inner = gkb_restarted(system, factor, v_next, u_new, eta - k - 1,
                              reorth=reorth,
                              reorth_bases=(U_aug, V_aug) if reorth == "full" else None)
        s2 = inner.steps
        U_b = np.column_stack([U_aug, inner.U]) if s2 else U_aug
        V_b = np.column_stack([V_aug, inner.V]) if s2 else V_aug
        B = np.zeros((k + 1 + s2, k + 1 + s2))
        B[:k + 1, :k + 1] = sig_aug
        if s2:
            B[k, k + 1] = beta_next
            B[k + 1:, k + 1:] = inner.B()
        resid, beta = inner.residual, inner.beta_next

    triplets = EllipticTriplets(U_i, sig, V_i, exactness="approximate",
                                residuals=np.asarray(scal))
    return EsvdResult(triplets, triplet_residuals(system, triplets),
                      restarts, converged)


def _window_bidiagonal(trace, start, stop):
    s = stop - start
    B = np.zeros((s, s))
    np.fill_diagonal(B, trace.alphas[start:stop])
    for j in range(1, s):
        B[j - 1, j] = trace.betas[start + j]
    return B


def _orth(M):
    if M.shape[1] == 0:
        return M
    return scipy.linalg.orth(M)


def esvd_recycled(system, trace, opts):
    """Triplets from the bidiagonalization trace of a finished CRAIG solve.

    Processes the trace in windows: the first of size eta, later ones of
    size eta - 2k, each time combining the k target triplets of the
    projected matrix and of its leading principal submatrix, then refining
    with a small Rayleigh-Ritz SVD. The solver itself is never touched, so
    its iterates are bitwise those of an untraced run.
    """
    if trace is None or trace.steps == 0:
        raise InsufficientTrace("no bidiagonalization trace available")
    n = system.n
    eta, _ = opts.resolved(n)
    k = opts.k
    if eta < 2 * k + 1:
        raise ValueError(f"recycled route needs eta >= 2k+1, got eta={eta}, k={k}")
    cols = trace.steps
    amv = _kernels.MatVec(system.A)

    U_acc = V_acc = None     # recycled bases (m x rho, n x rho)
    sig_acc = None
    coupling = None
    pos = 0
    while pos < cols:
        rho = 0 if U_acc is None else U_acc.shape[1]
        s = min(eta - rho, cols - pos)
        if s < 1:
            break
        U_win = trace.U[:, pos:pos + s]
        V_win = trace.V[:, pos:pos + s]
        B_win = _window_bidiagonal(trace, pos, pos + s)
        if rho == 0:
            B = B_win
            Uhat, Vhat = U_win, V_win
        else:
            B = np.zeros((rho + s, rho + s))
            np.fill_diagonal(B[:rho, :rho], sig_acc)
            B[:rho, rho] = coupling
            B[rho:, rho:] = B_win
            Uhat = np.column_stack([U_acc, U_win])
            Vhat = np.column_stack([V_acc, V_win])
        dim = B.shape[0]

        Us1, sv1, Vt1 = np.linalg.svd(B)
        c1 = _select_target(sv1, k, opts.target)
        Us2, sv2, Vt2 = np.linalg.svd(B[:dim - 1, :dim - 1])
        c2 = _select_target(sv2, k, opts.target)
        pad = np.zeros((1, len(c2)))
        U_so = _orth(np.column_stack([Us1[:, c1], np.vstack([Us2[:, c2], pad])]))
        V_so = _orth(np.column_stack([Vt1[c1].T, np.vstack([Vt2[c2].T, pad])]))
        H = U_so.T @ B @ V_so
        Us3, sv3, Vt3 = np.linalg.svd(H, full_matrices=False)
        U_acc = Uhat @ (U_so @ Us3)
        V_acc = Vhat @ (V_so @ Vt3.T)
        sig_acc = sv3
        pos += s
        if pos >= cols:
            break
        v_next = trace.V[:, pos]
        coupling = U_acc.T @ amv.mv(v_next)

    csel = _select_target(sig_acc, k, opts.target)
    triplets = EllipticTriplets(U_acc[:, csel], sig_acc[csel], V_acc[:, csel],
                                exactness="approximate")
    res = triplet_residuals(system, triplets)
    triplets.residuals = res.scalar
    return triplets
