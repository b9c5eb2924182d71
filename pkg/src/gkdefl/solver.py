"""Generalized Golub-Kahan bidiagonalization and the CRAIG solver.

One bidiagonalization engine (:class:`GkbProcess`) drives everything: plain
factor extraction (:func:`gkb_run`), the CRAIG solve (:func:`craig_solve`),
and the restarted/augmented variants used by the eigensolvers. The process
builds W-orthonormal left vectors u_k and orthonormal right vectors v_k with

    A v_k = W (beta_k u_{k-1} + alpha_k u_k),
    A^T u_k = alpha_k v_k + beta_{k+1} v_{k+1},

so that A V = W U B for the upper-bidiagonal B with diagonal alpha and
superdiagonal beta. CRAIG updates the solution with scalar recurrences
instead of solving with B at every step.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch
from .linops import DEFAULT_TOL

BREAKDOWN_TOL = 1e-14
BREAKDOWN_RTOL = 1e-12   # relative to the largest coefficient seen so far


class _Basis:
    """Column store with amortized growth; supports fast orthogonalization."""

    def __init__(self, dim):
        self.dim = dim
        self._buf = np.empty((dim, 16))
        self.k = 0

    def append(self, vec):
        if self.k == self._buf.shape[1]:
            new = np.empty((self.dim, 2 * self.k))
            new[:, :self.k] = self._buf
            self._buf = new
        self._buf[:, self.k] = vec
        self.k += 1

    @property
    def view(self):
        return self._buf[:, :self.k]

    def array(self):
        return self.view.copy()


def _project_out(vec, basis, weighted=None):
    """vec minus its components along the basis columns (classical GS pass).

    ``weighted`` supplies W @ vec for W-inner-product orthogonalization.
    """
    if basis is None or basis.shape[1] == 0:
        return vec
    coeff = basis.T @ (vec if weighted is None else weighted)
    return vec - basis @ coeff


@dataclass
class BidiagFactors:
    """Partial generalized Golub-Kahan factorization.

    U (m x eta) is W-orthonormal, V (n x eta) orthonormal, and the bidiagonal
    coupling has diagonal ``alphas`` and superdiagonal ``betas[1:]``
    (``betas[0]`` normalized the starting vector). ``residual`` is the raw
    continuation vector, ``beta_next`` its norm.
    """

    U: np.ndarray
    V: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    residual: np.ndarray
    beta_next: float
    breakdown: bool = False

    @property
    def steps(self):
        return len(self.alphas)

    def B(self):
        """Dense eta x eta upper-bidiagonal matrix."""
        eta = self.steps
        B = np.zeros((eta, eta))
        np.fill_diagonal(B, self.alphas)
        for j in range(1, eta):
            B[j - 1, j] = self.betas[j]
        return B


class GkbProcess:
    """Stepwise generalized Golub-Kahan bidiagonalization.

    Parameters
    ----------
    forward, adjoint : callables for A x and A^T y (forward may be deflated).
    factor : SPDFactor applying W^{-1}.
    wmv : callable applying W.
    b : raw starting right vector (normalized internally, its norm is beta_1).
    u0 : optional left starting vector; the first left vector is
        W-orthogonalized against it (restart augmentation).
    reorth : 'none' | 'local' | 'full'. 'local' re-orthogonalizes against the
        vectors built in this process, 'full' additionally against the passed
        bases and runs a second Gram-Schmidt pass.
    reorth_U, reorth_V : optional external bases for 'full'.
    stab_U, stab_V : deflation bases (W-orthonormal / orthonormal) projected
        out of every new direction regardless of ``reorth``. Without this the
        deflated subspace re-enters the recurrence at a geometric rate in
        finite precision; with exact triplets the projection is a no-op in
        exact arithmetic.
    keep_vectors : retain all columns (required for 'local'/'full' and for
        factor extraction).
    """

    def __init__(self, forward, adjoint, factor, wmv, b, u0=None,
                 reorth="none", reorth_U=None, reorth_V=None,
                 stab_U=None, stab_V=None,
                 keep_vectors=True, breakdown_tol=BREAKDOWN_TOL):
        if reorth not in ("none", "local", "full"):
            raise ValueError(f"unknown reorth mode {reorth!r}")
        if reorth in ("local", "full"):
            keep_vectors = True
        self.forward = forward
        self.adjoint = adjoint
        self.factor = factor
        self.wmv = wmv
        self.reorth = reorth
        self.reorth_U = reorth_U if reorth_U is not None and reorth_U.shape[1] else None
        self.reorth_V = reorth_V if reorth_V is not None and reorth_V.shape[1] else None
        self.stab_U = stab_U if stab_U is not None and stab_U.shape[1] else None
        self.stab_V = stab_V if stab_V is not None and stab_V.shape[1] else None
        self.breakdown_tol = breakdown_tol
        self.keep_vectors = keep_vectors
        self._b = np.asarray(b, dtype=np.float64)
        if self.stab_V is not None:
            self._b = _project_out(self._b, self.stab_V)
        self._u0 = u0
        self.m = factor.m
        self.n = self._b.shape[0]
        self.U = _Basis(self.m) if keep_vectors else None
        self.V = _Basis(self.n) if keep_vectors else None
        self.alphas = []
        self.betas = []
        self.breakdown = False
        self._u_prev = None
        self._v_prev = None
        self._alpha_prev = None
        self._pending = None  # raw continuation vector, computed lazily
        self._scale = 0.0     # largest alpha/beta seen, for breakdown detection

    def _clean_right(self, vec):
        if self.stab_V is not None:
            vec = _project_out(vec, self.stab_V)
        passes = 2 if self.reorth == "full" else 1
        for _ in range(passes):
            if self.reorth in ("local", "full") and self.V is not None:
                vec = _project_out(vec, self.V.view)
            if self.reorth == "full" and self.reorth_V is not None:
                vec = _project_out(vec, self.reorth_V)
        return vec

    def _clean_left(self, vec):
        if self.stab_U is not None:
            vec = _project_out(vec, self.stab_U, weighted=self.wmv(vec))
        passes = 2 if self.reorth == "full" else 1
        for _ in range(passes):
            if self.reorth in ("local", "full") and self.U is not None and self.U.k:
                vec = _project_out(vec, self.U.view, weighted=self.wmv(vec))
            if self.reorth == "full" and self.reorth_U is not None:
                vec = _project_out(vec, self.reorth_U, weighted=self.wmv(vec))
        return vec

    def _continuation(self):
        if self._pending is None:
            raw = self.adjoint(self._u_prev) - self._alpha_prev * self._v_prev
            self._pending = self._clean_right(raw)
        return self._pending

    def _exhausted(self, coeff):
        """A coefficient at round-off scale means the space is exhausted."""
        return coeff <= max(self.breakdown_tol, BREAKDOWN_RTOL * self._scale)

    def step(self):
        """Advance one step; returns (alpha, beta, u, v) or None on breakdown."""
        if self.breakdown:
            return None
        if self._u_prev is None:
            beta = float(np.linalg.norm(self._b))
            if beta <= self.breakdown_tol:
                self.breakdown = True
                return None
            v = self._b / beta
            w = self.factor.solve(self.forward(v))
            if self._u0 is not None:
                w = w - beta * self._u0
        else:
            raw = self._continuation()
            beta = float(np.linalg.norm(raw))
            if self._exhausted(beta):
                self.breakdown = True
                return None
            v = raw / beta
            w = self.factor.solve(self.forward(v)) - beta * self._u_prev
        w = self._clean_left(w)
        alpha = float(np.sqrt(max(w @ self.wmv(w), 0.0)))
        if self._exhausted(alpha):
            self.breakdown = True
            return None
        u = w / alpha
        self._scale = max(self._scale, alpha, beta)
        self.alphas.append(alpha)
        self.betas.append(beta)
        if self.keep_vectors:
            self.U.append(u)
            self.V.append(v)
        self._u_prev, self._v_prev, self._alpha_prev = u, v, alpha
        self._pending = None
        return alpha, beta, u, v

    def factors(self):
        """Snapshot of the accumulated factorization (keep_vectors only)."""
        if not self.keep_vectors:
            raise ValueError("process was run with keep_vectors=False")
        if self._u_prev is not None and not self.breakdown:
            residual = self._continuation()
            beta_next = float(np.linalg.norm(residual))
        else:
            residual = np.zeros(self.n)
            beta_next = 0.0
        return BidiagFactors(self.U.array(), self.V.array(),
                             np.array(self.alphas), np.array(self.betas),
                             residual, beta_next, breakdown=self.breakdown)


def _system_ops(system):
    amv = _kernels.MatVec(system.A)
    wmv = _kernels.MatVec(system.W)
    return amv, wmv


def gkb_run(system, factor, start, steps, reorthogonalize="none"):
    """Run ``steps`` bidiagonalization steps from the right vector ``start``."""
    start = np.asarray(start, dtype=np.float64)
    if start.shape != (system.n,):
        raise DimensionMismatch(f"start must have length {system.n}, got {start.shape}")
    if not np.linalg.norm(start) > 0:
        raise ValueError("start vector must be nonzero")
    if steps > system.n:
        raise ValueError(f"steps = {steps} exceeds the column count {system.n}")
    amv, wmv = _system_ops(system)
    proc = GkbProcess(amv.mv, amv.rmv, factor, wmv.mv, start,
                      reorth=reorthogonalize, keep_vectors=True)
    for _ in range(steps):
        if proc.step() is None:
            break
    return proc.factors()


@dataclass(frozen=True)
class CraigOptions:
    """Knobs for :func:`craig_solve`.

    ``tol`` stops on the delayed lower-bound estimate of the relative
    W-energy error of u (delay ``estimate_delay``); ``max_iter=None`` picks
    2n + 100.
    """

    max_iter: int = None
    tol: float = DEFAULT_TOL.solve_tol
    estimate_delay: int = 5
    keep_trace: bool = False
    reorthogonalize: str = "none"

    def __post_init__(self):
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.estimate_delay < 1:
            raise ValueError("estimate_delay must be >= 1")
        if self.reorthogonalize not in ("none", "full"):
            raise ValueError("reorthogonalize must be 'none' or 'full'")


@dataclass
class SolveHistory:
    """Per-iteration scalars; arrays all have length ``iterations``."""

    alpha: np.ndarray
    beta: np.ndarray
    zeta: np.ndarray
    err_estimate: np.ndarray   # NaN where the delayed estimate is unavailable
    err_true: np.ndarray       # NaN when no reference was supplied


@dataclass
class SolveReport:
    """Solution pair plus convergence history of a CRAIG run."""

    u: np.ndarray
    p: np.ndarray
    iterations: int
    history: SolveHistory
    converged: bool
    trace: BidiagFactors = None
    label: str = ""

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,alpha,beta,err_estimate,err_true\n")
            for k in range(self.iterations):
                est = self.history.err_estimate[k]
                err = self.history.err_true[k]
                fh.write("%d,%r,%r,%s,%s\n" % (
                    k + 1, float(self.history.alpha[k]), float(self.history.beta[k]),
                    "" if np.isnan(est) else repr(float(est)),
                    "" if np.isnan(err) else repr(float(err))))
        return path


def craig_error_estimate(history, d):
    """Delayed lower bounds on the W-energy error from the zeta updates.

    Entry j estimates the error of iterate j (j = 0 .. K - d) from the d
    subsequent updates: sqrt(zeta_{j+1}^2 + ... + zeta_{j+d}^2). Empty when
    fewer than d iterations are available. Each value is a lower bound on
    the true error at iterate j in exact arithmetic.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    zetas = history.zeta if isinstance(history, SolveHistory) else np.asarray(history)
    K = len(zetas)
    if K < d:
        return np.zeros(0)
    sq = np.asarray(zetas, dtype=np.float64) ** 2
    return np.sqrt(np.array([sq[j:j + d].sum() for j in range(K - d + 1)]))


def _craig_engine(system, factor, forward, adjoint, b, opts,
                  reference=None, iterate_callback=None, wmv=None,
                  stab_U=None, stab_V=None):
    """Shared CRAIG loop; ``forward`` may include deflation."""
    n = len(b)
    if wmv is None:
        wmv = _kernels.MatVec(system.W).mv
    winv_g = factor.solve(system.g)
    d = opts.estimate_delay
    max_iter = opts.max_iter if opts.max_iter is not None else 2 * n + 100

    ref_u = None
    ref_norm = 1.0
    if reference is not None:
        ref_u = np.asarray(reference, dtype=np.float64)
        ref_norm = max(np.sqrt(ref_u @ wmv(ref_u)), 1e-300)

    beta1 = float(np.linalg.norm(b))
    if beta1 <= BREAKDOWN_TOL:
        # consistent right-hand side: the direct solution is u = W^{-1} g, p = 0
        hist = SolveHistory(*(np.zeros(0),) * 5)
        u = winv_g
        if iterate_callback is not None:
            iterate_callback(0, u, np.zeros(n))
        return SolveReport(u, np.zeros(n), 0, hist, True)

    proc = GkbProcess(forward, adjoint, factor, wmv, b,
                      reorth=opts.reorthogonalize,
                      stab_U=stab_U, stab_V=stab_V,
                      keep_vectors=opts.keep_trace or opts.reorthogonalize == "full")

    u_acc = winv_g.copy()
    p_acc = np.zeros(n)
    d_vec = None
    zeta = 0.0
    zetas, alphas, betas, errs = [], [], [], []
    cum = 0.0
    converged = False

    for k in range(1, max_iter + 1):
        rec = proc.step()
        if rec is None:
            # Krylov space exhausted: the current iterate solves the system
            converged = True
            break
        alpha, beta, u_k, v_k = rec
        if k == 1:
            zeta = beta / alpha
            d_vec = v_k / alpha
        else:
            # before the estimate window opens, fall back to the constraint
            # residual: ||A^T u^(k-1) - r|| = beta_k |zeta_{k-1}|
            if k <= d + 1 and beta * abs(zeta) < opts.tol * beta1:
                converged = True
                break
            zeta = -(beta / alpha) * zeta
            d_vec = (v_k - beta * d_vec) / alpha
        u_acc = u_acc + zeta * u_k
        p_acc = p_acc - zeta * d_vec
        alphas.append(alpha)
        betas.append(beta)
        zetas.append(zeta)
        cum += zeta * zeta
        if ref_u is not None:
            diff = u_acc - ref_u
            errs.append(np.sqrt(max(diff @ wmv(diff), 0.0)) / ref_norm)
        if iterate_callback is not None:
            iterate_callback(k, u_acc, p_acc)
        if k >= d + 1:
            est = np.sqrt(np.sum(np.square(zetas[k - d:])))
            if est < opts.tol * np.sqrt(cum):
                converged = True
                break

    K = len(zetas)
    est_col = np.full(K, np.nan)
    full = craig_error_estimate(np.array(zetas), d)
    for j in range(1, len(full)):
        est_col[j - 1] = full[j]
    hist = SolveHistory(np.array(alphas), np.array(betas), np.array(zetas),
                        est_col,
                        np.array(errs) if ref_u is not None else np.full(K, np.nan))
    trace = proc.factors() if opts.keep_trace else None
    return SolveReport(u_acc, p_acc, K, hist, converged, trace=trace)


def craig_rhs(system, factor):
    """Starting vector b = r - A^T W^{-1} g of the bidiagonalization."""
    return system.r - system.A.T @ factor.solve(system.g)


def craig_solve(system, opts=None, reference=None, iterate_callback=None):
    """Solve the saddle-point system with CRAIG.

    Returns a :class:`SolveReport`; ``report.converged`` is False when
    ``max_iter`` was reached (the partial solution is still returned).
    ``reference`` (a u-vector) enables the true-error column in the history,
    and ``iterate_callback(k, u_k, p_k)`` observes every iterate.
    """
    opts = opts or CraigOptions()
    factor = system.factor()
    amv, wmv = _system_ops(system)
    b = system.r - amv.rmv(factor.solve(system.g))
    report = _craig_engine(system, factor, amv.mv, amv.rmv, b, opts,
                           reference=reference, iterate_callback=iterate_callback,
                           wmv=wmv.mv)
    report.label = system.label
    return report
