import numpy as np
import pytest
import scipy.sparse as sp

from gkdefl import (
    CraigOptions,
    SaddlePointSystem,
    build_1d_channel,
    craig_error_estimate,
    craig_solve,
    direct_solution,
    esvd_direct,
    gkb_run,
    w_norm,
)
from gkdefl.errors import DimensionMismatch
from gkdefl.solver import SolveHistory, craig_rhs

from conftest import make_random_system


def dense_cg(S, b, iters):
    """Textbook CG on a dense SPD system, returning every iterate."""
    x = np.zeros(len(b))
    r = b.copy()
    p = r.copy()
    rs = r @ r
    out = []
    for _ in range(iters):
        Sp = S @ p
        alpha = rs / (p @ Sp)
        x = x + alpha * p
        r = r - alpha * Sp
        rs_new = r @ r
        p = r + (rs_new / rs) * p
        rs = rs_new
        out.append(x.copy())
        if np.sqrt(rs) < 1e-15:
            break
    return out


def test_gkb_identity_operators():
    I3 = sp.identity(3, format="csr")
    sys = SaddlePointSystem(I3, I3.copy(), np.zeros(3), np.zeros(3), "id")
    start = np.array([3.0, 0.0, 4.0])
    fac = gkb_run(sys, sys.factor(), start, 1)
    assert fac.B().shape == (1, 1) and fac.B()[0, 0] == pytest.approx(1.0)
    assert np.allclose(fac.U[:, 0], start / 5.0)
    assert np.allclose(fac.V[:, 0], start / 5.0)


def test_gkb_singular_values_vs_dense_oracle():
    sys = build_1d_channel(3)
    exact = esvd_direct(sys, sys.n, target="largest").sigma
    start = np.random.default_rng(4).standard_normal(sys.n)
    fac = gkb_run(sys, sys.factor(), start, 2, reorthogonalize="full")
    sv = np.sort(np.linalg.svd(fac.B(), compute_uv=False))[::-1]
    assert np.abs(sv - exact).max() < 1e-10
    # fewer steps approximate the top values from below
    fac1 = gkb_run(sys, sys.factor(), start, 1)
    assert np.linalg.svd(fac1.B(), compute_uv=False)[0] <= exact[0] + 1e-12


def test_gkb_full_equals_esvd(channel8):
    sys = channel8
    rng = np.random.default_rng(2)
    fac = gkb_run(sys, sys.factor(), rng.standard_normal(sys.n), sys.n,
                  reorthogonalize="full")
    sv = np.sort(np.linalg.svd(fac.B(), compute_uv=False))
    exact = np.sort(esvd_direct(sys, sys.n, target="largest").sigma)
    assert np.abs(sv - exact).max() < 1e-10


@pytest.mark.parametrize("n", [8, 16, 64])
def test_gkb_identities(n):
    sys = build_1d_channel(n)
    rng = np.random.default_rng(n)
    steps = min(sys.n, 20)
    fac = gkb_run(sys, sys.factor(), rng.standard_normal(sys.n), steps,
                  reorthogonalize="full")
    W, A = sys.W.toarray(), sys.A.toarray()
    scale = np.abs(A).max()
    eta = fac.steps
    assert np.abs(fac.U.T @ W @ fac.U - np.eye(eta)).max() < 1e-10
    assert np.abs(fac.V.T @ fac.V - np.eye(eta)).max() < 1e-10
    assert np.abs(A @ fac.V - W @ fac.U @ fac.B()).max() < 1e-10 * scale
    resid_term = np.zeros((sys.n, eta))
    resid_term[:, -1] = fac.residual
    assert np.abs(A.T @ fac.U - fac.V @ fac.B().T - resid_term).max() < 1e-10 * scale
    assert fac.beta_next == pytest.approx(np.linalg.norm(fac.residual))
    assert np.all(fac.alphas > 0) and np.all(fac.betas > 0)


def test_gkb_preconditions(channel8):
    F = channel8.factor()
    with pytest.raises(DimensionMismatch):
        gkb_run(channel8, F, np.ones(3), 2)
    with pytest.raises(ValueError):
        gkb_run(channel8, F, np.zeros(channel8.n), 2)
    with pytest.raises(ValueError):
        gkb_run(channel8, F, np.ones(channel8.n), channel8.n + 1)


def test_gkb_breakdown_truncates():
    """Krylov exhaustion flags breakdown and truncates the factors."""
    sys = build_1d_channel(3)
    F = sys.factor()
    fac = gkb_run(sys, F, craig_rhs(sys, F), 2)  # b spans a 1-dim space
    assert fac.breakdown and fac.steps == 1
    assert fac.beta_next == 0.0


def test_craig_2x2_example():
    W = sp.identity(2, format="csr")
    A = sp.csr_matrix(np.array([[1.0], [0.0]]))
    sys = SaddlePointSystem(W, A, np.array([1.0, 1.0]), np.array([0.0]), "toy")
    rep = craig_solve(sys)
    assert rep.iterations == 1 and rep.converged
    assert np.allclose(rep.u, [0.0, 1.0], atol=1e-14)
    assert np.allclose(rep.p, [1.0], atol=1e-14)


def test_craig_residuals_at_convergence(channel64):
    rep = craig_solve(channel64, CraigOptions(tol=1e-8))
    assert rep.converged
    g, r = channel64.g, channel64.r
    res1 = np.linalg.norm(channel64.W @ rep.u + channel64.A @ rep.p - g) / np.linalg.norm(g)
    res2 = np.linalg.norm(channel64.A.T @ rep.u - r) / max(np.linalg.norm(r), 1.0)
    assert res1 <= 1e-7 and res2 <= 1e-7


def test_transformed_system_fidelity():
    """Dense solves of the projected system reproduce the recurrences."""
    sys = build_1d_channel(16)
    F = sys.factor()
    b = craig_rhs(sys, F)
    iterates = []
    craig_solve(sys, CraigOptions(tol=1e-12, max_iter=20),
                iterate_callback=lambda k, u, p: iterates.append((u.copy(), p.copy())))
    fac = gkb_run(sys, F, b, len(iterates))
    winv_g = F.solve(sys.g)
    beta1 = np.linalg.norm(b)
    for k in range(1, len(iterates) + 1):
        B = fac.B()[:k, :k]
        z = np.linalg.solve(B.T, beta1 * np.eye(k)[:, 0])
        y = -np.linalg.solve(B, z)
        u_ref = winv_g + fac.U[:, :k] @ z
        p_ref = fac.V[:, :k] @ y
        u_k, p_k = iterates[k - 1]
        assert np.abs(u_k - u_ref).max() < 1e-10
        assert np.abs(p_k - p_ref).max() < 1e-10


@pytest.mark.parametrize("n", [8, 16, 32])
def test_craig_equals_cg_on_schur(n):
    sys = build_1d_channel(n)
    F = sys.factor()
    Ad = sys.A.toarray()
    S = Ad.T @ np.linalg.solve(sys.W.toarray(), Ad)
    b_cg = -craig_rhs(sys, F)          # A^T W^{-1} g - r
    p_iters = []
    craig_solve(sys, CraigOptions(tol=1e-12),
                iterate_callback=lambda k, u, p: p_iters.append(p.copy()))
    cg_iters = dense_cg(S, b_cg, len(p_iters))
    p_star = np.linalg.solve(S, b_cg)
    for pk, ck in zip(p_iters, cg_iters):
        assert abs(np.linalg.norm(pk - p_star) - np.linalg.norm(ck - p_star)) < 1e-8


def test_energy_error_monotone(channel64):
    uref = direct_solution(channel64)[0]
    rep = craig_solve(channel64, CraigOptions(tol=1e-10), reference=uref)
    errs = rep.history.err_true
    assert np.all(np.diff(errs) <= 1e-12)


def test_craig_minimizes_energy_error():
    """u^(k) is the W-energy minimizer over the Krylov candidates."""
    sys = build_1d_channel(8)
    F = sys.factor()
    uref = direct_solution(sys)[0]
    b = craig_rhs(sys, F)
    iterates = []
    craig_solve(sys, CraigOptions(tol=1e-12),
                iterate_callback=lambda k, u, p: iterates.append(u.copy()))
    fac = gkb_run(sys, F, b, len(iterates), reorthogonalize="full")
    winv_g = F.solve(sys.g)
    W = sys.W.toarray()
    for k in range(1, len(iterates) + 1):
        Uk = fac.U[:, :k]
        # W-orthogonal projection of the true shifted solution onto span(Uk)
        best = winv_g + Uk @ (Uk.T @ (W @ (uref - winv_g)))
        err_best = w_norm(sys.W, uref - best)
        err_craig = w_norm(sys.W, uref - iterates[k - 1])
        assert err_craig <= err_best + 1e-10


def test_error_estimate_examples():
    zeros = SolveHistory(*(np.zeros(6),) * 5)
    assert np.allclose(craig_error_estimate(zeros, 3), 0.0)
    zetas = np.array([3.0, 4.0, 12.0])
    est = craig_error_estimate(zetas, 3)
    assert len(est) == 1 and est[0] == pytest.approx(13.0)  # cumulative norm
    assert len(craig_error_estimate(zetas, 5)) == 0


def test_error_estimate_underestimates(channel64):
    uref = direct_solution(channel64)[0]
    rep = craig_solve(channel64, CraigOptions(tol=1e-10, estimate_delay=5),
                      reference=uref)
    ref_energy = w_norm(channel64.W, uref)
    est = rep.history.err_estimate
    true_abs = rep.history.err_true * ref_energy
    mask = ~np.isnan(est)
    frac = np.mean(est[mask] <= true_abs[mask] * (1 + 1e-8))
    assert frac >= 0.95
    # near-monotone decrease after the delay window
    vals = est[mask]
    assert np.all(np.diff(vals) <= 0.05 * vals[:-1])


def test_zero_rhs_returns_direct():
    sys = build_1d_channel(6)
    F = sys.factor()
    winv_g = F.solve(sys.g)
    consistent = SaddlePointSystem(sys.W, sys.A, sys.g,
                                   sys.A.T @ winv_g, "consistent")
    rep = craig_solve(consistent)
    assert rep.iterations == 0 and rep.converged
    assert np.allclose(rep.u, winv_g)
    assert np.array_equal(rep.p, np.zeros(sys.n))


def test_no_convergence_partial_report(channel64):
    rep = craig_solve(channel64, CraigOptions(tol=1e-14, max_iter=3))
    assert not rep.converged and rep.iterations == 3
    assert len(rep.history.alpha) == 3


def test_trace_does_not_change_iterates(channel16):
    r1 = craig_solve(channel16, CraigOptions(tol=1e-10, keep_trace=False))
    r2 = craig_solve(channel16, CraigOptions(tol=1e-10, keep_trace=True))
    assert np.array_equal(r1.u, r2.u) and np.array_equal(r1.p, r2.p)
    assert np.array_equal(r1.history.alpha, r2.history.alpha)
    assert r2.trace is not None and r2.trace.steps >= r2.iterations


def test_random_systems_solve():
    rng = np.random.default_rng(11)
    for _ in range(5):
        sys = make_random_system(rng)
        uref, pref = direct_solution(sys)
        rep = craig_solve(sys, CraigOptions(tol=1e-11))
        assert np.linalg.norm(rep.u - uref) / np.linalg.norm(uref) < 1e-8
        assert np.linalg.norm(rep.p - pref) / np.linalg.norm(pref) < 1e-8


def test_report_csv(tmp_path, channel16):
    uref = direct_solution(channel16)[0]
    rep = craig_solve(channel16, CraigOptions(tol=1e-8), reference=uref)
    path = rep.write_csv(tmp_path / "report.csv")
    lines = open(path).read().splitlines()
    assert lines[0] == "iter,alpha,beta,err_estimate,err_true"
    assert len(lines) == rep.iterations + 1
    import csv
    row = next(csv.DictReader(open(path)))
    assert float(row["alpha"]) == rep.history.alpha[0]
    assert float(row["err_true"]) == rep.history.err_true[0]
    rep2 = craig_solve(channel16, CraigOptions(tol=1e-8), reference=uref)
    path2 = rep2.write_csv(tmp_path / "report2.csv")
    assert open(path).read() == open(path2).read()


def test_craig_options_validation():
    with pytest.raises(ValueError):
        CraigOptions(max_iter=0)
    with pytest.raises(ValueError):
        CraigOptions(tol=-1.0)
    with pytest.raises(ValueError):
        CraigOptions(estimate_delay=0)
    with pytest.raises(ValueError):
        CraigOptions(reorthogonalize="sometimes")
