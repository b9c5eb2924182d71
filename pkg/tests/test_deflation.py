import numpy as np
import pytest

from gkdefl import (
    CraigOptions,
    DeflationOperators,
    EllipticTriplets,
    build_1d_channel,
    correct_solution,
    craig_solve,
    deflated_matvec,
    deflated_solve,
    direct_solution,
    esvd_direct,
    load_triplets,
    make_deflation,
    save_triplets,
    triplet_residuals,
)
from gkdefl.errors import DimensionMismatch, SingularTriplet

from conftest import empty_triplets, make_random_system


def dense_operator(apply_fn, dim):
    I = np.eye(dim)
    return np.column_stack([apply_fn(I[:, j]) for j in range(dim)])


def test_empty_deflation_is_identity(channel8):
    defl = make_deflation(empty_triplets(channel8), channel8)
    x = np.arange(channel8.m, dtype=float)
    y = np.arange(channel8.n, dtype=float)
    assert np.array_equal(defl.apply_P(x), x)
    assert np.array_equal(defl.apply_Pt(x), x)
    assert np.array_equal(defl.apply_Q(y), y)
    assert np.array_equal(defl.apply_M(x), np.zeros(channel8.n))
    assert np.array_equal(deflated_matvec(channel8.A, defl, y), channel8.A @ y)


def test_exact_Q_equals_VVt(channel8):
    t = esvd_direct(channel8, 3, target="smallest")
    gen = make_deflation(t, channel8, mode="general")
    simp = make_deflation(t, channel8, mode="simplified")
    rng = np.random.default_rng(0)
    for _ in range(10):
        y = rng.standard_normal(channel8.n)
        expect = y - t.V @ (t.V.T @ y)
        assert np.abs(gen.apply_Q(y) - expect).max() < 1e-12
        assert np.abs(simp.apply_Q(y) - expect).max() < 1e-12


def test_projector_identities_dense(channel8):
    t = esvd_direct(channel8, 2, target="smallest")
    defl = make_deflation(t, channel8)
    W, A = channel8.W.toarray(), channel8.A.toarray()
    P = dense_operator(defl.apply_P, channel8.m)
    Pt = dense_operator(defl.apply_Pt, channel8.m)
    Q = dense_operator(defl.apply_Q, channel8.n)
    Qt = dense_operator(defl.apply_Qt, channel8.n)
    assert np.abs(Pt - P.T).max() < 1e-13
    assert np.abs(Qt - Q.T).max() < 1e-13
    assert np.abs(Q @ Q - Q).max() < 1e-12
    assert np.abs(P @ P - P).max() < 1e-12
    assert np.abs(P @ W - W @ P.T).max() < 1e-12
    assert np.abs(P @ A - A @ Q).max() < 1e-12


def test_deflated_matvec_matches_dense_oracle(channel8):
    t = esvd_direct(channel8, 2, target="smallest")
    defl = make_deflation(t, channel8)
    A = channel8.A.toarray()
    P = dense_operator(defl.apply_P, channel8.m)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal(channel8.n)
        assert np.abs(deflated_matvec(channel8.A, defl, x) - P @ A @ x).max() < 1e-12
    # null space: x in span(V) is annihilated
    x = t.V @ np.array([1.0, -2.0])
    assert np.abs(deflated_matvec(channel8.A, defl, x)).max() < 1e-12
    with pytest.raises(DimensionMismatch):
        deflated_matvec(channel8.A, defl, np.ones(channel8.n + 1))


def test_deflated_schur_spectrum(channel8):
    t = esvd_direct(channel8, 2, target="smallest")
    defl = make_deflation(t, channel8)
    W, A = channel8.W.toarray(), channel8.A.toarray()
    S = A.T @ np.linalg.solve(W, A)
    Q = dense_operator(defl.apply_Q, channel8.n)
    S_defl = Q.T @ S @ Q
    vals = np.sort(np.linalg.eigvalsh((S_defl + S_defl.T) / 2))
    orig = np.sort(np.linalg.eigvalsh(S))
    assert np.abs(vals[:2]).max() < 1e-10
    assert np.abs(vals[2:] - orig[2:]).max() < 1e-10


def test_deflated_solve_k0_identical(channel16):
    plain = craig_solve(channel16, CraigOptions(tol=1e-9))
    defl = make_deflation(empty_triplets(channel16), channel16)
    rep = deflated_solve(channel16, defl, CraigOptions(tol=1e-9))
    assert np.array_equal(plain.history.alpha, rep.history.alpha)
    assert np.array_equal(plain.history.beta, rep.history.beta)
    assert np.array_equal(plain.u, rep.u) and np.array_equal(plain.p, rep.p)


def test_correct_solution_trivial_and_full(channel8):
    defl = make_deflation(empty_triplets(channel8), channel8)
    u, p = np.ones(channel8.m), np.ones(channel8.n)
    uc, pc = correct_solution(defl, channel8, u, p)
    assert np.array_equal(uc, u) and np.array_equal(pc, p)
    # k = n: Q = 0 and the correction alone is the direct solution
    t = esvd_direct(channel8, channel8.n, target="smallest")
    full = make_deflation(t, channel8)
    uref, pref = direct_solution(channel8)
    uc, pc = correct_solution(full, channel8, np.zeros(channel8.m), np.zeros(channel8.n))
    uc2, pc2 = correct_solution(full, channel8, direct_solution(channel8)[0], np.ones(channel8.n))
    assert np.abs(np.concatenate([pc - pref, pc2 - pref])).max() < 1e-10
    rep = deflated_solve(channel8, full, CraigOptions(tol=1e-10))
    uc3, pc3 = correct_solution(full, channel8, rep.u, rep.p)
    assert np.linalg.norm(uc3 - uref) < 1e-8 and np.linalg.norm(pc3 - pref) < 1e-8


@pytest.mark.parametrize("n,k", [(4, 1), (8, 2), (16, 3)])
def test_deflate_and_correct_channels(n, k):
    sys = build_1d_channel(n)
    uref, pref = direct_solution(sys)
    t = esvd_direct(sys, k, target="smallest")
    defl = make_deflation(t, sys)
    rep = deflated_solve(sys, defl, CraigOptions(tol=1e-10))
    u, p = correct_solution(defl, sys, rep.u, rep.p)
    err = np.linalg.norm(np.concatenate([u - uref, p - pref]))
    err /= np.linalg.norm(np.concatenate([uref, pref]))
    assert err < 1e-8


def test_rotated_basis_deflation(channel8):
    """Non-singular-vector bases spanning the same subspaces still work."""
    k = 3
    t = esvd_direct(channel8, k, target="smallest")
    rng = np.random.default_rng(7)
    R, _ = np.linalg.qr(rng.standard_normal((k, k)))
    defl = DeflationOperators.from_basis(t.U @ R, t.V @ R, channel8)
    W, A = channel8.W.toarray(), channel8.A.toarray()
    P = dense_operator(defl.apply_P, channel8.m)
    Q = dense_operator(defl.apply_Q, channel8.n)
    assert np.abs(P @ W - W @ P.T).max() < 1e-12
    assert np.abs(P @ A - A @ Q).max() < 1e-12
    assert np.abs(Q @ Q - Q).max() < 1e-12
    uref, pref = direct_solution(channel8)
    rep = deflated_solve(channel8, defl, CraigOptions(tol=1e-10))
    u, p = correct_solution(defl, channel8, rep.u, rep.p)
    assert np.linalg.norm(u - uref) / np.linalg.norm(uref) < 1e-8
    assert np.linalg.norm(p - pref) / np.linalg.norm(pref) < 1e-8


def test_simplified_mode_perturbation_bound():
    """Simplified Q differs from general Q by at most ~10 x triplet residual."""
    rng = np.random.default_rng(3)
    sys = make_random_system(rng, m=24, n=10)
    exact = esvd_direct(sys, 3, target="smallest")
    for noise in (1e-5, 1e-3):
        V, _ = np.linalg.qr(exact.V + noise * rng.standard_normal(exact.V.shape))
        t = EllipticTriplets(exact.U, exact.sigma, V, exactness="approximate")
        res = triplet_residuals(sys, t)
        bound = 10.0 * max(res.scalar.max(), res.vector.max())
        gen = make_deflation(t, sys, mode="general")
        simp = make_deflation(t, sys, mode="simplified")
        for _ in range(10):
            x = rng.standard_normal(sys.n)
            diff = np.linalg.norm(gen.apply_Q(x) - simp.apply_Q(x)) / np.linalg.norm(x)
            assert diff <= bound


def test_simplified_mode_solve_and_correct(channel16):
    """With exact triplets the simplified product solves the same system."""
    uref, pref = direct_solution(channel16)
    t = esvd_direct(channel16, 4, target="smallest")
    defl = make_deflation(t, channel16, mode="simplified")
    rep = deflated_solve(channel16, defl, CraigOptions(tol=1e-10))
    u, p = correct_solution(defl, channel16, rep.u, rep.p)
    assert np.linalg.norm(u - uref) / np.linalg.norm(uref) < 1e-8
    assert np.linalg.norm(p - pref) / np.linalg.norm(pref) < 1e-8


def test_singular_triplet_handling(channel8):
    t = esvd_direct(channel8, 2, target="smallest")
    bad = EllipticTriplets(t.U, np.array([t.sigma[0], t.sigma[0] * 1e-16]), t.V,
                           exactness="approximate")
    with pytest.raises(SingularTriplet):
        make_deflation(bad, channel8, mode="general")
    make_deflation(bad, channel8, mode="simplified")  # accepted


def test_triplet_roundtrip(tmp_path, channel8):
    t = esvd_direct(channel8, 2, target="smallest")
    save_triplets(t, tmp_path)
    back = load_triplets(tmp_path)
    assert np.array_equal(back.U, t.U)
    assert np.array_equal(back.sigma, t.sigma)
    assert np.array_equal(back.V, t.V)


def test_triplet_validation(channel8):
    t = esvd_direct(channel8, 2, target="smallest")
    t.validate(channel8)
    with pytest.raises(DimensionMismatch):
        EllipticTriplets(t.U, t.sigma[:1], t.V)
    with pytest.raises(ValueError):
        EllipticTriplets(t.U, t.sigma[::-1], t.V)  # ascending order rejected
