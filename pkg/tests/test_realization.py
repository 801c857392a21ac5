import numpy as np
import pytest

from polyball.domain import (
    BlockStructure,
    MatrixPoint,
    sample_commuting_tuple,
    sample_interior,
    sample_shilov,
    spectral_norm,
)
from polyball.mpoly import MatPoly, MPoly, det_poly, reverse
from polyball.realization import (
    Colligation,
    GramCertificate,
    GramInfeasibleError,
    NotCompletelyPositiveError,
    apply_choi,
    apply_factored,
    boundary_gram_check,
    choi_factor,
    eval_transfer,
    eval_transfer_tuple,
    gram_dimension_cap,
    gram_feasibility,
    haar_colligation,
    lurking_isometry,
    synthesize,
    verify_colligation,
)

BIDISK = BlockStructure((1, 1))
BALL2 = BlockStructure((2,))


def z1z2_colligation():
    A = np.array([[0, 1], [0, 0]], dtype=complex)
    B = np.array([[0], [1]], dtype=complex)
    C = np.array([[1, 0]], dtype=complex)
    D = np.array([[0]], dtype=complex)
    return Colligation(BIDISK, (1, 1), 1, A, B, C, D)


# -- transfer evaluation -----------------------------------------------------------


def test_transfer_empty_state_returns_D():
    D = np.array([[0.3 - 0.4j]])
    c = Colligation(
        BIDISK, (0, 0), 1,
        np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), D,
    )
    Z = sample_interior(BIDISK, 1)
    assert np.allclose(eval_transfer(c, Z), D)


def test_transfer_flip_colligation_is_identity_function():
    s = BlockStructure((1,))
    c = Colligation(
        s, (1,), 1,
        np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)),
    )
    for i in range(10):
        Z = sample_interior(s, [61, i])
        assert eval_transfer(c, Z)[0, 0] == pytest.approx(Z.blocks[0][0, 0])


def test_transfer_z1z2_permutation():
    c = z1z2_colligation()
    assert c.unitary_defect < 1e-15
    for i in range(20):
        Z = sample_interior(BIDISK, [62, i])
        want = Z.blocks[0][0, 0] * Z.blocks[1][0, 0]
        assert abs(eval_transfer(c, Z)[0, 0] - want) < 1e-12


# -- verify_colligation ---------------------------------------------------------------


def test_verify_haar_unitary_colligation():
    c = haar_colligation(BlockStructure((2, 1)), (1, 1), 1, 7)
    rep = verify_colligation(c, trials=100, seed=3)
    assert rep.unitary_defect < 1e-12
    assert rep.boundary_defect < 1e-8
    assert rep.tuple_norm_max <= 1.0 + 1e-8
    assert rep.passed


def test_verify_scaled_colligation_fails():
    base = z1z2_colligation()
    c = Colligation(
        BIDISK, (1, 1), 1,
        1.1 * base.A, 1.1 * base.B, 1.1 * base.C, 1.1 * base.D,
    )
    rep = verify_colligation(c, trials=50, seed=1)
    assert rep.unitary_defect == pytest.approx(0.21, abs=1e-9)
    assert not rep.unitary_ok
    assert rep.boundary_defect > 1e-8
    assert not rep.passed


def test_verify_static_unitary_passes_exactly():
    D = np.array([[0, 1], [1, 0]], dtype=complex)
    c = Colligation(
        BIDISK, (0, 0), 2,
        np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), D,
    )
    rep = verify_colligation(c, trials=20, seed=2)
    assert rep.unitary_defect == 0.0
    assert rep.boundary_defect == 0.0
    assert rep.tuple_norm_max == pytest.approx(1.0)
    assert rep.passed


def test_transfer_tuple_matches_rational_eval():
    # F(T) for the z1 z2 colligation equals T1 @ T2
    c = z1z2_colligation()
    for i in range(5):
        T = sample_commuting_tuple(BIDISK, 3, "diagonalizable", [63, i])
        F = eval_transfer_tuple(c, T)
        assert np.abs(F - T.mats[0] @ T.mats[1]).max() < 1e-10


# -- Choi factorization ---------------------------------------------------------------


def test_choi_zero_map():
    Y = choi_factor(np.zeros((4, 4)), 2, 2)
    assert Y.shape == (8, 2)
    assert np.all(Y == 0)


def test_choi_entry_picker():
    choi = np.array([[1, 0], [0, 0]], dtype=complex)
    Y = choi_factor(choi, 2, 1)
    assert Y.shape == (4, 1)
    # equals (1,0,0,0)^T up to a global phase
    assert abs(abs(Y[0, 0]) - 1.0) < 1e-12
    assert np.abs(Y[1:]).max() < 1e-12
    for X in (np.eye(2), np.array([[2.0, 1j], [-1j, 0.5]])):
        got = apply_factored(Y, 2, 1, X)
        assert abs(got[0, 0] - X[0, 0]) < 1e-12


def test_choi_trace_map():
    choi = np.eye(2, dtype=complex)
    Y = choi_factor(choi, 2, 1)
    for X in (np.eye(2), np.array([[1.0, 2.0], [3.0, 4.0]])):
        got = apply_factored(Y, 2, 1, X)
        assert abs(got[0, 0] - np.trace(X)) < 1e-12


def test_choi_round_trip_random():
    rng = np.random.default_rng(11)
    for trial in range(50):
        a = int(rng.integers(1, 4))
        b = int(rng.integers(1, 4))
        ab = a * b
        R = rng.standard_normal((ab, ab)) + 1j * rng.standard_normal((ab, ab))
        choi = R @ R.conj().T
        Y = choi_factor(choi, a, b)
        worst = 0.0
        for i in range(a):
            for j in range(a):
                X = np.zeros((a, a))
                X[i, j] = 1.0
                diff = apply_factored(Y, a, b, X) - apply_choi(choi, a, b, X)
                worst = max(worst, np.abs(diff).max())
        assert worst < 1e-10 * max(1.0, np.linalg.norm(choi, 2))


def test_choi_rejects_non_psd():
    with pytest.raises(NotCompletelyPositiveError):
        choi_factor(np.diag([1.0, -1.0]), 2, 1)
    with pytest.raises(NotCompletelyPositiveError):
        choi_factor(np.array([[0, 1], [0, 0]], dtype=complex), 2, 1)


# -- Gram feasibility -------------------------------------------------------------------


def test_gram_single_term_polydisk():
    one = MPoly.constant(BIDISK, 1.0)
    z1 = MPoly.var(BIDISK, 0)
    cert = gram_feasibility(one, z1, 1)
    assert cert.residual < 1e-12
    assert cert.n[0] == 1 and cert.n[1] == 0
    # G_1 must be the constant 1 up to phase
    G = cert.coeff(0, (0, 0))
    assert abs(abs(G[0, 0]) - 1.0) < 1e-9


def test_gram_bidisk_reverse_pair():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    p = 2 - z1 - z2
    q = reverse(p, (1, 1))
    cert = gram_feasibility(p, q, 2)
    assert cert.residual < 1e-7
    assert cert.dimension_bound_ok()


def test_gram_det_ball():
    det = det_poly(BALL2, 0)
    one = MPoly.constant(BALL2, 1.0)
    cert = gram_feasibility(one, det, 2)
    assert cert.residual < 1e-7
    cap = gram_dimension_cap(BALL2, 1, 2, 0)
    assert cap == 10
    assert cert.n[0] <= cap


def test_gram_degree_precondition():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    with pytest.raises(ValueError):
        gram_feasibility(2 - z1 - z2, reverse(2 - z1 - z2, (1, 1)), 1)


def test_gram_matrix_valued_diagonal():
    one = MPoly.constant(BIDISK, 1.0)
    zero = MPoly.zero(BIDISK)
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    P = MatPoly([[one, zero], [zero, one]])
    Q = MatPoly([[z1, zero], [zero, z2]])
    cert = gram_feasibility(P, Q, 1)
    assert cert.residual < 1e-9
    C = lurking_isometry(P, Q, cert, seed=5)
    for i in range(10):
        Z = sample_interior(BIDISK, [64, i])
        F = eval_transfer(C, Z)
        want = np.diag([Z.blocks[0][0, 0], Z.blocks[1][0, 0]])
        assert np.abs(F - want).max() < 1e-8


def test_gram_infeasible_reports_residual():
    # q = z1 + z2 is not inner over p = 2, and the affine system alone is
    # already inconsistent at g = 1.
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    with pytest.raises(GramInfeasibleError) as exc:
        gram_feasibility(MPoly.constant(BIDISK, 2.0), z1 + z2, 1, max_iters=3000)
    assert exc.value.best_residual > 1e-7


def test_gram_to_transfer_consistency():
    # pointwise residual of the decomposition identity at random pairs is
    # controlled by the coefficient-space residual (entries of contractions
    # have modulus <= 1, so the l1 coefficient bound dominates).
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    p = 2 - z1 - z2
    q = reverse(p, (1, 1))
    cert = gram_feasibility(p, q, 2)
    l1 = cert.residual * len(cert.monomials) ** 2 * 4
    worst = 0.0
    for i in range(30):
        Z = sample_interior(BIDISK, [65, 2 * i])
        W = sample_interior(BIDISK, [65, 2 * i + 1])
        lhs = (
            np.conj(p.eval(W)) * p.eval(Z) - np.conj(q.eval(W)) * q.eval(Z)
        )
        rhs = 0.0
        for r in range(2):
            GW = cert.eval_G(r, W)
            GZ = cert.eval_G(r, Z)
            wz = np.conj(W.blocks[r][0, 0]) * Z.blocks[r][0, 0]
            nr = cert.n[r]
            middle = (1 - wz) * np.eye(nr)
            rhs += (GW.conj().T @ np.kron(middle, np.eye(1)) @ GZ)[0, 0]
        worst = max(worst, abs(lhs - rhs))
    assert worst <= 10 * max(l1, 1e-10)


# -- lurking isometry ---------------------------------------------------------------


def test_lurking_hand_built_z1z2():
    # 1 - conj(w1 z1) w2 z2 = (1 - w1* z1) + w1* z1 (1 - w2* z2):
    # G1 = 1, G2 = z1.  Monomial order for g=2 is [(0,0), (0,1), (1,0)].
    one = MPoly.constant(BIDISK, 1.0)
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    G1 = np.array([[1.0, 0.0, 0.0]], dtype=complex)
    G2 = np.array([[0.0, 0.0, 1.0]], dtype=complex)
    cert = GramCertificate.from_factors(one, z1 * z2, 2, [G1, G2])
    assert cert.residual < 1e-14
    c = lurking_isometry(one, z1 * z2, cert, seed=9)
    assert c.system_matrix().shape == (3, 3)
    assert c.unitary_defect < 1e-12
    for i in range(25):
        Z = sample_interior(BIDISK, [66, i])
        want = Z.blocks[0][0, 0] * Z.blocks[1][0, 0]
        assert abs(eval_transfer(c, Z)[0, 0] - want) < 1e-10


def test_lurking_trivial_identity():
    one = MPoly.constant(BIDISK, 1.0)
    cert = GramCertificate.from_factors(
        one, one, 1, [np.zeros((0, 3)), np.zeros((0, 3))]
    )
    c = lurking_isometry(one, one, cert, seed=0)
    assert c.n == (0, 0)
    assert abs(c.D[0, 0] - 1.0) < 1e-12


def test_lurking_constant_unitary():
    one = MPoly.constant(BIDISK, 1.0)
    phase = np.exp(0.7j)
    V = MPoly.constant(BIDISK, phase)
    cert = GramCertificate.from_factors(
        one, V, 1, [np.zeros((0, 3)), np.zeros((0, 3))]
    )
    c = lurking_isometry(one, V, cert, seed=0)
    assert c.n == (0, 0)
    assert abs(c.D[0, 0] - phase) < 1e-12


# -- boundary check --------------------------------------------------------------------


def test_boundary_check_passes_for_inner_pairs():
    one = MPoly.constant(BIDISK, 1.0)
    z1 = MPoly.var(BIDISK, 0)
    assert boundary_gram_check(one, z1, samples=50).passed
    z2 = MPoly.var(BIDISK, 1)
    p = 2 - z1 - z2
    assert boundary_gram_check(p, reverse(p, (1, 1)), samples=50).passed


def test_boundary_check_fails_for_non_inner():
    one = MPoly.constant(BIDISK, 1.0)
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    rep = boundary_gram_check(one, z1 + z2, samples=50)
    assert not rep.passed
    assert rep.max_defect > 0.1


# -- synthesize -------------------------------------------------------------------------


def test_synthesize_z1z2():
    one = MPoly.constant(BIDISK, 1.0)
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    res = synthesize(one, z1 * z2)
    assert res.passed
    assert res.colligation.unitary_defect <= 1e-8
    assert res.transfer_match < 1e-6


def test_synthesize_det_ball():
    one = MPoly.constant(BALL2, 1.0)
    det = det_poly(BALL2, 0)
    res = synthesize(one, det, g=2)
    assert res.passed
    worst = 0.0
    for i in range(50):
        Z = sample_interior(BALL2, [67, i])
        worst = max(
            worst,
            abs(eval_transfer(res.colligation, Z)[0, 0] - np.linalg.det(Z.blocks[0])),
        )
    assert worst < 1e-6


def test_synthesize_reverse_pair():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    p = 2 - z1 - z2
    q = reverse(p, (1, 1))
    res = synthesize(p, q)
    assert res.passed
    for i in range(20):
        Z = sample_interior(BIDISK, [68, i])
        want = q.eval(Z) / p.eval(Z)
        assert abs(eval_transfer(res.colligation, Z)[0, 0] - want) < 1e-6


def test_synthesize_reports_boundary_mismatch():
    one = MPoly.constant(BIDISK, 1.0)
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    res = synthesize(one, z1 + z2)
    assert res.verdict == "boundary-mismatch"
    assert res.colligation is None


# -- Schur-Agler sufficiency over tuples ----------------------------------------------


def test_unitary_colligations_contractive_on_tuples():
    structures = [BIDISK, BALL2, BlockStructure((2, 1))]
    for idx, s in enumerate(structures):
        c = haar_colligation(s, tuple(1 for _ in s.ell), 1, [69, idx])
        worst = 0.0
        for i in range(60):
            N = 1 + i % 5
            fam = ("diagonalizable", "single-generator")[i % 2]
            T = sample_commuting_tuple(s, N, fam, [70, idx, i])
            worst = max(worst, spectral_norm(eval_transfer_tuple(c, T)))
        assert worst <= 1.0 + 1e-8


# -- serialization ----------------------------------------------------------------------


def test_colligation_json_round_trip():
    c = haar_colligation(BlockStructure((2, 1)), (1, 2), 2, 13)
    back = Colligation.from_json(c.to_json())
    assert np.array_equal(back.A, c.A)
    assert np.array_equal(back.B, c.B)
    assert np.array_equal(back.C, c.C)
    assert np.array_equal(back.D, c.D)
    assert back.n == c.n and back.s == c.s


def test_gram_certificate_json_round_trip():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    p = 2 - z1 - z2
    cert = gram_feasibility(p, reverse(p, (1, 1)), 2)
    back = GramCertificate.from_json(cert.to_json())
    assert back.n == cert.n
    assert back.residual == cert.residual
    for a, b in zip(back.factors, cert.factors):
        assert np.array_equal(a, b)
