import numpy as np
import pytest

from polyball.domain import BlockStructure, sample_commuting_tuple, spectral_norm
from polyball.mpoly import MPoly, det_poly, reverse
from polyball.analysis import (
    NotInnerFormError,
    agler_lower_bound,
    check_inner,
    eventual_sa_lift,
    rudin_factorize,
    stability_scan,
)

from conftest import random_stable_poly

BIDISK = BlockStructure((1, 1))
BALL2 = BlockStructure((2,))
DISK = BlockStructure((1,))


# -- check_inner -------------------------------------------------------------------


def test_inner_det_over_one():
    rep = check_inner(det_poly(BALL2, 0), MPoly.constant(BALL2, 1.0), samples=100)
    assert rep.passed
    assert rep.max_defect < 1e-10


def test_inner_reverse_pair():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    p = 2 - z1 - z2
    rep = check_inner(reverse(p, (1, 1)), p, samples=150)
    assert rep.passed


def test_inner_fail_case():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    rep = check_inner(z1 + z2, MPoly.constant(BIDISK, 2.0), samples=100)
    assert rep.verdict == "fail"
    assert rep.max_defect > 0.1


def test_inner_rejects_zero_denominator():
    with pytest.raises(ValueError):
        check_inner(MPoly.var(BIDISK, 0), MPoly.zero(BIDISK))


# -- rudin_factorize ----------------------------------------------------------------


def test_rudin_det_over_one():
    fact = rudin_factorize(det_poly(BALL2, 0), MPoly.constant(BALL2, 1.0))
    assert fact.m == (1,)
    assert abs(fact.gamma - 1.0) < 1e-10


def test_rudin_reverse_pair_m_zero():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    p = 2 - z1 - z2
    fact = rudin_factorize(2 * z1 * z2 - z1 - z2, p)
    assert fact.m == (0, 0)
    assert abs(fact.gamma - 1.0) < 1e-10


def test_rudin_rejects_non_inner_shape():
    with pytest.raises(NotInnerFormError):
        rudin_factorize(MPoly.var(BALL2, 0, 0, 0), MPoly.constant(BALL2, 1.0))


def test_rudin_random_recovery(structure):
    rng = np.random.default_rng(31)
    for trial in range(6):
        p = random_stable_poly(structure, rng)
        m = tuple(int(rng.integers(0, 3)) for _ in structure.ell)
        q = reverse(p)
        for r, power in enumerate(m):
            if power:
                q = q * det_poly(structure, r) ** power
        rep = check_inner(q, p, samples=60, seed=trial)
        assert rep.passed
        fact = rudin_factorize(q, p)
        assert fact.m == m


# -- stability ---------------------------------------------------------------------


def test_stability_two_minus_sum():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    p = 2 - z1 - z2
    open_rep = stability_scan(p, "open", budget=800, seed=1)
    assert open_rep.verdict == "no-zero-found"
    closed_rep = stability_scan(p, "closed", budget=800, seed=1)
    assert closed_rep.verdict == "zero-found"
    # the only closed-ball zero is at z1 = z2 = 1
    for b in closed_rep.argmin.blocks:
        assert abs(b[0, 0] - 1.0) < 1e-3


def test_stability_three_minus_sum_closed():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    rep = stability_scan(3 - z1 - z2, "closed", budget=800, seed=2)
    assert rep.verdict == "no-zero-found"
    assert rep.min_abs == pytest.approx(1.0, abs=1e-2)


def test_stability_det_shift_open_zero():
    p = det_poly(BALL2, 0) - 0.5
    rep = stability_scan(p, "open", budget=800, seed=3)
    assert rep.verdict == "zero-found"
    Z = rep.argmin
    assert abs(np.linalg.det(Z.blocks[0]) - 0.5) < 1e-8
    assert spectral_norm(Z.blocks[0]) < 1.0


def test_stability_reports_budget():
    p = 3 - MPoly.var(BIDISK, 0) - MPoly.var(BIDISK, 1)
    rep = stability_scan(p, "open", budget=123, seed=0)
    assert rep.budget == 123
    assert rep.polish_count >= 1


# -- agler bound ---------------------------------------------------------------------


def test_agler_single_variable_contraction():
    z = MPoly.var(DISK, 0)
    one = MPoly.constant(DISK, 1.0)
    rep = agler_lower_bound(z, one, tuples=10, n_max=3, seed=0)
    # tuples are rescaled to land exactly at norm 1 - 1e-3, so the bound
    # sits at that radius (never above 1)
    assert 1.0 - 2e-3 <= rep.bound <= 1.0 + 1e-10


def test_agler_constant():
    c = 0.37 + 0.2j
    one = MPoly.constant(BIDISK, 1.0)
    rep = agler_lower_bound(MPoly.constant(BIDISK, c), one, tuples=4, n_max=2, seed=0)
    assert rep.bound == pytest.approx(abs(c), abs=1e-12)


def test_agler_synthesized_function_contractive():
    # any function with a unitary realization stays below 1 on tuples
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    one = MPoly.constant(BIDISK, 1.0)
    rep = agler_lower_bound(z1 * z2, one, tuples=15, n_max=4, seed=1)
    assert rep.bound <= 1.0 + 1e-8
    p = 2 - z1 - z2
    rep2 = agler_lower_bound(reverse(p, (1, 1)), p, tuples=15, n_max=4, seed=2)
    assert rep2.bound <= 1.0 + 1e-8


def test_agler_monotone_in_budget():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    one = MPoly.constant(BIDISK, 1.0)
    b1 = agler_lower_bound(z1 * z2, one, tuples=4, n_max=2, seed=3).bound
    b2 = agler_lower_bound(z1 * z2, one, tuples=9, n_max=2, seed=3).bound
    b3 = agler_lower_bound(z1 * z2, one, tuples=9, n_max=4, seed=3).bound
    assert b1 <= b2 + 1e-15
    assert b2 <= b3 + 1e-15


def test_agler_witness_reproducible():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    one = MPoly.constant(BIDISK, 1.0)
    rep = agler_lower_bound(z1 * z2, one, tuples=6, n_max=3, seed=4)
    T = rep.witness
    val = spectral_norm((z1 * z2).eval_tuple(T))
    assert abs(val - rep.bound) < 1e-10


def test_agler_n1_equals_point_modulus():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    one = MPoly.constant(BIDISK, 1.0)
    q = z1 * z2 - 0.3 * z1
    rep = agler_lower_bound(q, one, tuples=8, n_max=1, seed=5)
    best = 0.0
    for i in range(8):
        for fam_id, fam in enumerate(("diagonalizable", "single-generator")):
            T = sample_commuting_tuple(BIDISK, 1, fam, [205, 5, i, fam_id, 1])
            best = max(best, abs(q.eval(T.as_point())))
    assert abs(rep.bound - best) < 1e-12


# -- lift ---------------------------------------------------------------------------


def test_lift_three_minus_sum():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    p = 3 - z1 - z2
    res = eventual_sa_lift(reverse(p), p, [(1, 1), (2, 2)], seed=0, stability_budget=500)
    assert res.passed
    assert res.shifts is not None
    assert res.synthesis.transfer_match < 1e-6
    assert res.certificate.contractivity_margin > 0


def test_lift_trivial_det_case():
    one = MPoly.constant(BALL2, 1.0)
    det = det_poly(BALL2, 0)
    res = eventual_sa_lift(det, one, [(0,), (1,)], seed=0, stability_budget=300)
    assert res.passed
    assert res.shifts == (0,)
    assert res.factorization.m == (1,)


def test_lift_precondition_failure():
    z1, z2 = MPoly.var(BIDISK, 0), MPoly.var(BIDISK, 1)
    p = 2 - z1 - z2
    res = eventual_sa_lift(reverse(p), p, [(1, 1)], seed=0, stability_budget=500)
    assert res.verdict == "precondition-failed"
    assert res.colligation is None
