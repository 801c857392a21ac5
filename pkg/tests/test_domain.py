import numpy as np
import pytest

from polyball.domain import (
    BlockStructure,
    CommutingTuple,
    MatrixPoint,
    PointClass,
    StructureMismatchError,
    TupleFamily,
    inflate,
    sample_commuting_tuple,
    sample_interior,
    sample_shilov,
    spectral_norm,
)


def test_flat_index_bijection(structure):
    seen = set()
    for r, l in enumerate(structure.ell):
        for i in range(l):
            for j in range(l):
                v = structure.var_index(r, i, j)
                assert structure.var_rij(v) == (r, i, j)
                seen.add(v)
    assert seen == set(range(structure.d))
    # strictly increasing over (r, then row-major (i, j))
    order = [
        structure.var_index(r, i, j)
        for r, l in enumerate(structure.ell)
        for i in range(l)
        for j in range(l)
    ]
    assert order == sorted(order)


def test_var_names_round_trip():
    s = BlockStructure((2, 1))
    assert s.var_names() == ["z1_11", "z1_12", "z1_21", "z1_22", "z2_11"]
    for v in range(s.d):
        assert s.parse_var_name(s.var_name(v)) == v


def test_structure_validation():
    with pytest.raises(ValueError):
        BlockStructure(())
    with pytest.raises(ValueError):
        BlockStructure((2, 0))


# -- inflate -------------------------------------------------------------------


def test_inflate_scalar_kronecker():
    s = BlockStructure((1,))
    Z = MatrixPoint(s, (np.array([[0.5]]),))
    out = inflate(Z, (3,))
    assert np.allclose(out, np.diag([0.5, 0.5, 0.5]))


def test_inflate_empty():
    s = BlockStructure((2, 1))
    Z = sample_interior(s, 0)
    assert inflate(Z, (0, 0)).shape == (0, 0)


def test_inflate_polydisk_diag():
    s = BlockStructure((1, 1))
    Z = MatrixPoint(s, (np.array([[0.2 + 0.1j]]), np.array([[-0.3j]])))
    out = inflate(Z, (1, 1))
    assert np.allclose(out, np.diag([0.2 + 0.1j, -0.3j]))


def test_inflate_linear_in_z(structure):
    rng = np.random.default_rng(5)
    n = tuple(int(rng.integers(0, 3)) for _ in structure.ell)
    for _ in range(20):
        Z1 = sample_interior(structure, rng)
        Z2 = sample_interior(structure, rng)
        a, b = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
        mix = MatrixPoint(
            structure,
            tuple(a * x + b * y for x, y in zip(Z1.blocks, Z2.blocks)),
        )
        lhs = inflate(mix, n)
        rhs = a * inflate(Z1, n) + b * inflate(Z2, n)
        assert np.abs(lhs - rhs).max() < 1e-12


def test_inflate_unitary_at_shilov(structure):
    for i in range(10):
        U = sample_shilov(structure, [3, i])
        Un = inflate(U, tuple(1 + (i + r) % 2 for r in range(structure.k)))
        eye = np.eye(Un.shape[0])
        assert np.linalg.norm(Un.conj().T @ Un - eye, 2) < 1e-11


def test_inflate_structure_mismatch():
    s = BlockStructure((2,))
    Z = sample_interior(s, 0)
    with pytest.raises(StructureMismatchError):
        inflate(Z, (1, 1))


# -- samplers ------------------------------------------------------------------


def test_shilov_unitarity(structure):
    for i in range(5):
        U = sample_shilov(structure, [11, i])
        for b in U.blocks:
            assert np.linalg.norm(b.conj().T @ b - np.eye(b.shape[0])) <= 1e-12
        assert U.classify() is PointClass.SHILOV


def test_shilov_scalar_blocks_unimodular():
    s = BlockStructure((1, 1))
    for i in range(20):
        U = sample_shilov(s, [13, i])
        for b in U.blocks:
            assert abs(abs(b[0, 0]) - 1.0) <= 1e-12


def test_sampler_determinism(structure):
    a = sample_shilov(structure, 42)
    b = sample_shilov(structure, 42)
    for x, y in zip(a.blocks, b.blocks):
        assert np.array_equal(x, y)
    c = sample_interior(structure, 42)
    d = sample_interior(structure, 42)
    for x, y in zip(c.blocks, d.blocks):
        assert np.array_equal(x, y)


def test_interior_norms(structure):
    for i in range(10):
        Z = sample_interior(structure, [17, i])
        assert max(Z.spectral_norms()) < 1.0
        assert Z.classify() is PointClass.INTERIOR


def test_interior_shapes():
    s = BlockStructure((2,))
    Z = sample_interior(s, 0)
    assert Z.blocks[0].shape == (2, 2)


def test_haar_mean_moment():
    # Mean of |u_11|^2 over the 2x2 unitary group is 1/2.
    s = BlockStructure((2,))
    rng = np.random.default_rng(2024)
    total = 0.0
    n = 10_000
    for _ in range(n):
        U = sample_shilov(s, rng)
        total += abs(U.blocks[0][0, 0]) ** 2
    assert abs(total / n - 0.5) < 0.02


# -- commuting tuples -------------------------------------------------------------


@pytest.mark.parametrize("family", list(TupleFamily))
def test_tuple_invariants(structure, family):
    for i in range(3):
        T = sample_commuting_tuple(structure, 3, family, [23, i])
        assert T.commutator_defect() <= 1e-10
        assert max(T.block_norms()) <= 1.0 - 1e-3 + 1e-12


def test_tuple_n1_is_interior_point(structure):
    T = sample_commuting_tuple(structure, 1, "diagonalizable", 5)
    Z = T.as_point()
    assert Z.classify() is PointClass.INTERIOR


def test_tuple_determinism(structure):
    a = sample_commuting_tuple(structure, 2, "single-generator", 42)
    b = sample_commuting_tuple(structure, 2, "single-generator", 42)
    for x, y in zip(a.mats, b.mats):
        assert np.array_equal(x, y)


def test_tuple_validation_rejects_noncommuting():
    s = BlockStructure((1, 1))
    m1 = np.array([[0.0, 0.5], [0.0, 0.0]])
    m2 = np.array([[0.0, 0.0], [0.5, 0.0]])
    with pytest.raises(ValueError):
        CommutingTuple(s, 2, (m1, m2))


def test_point_json_round_trip(structure):
    Z = sample_interior(structure, 9)
    back = MatrixPoint.from_json(Z.to_json())
    for x, y in zip(Z.blocks, back.blocks):
        assert np.array_equal(x, y)


def test_tuple_json_round_trip(structure):
    T = sample_commuting_tuple(structure, 2, "diagonalizable", 31)
    back = CommutingTuple.from_json(T.to_json())
    assert back.N == 2
    for x, y in zip(T.mats, back.mats):
        assert np.array_equal(x, y)


def test_spectral_norm_uses_svd_and_handles_empty():
    assert spectral_norm(np.zeros((0, 0))) == 0.0
    m = np.array([[3.0, 0.0], [0.0, 1.0]])
    assert spectral_norm(m) == pytest.approx(3.0)
