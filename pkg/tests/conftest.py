import numpy as np
import pytest

from polyball.domain import BlockStructure, MatrixPoint
from polyball.mpoly import MPoly


STRUCTURES = [
    BlockStructure((1, 1)),
    BlockStructure((2,)),
    BlockStructure((2, 1)),
    BlockStructure((3,)),
]


@pytest.fixture(params=STRUCTURES, ids=lambda s: "ell" + "x".join(map(str, s.ell)))
def structure(request):
    return request.param


def random_poly(structure, rng, n_terms=4, max_block_deg=2):
    """Sparse random polynomial with block degrees at most max_block_deg."""
    terms = {}
    for _ in range(n_terms):
        exps = [0] * structure.d
        for r in range(structure.k):
            budget = int(rng.integers(0, max_block_deg + 1))
            rng_vars = structure.block_var_range(r)
            for _ in range(budget):
                exps[int(rng.integers(rng_vars.start, rng_vars.stop))] += 1
        c = complex(rng.standard_normal(), rng.standard_normal())
        terms[tuple(exps)] = terms.get(tuple(exps), 0) + c
    return MPoly.from_exponents(structure, terms.items())


def random_stable_poly(structure, rng, n_terms=3, max_block_deg=2, margin=0.3):
    """Strongly ball-stable by construction: the constant term dominates the
    l1 mass of the rest (entries of closed-ball points have modulus <= 1)."""
    p = random_poly(structure, rng, n_terms=n_terms, max_block_deg=max_block_deg)
    rest = MPoly(structure, {k: c for k, c in p.terms.items() if k != 0})
    total = sum(abs(c) for c in rest.terms.values())
    if total == 0.0:
        rest = MPoly.var(structure, 0) * 0.5
        total = 0.5
    return rest + (1.0 + margin) * total


def random_invertible_point(structure, rng, scale=1.0):
    blocks = []
    for l in structure.ell:
        while True:
            b = scale * (rng.standard_normal((l, l)) + 1j * rng.standard_normal((l, l)))
            if abs(np.linalg.det(b)) > 1e-3:
                blocks.append(b)
                break
    return MatrixPoint(structure, tuple(blocks))


def reverse_oracle(p, t, Z):
    """Numeric evaluation of prod_r det(Z^(r))^{t_r} * conj(p((Z*)^{-1})),
    the defining rational identity of the reverse (independent of the
    symbolic cofactor-substitution path)."""
    blocks_inv = tuple(np.linalg.inv(b.conj().T) for b in Z.blocks)
    W = MatrixPoint(p.structure, blocks_inv)
    val = np.conj(p.eval(W))
    for r, b in enumerate(Z.blocks):
        val *= np.linalg.det(b) ** t[r]
    return val
