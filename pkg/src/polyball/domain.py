"""Geometry of the unit square-matrix polyball.

The domain is a Cartesian product of ``k`` open spectral-norm unit balls of
square complex matrices, one ball of side ``ell[r]`` per block.  Its
distinguished (Shilov) boundary is the set of tuples of unitary blocks.
This module fixes the canonical flat ordering of the scalar variables
``z^(r)_{ij}`` (blocks ascending, row-major within a block), the point and
commuting-tuple containers, Kronecker inflation, and the seeded samplers
that the verification loops draw from.

All containers are immutable after construction; samplers are pure
functions of their seed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PolyballError",
    "StructureMismatchError",
    "BlockStructure",
    "PointClass",
    "MatrixPoint",
    "CommutingTuple",
    "TupleFamily",
    "inflate",
    "haar_unitary",
    "sample_shilov",
    "sample_interior",
    "sample_commuting_tuple",
    "spectral_norm",
    "condition_number",
]

# Relative tolerance for pairwise commutation of tuple entries.
COMMUTATOR_TOL = 1e-10

# Interior samples and commuting tuples are kept this far from the boundary.
INTERIOR_GAP = 1e-3


class PolyballError(Exception):
    """Base class for structured failures raised by this package."""


class StructureMismatchError(PolyballError, ValueError):
    """Operands were built over different block structures."""


def spectral_norm(mat) -> float:
    """Largest singular value, computed by SVD (no power iteration)."""
    mat = np.asarray(mat)
    if mat.size == 0:
        return 0.0
    return float(np.linalg.svd(mat, compute_uv=False)[0])


def condition_number(mat) -> float:
    """2-norm condition number; ``inf`` for singular or empty input."""
    mat = np.asarray(mat)
    if mat.size == 0:
        return float("inf")
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[-1] == 0.0:
        return float("inf")
    return float(sv[0] / sv[-1])


@dataclass(frozen=True)
class BlockStructure:
    """Block sizes ``(ell_1, ..., ell_k)`` of a square-matrix polyball.

    The flat scalar-variable count is ``d = sum(ell_r**2)``.  Flat index
    runs over blocks in ascending order and row-major within each block;
    every module (exponent vectors, JSON, Kronecker layouts) uses this one
    order.  Indices ``(r, i, j)`` are 0-based in code; JSON variable names
    are 1-based (``z1_11`` is block 0, entry (0, 0)).
    """

    ell: tuple[int, ...]

    def __post_init__(self):
        ell = tuple(int(l) for l in self.ell)
        if not ell:
            raise ValueError("a polyball needs at least one block")
        if any(l < 1 for l in ell):
            raise ValueError(f"block sizes must be positive, got {ell}")
        object.__setattr__(self, "ell", ell)

    @property
    def k(self) -> int:
        return len(self.ell)

    @property
    def d(self) -> int:
        return sum(l * l for l in self.ell)

    def block_offset(self, r: int) -> int:
        """Flat index of variable ``z^(r)_{00}``."""
        return sum(l * l for l in self.ell[:r])

    def var_index(self, r: int, i: int, j: int) -> int:
        l = self.ell[r]
        if not (0 <= i < l and 0 <= j < l):
            raise IndexError(f"entry ({i},{j}) outside block {r} of side {l}")
        return self.block_offset(r) + i * l + j

    def var_rij(self, v: int) -> tuple[int, int, int]:
        """Inverse of :meth:`var_index`."""
        if not (0 <= v < self.d):
            raise IndexError(f"flat variable index {v} out of range")
        for r, l in enumerate(self.ell):
            if v < l * l:
                return r, v // l, v % l
            v -= l * l
        raise AssertionError("unreachable")

    def block_var_range(self, r: int) -> range:
        off = self.block_offset(r)
        return range(off, off + self.ell[r] ** 2)

    def var_name(self, v: int) -> str:
        r, i, j = self.var_rij(v)
        return f"z{r + 1}_{i + 1}{j + 1}"

    def parse_var_name(self, name: str) -> int:
        try:
            head, tail = name.split("_")
            if not head.startswith("z") or len(tail) != 2:
                raise ValueError
            r = int(head[1:]) - 1
            i, j = int(tail[0]) - 1, int(tail[1]) - 1
        except ValueError:
            raise ValueError(f"malformed variable name {name!r}") from None
        if not (0 <= r < self.k):
            raise ValueError(f"variable {name!r}: block index out of range")
        return self.var_index(r, i, j)

    def var_names(self) -> list[str]:
        return [self.var_name(v) for v in range(self.d)]

    def to_json(self) -> dict:
        return {"ell": list(self.ell)}

    @classmethod
    def from_json(cls, obj: dict) -> "BlockStructure":
        if not isinstance(obj, dict) or "ell" not in obj:
            raise ValueError("block structure JSON must carry an 'ell' list")
        return cls(tuple(obj["ell"]))


def _freeze(mat: np.ndarray) -> np.ndarray:
    out = np.array(mat, dtype=np.complex128, copy=True)
    out.setflags(write=False)
    return out


class PointClass(enum.Enum):
    INTERIOR = "interior"
    SHILOV = "shilov"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class MatrixPoint:
    """A point of (the closure of) the polyball: one matrix per block."""

    structure: BlockStructure
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.blocks) != self.structure.k:
            raise StructureMismatchError(
                f"expected {self.structure.k} blocks, got {len(self.blocks)}"
            )
        frozen = []
        for r, b in enumerate(self.blocks):
            b = np.asarray(b)
            l = self.structure.ell[r]
            if b.shape != (l, l):
                raise StructureMismatchError(
                    f"block {r} has shape {b.shape}, expected ({l}, {l})"
                )
            frozen.append(_freeze(b))
        object.__setattr__(self, "blocks", tuple(frozen))

    def spectral_norms(self) -> list[float]:
        return [spectral_norm(b) for b in self.blocks]

    def classify(self, tol: float = 1e-10) -> PointClass:
        # Shilov first: a tuple of unitaries has spectral norm exactly 1,
        # but rounding can land it a hair inside the ball.
        defects = [
            np.linalg.norm(b.conj().T @ b - np.eye(b.shape[0]), 2)
            for b in self.blocks
        ]
        if max(defects) <= tol:
            return PointClass.SHILOV
        norms = self.spectral_norms()
        if max(norms) < 1.0:
            return PointClass.INTERIOR
        if max(norms) <= 1.0 + tol:
            return PointClass.BOUNDARY
        return PointClass.OUTSIDE

    def flat_entries(self) -> np.ndarray:
        """Entries in canonical flat variable order, length ``d``."""
        return np.concatenate([b.ravel() for b in self.blocks])

    def block_diag(self) -> np.ndarray:
        side = sum(self.structure.ell)
        out = np.zeros((side, side), dtype=np.complex128)
        pos = 0
        for b in self.blocks:
            l = b.shape[0]
            out[pos : pos + l, pos : pos + l] = b
            pos += l
        return out

    def to_json(self) -> dict:
        return {"blocks": [encode_matrix(b) for b in self.blocks]}

    @classmethod
    def from_json(cls, obj: dict, structure: BlockStructure | None = None) -> "MatrixPoint":
        if not isinstance(obj, dict) or "blocks" not in obj:
            raise ValueError("matrix point JSON must carry a 'blocks' list")
        blocks = [decode_matrix(b) for b in obj["blocks"]]
        if structure is None:
            structure = BlockStructure(tuple(b.shape[0] for b in blocks))
        return cls(structure, tuple(blocks))


class TupleFamily(enum.Enum):
    """Construction families for random commuting tuples."""

    DIAGONALIZABLE = "diagonalizable"
    SINGLE_GENERATOR = "single-generator"

    @classmethod
    def coerce(cls, value) -> "TupleFamily":
        if isinstance(value, cls):
            return value
        norm = str(value).strip().lower().replace("_", "-")
        for fam in cls:
            if fam.value == norm:
                return fam
        raise ValueError(f"unknown tuple family {value!r}")


@dataclass(frozen=True)
class CommutingTuple:
    """One ``N x N`` matrix per scalar variable, all pairwise commuting.

    Membership in the strict matrix "polyball of operators" additionally
    requires each block operator matrix ``T^(r) = [T^(r)_{ij}]`` (side
    ``ell_r * N``) to be a strict contraction.  Commutation is required
    across all blocks, not only within one, because the whole tuple is
    treated as a single multioperator.
    """

    structure: BlockStructure
    N: int
    mats: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("representation dimension N must be positive")
        if len(self.mats) != self.structure.d:
            raise StructureMismatchError(
                f"expected {self.structure.d} matrices, got {len(self.mats)}"
            )
        frozen = []
        for v, m in enumerate(self.mats):
            m = np.asarray(m)
            if m.shape != (self.N, self.N):
                raise StructureMismatchError(
                    f"matrix {self.structure.var_name(v)} has shape {m.shape}, "
                    f"expected ({self.N}, {self.N})"
                )
            frozen.append(_freeze(m))
        object.__setattr__(self, "mats", tuple(frozen))
        defect = self.commutator_defect()
        if defect > COMMUTATOR_TOL:
            raise ValueError(
                f"tuple entries do not commute: relative defect {defect:.3e}"
            )
        worst = max(self.block_norms())
        if worst >= 1.0:
            raise ValueError(
                f"block operator norm {worst:.6f} is not strictly below 1"
            )

    def mat(self, r: int, i: int, j: int) -> np.ndarray:
        return self.mats[self.structure.var_index(r, i, j)]

    def block_operator(self, r: int) -> np.ndarray:
        l = self.structure.ell[r]
        rows = [[self.mat(r, i, j) for j in range(l)] for i in range(l)]
        return np.block(rows)

    def block_norms(self) -> list[float]:
        return [spectral_norm(self.block_operator(r)) for r in range(self.structure.k)]

    def commutator_defect(self) -> float:
        """Max over pairs of ``||[T_a, T_b]|| / max(1, ||T_a|| ||T_b||)``."""
        norms = [spectral_norm(m) for m in self.mats]
        worst = 0.0
        for a in range(len(self.mats)):
            for b in range(a + 1, len(self.mats)):
                comm = self.mats[a] @ self.mats[b] - self.mats[b] @ self.mats[a]
                scale = max(1.0, norms[a] * norms[b])
                worst = max(worst, spectral_norm(comm) / scale)
        return worst

    def as_point(self) -> MatrixPoint:
        """For ``N == 1``, the tuple is just an interior point."""
        if self.N != 1:
            raise ValueError("only 1-dimensional tuples correspond to points")
        blocks = []
        for r, l in enumerate(self.structure.ell):
            b = np.array(
                [[self.mat(r, i, j)[0, 0] for j in range(l)] for i in range(l)]
            )
            blocks.append(b)
        return MatrixPoint(self.structure, tuple(blocks))

    def to_json(self) -> dict:
        names = self.structure.var_names()
        return {
            "ell": list(self.structure.ell),
            "N": self.N,
            "mats": {names[v]: encode_matrix(m) for v, m in enumerate(self.mats)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CommutingTuple":
        for fieldname in ("N", "mats"):
            if fieldname not in obj:
                raise ValueError(f"commuting tuple JSON lacks field {fieldname!r}")
        if "ell" in obj:
            structure = BlockStructure(tuple(obj["ell"]))
        else:
            # Reconstruct block sizes from the variable names.
            rs = {}
            for name in obj["mats"]:
                head, tail = name.split("_")
                rs[int(head[1:])] = max(rs.get(int(head[1:]), 0), int(tail[0]))
            structure = BlockStructure(tuple(rs[r] for r in sorted(rs)))
        mats = []
        for v in range(structure.d):
            name = structure.var_name(v)
            if name not in obj["mats"]:
                raise ValueError(f"commuting tuple JSON lacks matrix {name!r}")
            mats.append(decode_matrix(obj["mats"][name]))
        return cls(structure, int(obj["N"]), tuple(mats))


def inflate(point: MatrixPoint, n) -> np.ndarray:
    """Kronecker inflation ``Z_n = direct sum of Z^(r) (x) I_{n_r}``.

    Blocks appear in ascending ``r`` order; blocks with ``n_r == 0`` are
    omitted, so all-zero ``n`` yields a 0 x 0 matrix.
    """
    n = tuple(int(x) for x in n)
    if len(n) != point.structure.k:
        raise StructureMismatchError(
            f"n has {len(n)} entries, structure has {point.structure.k} blocks"
        )
    if any(x < 0 for x in n):
        raise ValueError("inflation multiplicities must be nonnegative")
    side = sum(l * m for l, m in zip(point.structure.ell, n))
    out = np.zeros((side, side), dtype=np.complex128)
    pos = 0
    for r, m in enumerate(n):
        if m == 0:
            continue
        l = point.structure.ell[r]
        out[pos : pos + l * m, pos : pos + l * m] = np.kron(
            point.blocks[r], np.eye(m)
        )
        pos += l * m
    return out


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary: QR of a Ginibre matrix with the phase
    convention that makes the diagonal of R positive."""
    g = _ginibre(rng, dim, dim)
    q, r = np.linalg.qr(g)
    diag = np.diagonal(r).copy()
    diag[diag == 0] = 1.0
    return q * (diag / np.abs(diag))


def sample_shilov(structure: BlockStructure, seed) -> MatrixPoint:
    """A uniformly random point of the distinguished boundary: one
    Haar-unitary matrix per block.  Deterministic under ``seed``."""
    rng = _rng(seed)
    blocks = tuple(haar_unitary(l, rng) for l in structure.ell)
    return MatrixPoint(structure, blocks)


def sample_interior(structure: BlockStructure, seed) -> MatrixPoint:
    """A random interior point: Ginibre blocks rescaled to a spectral norm
    drawn uniformly from ``(0, 1 - 1e-3)``."""
    rng = _rng(seed)
    blocks = []
    for l in structure.ell:
        g = _ginibre(rng, l, l)
        target = rng.uniform(0.0, 1.0 - INTERIOR_GAP)
        norm = spectral_norm(g)
        if norm == 0.0:  # essentially impossible, but stay safe
            g = np.eye(l, dtype=np.complex128)
            norm = 1.0
        blocks.append(g * (target / norm))
    return MatrixPoint(structure, tuple(blocks))


# Condition cap for the similarity used by the diagonalizable family; kept
# well below the generic 1e12 singularity cap so that the commutator defect
# of the sampled tuple stays under COMMUTATOR_TOL in float64.
_SIMILARITY_COND_CAP = 1e6


def sample_commuting_tuple(structure: BlockStructure, N: int, family, seed) -> CommutingTuple:
    """A random tuple of pairwise-commuting ``N x N`` matrices, rescaled so
    that the largest block operator norm equals ``1 - 1e-3``.

    Families:
      * diagonalizable: ``T_v = S D_v S^{-1}`` with one shared random
        similarity ``S`` and independent random diagonals.
      * single-generator: ``T_v = q_v(J)`` for one random matrix ``J``
        (diagonal plus nilpotent superdiagonal) and random polynomials
        ``q_v`` of degree below ``N``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    family = TupleFamily.coerce(family)
    rng = _rng(seed)
    d = structure.d

    if family is TupleFamily.DIAGONALIZABLE:
        for _ in range(10):
            S = _ginibre(rng, N, N)
            if condition_number(S) <= _SIMILARITY_COND_CAP:
                break
        else:
            raise PolyballError(
                "failed to draw a well-conditioned similarity in 10 attempts"
            )
        S_inv = np.linalg.inv(S)
        mats = []
        for _ in range(d):
            diag = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / np.sqrt(2)
            mats.append(S @ np.diag(diag) @ S_inv)
    else:
        diag = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / np.sqrt(2)
        J = np.diag(diag).astype(np.complex128)
        if N > 1:
            J += np.diag(rng.standard_normal(N - 1) + 1j * rng.standard_normal(N - 1), 1)
        powers = [np.eye(N, dtype=np.complex128)]
        for _ in range(N - 1):
            powers.append(powers[-1] @ J)
        mats = []
        for _ in range(d):
            coeffs = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / np.sqrt(2)
            mats.append(sum(c * p for c, p in zip(coeffs, powers)))

    # Rescale the whole tuple so the worst block operator lands strictly
    # inside the ball, at distance INTERIOR_GAP from the boundary.
    worst = 0.0
    for r in range(structure.k):
        l = structure.ell[r]
        off = structure.block_offset(r)
        block = np.block(
            [[mats[off + i * l + j] for j in range(l)] for i in range(l)]
        )
        worst = max(worst, spectral_norm(block))
    if worst > 0.0:
        scale = (1.0 - INTERIOR_GAP) / worst
        mats = [m * scale for m in mats]
    return CommutingTuple(structure, N, tuple(mats))


# -- JSON helpers for complex matrices ---------------------------------------

def encode_complex(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def decode_complex(obj) -> complex:
    if not (isinstance(obj, (list, tuple)) and len(obj) == 2):
        raise ValueError(f"complex scalar must be a [re, im] pair, got {obj!r}")
    return complex(float(obj[0]), float(obj[1]))


def encode_matrix(mat: np.ndarray) -> list:
    mat = np.atleast_2d(np.asarray(mat, dtype=np.complex128))
    return [[encode_complex(z) for z in row] for row in mat]


def decode_matrix(obj) -> np.ndarray:
    if not isinstance(obj, list) or (obj and not isinstance(obj[0], list)):
        raise ValueError("matrix JSON must be a list of rows")
    if not obj:
        return np.zeros((0, 0), dtype=np.complex128)
    return np.array(
        [[decode_complex(z) for z in row] for row in obj], dtype=np.complex128
    )
