"""Finite-dimensional unitary realizations of Schur-Agler functions.

A colligation is a block unitary ``[[A, B], [C, D]]`` whose transfer
function ``F(Z) = D + C Z_n (I - A Z_n)^{-1} B`` (with ``Z_n`` the
Kronecker inflation of the point) is a rational inner function in the
Schur-Agler class of the polyball.  Synthesis goes through three stages:

  1. :func:`boundary_gram_check` confirms ``P*P = Q*Q`` on the Shilov
     boundary (sampled).
  2. :func:`gram_feasibility` searches for positive semidefinite Gram
     blocks certifying the Agler decomposition

        P(W)*P(Z) - Q(W)*Q(Z)
            = sum_r G_r(W)* ((I - W^(r)* Z^(r)) (x) I_{n_r}) G_r(Z)

     by Dykstra alternating projections between the coefficient-matching
     affine subspace and the PSD cone, followed by a Gauss-Newton polish
     of the extracted factors.
  3. :func:`lurking_isometry` turns the certificate into a unitary
     colligation by extending the isometry between sampled column stacks.

:func:`choi_factor` exposes the Choi-matrix factorization
``Phi(X) = Y* (X (x) I_{ab}) Y`` of a completely positive map, the
linear-algebra engine behind the decomposition step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .domain import (
    BlockStructure,
    CommutingTuple,
    MatrixPoint,
    PolyballError,
    StructureMismatchError,
    condition_number,
    encode_matrix,
    decode_matrix,
    inflate,
    sample_commuting_tuple,
    sample_interior,
    sample_shilov,
    spectral_norm,
)
from .mpoly import MatPoly, coerce_matpoly

__all__ = [
    "Colligation",
    "GramCertificate",
    "GramInfeasibleError",
    "InvalidCertificateError",
    "SingularResolventError",
    "NotCompletelyPositiveError",
    "eval_transfer",
    "eval_transfer_tuple",
    "verify_colligation",
    "ColligationReport",
    "choi_factor",
    "apply_choi",
    "apply_factored",
    "gram_feasibility",
    "boundary_gram_check",
    "BoundaryReport",
    "lurking_isometry",
    "synthesize",
    "SynthesisResult",
    "haar_colligation",
    "gram_dimension_cap",
]

RESOLVENT_COND_CAP = 1e12
UNITARY_TOL = 1e-9


class GramInfeasibleError(PolyballError):
    """The PSD feasibility search stalled above tolerance.

    Signals either a non-Schur-Agler input or an insufficient iteration
    budget; distinguishing the two is the caller's burden.
    """

    def __init__(self, best_residual: float):
        self.best_residual = float(best_residual)
        super().__init__(
            f"Gram feasibility stalled at residual {best_residual:.3e}"
        )


class InvalidCertificateError(PolyballError):
    """Certificate data failed an independent re-check."""


class SingularResolventError(PolyballError):
    """``I - A Z_n`` was numerically singular at the requested point."""


class NotCompletelyPositiveError(PolyballError):
    """The Choi matrix was not positive semidefinite within tolerance."""


@dataclass(frozen=True)
class Colligation:
    """Unitary system matrix ``[[A, B], [C, D]]`` over a polyball.

    ``A`` is square of side ``M = sum_r ell_r n_r``; ``B`` is ``M x s``,
    ``C`` is ``s x M`` and ``D`` is ``s x s``.
    """

    structure: BlockStructure
    n: tuple[int, ...]
    s: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        n = tuple(int(x) for x in self.n)
        if len(n) != self.structure.k or any(x < 0 for x in n):
            raise StructureMismatchError("bad inflation multiplicities")
        object.__setattr__(self, "n", n)
        M = self.state_dim
        shapes = {"A": (M, M), "B": (M, self.s), "C": (self.s, M), "D": (self.s, self.s)}
        for name, want in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=np.complex128)
            if arr.shape != want:
                raise StructureMismatchError(
                    f"{name} has shape {arr.shape}, expected {want}"
                )
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def state_dim(self) -> int:
        return sum(l * m for l, m in zip(self.structure.ell, self.n))

    def system_matrix(self) -> np.ndarray:
        M, s = self.state_dim, self.s
        out = np.zeros((M + s, M + s), dtype=np.complex128)
        out[:M, :M] = self.A
        out[:M, M:] = self.B
        out[M:, :M] = self.C
        out[M:, M:] = self.D
        return out

    @property
    def unitary_defect(self) -> float:
        V = self.system_matrix()
        return float(np.linalg.norm(V.conj().T @ V - np.eye(V.shape[0]), 2))

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return self.unitary_defect <= tol

    def determinant(self) -> complex:
        """``det [[A, B], [C, D]]``, the phase entering the pencil identity."""
        return complex(np.linalg.det(self.system_matrix()))

    def to_json(self) -> dict:
        return {
            "ell": list(self.structure.ell),
            "n": list(self.n),
            "s": self.s,
            "A": encode_matrix(self.A),
            "B": encode_matrix(self.B),
            "C": encode_matrix(self.C),
            "D": encode_matrix(self.D),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Colligation":
        for f in ("ell", "n", "s", "A", "B", "C", "D"):
            if f not in obj:
                raise ValueError(f"colligation JSON lacks field {f!r}")
        structure = BlockStructure(tuple(obj["ell"]))
        n = tuple(int(x) for x in obj["n"])
        s = int(obj["s"])
        M = sum(l * m for l, m in zip(structure.ell, n))

        def mat(name, rows, cols):
            raw = obj[name]
            if rows == 0 or cols == 0:
                return np.zeros((rows, cols), dtype=np.complex128)
            return decode_matrix(raw)

        return cls(
            structure,
            n,
            s,
            mat("A", M, M),
            mat("B", M, s),
            mat("C", s, M),
            mat("D", s, s),
        )


def haar_colligation(structure: BlockStructure, n, s: int, seed) -> Colligation:
    """A random unitary colligation: Haar unitary of side ``M + s``."""
    from .domain import haar_unitary, _rng

    n = tuple(int(x) for x in n)
    M = sum(l * m for l, m in zip(structure.ell, n))
    U = haar_unitary(M + s, _rng(seed))
    return Colligation(structure, n, s, U[:M, :M], U[:M, M:], U[M:, :M], U[M:, M:])


def eval_transfer(c: Colligation, Z: MatrixPoint) -> np.ndarray:
    """``F(Z) = D + C Z_n (I - A Z_n)^{-1} B``; just ``D`` when ``n = 0``."""
    if Z.structure != c.structure:
        raise StructureMismatchError("point over a different structure")
    M = c.state_dim
    if M == 0:
        return np.array(c.D, copy=True)
    Zn = inflate(Z, c.n)
    resolvent = np.eye(M) - c.A @ Zn
    if condition_number(resolvent) > RESOLVENT_COND_CAP:
        raise SingularResolventError(
            "I - A Z_n is numerically singular at this point"
        )
    return c.D + c.C @ Zn @ np.linalg.solve(resolvent, c.B)


def _tuple_inflation(T: CommutingTuple, n) -> np.ndarray:
    """Operator inflation of a commuting tuple: the matrix obtained from
    ``Z_n`` by substituting the ``N x N`` block ``T^(r)_{ij}`` for each
    scalar ``z^(r)_{ij}`` (row order: block r, block row i, copy a, then
    the representation index)."""
    structure = T.structure
    N = T.N
    side = sum(l * m for l, m in zip(structure.ell, n)) * N
    out = np.zeros((side, side), dtype=np.complex128)
    pos = 0
    eye = np.eye(1)
    for r, m in enumerate(n):
        if m == 0:
            continue
        l = structure.ell[r]
        block = np.block(
            [
                [np.kron(np.eye(m), T.mat(r, i, j)) for j in range(l)]
                for i in range(l)
            ]
        )
        size = l * m * N
        out[pos : pos + size, pos : pos + size] = block
        pos += size
    return out


def eval_transfer_tuple(c: Colligation, T: CommutingTuple) -> np.ndarray:
    """Transfer value at a commuting tuple, computed by a direct solve on
    the N-inflated system (no Neumann truncation)."""
    if T.structure != c.structure:
        raise StructureMismatchError("tuple over a different structure")
    N = T.N
    M = c.state_dim
    D = np.kron(c.D, np.eye(N))
    if M == 0:
        return D
    Tn = _tuple_inflation(T, c.n)
    A = np.kron(c.A, np.eye(N))
    B = np.kron(c.B, np.eye(N))
    C = np.kron(c.C, np.eye(N))
    resolvent = np.eye(M * N) - A @ Tn
    if condition_number(resolvent) > RESOLVENT_COND_CAP:
        raise SingularResolventError("inflated resolvent numerically singular")
    return D + C @ Tn @ np.linalg.solve(resolvent, B)


@dataclass(frozen=True)
class ColligationReport:
    unitary_defect: float
    boundary_defect: float
    boundary_samples: int
    tuple_norm_max: float
    tuple_samples: int
    unitary_ok: bool
    inner_ok: bool
    schur_agler_ok: bool

    @property
    def passed(self) -> bool:
        return self.unitary_ok and self.inner_ok and self.schur_agler_ok

    def to_json(self) -> dict:
        return {
            "unitary_defect": self.unitary_defect,
            "boundary_defect": self.boundary_defect,
            "boundary_samples": self.boundary_samples,
            "tuple_norm_max": self.tuple_norm_max,
            "tuple_samples": self.tuple_samples,
            "verdict": "pass" if self.passed else "fail",
            "checks": {
                "unitary": self.unitary_ok,
                "inner_on_boundary": self.inner_ok,
                "schur_agler_bound": self.schur_agler_ok,
            },
        }


def verify_colligation(
    c: Colligation,
    trials: int = 100,
    seed: int = 0,
    tuple_trials: int | None = None,
    n_max: int = 4,
) -> ColligationReport:
    """Check unitarity, boundary innerness, and the Schur-Agler bound.

    Evaluates the transfer at sampled Shilov points (reporting the largest
    ``||F(U)*F(U) - I||``) and at sampled commuting tuples (largest
    ``||F(T)||``, which cannot exceed 1 for a unitary colligation).
    """
    defect = c.unitary_defect
    boundary = 0.0
    eye = np.eye(c.s)
    for i in range(trials):
        U = sample_shilov(c.structure, [101, seed, i])
        F = eval_transfer(c, U)
        boundary = max(boundary, float(np.linalg.norm(F.conj().T @ F - eye, 2)))
    tuple_trials = trials if tuple_trials is None else tuple_trials
    worst = 0.0
    fams = ["diagonalizable", "single-generator"]
    for i in range(tuple_trials):
        N = 1 + (i % n_max)
        T = sample_commuting_tuple(c.structure, N, fams[i % 2], [102, seed, i])
        worst = max(worst, spectral_norm(eval_transfer_tuple(c, T)))
    return ColligationReport(
        unitary_defect=float(defect),
        boundary_defect=float(boundary),
        boundary_samples=trials,
        tuple_norm_max=float(worst),
        tuple_samples=tuple_trials,
        unitary_ok=defect <= UNITARY_TOL,
        inner_ok=boundary < 1e-8,
        schur_agler_ok=worst <= 1.0 + 1e-8,
    )


# -- Choi factorization --------------------------------------------------------


def choi_factor(choi: np.ndarray, a: int, b: int, tol: float = 1e-9) -> np.ndarray:
    """Factor a completely positive map through its Choi matrix.

    ``choi`` is the block matrix ``[Phi(E_ij)]_{ij}`` of shape
    ``(a*b, a*b)`` with ``b x b`` blocks.  Returns ``Y`` of shape
    ``(a*a*b, b)`` with ``Phi(X) = Y* (X (x) I_{ab}) Y`` exactly on the
    matrix-unit basis (up to eigenvalue truncation at ``1e-11 * lam_max``).
    Raises :class:`NotCompletelyPositiveError` when the Choi matrix is not
    Hermitian PSD within ``tol``.
    """
    choi = np.asarray(choi, dtype=np.complex128)
    ab = a * b
    if choi.shape != (ab, ab):
        raise ValueError(f"Choi matrix must be {ab} x {ab}, got {choi.shape}")
    herm_defect = np.linalg.norm(choi - choi.conj().T, 2)
    scale = max(1.0, float(np.linalg.norm(choi, 2)))
    if herm_defect > tol * scale:
        raise NotCompletelyPositiveError(
            f"Choi matrix not Hermitian (defect {herm_defect:.3e})"
        )
    H = 0.5 * (choi + choi.conj().T)
    lam, vec = np.linalg.eigh(H)
    if lam.size and lam[0] < -tol * scale:
        raise NotCompletelyPositiveError(
            f"Choi matrix has negative eigenvalue {lam[0]:.3e}"
        )
    lam_max = float(lam[-1]) if lam.size else 0.0
    keep = lam > max(0.0, 1e-11 * lam_max)
    root = vec[:, keep] * np.sqrt(lam[keep])
    R = root.conj().T  # rank x ab, with R* R = H
    rank = R.shape[0]
    Y = np.zeros((a * ab, b), dtype=np.complex128)
    for i in range(a):
        Y[i * ab : i * ab + rank, :] = R[:, i * b : (i + 1) * b]
    return Y


def apply_choi(choi: np.ndarray, a: int, b: int, X: np.ndarray) -> np.ndarray:
    """Evaluate the map encoded by a Choi matrix: ``Phi(X) = sum x_ij C_ij``."""
    X = np.asarray(X)
    out = np.zeros((b, b), dtype=np.complex128)
    for i in range(a):
        for j in range(a):
            out += X[i, j] * choi[i * b : (i + 1) * b, j * b : (j + 1) * b]
    return out


def apply_factored(Y: np.ndarray, a: int, b: int, X: np.ndarray) -> np.ndarray:
    """Evaluate ``Y* (X (x) I_{ab}) Y``."""
    ab = a * b
    return Y.conj().T @ np.kron(np.asarray(X, dtype=np.complex128), np.eye(ab)) @ Y


# -- Gram feasibility ------------------------------------------------------------


def gram_dimension_cap(structure: BlockStructure, s: int, g: int, r: int) -> int:
    """Upper bound ``ell_r * s * binom(g + d - 1, d)`` on the factor rank."""
    return structure.ell[r] * s * math.comb(g + structure.d - 1, structure.d)


def _monomials_upto(structure: BlockStructure, deg: int) -> list[tuple[int, ...]]:
    """All exponent tuples with total degree <= deg, in a fixed graded order."""
    d = structure.d
    out: list[tuple[int, ...]] = []

    def rec(prefix, remaining, budget):
        if remaining == 0:
            out.append(tuple(prefix))
            return
        for e in range(budget + 1):
            rec(prefix + [e], remaining - 1, budget - e)

    if deg >= 0:
        rec([], d, deg)
    out.sort(key=lambda e: (sum(e), e))
    return out


class _GramSystem:
    """Coefficient-matching linear system for the Agler decomposition.

    Unknowns are the Hermitian Gram blocks ``M_r`` indexed by pairs
    (block row i, monomial of degree <= g-1) with s x s sub-blocks;
    equations match the coefficient of ``conj(w)^beta z^alpha`` for every
    pair of monomials of degree <= g.
    """

    def __init__(self, P: MatPoly, Q: MatPoly, g: int):
        structure = P.structure
        if Q.structure != structure:
            raise StructureMismatchError("P and Q over different structures")
        if P.rows != P.cols or Q.rows != P.rows or Q.cols != P.cols:
            raise ValueError("P and Q must be square of the same size")
        s = P.rows
        if max(P.total_degree(), Q.total_degree()) > g:
            raise ValueError(
                "total degree of P, Q exceeds the requested bound g"
            )
        self.structure = structure
        self.P, self.Q, self.g, self.s = P, Q, g, s

        self.mon_g = _monomials_upto(structure, g)
        self.mon_gm1 = _monomials_upto(structure, g - 1)
        self.g_index = {e: idx for idx, e in enumerate(self.mon_g)}
        self.gm1_index = {e: idx for idx, e in enumerate(self.mon_gm1)}
        m = len(self.mon_gm1)
        self.m = m
        self.sizes = [structure.ell[r] * m * s for r in range(structure.k)]

        # Hermitian parametrization: per block, the diagonal followed by
        # (sqrt2*Re, sqrt2*Im) for each upper off-diagonal entry.  This makes
        # the real parameter vector an isometry for the Frobenius metric.
        self.param_offsets = []
        off = 0
        for n in self.sizes:
            self.param_offsets.append(off)
            off += n * n
        self.n_params = off

        self._build_equations()

    # Parameter helpers -----------------------------------------------------

    def _pair_index(self, n: int, p: int, q: int) -> int:
        # index of (p, q) with p < q in row-major upper-triangle order
        return p * (2 * n - p - 1) // 2 + (q - p - 1)

    def pack(self, Ms: list[np.ndarray]) -> np.ndarray:
        x = np.zeros(self.n_params)
        for r, M in enumerate(Ms):
            n = self.sizes[r]
            off = self.param_offsets[r]
            x[off : off + n] = M.diagonal().real
            base = off + n
            sq = np.sqrt(2.0)
            for p in range(n):
                for q in range(p + 1, n):
                    idx = base + 2 * self._pair_index(n, p, q)
                    x[idx] = sq * M[p, q].real
                    x[idx + 1] = sq * M[p, q].imag
        return x

    def unpack(self, x: np.ndarray) -> list[np.ndarray]:
        Ms = []
        for r, n in enumerate(self.sizes):
            off = self.param_offsets[r]
            M = np.zeros((n, n), dtype=np.complex128)
            M[np.diag_indices(n)] = x[off : off + n]
            base = off + n
            inv_sq = 1.0 / np.sqrt(2.0)
            for p in range(n):
                for q in range(p + 1, n):
                    idx = base + 2 * self._pair_index(n, p, q)
                    val = (x[idx] + 1j * x[idx + 1]) * inv_sq
                    M[p, q] = val
                    M[q, p] = val.conjugate()
            Ms.append(M)
        return Ms

    def col(self, r: int, i: int, a_idx: int, t: int) -> int:
        return (i * self.m + a_idx) * self.s + t

    # Equation assembly ------------------------------------------------------

    def _build_equations(self):
        structure, s, g = self.structure, self.s, self.g
        Pc = self.P.coefficients()
        Qc = self.Q.coefficients()
        n_eq = len(self.mon_g) ** 2 * s * s
        A = np.zeros((2 * n_eq, self.n_params))
        brows = np.zeros(2 * n_eq)
        eq = 0
        zero = np.zeros((s, s), dtype=np.complex128)

        def add_entry(row_re: int, r: int, p: int, q: int, cval: complex):
            n = self.sizes[r]
            off = self.param_offsets[r]
            if p == q:
                A[row_re, off + p] += cval.real
                A[row_re + 1, off + p] += cval.imag
                return
            conjugate = p > q
            if conjugate:
                p, q = q, p
            idx = off + n + 2 * self._pair_index(n, p, q)
            w = cval / np.sqrt(2.0)
            if conjugate:
                # M[q', p'] = (x_re - i x_im)/sqrt2
                A[row_re, idx] += w.real
                A[row_re, idx + 1] += w.imag
                A[row_re + 1, idx] += w.imag
                A[row_re + 1, idx + 1] += -w.real
            else:
                A[row_re, idx] += w.real
                A[row_re, idx + 1] += -w.imag
                A[row_re + 1, idx] += w.imag
                A[row_re + 1, idx + 1] += w.real

        d = structure.d
        for beta in self.mon_g:
            Pb = Pc.get(beta, zero)
            Qb = Qc.get(beta, zero)
            b_in_gm1 = self.gm1_index.get(beta)
            for alpha in self.mon_g:
                Pa = Pc.get(alpha, zero)
                Qa = Qc.get(alpha, zero)
                rhs = Pb.conj().T @ Pa - Qb.conj().T @ Qa
                a_in_gm1 = self.gm1_index.get(alpha)
                for u in range(s):
                    for v in range(s):
                        row = 2 * eq
                        brows[row] = rhs[u, v].real
                        brows[row + 1] = rhs[u, v].imag
                        # identity part: sum_r sum_i M_r[(i,beta,u),(i,alpha,v)]
                        if b_in_gm1 is not None and a_in_gm1 is not None:
                            for r in range(structure.k):
                                for i in range(structure.ell[r]):
                                    add_entry(
                                        row,
                                        r,
                                        self.col(r, i, b_in_gm1, u),
                                        self.col(r, i, a_in_gm1, v),
                                        1.0 + 0.0j,
                                    )
                        # shifted part: -(W^(r)* Z^(r))_{ij} couplings
                        for r in range(structure.k):
                            l = structure.ell[r]
                            for mrow in range(l):
                                for i in range(l):
                                    vb = structure.var_index(r, mrow, i)
                                    if beta[vb] == 0:
                                        continue
                                    beta2 = list(beta)
                                    beta2[vb] -= 1
                                    bi = self.gm1_index.get(tuple(beta2))
                                    if bi is None:
                                        continue
                                    for j in range(l):
                                        va = structure.var_index(r, mrow, j)
                                        if alpha[va] == 0:
                                            continue
                                        alpha2 = list(alpha)
                                        alpha2[va] -= 1
                                        ai = self.gm1_index.get(tuple(alpha2))
                                        if ai is None:
                                            continue
                                        add_entry(
                                            row,
                                            r,
                                            self.col(r, i, bi, u),
                                            self.col(r, j, ai, v),
                                            -1.0 + 0.0j,
                                        )
                        eq += 1
        self.A_real = A
        self.b_real = brows

    # Residuals ---------------------------------------------------------------

    def residual_vector(self, Ms: list[np.ndarray]) -> np.ndarray:
        return self.A_real @ self.pack(Ms) - self.b_real

    def residual_max(self, Ms: list[np.ndarray]) -> float:
        r = self.residual_vector(Ms)
        pairs = r.reshape(-1, 2)
        return float(np.sqrt((pairs**2).sum(axis=1)).max()) if pairs.size else 0.0


def _psd_project(M: np.ndarray) -> np.ndarray:
    H = 0.5 * (M + M.conj().T)
    lam, vec = np.linalg.eigh(H)
    lam = np.clip(lam, 0.0, None)
    return (vec * lam) @ vec.conj().T


def _factor_psd(M: np.ndarray, rank_tol: float) -> np.ndarray:
    """Return G with M ~= G* G, eigenvalues under rank_tol*lam_max dropped."""
    H = 0.5 * (M + M.conj().T)
    lam, vec = np.linalg.eigh(H)
    lam_max = float(lam[-1]) if lam.size else 0.0
    if lam_max <= 0.0:
        return np.zeros((0, M.shape[0]), dtype=np.complex128)
    keep = lam > rank_tol * lam_max
    root = vec[:, keep] * np.sqrt(np.clip(lam[keep], 0.0, None))
    return root.conj().T


@dataclass(frozen=True)
class GramCertificate:
    """PSD evidence for the Agler decomposition of ``(P, Q)`` at degree g.

    ``gram[r]`` is the Hermitian PSD block indexed by (block row, monomial
    of degree <= g-1, output column); ``factors[r]`` is ``G_r`` with
    ``gram[r] = G_r* G_r`` and ``n[r]`` its row count, which obeys
    ``n_r <= ell_r * s * binom(g + d - 1, d)``.  ``residual`` is the largest
    coefficient mismatch in the decomposition identity, recomputed from the
    factored blocks.
    """

    structure: BlockStructure
    s: int
    g: int
    n: tuple[int, ...]
    gram: tuple[np.ndarray, ...]
    factors: tuple[np.ndarray, ...]
    monomials: tuple[tuple[int, ...], ...]
    residual: float

    def coeff(self, r: int, alpha: tuple[int, ...]) -> np.ndarray:
        """Coefficient ``G_{r,alpha}`` of shape (ell_r n_r, s)."""
        l = self.structure.ell[r]
        nr = self.n[r]
        m = len(self.monomials)
        s = self.s
        out = np.zeros((l * nr, s), dtype=np.complex128)
        try:
            a_idx = self.monomials.index(alpha)
        except ValueError:
            return out
        G = self.factors[r]
        for i in range(l):
            colbase = (i * m + a_idx) * s
            out[i * nr : (i + 1) * nr, :] = G[:, colbase : colbase + s]
        return out

    def eval_G(self, r: int, Z: MatrixPoint) -> np.ndarray:
        entries = Z.flat_entries()
        l = self.structure.ell[r]
        out = np.zeros((l * self.n[r], self.s), dtype=np.complex128)
        for alpha in self.monomials:
            z = np.prod(entries ** np.array(alpha))
            if z != 0.0 or sum(alpha) == 0:
                out += z * self.coeff(r, alpha)
        return out

    def eval_G_stacked(self, Z: MatrixPoint) -> np.ndarray:
        """All blocks stacked: shape (sum_r ell_r n_r, s)."""
        parts = [self.eval_G(r, Z) for r in range(self.structure.k)]
        if not parts:
            return np.zeros((0, self.s), dtype=np.complex128)
        return np.vstack(parts)

    def dimension_bound_ok(self) -> bool:
        return all(
            self.n[r] <= gram_dimension_cap(self.structure, self.s, self.g, r)
            for r in range(self.structure.k)
        )

    def to_json(self) -> dict:
        return {
            "ell": list(self.structure.ell),
            "s": self.s,
            "g": self.g,
            "n": list(self.n),
            "monomials": [list(a) for a in self.monomials],
            "gram": [encode_matrix(m) for m in self.gram],
            "factors": [encode_matrix(f) for f in self.factors],
            "residual": self.residual,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GramCertificate":
        structure = BlockStructure(tuple(obj["ell"]))
        factors = []
        for raw in obj["factors"]:
            f = decode_matrix(raw)
            factors.append(f if f.size else f.reshape(0, 0))
        gram = tuple(decode_matrix(m) for m in obj["gram"])
        return cls(
            structure,
            int(obj["s"]),
            int(obj["g"]),
            tuple(int(x) for x in obj["n"]),
            gram,
            tuple(factors),
            tuple(tuple(a) for a in obj["monomials"]),
            float(obj["residual"]),
        )

    @classmethod
    def from_factors(cls, P, Q, g: int, factors) -> "GramCertificate":
        """Build a certificate from explicit factor matrices ``G_r`` (rows:
        factor rank, columns: (block row, monomial <= g-1, output) in the
        canonical order) and score its residual against ``(P, Q)``."""
        P, Q = coerce_matpoly(P), coerce_matpoly(Q)
        system = _GramSystem(P, Q, g)
        facs = []
        for r, G in enumerate(factors):
            G = np.asarray(G, dtype=np.complex128).reshape(-1, system.sizes[r])
            facs.append(G)
        Ms = [G.conj().T @ G for G in facs]
        residual = system.residual_max(Ms)
        return cls(
            P.structure,
            system.s,
            g,
            tuple(G.shape[0] for G in facs),
            tuple(Ms),
            tuple(facs),
            tuple(system.mon_gm1),
            float(residual),
        )


def _polish_factors(system: _GramSystem, factors: list[np.ndarray], max_nfev: int = 6000):
    """Gauss-Newton refinement of the factor matrices, driving the
    coefficient mismatch toward machine precision when the chosen ranks
    admit an exact decomposition."""
    shapes = [f.shape for f in factors]
    total = sum(2 * r * c for r, c in shapes)
    if total == 0:
        return factors

    def split(x):
        out = []
        pos = 0
        for rows, cols in shapes:
            cnt = rows * cols
            re = x[pos : pos + cnt].reshape(rows, cols)
            im = x[pos + cnt : pos + 2 * cnt].reshape(rows, cols)
            out.append(re + 1j * im)
            pos += 2 * cnt
        return out

    def join(fs):
        parts = []
        for f in fs:
            parts.append(f.real.ravel())
            parts.append(f.imag.ravel())
        return np.concatenate(parts)

    def fun(x):
        fs = split(x)
        Ms = [f.conj().T @ f for f in fs]
        return system.residual_vector(Ms)

    x0 = join(factors)
    try:
        res = scipy.optimize.least_squares(
            fun, x0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev
        )
    except Exception:
        return factors
    polished = split(res.x)
    before = np.abs(fun(x0)).max() if x0.size else 0.0
    after = np.abs(res.fun).max() if res.fun.size else 0.0
    return polished if after <= before else factors


def gram_feasibility(
    P,
    Q,
    g: int,
    tol: float = 1e-7,
    max_iters: int = 200_000,
    rank_tol: float = 1e-9,
    polish: bool = True,
) -> GramCertificate:
    """Search for PSD Gram blocks certifying the Agler decomposition.

    Dykstra alternating projections between the coefficient-matching affine
    subspace and the product of PSD cones; stops early when the affine
    iterate is itself PSD (then the residual is at round-off level) or when
    the PSD iterate matches coefficients within ``tol``.  The factored
    blocks are then polished by Gauss-Newton.  Raises
    :class:`GramInfeasibleError` with the best residual when the iteration
    stalls.
    """
    P, Q = coerce_matpoly(P), coerce_matpoly(Q)
    system = _GramSystem(P, Q, g)
    A, b = system.A_real, system.b_real
    scale = max(1.0, float(np.abs(b).max()) if b.size else 0.0)

    A_pinv = np.linalg.pinv(A, rcond=1e-12)

    def proj_affine(x):
        return x - A_pinv @ (A @ x - b)

    def proj_psd_params(x):
        Ms = system.unpack(x)
        return system.pack([_psd_project(M) for M in Ms])

    def min_eig(x):
        Ms = system.unpack(x)
        vals = []
        for M in Ms:
            H = 0.5 * (M + M.conj().T)
            if H.shape[0]:
                vals.append(float(np.linalg.eigvalsh(H)[0]))
        return min(vals) if vals else 0.0

    x0 = proj_affine(np.zeros(system.n_params))
    if float(np.abs(A @ x0 - b).max() if b.size else 0.0) > 1e-8 * scale:
        # the affine system itself is inconsistent
        raise GramInfeasibleError(float(np.abs(A @ x0 - b).max()))

    def finish(x_params) -> GramCertificate:
        Ms = system.unpack(x_params)
        factors = [_factor_psd(M, rank_tol) for M in Ms]
        raw_Ms = [f.conj().T @ f for f in factors]
        raw_res = system.residual_max(raw_Ms)
        if polish:
            factors2 = _polish_factors(system, factors)
            Ms2 = [f.conj().T @ f for f in factors2]
            res2 = system.residual_max(Ms2)
            if res2 <= raw_res:
                factors, raw_Ms, raw_res = factors2, Ms2, res2
        return GramCertificate(
            P.structure,
            system.s,
            g,
            tuple(f.shape[0] for f in factors),
            tuple(raw_Ms),
            tuple(factors),
            tuple(system.mon_gm1),
            float(raw_res),
        )

    # Quick exit: the min-norm affine solution may already be PSD.
    if min_eig(x0) >= -1e-11 * scale:
        cert = finish(x0)
        if cert.residual <= tol:
            return cert

    x = x0
    p_corr = np.zeros_like(x)
    q_corr = np.zeros_like(x)
    best_res = float("inf")
    best_x = x0
    check_every = 10
    for it in range(max_iters):
        y = proj_psd_params(x + p_corr)
        p_corr = x + p_corr - y
        x_new = proj_affine(y + q_corr)
        q_corr = y + q_corr - x_new
        x = x_new
        if it % check_every == 0 or it == max_iters - 1:
            if min_eig(x) >= -1e-11 * scale:
                cert = finish(x)
                if cert.residual <= tol:
                    return cert
                if cert.residual < best_res:
                    best_res, best_x = cert.residual, x
            ry = A @ y - b
            res_y = float(np.sqrt((ry.reshape(-1, 2) ** 2).sum(axis=1)).max()) if ry.size else 0.0
            if res_y < best_res:
                best_res, best_x = res_y, y
            if res_y < tol:
                cert = finish(y)
                if cert.residual <= tol:
                    return cert
    cert = finish(best_x)
    if cert.residual <= tol:
        return cert
    raise GramInfeasibleError(min(best_res, cert.residual))


@dataclass(frozen=True)
class BoundaryReport:
    max_defect: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.max_defect < 1e-8

    def to_json(self) -> dict:
        return {
            "max_defect": self.max_defect,
            "samples": self.samples,
            "verdict": "pass" if self.passed else "fail",
        }


def boundary_gram_check(P, Q, samples: int = 100, seed: int = 0) -> BoundaryReport:
    """Largest ``||P(U)*P(U) - Q(U)*Q(U)||`` over sampled Shilov points."""
    P, Q = coerce_matpoly(P), coerce_matpoly(Q)
    if (P.rows, P.cols) != (Q.rows, Q.cols):
        raise ValueError("P and Q must have matching shapes")
    worst = 0.0
    for i in range(samples):
        U = sample_shilov(P.structure, [103, seed, i])
        Pu = P.eval(U)
        Qu = Q.eval(U)
        worst = max(
            worst,
            float(np.linalg.norm(Pu.conj().T @ Pu - Qu.conj().T @ Qu, 2)),
        )
    return BoundaryReport(max_defect=float(worst), samples=samples)


def lurking_isometry(P, Q, cert: GramCertificate, seed: int = 0) -> Colligation:
    """Complete the isometry between sampled column stacks to a unitary
    colligation realizing ``Q P^{-1}``.

    Columns ``[Z_n G(Z); P(Z)] e_t`` are mapped to ``[G(Z); Q(Z)] e_t`` at
    interior sample points; their Gram matrices agree exactly when the
    certificate residual vanishes (this is the decomposition identity
    rearranged), so the map is isometric and extends unitarily.  The
    extension is deterministic: SVD bases plus pivoted-QR complements.
    """
    P, Q = coerce_matpoly(P), coerce_matpoly(Q)
    structure = P.structure
    s = P.rows
    n = cert.n
    M = sum(l * m for l, m in zip(structure.ell, n))
    m_pts = 3 * (M + s)

    u_cols = []
    v_cols = []
    attempts = 0
    idx = 0
    while len(u_cols) < m_pts * s:
        if attempts > 20 * m_pts + 50:
            raise PolyballError(
                "could not find enough sample points with well-conditioned P"
            )
        Z = sample_interior(structure, [104, seed, idx])
        idx += 1
        attempts += 1
        Pz = P.eval(Z)
        sv = np.linalg.svd(Pz, compute_uv=False)
        if sv.size and sv[-1] < 1e-8:
            continue
        G = cert.eval_G_stacked(Z)
        Zn = inflate(Z, n)
        Qz = Q.eval(Z)
        top_u = Zn @ G
        for t in range(s):
            u_cols.append(np.concatenate([top_u[:, t], Pz[:, t]]))
            v_cols.append(np.concatenate([G[:, t], Qz[:, t]]))

    U = np.array(u_cols, dtype=np.complex128).T
    V = np.array(v_cols, dtype=np.complex128).T

    gram_u = U.conj().T @ U
    gram_v = V.conj().T @ V
    mismatch = float(np.abs(gram_u - gram_v).max())
    if mismatch > 1e-7 * max(1.0, float(np.abs(gram_u).max())):
        raise InvalidCertificateError(
            f"Gram mismatch {mismatch:.3e} between domain and codomain stacks"
        )

    dim = M + s
    Phi, sig, PsiH = np.linalg.svd(U, full_matrices=False)
    if sig.size and sig[0] > 0:
        rank = int(np.sum(sig > 1e-9 * sig[0]))
    else:
        rank = 0
    Phi_r = Phi[:, :rank]
    Psi_r = PsiH.conj().T[:, :rank]
    if rank:
        Xi = V @ Psi_r / sig[:rank]
        # Closest isometry (polar factor): keeps the final matrix unitary
        # to round-off even when the certificate carries a small residual.
        uu, _, vv = np.linalg.svd(Xi, full_matrices=False)
        Xi = uu @ vv
    else:
        Xi = np.zeros((dim, 0), dtype=np.complex128)

    def _complement(basis: np.ndarray) -> np.ndarray:
        want = dim - basis.shape[1]
        if want == 0:
            return np.zeros((dim, 0), dtype=np.complex128)
        proj = np.eye(dim) - basis @ basis.conj().T
        Qf, _, _ = scipy.linalg.qr(proj, pivoting=True)
        comp = Qf[:, :want]
        # Re-orthogonalize against the basis to kill round-off leakage.
        comp = comp - basis @ (basis.conj().T @ comp)
        comp, _ = np.linalg.qr(comp)
        return comp

    Phi_c = _complement(Phi_r)
    Xi_c = _complement(Xi)
    W = np.hstack([Xi, Xi_c]) @ np.hstack([Phi_r, Phi_c]).conj().T

    return Colligation(
        structure,
        n,
        s,
        W[:M, :M],
        W[:M, M:],
        W[M:, :M],
        W[M:, M:],
    )


@dataclass(frozen=True)
class SynthesisResult:
    verdict: str
    g: int
    boundary: BoundaryReport
    certificate: GramCertificate | None
    colligation: Colligation | None
    transfer_match: float
    match_points: int
    infeasible_residual: float | None = None

    @property
    def passed(self) -> bool:
        return self.verdict == "ok"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "g": self.g,
            "boundary": self.boundary.to_json(),
            "certificate": None if self.certificate is None else self.certificate.to_json(),
            "colligation": None if self.colligation is None else self.colligation.to_json(),
            "transfer_match": self.transfer_match,
            "match_points": self.match_points,
            "infeasible_residual": self.infeasible_residual,
        }


def synthesize(
    P,
    Q,
    g: int | None = None,
    seed: int = 0,
    boundary_samples: int = 100,
    match_points: int = 50,
    tol: float = 1e-7,
    max_iters: int = 200_000,
) -> SynthesisResult:
    """Full pipeline: boundary check, Gram feasibility, lurking isometry,
    and a transfer-function match against ``Q P^{-1}`` at fresh interior
    points.  Returns the whole evidence chain."""
    P, Q = coerce_matpoly(P), coerce_matpoly(Q)
    if g is None:
        g = int(max(P.total_degree(), Q.total_degree()))
    boundary = boundary_gram_check(P, Q, samples=boundary_samples, seed=seed)
    if not boundary.passed:
        return SynthesisResult(
            "boundary-mismatch", g, boundary, None, None, float("inf"), 0
        )
    try:
        cert = gram_feasibility(P, Q, g, tol=tol, max_iters=max_iters)
    except GramInfeasibleError as exc:
        return SynthesisResult(
            "infeasible", g, boundary, None, None, float("inf"), 0,
            infeasible_residual=exc.best_residual,
        )
    coll = lurking_isometry(P, Q, cert, seed=seed)

    worst = 0.0
    for i in range(match_points):
        Z = sample_interior(P.structure, [105, seed + 1, i])
        Pz = P.eval(Z)
        Qz = Q.eval(Z)
        F = eval_transfer(coll, Z)
        worst = max(worst, float(np.abs(F @ Pz - Qz).max()))
    verdict = "ok" if (worst < 1e-6 and coll.unitary_defect <= 1e-8) else "match-failed"
    return SynthesisResult(verdict, g, boundary, cert, coll, float(worst), match_points)
