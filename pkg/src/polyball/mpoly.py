"""Sparse multivariate polynomials over the polyball variables.

Polynomials live in the ``d = sum(ell_r^2)`` scalar variables of a
:class:`~polyball.domain.BlockStructure`, with complex double coefficients.
Exponent vectors are packed into single integers (8 bits per variable, in
the canonical flat order) so that monomial multiplication is integer
addition.  The module provides the determinant and cofactor polynomials of
each block, the reverse operation

    reverse(p)(Z) = prod_r det(Z^(r))^{t_r} * conj(p((Z*)^{-1}))

that generalizes one-variable coefficient reversal, exact division with a
graded reverse-lexicographic term order, det-power factoring, and the
almost-self-reversive test ``reverse(v) == gamma * v`` with unimodular
``gamma``.
"""

from __future__ import annotations

import heapq
import itertools
from functools import lru_cache

import numpy as np

from .domain import (
    BlockStructure,
    CommutingTuple,
    MatrixPoint,
    PolyballError,
    StructureMismatchError,
)

__all__ = [
    "MPoly",
    "MatPoly",
    "NotDivisibleError",
    "NEG_INFINITY",
    "det_poly",
    "cofactor_poly",
    "natural_degrees",
    "reverse",
    "exact_divide",
    "divide_with_residual",
    "factor_det_powers",
    "is_almost_self_reversive",
]

# Coefficients below this magnitude are dropped on normalization.
COEFF_DROP = 1e-14

# Default relative tolerance for coefficient-wise equality tests.
REL_TOL = 1e-9

# Degree of the zero polynomial in every block.
NEG_INFINITY = float("-inf")

_EXP_BITS = 8
_EXP_MASK = (1 << _EXP_BITS) - 1
MAX_EXPONENT = _EXP_MASK


class NotDivisibleError(PolyballError):
    """Exact polynomial division left a residual above tolerance."""

    def __init__(self, residual: float, message: str | None = None):
        self.residual = float(residual)
        super().__init__(message or f"not divisible (residual {residual:.3e})")


def _pack(exps) -> int:
    key = 0
    for v, e in enumerate(exps):
        e = int(e)
        if e < 0 or e > MAX_EXPONENT:
            raise ValueError(f"exponent {e} outside supported range 0..{MAX_EXPONENT}")
        key |= e << (_EXP_BITS * v)
    return key


@lru_cache(maxsize=1 << 18)
def _decode(key: int, d: int) -> tuple[int, ...]:
    return tuple((key >> (_EXP_BITS * v)) & _EXP_MASK for v in range(d))


def _grevlex_key(exps: tuple[int, ...]) -> tuple:
    # Ascending in this key == descending in the grevlex monomial order.
    return (-sum(exps), exps[::-1])


def _dict_add(a: dict, b: dict, sign: complex = 1.0) -> dict:
    out = dict(a)
    for k, c in b.items():
        out[k] = out.get(k, 0.0j) + sign * c
    return out


def _dict_mul(a: dict, b: dict) -> dict:
    if len(a) > len(b):
        a, b = b, a
    out: dict = {}
    get = out.get
    for ka, ca in a.items():
        for kb, cb in b.items():
            k = ka + kb
            out[k] = get(k, 0.0j) + ca * cb
    return out


def _dict_norm(a: dict) -> float:
    if not a:
        return 0.0
    return float(np.sqrt(sum(abs(c) ** 2 for c in a.values())))


class MPoly:
    """Sparse polynomial with complex coefficients over a block structure.

    Instances are immutable by convention: no method mutates ``terms`` and
    callers must not either.  Terms map packed exponent keys to nonzero
    coefficients (entries under ``COEFF_DROP`` in magnitude are removed on
    construction).
    """

    __slots__ = ("structure", "terms", "_eval_cache")

    def __init__(self, structure: BlockStructure, terms: dict | None = None):
        self.structure = structure
        clean = {}
        if terms:
            for k, c in terms.items():
                c = complex(c)
                if abs(c) >= COEFF_DROP:
                    clean[k] = c
        self.terms = clean
        self._eval_cache = None

    # -- constructors ---------------------------------------------------

    @classmethod
    def zero(cls, structure: BlockStructure) -> "MPoly":
        return cls(structure, {})

    @classmethod
    def constant(cls, structure: BlockStructure, c) -> "MPoly":
        return cls(structure, {0: complex(c)})

    @classmethod
    def var(cls, structure: BlockStructure, r: int, i: int = 0, j: int = 0) -> "MPoly":
        """The variable ``z^(r)_{ij}`` (0-based indices)."""
        v = structure.var_index(r, i, j)
        return cls(structure, {1 << (_EXP_BITS * v): 1.0 + 0.0j})

    @classmethod
    def from_exponents(cls, structure: BlockStructure, items) -> "MPoly":
        """Build from ``(exponent_tuple, coeff)`` pairs."""
        terms: dict = {}
        for exps, c in items:
            if len(exps) != structure.d:
                raise StructureMismatchError(
                    f"exponent vector of length {len(exps)}, expected {structure.d}"
                )
            k = _pack(exps)
            terms[k] = terms.get(k, 0.0j) + complex(c)
        return cls(structure, terms)

    # -- basic queries ----------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def __len__(self) -> int:
        return len(self.terms)

    def exponent_items(self):
        """Iterate ``(exponent_tuple, coeff)`` pairs."""
        d = self.structure.d
        for k, c in self.terms.items():
            yield _decode(k, d), c

    def coefficient(self, exps) -> complex:
        return self.terms.get(_pack(exps), 0.0j)

    def constant_term(self) -> complex:
        return self.terms.get(0, 0.0j)

    def total_degree(self):
        if not self.terms:
            return NEG_INFINITY
        d = self.structure.d
        return max(sum(_decode(k, d)) for k in self.terms)

    def degree_block(self, r: int):
        """Total degree in the block-``r`` variables; -inf for 0."""
        if not self.terms:
            return NEG_INFINITY
        d = self.structure.d
        rng = self.structure.block_var_range(r)
        lo, hi = rng.start, rng.stop
        best = 0
        for k in self.terms:
            exps = _decode(k, d)
            best = max(best, sum(exps[lo:hi]))
        return best

    def degree_vector(self) -> tuple:
        return tuple(self.degree_block(r) for r in range(self.structure.k))

    def leading_key(self) -> int:
        """Packed exponent of the grevlex-leading term."""
        if not self.terms:
            raise ValueError("zero polynomial has no leading term")
        d = self.structure.d
        return min(self.terms, key=lambda k: _grevlex_key(_decode(k, d)))

    def coeff_norm(self) -> float:
        return _dict_norm(self.terms)

    def sorted_terms(self) -> list[tuple[tuple[int, ...], complex]]:
        """Terms in grevlex order, leading term first."""
        d = self.structure.d
        items = [(_decode(k, d), c) for k, c in self.terms.items()]
        items.sort(key=lambda it: _grevlex_key(it[0]))
        return items

    # -- arithmetic -------------------------------------------------------

    def _check(self, other: "MPoly"):
        if self.structure != other.structure:
            raise StructureMismatchError("polynomials over different structures")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = MPoly.constant(self.structure, other)
        self._check(other)
        return MPoly(self.structure, _dict_add(self.terms, other.terms))

    __radd__ = __add__

    def __neg__(self):
        return MPoly(self.structure, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float, complex)):
            other = MPoly.constant(self.structure, other)
        self._check(other)
        return MPoly(self.structure, _dict_add(self.terms, other.terms, -1.0))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            c = complex(other)
            return MPoly(self.structure, {k: c * v for k, v in self.terms.items()})
        self._check(other)
        return MPoly(self.structure, _dict_mul(self.terms, other.terms))

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only nonnegative integer powers")
        out = MPoly.constant(self.structure, 1.0)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    def conj_coeffs(self) -> "MPoly":
        """Coefficient-wise complex conjugate (variables untouched)."""
        return MPoly(self.structure, {k: c.conjugate() for k, c in self.terms.items()})

    def distance(self, other: "MPoly") -> float:
        """Coefficient-space l2 distance."""
        self._check(other)
        return _dict_norm(_dict_add(self.terms, other.terms, -1.0))

    # -- evaluation ---------------------------------------------------------

    def _cache(self):
        if self._eval_cache is None:
            d = self.structure.d
            keys = list(self.terms)
            exps = np.array([_decode(k, d) for k in keys], dtype=np.int64).reshape(
                len(keys), d
            )
            coeffs = np.array([self.terms[k] for k in keys], dtype=np.complex128)
            self._eval_cache = (exps, coeffs)
        return self._eval_cache

    def eval(self, point: MatrixPoint) -> complex:
        if point.structure != self.structure:
            raise StructureMismatchError("point over a different structure")
        return self.eval_entries(point.flat_entries())

    def eval_entries(self, entries: np.ndarray) -> complex:
        if not self.terms:
            return 0.0j
        exps, coeffs = self._cache()
        vals = np.prod(np.asarray(entries)[None, :] ** exps, axis=1)
        return complex(coeffs @ vals)

    def eval_many(self, entry_rows: np.ndarray) -> np.ndarray:
        """Evaluate at many points at once; rows are flat entry vectors."""
        entry_rows = np.asarray(entry_rows)
        if not self.terms:
            return np.zeros(entry_rows.shape[0], dtype=np.complex128)
        exps, coeffs = self._cache()
        vals = np.prod(entry_rows[:, None, :] ** exps[None, :, :], axis=2)
        return vals @ coeffs

    def eval_tuple(self, tup: CommutingTuple) -> np.ndarray:
        """Evaluate at a commuting tuple: ``z^a`` becomes the matrix product
        of the corresponding powers (order immaterial by commutation)."""
        if tup.structure != self.structure:
            raise StructureMismatchError("tuple over a different structure")
        N = tup.N
        out = np.zeros((N, N), dtype=np.complex128)
        powers: dict[tuple[int, int], np.ndarray] = {}

        def power(v: int, e: int) -> np.ndarray:
            got = powers.get((v, e))
            if got is None:
                if e == 1:
                    got = np.asarray(tup.mats[v])
                else:
                    got = power(v, e - 1) @ tup.mats[v]
                powers[(v, e)] = got
            return got

        eye = np.eye(N, dtype=np.complex128)
        for exps, c in self.exponent_items():
            acc = eye
            for v, e in enumerate(exps):
                if e:
                    acc = acc @ power(v, e)
            out += c * acc
        return out

    # -- misc ----------------------------------------------------------------

    def __eq__(self, other):
        return (
            isinstance(other, MPoly)
            and self.structure == other.structure
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.structure, tuple(sorted(self.terms.items(), key=lambda t: t[0]))))

    def __repr__(self):
        if not self.terms:
            return "MPoly(0)"
        names = self.structure.var_names()
        parts = []
        for exps, c in self.sorted_terms()[:8]:
            mono = "*".join(
                f"{names[v]}^{e}" if e > 1 else names[v]
                for v, e in enumerate(exps)
                if e
            )
            parts.append(f"({c:.6g})" + (f"*{mono}" if mono else ""))
        tail = " + ..." if len(self.terms) > 8 else ""
        return "MPoly(" + " + ".join(parts) + tail + ")"

    def to_json(self) -> dict:
        terms = []
        names = self.structure.var_names()
        for exps, c in self.sorted_terms():
            terms.append(
                {
                    "coeff": [c.real, c.imag],
                    "exps": {names[v]: e for v, e in enumerate(exps) if e},
                }
            )
        return {"ell": list(self.structure.ell), "terms": terms}

    @classmethod
    def from_json(cls, obj: dict) -> "MPoly":
        if not isinstance(obj, dict) or "ell" not in obj or "terms" not in obj:
            raise ValueError("polynomial JSON must carry 'ell' and 'terms'")
        structure = BlockStructure(tuple(obj["ell"]))
        terms: dict = {}
        for idx, t in enumerate(obj["terms"]):
            if "coeff" not in t:
                raise ValueError(f"terms[{idx}] lacks 'coeff'")
            re, im = t["coeff"]
            exps = [0] * structure.d
            for name, e in t.get("exps", {}).items():
                exps[structure.parse_var_name(name)] = int(e)
            k = _pack(exps)
            terms[k] = terms.get(k, 0.0j) + complex(float(re), float(im))
        return cls(structure, terms)


# -- determinant and cofactor polynomials -------------------------------------


@lru_cache(maxsize=None)
def _det_poly_cached(ell: tuple[int, ...], r: int) -> MPoly:
    structure = BlockStructure(ell)
    l = structure.ell[r]
    terms: dict = {}
    for perm in itertools.permutations(range(l)):
        sign = _perm_sign(perm)
        exps = [0] * structure.d
        for i in range(l):
            exps[structure.var_index(r, i, perm[i])] += 1
        terms[_pack(exps)] = complex(sign)
    return MPoly(structure, terms)


def _perm_sign(perm) -> int:
    seen = [False] * len(perm)
    sign = 1
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        pos = start
        while not seen[pos]:
            seen[pos] = True
            pos = perm[pos]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def det_poly(structure: BlockStructure, r: int) -> MPoly:
    """Leibniz expansion of ``det Z^(r)`` (``ell_r!`` terms, signs +-1)."""
    if not (0 <= r < structure.k):
        raise IndexError(f"block index {r} out of range")
    return _det_poly_cached(structure.ell, r)


@lru_cache(maxsize=None)
def _cofactor_cached(ell: tuple[int, ...], r: int, i: int, j: int) -> MPoly:
    structure = BlockStructure(ell)
    l = structure.ell[r]
    rows = [a for a in range(l) if a != i]
    cols = [b for b in range(l) if b != j]
    terms: dict = {}
    m = l - 1
    for perm in itertools.permutations(range(m)):
        sign = _perm_sign(perm) * (-1) ** (i + j)
        exps = [0] * structure.d
        for a in range(m):
            exps[structure.var_index(r, rows[a], cols[perm[a]])] += 1
        k = _pack(exps)
        terms[k] = terms.get(k, 0.0j) + complex(sign)
    if m == 0:
        terms = {0: complex((-1) ** (i + j))}
    return MPoly(structure, terms)


def cofactor_poly(structure: BlockStructure, r: int, i: int, j: int) -> MPoly:
    """Signed cofactor ``(-1)^{i+j} * minor(i, j)`` of block ``r``.

    This is the numerator of ``(Z^{-1})_{ji} * det Z``, which is exactly the
    substitution target the reverse operation needs for ``z^(r)_{ij}``.
    Indices are 0-based.
    """
    l = structure.ell[r]
    if not (0 <= i < l and 0 <= j < l):
        raise IndexError(f"cofactor ({i},{j}) outside block {r} of side {l}")
    return _cofactor_cached(structure.ell, r, i, j)


# Cached small powers of the determinant/cofactor polynomials, keyed by the
# block structure.  reverse() multiplies many of these per term.
@lru_cache(maxsize=None)
def _det_power(ell: tuple[int, ...], r: int, e: int) -> MPoly:
    if e == 0:
        return MPoly.constant(BlockStructure(ell), 1.0)
    if e == 1:
        return _det_poly_cached(ell, r)
    return _det_power(ell, r, e - 1) * _det_poly_cached(ell, r)


@lru_cache(maxsize=None)
def _cof_power(ell: tuple[int, ...], r: int, i: int, j: int, e: int) -> MPoly:
    if e == 1:
        return _cofactor_cached(ell, r, i, j)
    return _cof_power(ell, r, i, j, e - 1) * _cofactor_cached(ell, r, i, j)


def natural_degrees(p: MPoly) -> tuple[int, ...]:
    """Per-block total degrees of a nonzero polynomial."""
    if p.is_zero():
        raise ValueError("the zero polynomial has no natural degree vector")
    return tuple(int(p.degree_block(r)) for r in range(p.structure.k))


def reverse(p: MPoly, degrees=None) -> MPoly:
    """The reverse of ``p`` at degree vector ``t``:

        reverse(p)(Z) = prod_r det(Z^(r))^{t_r} * conj(p((Z*)^{-1})).

    Computed symbolically: each coefficient is conjugated, each variable
    ``z^(r)_{ij}`` is replaced by the signed cofactor of the (i, j) entry,
    and a term of block degrees ``a_r`` picks up ``det^(t_r - a_r)``.
    ``degrees`` defaults to the natural degrees of ``p``.

    ``t_r`` below ``degree_r(p)`` is accepted when the defining rational
    function still reduces to a polynomial (the computation then clears
    denominators at lifted degrees and divides the det powers back out);
    otherwise :class:`NotDivisibleError` is raised.  reverse(0) = 0.
    """
    structure = p.structure
    if p.is_zero():
        return p
    nat = natural_degrees(p)
    if degrees is None:
        t = nat
    else:
        t = tuple(int(x) for x in degrees)
        if len(t) != structure.k:
            raise StructureMismatchError(
                f"degree vector of length {len(t)}, expected {structure.k}"
            )
        if any(x < 0 for x in t):
            raise ValueError("reverse degrees must be nonnegative")
    lifted = tuple(max(t[r], nat[r]) for r in range(structure.k))

    ell = structure.ell
    d = structure.d
    acc: dict = {}
    for exps, c in p.exponent_items():
        factors: list[dict] = []
        for v, e in enumerate(exps):
            if e:
                r, i, j = structure.var_rij(v)
                factors.append(_cof_power(ell, r, i, j, e).terms)
        for r in range(structure.k):
            rng = structure.block_var_range(r)
            a_r = sum(exps[rng.start : rng.stop])
            if lifted[r] - a_r > 0:
                factors.append(_det_power(ell, r, lifted[r] - a_r).terms)
        term: dict = {0: c.conjugate()}
        # Multiply small factors first to keep intermediates compact.
        for f in sorted(factors, key=len):
            term = _dict_mul(term, f)
        acc = _dict_add(acc, term)
    result = MPoly(structure, acc)

    if lifted != t:
        den = MPoly.constant(structure, 1.0)
        for r in range(structure.k):
            if lifted[r] > t[r]:
                den = den * _det_power(ell, r, lifted[r] - t[r])
        result = exact_divide(result, den)
    return result


# -- division -----------------------------------------------------------------


def divide_with_residual(f: MPoly, g: MPoly) -> tuple[MPoly, float]:
    """Multivariate division ``f = g * q + rem`` with grevlex leading terms.

    Returns ``(q, ||f - g*q||_coeff)``; the residual is recomputed from the
    quotient so it is honest about floating-point cancellation.
    """
    if g.is_zero():
        raise ZeroDivisionError("division by the zero polynomial")
    f._check(g)
    structure = f.structure
    d = structure.d
    if f.is_zero():
        return f, 0.0

    lt_g = g.leading_key()
    lt_g_exps = _decode(lt_g, d)
    c_g = g.terms[lt_g]
    g_rest = [(k, c) for k, c in g.terms.items() if k != lt_g]

    work = dict(f.terms)
    heap = [(_grevlex_key(_decode(k, d)), k) for k in work]
    heapq.heapify(heap)
    seen = set(work)
    quo: dict = {}

    while heap:
        _, k = heapq.heappop(heap)
        c = work.pop(k, None)
        if c is None or c == 0.0:
            continue
        exps = _decode(k, d)
        if any(exps[v] < lt_g_exps[v] for v in range(d)):
            # Leading term of g does not divide this term; for exact
            # division this is pure residual, keep going to collect it all.
            continue
        qk = k - lt_g
        qc = c / c_g
        quo[qk] = quo.get(qk, 0.0j) + qc
        for kg, cg in g_rest:
            kk = qk + kg
            work[kk] = work.get(kk, 0.0j) - qc * cg
            if kk not in seen:
                seen.add(kk)
                heapq.heappush(heap, (_grevlex_key(_decode(kk, d)), kk))

    q = MPoly(structure, quo)
    residual = f.distance(g * q)
    return q, residual


def exact_divide(f: MPoly, g: MPoly, rel_tol: float = REL_TOL) -> MPoly:
    """Exact division; raises :class:`NotDivisibleError` when the residual
    exceeds ``rel_tol * ||f||_coeff``."""
    q, residual = divide_with_residual(f, g)
    scale = max(f.coeff_norm(), COEFF_DROP)
    if residual > rel_tol * scale:
        raise NotDivisibleError(residual)
    return q


def factor_det_powers(p: MPoly) -> tuple[tuple[int, ...], MPoly]:
    """Maximal ``m_r`` with ``det_poly(r)^{m_r}`` dividing ``p``, plus the
    remaining core (not divisible by any block determinant)."""
    if p.is_zero():
        raise ValueError("cannot factor determinant powers out of 0")
    structure = p.structure
    core = p
    m = []
    for r in range(structure.k):
        det_r = det_poly(structure, r)
        count = 0
        # degree_r drops by ell_r per division, so this terminates.
        while True:
            try:
                core = exact_divide(core, det_r)
            except NotDivisibleError:
                break
            count += 1
        m.append(count)
    return tuple(m), core


def is_almost_self_reversive(v: MPoly, degrees=None, tol: float = REL_TOL):
    """Test ``reverse(v) == gamma * v`` for a unimodular scalar ``gamma``.

    Returns ``(True, gamma)`` on success, ``(False, None)`` otherwise.
    ``degrees`` defaults to the natural degrees of ``v``.
    """
    if v.is_zero():
        return True, 1.0 + 0.0j
    try:
        rv = reverse(v, degrees)
    except NotDivisibleError:
        return False, None
    if set(rv.terms) != set(v.terms):
        return False, None
    lead = max(v.terms, key=lambda k: abs(v.terms[k]))
    gamma = rv.terms[lead] / v.terms[lead]
    if abs(abs(gamma) - 1.0) > tol:
        return False, None
    if rv.distance(gamma * v) > tol * max(v.coeff_norm(), COEFF_DROP):
        return False, None
    return True, gamma


# -- matrix polynomials --------------------------------------------------------


class MatPoly:
    """A rows x cols grid of :class:`MPoly` sharing one block structure."""

    __slots__ = ("structure", "rows", "cols", "entries")

    def __init__(self, entries):
        grid = [list(row) for row in entries]
        if not grid or not grid[0]:
            raise ValueError("matrix polynomial must be nonempty")
        structure = grid[0][0].structure
        for row in grid:
            if len(row) != len(grid[0]):
                raise ValueError("ragged matrix polynomial")
            for p in row:
                if p.structure != structure:
                    raise StructureMismatchError(
                        "matrix polynomial entries over different structures"
                    )
        self.structure = structure
        self.rows = len(grid)
        self.cols = len(grid[0])
        self.entries = tuple(tuple(row) for row in grid)

    @classmethod
    def from_scalar(cls, p: MPoly) -> "MatPoly":
        return cls([[p]])

    @classmethod
    def constant(cls, structure: BlockStructure, mat) -> "MatPoly":
        mat = np.atleast_2d(np.asarray(mat, dtype=np.complex128))
        return cls(
            [
                [MPoly.constant(structure, mat[i, j]) for j in range(mat.shape[1])]
                for i in range(mat.shape[0])
            ]
        )

    def __getitem__(self, idx) -> MPoly:
        i, j = idx
        return self.entries[i][j]

    def total_degree(self):
        degs = [p.total_degree() for row in self.entries for p in row]
        degs = [g for g in degs if g != NEG_INFINITY]
        return max(degs) if degs else NEG_INFINITY

    def coefficients(self) -> dict[tuple[int, ...], np.ndarray]:
        """Map exponent tuple -> coefficient matrix (rows x cols)."""
        out: dict[tuple[int, ...], np.ndarray] = {}
        for i, row in enumerate(self.entries):
            for j, p in enumerate(row):
                for exps, c in p.exponent_items():
                    mat = out.get(exps)
                    if mat is None:
                        mat = np.zeros((self.rows, self.cols), dtype=np.complex128)
                        out[exps] = mat
                    mat[i, j] += c
        return out

    def eval(self, point: MatrixPoint) -> np.ndarray:
        entries = point.flat_entries()
        return np.array(
            [[p.eval_entries(entries) for p in row] for row in self.entries]
        )

    def eval_tuple(self, tup: CommutingTuple) -> np.ndarray:
        """Block evaluation: the (i, j) block of size N is entry (i,j) at T."""
        N = tup.N
        out = np.zeros((self.rows * N, self.cols * N), dtype=np.complex128)
        for i, row in enumerate(self.entries):
            for j, p in enumerate(row):
                out[i * N : (i + 1) * N, j * N : (j + 1) * N] = p.eval_tuple(tup)
        return out

    def to_json(self) -> dict:
        return {
            "ell": list(self.structure.ell),
            "rows": self.rows,
            "cols": self.cols,
            "entries": [[p.to_json()["terms"] for p in row] for row in self.entries],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MatPoly":
        structure = BlockStructure(tuple(obj["ell"]))
        grid = []
        for row in obj["entries"]:
            grid.append(
                [
                    MPoly.from_json({"ell": list(structure.ell), "terms": terms})
                    for terms in row
                ]
            )
        return cls(grid)

    def __repr__(self):
        return f"MatPoly({self.rows}x{self.cols} over ell={self.structure.ell})"


def coerce_matpoly(obj) -> MatPoly:
    """Accept an MPoly (wrapped 1x1) or a MatPoly."""
    if isinstance(obj, MPoly):
        return MatPoly.from_scalar(obj)
    if isinstance(obj, MatPoly):
        return obj
    raise TypeError(f"expected MPoly or MatPoly, got {type(obj).__name__}")
