"""Contractive determinantal representations and eventual Agler denominators.

A certificate for a polynomial ``p`` consists of a contractive matrix ``K``,
inflation multiplicities ``n``, and an almost-self-reversive cofactor ``v``
with

    p(Z) * v(Z) = det(I - K Z_n),      Z_n = direct sum of Z^(r) (x) I_{n_r}.

Such a certificate witnesses that ``prod_r det(Z^(r))^{s_r} * reverse(p)/p``
is Schur-Agler for the shifts ``s_r = n_r - deg_r(p) - deg_r(v)``, i.e. that
``p`` is an eventual Agler denominator.  The module computes the symbolic
pencil ``det(I - K Z_n)``, extracts certificates from unitary colligations,
re-verifies them from their serialized form alone, and runs a best-effort
least-squares search for a representation at prescribed multiplicities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .domain import (
    BlockStructure,
    MatrixPoint,
    PolyballError,
    StructureMismatchError,
    decode_complex,
    decode_matrix,
    encode_complex,
    encode_matrix,
    inflate,
    sample_interior,
    spectral_norm,
)
from .mpoly import (
    MPoly,
    NotDivisibleError,
    divide_with_residual,
    is_almost_self_reversive,
    natural_degrees,
)
from .realization import Colligation

__all__ = [
    "DetRepCertificate",
    "SelfReversiveError",
    "CertificateError",
    "DetRepNotFoundError",
    "det_pencil",
    "pq_identity_check",
    "PqReport",
    "extract_v",
    "verify_certificate",
    "CertificateReport",
    "search_detrep",
]

CERTIFIED = "EventualAglerDenominator-CERTIFIED"

# Cofactor expansion handles pencils up to this side; larger ones switch to
# fraction-free (Bareiss) elimination to control intermediate term blowup.
_COFACTOR_SIDE_CAP = 6


class SelfReversiveError(PolyballError):
    """The pencil cofactor is not almost self-reversive."""


class CertificateError(PolyballError):
    """Certificate data violates a structural invariant."""


class DetRepNotFoundError(PolyballError):
    """Best-effort search exhausted its budget; never a nonexistence claim."""

    def __init__(self, best_residual: float):
        self.best_residual = float(best_residual)
        super().__init__(
            f"no contractive determinantal representation found "
            f"(best residual {best_residual:.3e})"
        )


def _pencil_columns(K: np.ndarray, structure: BlockStructure, n) -> list[list[dict]]:
    """Entries of ``I - K Z_n`` as sparse coefficient dicts (packed keys)."""
    from .mpoly import _pack  # packed-exponent helper shared with MPoly

    side = sum(l * m for l, m in zip(structure.ell, n))
    # row/column labels of Z_n: (r, block row i, copy a)
    labels = []
    for r, m in enumerate(n):
        l = structure.ell[r]
        for i in range(l):
            for a in range(m):
                labels.append((r, i, a))
    label_pos = {lab: pos for pos, lab in enumerate(labels)}
    var_key = {}
    for r in range(structure.k):
        l = structure.ell[r]
        for i in range(l):
            for j in range(l):
                exps = [0] * structure.d
                exps[structure.var_index(r, i, j)] = 1
                var_key[(r, i, j)] = _pack(exps)

    entries: list[list[dict]] = []
    for u in range(side):
        row: list[dict] = []
        for vcol in range(side):
            r, j, b = labels[vcol]
            ent: dict = {}
            if u == vcol:
                ent[0] = 1.0 + 0.0j
            l = structure.ell[r]
            for i in range(l):
                # column (r, j, b) of Z_n carries z^(r)_{ij} at row (r, i, b)
                urow = label_pos[(r, i, b)]
                c = K[u, urow]
                if c != 0.0:
                    key = var_key[(r, i, j)]
                    ent[key] = ent.get(key, 0.0j) - c
            row.append({k: c for k, c in ent.items() if c != 0.0})
        entries.append(row)
    return entries


def _det_by_cofactors(entries: list[list[dict]], structure: BlockStructure) -> MPoly:
    """Determinant via expansion over column subsets with memoization."""
    from .mpoly import _dict_add, _dict_mul

    side = len(entries)
    if side == 0:
        return MPoly.constant(structure, 1.0)
    memo: dict[frozenset, dict] = {frozenset(): {0: 1.0 + 0.0j}}

    def det_for(cols: frozenset) -> dict:
        got = memo.get(cols)
        if got is not None:
            return got
        m = len(cols)
        ordered = sorted(cols)
        acc: dict = {}
        row = entries[m - 1]
        for pos, j in enumerate(ordered):
            e = row[j]
            if not e:
                continue
            minor = det_for(cols - {j})
            term = _dict_mul(e, minor)
            sign = 1.0 if (m - 1 + pos) % 2 == 0 else -1.0
            acc = _dict_add(acc, term, sign)
        memo[cols] = acc
        return acc

    return MPoly(structure, det_for(frozenset(range(side))))


def _det_by_bareiss(entries: list[list[dict]], structure: BlockStructure) -> MPoly:
    """Fraction-free elimination over the polynomial ring; divisions by the
    previous pivot are exact and performed symbolically."""
    from .mpoly import _dict_mul, _dict_add

    side = len(entries)
    mat = [[MPoly(structure, e) for e in row] for row in entries]
    sign = 1.0
    prev = MPoly.constant(structure, 1.0)
    for step in range(side - 1):
        if mat[step][step].is_zero():
            swap = next(
                (r for r in range(step + 1, side) if not mat[r][step].is_zero()),
                None,
            )
            if swap is None:
                return MPoly.zero(structure)
            mat[step], mat[swap] = mat[swap], mat[step]
            sign = -sign
        pivot = mat[step][step]
        for r in range(step + 1, side):
            for c in range(step + 1, side):
                num = pivot * mat[r][c] - mat[r][step] * mat[step][c]
                q, residual = divide_with_residual(num, prev)
                if residual > 1e-9 * max(num.coeff_norm(), 1e-300):
                    raise PolyballError(
                        "fraction-free elimination lost exactness; "
                        f"residual {residual:.3e}"
                    )
                mat[r][c] = q
            mat[r][step] = MPoly.zero(structure)
        prev = pivot
    return sign * mat[side - 1][side - 1]


def det_pencil(K: np.ndarray, structure: BlockStructure, n) -> MPoly:
    """Symbolic determinant ``det(I - K Z_n)`` as a polynomial in the flat
    polyball variables.  The constant term is exactly 1 and the block-r
    degree is at most ``ell_r * n_r``."""
    n = tuple(int(x) for x in n)
    if len(n) != structure.k or any(x < 0 for x in n):
        raise StructureMismatchError("bad inflation multiplicities")
    side = sum(l * m for l, m in zip(structure.ell, n))
    K = np.asarray(K, dtype=np.complex128)
    if side == 0:
        if K.size not in (0,):
            raise StructureMismatchError("K must be empty when n is all zero")
        return MPoly.constant(structure, 1.0)
    if K.shape != (side, side):
        raise StructureMismatchError(
            f"K has shape {K.shape}, expected ({side}, {side})"
        )
    entries = _pencil_columns(K, structure, n)
    if side <= _COFACTOR_SIDE_CAP:
        return _det_by_cofactors(entries, structure)
    return _det_by_bareiss(entries, structure)


@dataclass(frozen=True)
class PqReport:
    max_rel_deviation: float
    samples: int

    @property
    def passed(self) -> bool:
        return self.max_rel_deviation < 1e-8

    def to_json(self) -> dict:
        return {
            "max_rel_deviation": self.max_rel_deviation,
            "samples": self.samples,
            "verdict": "pass" if self.passed else "fail",
        }


def pq_identity_check(c: Colligation, trials: int = 100, seed: int = 0) -> PqReport:
    """Numerically verify the pencil identity of a unitary colligation,

        det [[I - A Z_n, B], [-C Z_n, D]] = lambda * det(A* - Z_n),

    with ``lambda = det [[A, B], [C, D]]``, at sampled interior points."""
    if c.s != 1:
        raise ValueError("the pencil identity check applies to scalar output")
    lam = c.determinant()
    M = c.state_dim
    worst = 0.0
    for i in range(trials):
        Z = sample_interior(c.structure, [106, seed, i])
        Zn = inflate(Z, c.n)
        block = np.zeros((M + 1, M + 1), dtype=np.complex128)
        block[:M, :M] = np.eye(M) - c.A @ Zn
        block[:M, M:] = c.B
        block[M:, :M] = -c.C @ Zn
        block[M:, M:] = c.D
        lhs = np.linalg.det(block)
        rhs = lam * (np.linalg.det(c.A.conj().T - Zn) if M else 1.0)
        scale = max(1.0, abs(lhs), abs(rhs))
        worst = max(worst, abs(lhs - rhs) / scale)
    return PqReport(max_rel_deviation=float(worst), samples=trials)


@dataclass(frozen=True)
class DetRepCertificate:
    """Evidence that ``p`` is an eventual Agler denominator.

    Invariants: ``||K|| <= 1 + 1e-10``; ``p * v`` matches
    ``det(I - K Z_n)`` within the stored division residual;
    ``reverse(v) = gamma * v`` with unimodular ``gamma``; and the shifts
    ``s_r = n_r - deg_r(p) - deg_r(v)`` are nonnegative.
    """

    structure: BlockStructure
    p: MPoly
    n: tuple[int, ...]
    K: np.ndarray
    v: MPoly
    gamma: complex
    shifts: tuple[int, ...]
    division_residual: float
    self_reversive_residual: float
    contractivity_margin: float

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(x) for x in self.n))
        object.__setattr__(self, "shifts", tuple(int(x) for x in self.shifts))
        K = np.asarray(self.K, dtype=np.complex128).copy()
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    def to_json(self) -> dict:
        return {
            "ell": list(self.structure.ell),
            "p": self.p.to_json()["terms"],
            "n": list(self.n),
            "K": encode_matrix(self.K),
            "v": self.v.to_json()["terms"],
            "gamma": encode_complex(self.gamma),
            "shifts": list(self.shifts),
            "residuals": {
                "division": self.division_residual,
                "self_reversive": self.self_reversive_residual,
                "contractivity_margin": self.contractivity_margin,
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DetRepCertificate":
        for f in ("ell", "p", "n", "K", "v", "gamma", "shifts", "residuals"):
            if f not in obj:
                raise ValueError(f"certificate JSON lacks field {f!r}")
        structure = BlockStructure(tuple(obj["ell"]))
        ell = list(structure.ell)
        side = sum(
            l * m for l, m in zip(structure.ell, (int(x) for x in obj["n"]))
        )
        K = decode_matrix(obj["K"]) if side else np.zeros((0, 0), dtype=np.complex128)
        return cls(
            structure,
            MPoly.from_json({"ell": ell, "terms": obj["p"]}),
            tuple(int(x) for x in obj["n"]),
            K,
            MPoly.from_json({"ell": ell, "terms": obj["v"]}),
            decode_complex(obj["gamma"]),
            tuple(int(x) for x in obj["shifts"]),
            float(obj["residuals"]["division"]),
            float(obj["residuals"]["self_reversive"]),
            float(obj["residuals"]["contractivity_margin"]),
        )


def extract_v(p: MPoly, c: Colligation) -> DetRepCertificate:
    """Extract a determinantal certificate from a unitary colligation.

    The caller asserts that ``c`` realizes
    ``prod det^{s_r} * reverse(p) / p`` with ``p`` stable and coprime with
    its reverse; under that hypothesis ``p`` divides the pencil
    ``det(I - A Z_n)``, the quotient ``v`` is almost self-reversive, and
    ``K = A`` is contractive.  Failures of the hypothesis surface as
    :class:`~polyball.mpoly.NotDivisibleError` or
    :class:`SelfReversiveError`.
    """
    if p.is_zero():
        raise ValueError("p must be nonzero")
    if p.structure != c.structure:
        raise StructureMismatchError("polynomial over a different structure")
    pencil = det_pencil(c.A, c.structure, c.n)
    v, residual = divide_with_residual(pencil, p)
    if residual > 1e-7 * max(pencil.coeff_norm(), 1e-300) or v.is_zero():
        raise NotDivisibleError(
            residual, f"p does not divide det(I - A Z_n) (residual {residual:.3e})"
        )
    ok, gamma = is_almost_self_reversive(v, tol=1e-7)
    if not ok:
        raise SelfReversiveError("pencil cofactor is not almost self-reversive")
    rv = _reverse_residual(v, gamma)
    deg_p = natural_degrees(p)
    deg_v = tuple(int(max(v.degree_block(r), 0)) for r in range(p.structure.k))
    shifts = tuple(
        c.n[r] - deg_p[r] - deg_v[r] for r in range(p.structure.k)
    )
    if any(s < 0 for s in shifts):
        raise CertificateError(
            f"negative det shifts {shifts}; the realization does not satisfy "
            "the degree bounds of a denominator certificate"
        )
    margin = 1.0 - spectral_norm(c.A)
    return DetRepCertificate(
        p.structure,
        p,
        c.n,
        c.A,
        v,
        gamma,
        shifts,
        float(residual),
        float(rv),
        float(margin),
    )


def _reverse_residual(v: MPoly, gamma: complex) -> float:
    from .mpoly import reverse

    if v.is_zero():
        return 0.0
    rv = reverse(v)
    return rv.distance(gamma * v) / max(v.coeff_norm(), 1e-300)


@dataclass(frozen=True)
class CertificateReport:
    verdict: str
    checks: dict
    pointwise_max: float

    @property
    def passed(self) -> bool:
        return self.verdict == CERTIFIED

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "checks": self.checks,
            "pointwise_max": self.pointwise_max,
        }


def verify_certificate(
    cert: DetRepCertificate, samples: int = 50, seed: int = 0
) -> CertificateReport:
    """Re-check every certificate invariant from the stored data alone:
    contractivity of ``K``, the symbolic pencil division, almost
    self-reversiveness of ``v`` with the stored phase, nonnegative shifts,
    and the pointwise identity ``p v = det(I - K Z_n)`` at random interior
    points."""
    checks: dict[str, bool | float] = {}
    norm_K = spectral_norm(cert.K)
    checks["contractive"] = bool(norm_K <= 1.0 + 1e-10)
    checks["norm_K"] = float(norm_K)

    pencil = det_pencil(cert.K, cert.structure, cert.n)
    division = pencil.distance(cert.p * cert.v) / max(pencil.coeff_norm(), 1e-300)
    checks["division_residual"] = float(division)
    checks["division"] = bool(division <= 1e-7)

    ok, gamma = is_almost_self_reversive(cert.v, tol=1e-7)
    gamma_ok = ok and gamma is not None and abs(gamma - cert.gamma) <= 1e-6
    checks["self_reversive"] = bool(gamma_ok)

    deg_p = natural_degrees(cert.p)
    deg_v = tuple(
        int(max(cert.v.degree_block(r), 0)) for r in range(cert.structure.k)
    )
    shifts = tuple(
        cert.n[r] - deg_p[r] - deg_v[r] for r in range(cert.structure.k)
    )
    checks["shifts_match"] = bool(shifts == cert.shifts)
    checks["shifts_nonnegative"] = bool(all(s >= 0 for s in shifts))

    worst = 0.0
    pv = cert.p * cert.v
    for i in range(samples):
        Z = sample_interior(cert.structure, [107, seed, i])
        side = sum(l * m for l, m in zip(cert.structure.ell, cert.n))
        pencil_val = (
            np.linalg.det(np.eye(side) - cert.K @ inflate(Z, cert.n))
            if side
            else 1.0
        )
        worst = max(worst, abs(pv.eval(Z) - pencil_val))
    checks["pointwise"] = bool(worst <= 1e-7)

    passed = all(
        checks[key]
        for key in (
            "contractive",
            "division",
            "self_reversive",
            "shifts_match",
            "shifts_nonnegative",
            "pointwise",
        )
    )
    return CertificateReport(
        verdict=CERTIFIED if passed else "FAILED",
        checks=checks,
        pointwise_max=float(worst),
    )


# -- best-effort search ----------------------------------------------------------


def _block_degrees(structure: BlockStructure, exps: tuple[int, ...]) -> tuple[int, ...]:
    out = []
    for r in range(structure.k):
        rng = structure.block_var_range(r)
        out.append(sum(exps[rng.start : rng.stop]))
    return tuple(out)


def _monomials_with_block_bounds(structure: BlockStructure, bounds) -> list[tuple[int, ...]]:
    """Exponent tuples whose block-r total degree is at most bounds[r]."""
    per_block: list[list[tuple[int, ...]]] = []
    for r in range(structure.k):
        nvars = structure.ell[r] ** 2
        opts: list[tuple[int, ...]] = []

        def rec(prefix, remaining, budget):
            if remaining == 0:
                opts.append(tuple(prefix))
                return
            for e in range(budget + 1):
                rec(prefix + [e], remaining - 1, budget - e)

        rec([], nvars, max(0, bounds[r]))
        per_block.append(opts)
    out = []

    def combine(r, prefix):
        if r == structure.k:
            out.append(tuple(prefix))
            return
        for opt in per_block[r]:
            combine(r + 1, prefix + list(opt))

    combine(0, [])
    out.sort(key=lambda e: (sum(e), e))
    return out


def search_detrep(
    p: MPoly,
    n,
    iters: int = 4000,
    seed: int = 0,
    starts: int = 8,
    tol: float = 1e-7,
) -> DetRepCertificate:
    """Best-effort search for ``K`` contractive with
    ``det(I - K Z_n) = p(Z) v(Z)``.

    ``p`` is normalized internally to constant term 1 (a stable polynomial
    cannot vanish at 0).  The objective projects the pencil coefficients
    onto the column space of multiplication-by-``p``, so the free cofactor
    ``v`` is eliminated exactly; the remaining nonlinear least squares over
    ``K`` runs from several deterministic starts, lowest seed first.
    On success the certificate is re-verified before being returned; on
    exhaustion :class:`DetRepNotFoundError` carries the best residual seen
    (never a claim of nonexistence).
    """
    if p.is_zero():
        raise ValueError("p must be nonzero")
    structure = p.structure
    n = tuple(int(x) for x in n)
    if len(n) != structure.k or any(x < 0 for x in n):
        raise StructureMismatchError("bad inflation multiplicities")
    p0 = p.constant_term()
    if abs(p0) < 1e-12:
        raise ValueError("p must have a nonzero constant term (stability)")
    p_hat = (1.0 / p0) * p

    deg_p = natural_degrees(p_hat)
    caps = [structure.ell[r] * n[r] for r in range(structure.k)]
    v_bounds = [caps[r] - deg_p[r] for r in range(structure.k)]
    if any(b < 0 for b in v_bounds):
        raise DetRepNotFoundError(float("inf"))

    target_mons = _monomials_with_block_bounds(structure, caps)
    mon_index = {e: i for i, e in enumerate(target_mons)}
    v_mons = _monomials_with_block_bounds(structure, v_bounds)

    # multiplication-by-p_hat matrix: columns indexed by v-monomials
    A_p = np.zeros((len(target_mons), len(v_mons)), dtype=np.complex128)
    for col, f in enumerate(v_mons):
        for exps, cc in p_hat.exponent_items():
            tot = tuple(a + b for a, b in zip(exps, f))
            A_p[mon_index[tot], col] += cc
    Upb, sv, _ = np.linalg.svd(A_p, full_matrices=False)
    rank = int(np.sum(sv > 1e-12 * (sv[0] if sv.size else 1.0)))
    Upb = Upb[:, :rank]

    side = sum(l * m for l, m in zip(structure.ell, n))
    if side == 0:
        # empty pencil: works iff p_hat is the constant 1
        resid = float(
            np.linalg.norm(
                [p_hat.coefficient(e) - (1.0 if sum(e) == 0 else 0.0) for e in target_mons]
            )
        )
        if resid <= tol:
            return _certify(p, p0, np.zeros((0, 0), dtype=np.complex128), n, tol)
        raise DetRepNotFoundError(resid)

    def pencil_vec(K):
        q = det_pencil(K, structure, n)
        vec = np.zeros(len(target_mons), dtype=np.complex128)
        for exps, cc in q.exponent_items():
            vec[mon_index[exps]] = cc
        return vec

    def objective(x):
        K = (x[: side * side] + 1j * x[side * side :]).reshape(side, side)
        vec = pencil_vec(K)
        resid = vec - Upb @ (Upb.conj().T @ vec)
        parts = [resid.real, resid.imag]
        # hinge penalty keeps the search inside the contractive ball
        overshoot = max(0.0, spectral_norm(K) - 0.995)
        parts.append(np.array([10.0 * overshoot]))
        return np.concatenate(parts)

    def initial_guess(idx: int, rng: np.random.Generator) -> np.ndarray:
        K0 = np.zeros((side, side), dtype=np.complex128)
        if idx == 0:
            # diagonal heuristic: on scalar blocks, seed with the reciprocal
            # roots of the one-variable restrictions of p_hat
            pos = 0
            for r in range(structure.k):
                l = structure.ell[r]
                width = l * n[r]
                if l == 1 and n[r] > 0:
                    coeffs = np.zeros(deg_p[r] + 1, dtype=np.complex128)
                    vr = structure.var_index(r, 0, 0)
                    for exps, cc in p_hat.exponent_items():
                        if sum(exps) == exps[vr]:
                            coeffs[exps[vr]] += cc
                    # p restricted = sum coeffs[j] z^j with coeffs[0] = 1
                    roots = np.roots(coeffs[::-1]) if deg_p[r] > 0 else []
                    recip = [1.0 / z for z in roots if abs(z) > 1e-9]
                    for t, val in enumerate(recip[: n[r]]):
                        K0[pos + t, pos + t] = val
                pos += width
            if spectral_norm(K0) > 0.99:
                K0 *= 0.99 / spectral_norm(K0)
        else:
            sigma = (0.15, 0.35, 0.6)[idx % 3]
            K0 = sigma * (
                rng.standard_normal((side, side))
                + 1j * rng.standard_normal((side, side))
            ) / np.sqrt(2 * side)
        return np.concatenate([K0.real.ravel(), K0.imag.ravel()])

    best = float("inf")
    for start in range(starts):
        rng = np.random.default_rng([108, seed, start])
        x0 = initial_guess(start, rng)
        try:
            res = scipy.optimize.least_squares(
                objective,
                x0,
                method="trf",
                xtol=1e-14,
                ftol=1e-14,
                gtol=1e-14,
                max_nfev=iters,
            )
        except Exception:
            continue
        K = (res.x[: side * side] + 1j * res.x[side * side :]).reshape(side, side)
        resid = float(np.linalg.norm(res.fun))
        best = min(best, resid)
        if resid > tol:
            continue
        norm_K = spectral_norm(K)
        if norm_K > 1.0:
            K = K * ((1.0 - 1e-12) / norm_K)
        try:
            cert = _certify(p, p0, K, n, tol)
        except (NotDivisibleError, SelfReversiveError, CertificateError):
            continue
        report = verify_certificate(cert, samples=20, seed=seed)
        if report.passed:
            return cert
    raise DetRepNotFoundError(best)


def _certify(p: MPoly, p0: complex, K: np.ndarray, n, tol: float) -> DetRepCertificate:
    structure = p.structure
    pencil = det_pencil(K, structure, n)
    v, residual = divide_with_residual(pencil, p)
    if residual > tol * max(pencil.coeff_norm(), 1e-300) or v.is_zero():
        raise NotDivisibleError(residual)
    ok, gamma = is_almost_self_reversive(v, tol=1e-7)
    if not ok:
        raise SelfReversiveError("search cofactor is not almost self-reversive")
    deg_p = natural_degrees(p)
    deg_v = tuple(int(max(v.degree_block(r), 0)) for r in range(structure.k))
    shifts = tuple(n[r] - deg_p[r] - deg_v[r] for r in range(structure.k))
    if any(s < 0 for s in shifts):
        raise CertificateError(f"negative shifts {shifts}")
    return DetRepCertificate(
        structure,
        p,
        tuple(n),
        K,
        v,
        gamma,
        shifts,
        float(residual),
        float(_reverse_residual(v, gamma)),
        float(1.0 - spectral_norm(K)),
    )
