"""Numerical and structural analysis of rational inner functions.

Pipelines built on the lower layers: boundary innerness checks, the
Rudin-type factorization ``f = prod det^{m_r} * reverse(p) / p`` of a
scalar rational inner function, heuristic stability scans of polynomials
over the open and closed polyball, Monte-Carlo lower bounds for the Agler
norm over commuting matrix tuples, and the lifting pipeline that turns a
strongly stable denominator into a Schur-Agler function after multiplying
by determinant powers.

Stability verdicts are explicitly heuristic: a scan that finds no zero
reports its budget and best point, and downstream pipelines treat
``no-zero-found`` as an assumption, never as a proof.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .domain import (
    BlockStructure,
    CommutingTuple,
    MatrixPoint,
    PolyballError,
    StructureMismatchError,
    condition_number,
    haar_unitary,
    sample_commuting_tuple,
    sample_interior,
    sample_shilov,
    spectral_norm,
)
from .mpoly import (
    MatPoly,
    MPoly,
    NotDivisibleError,
    coerce_matpoly,
    det_poly,
    exact_divide,
    factor_det_powers,
    natural_degrees,
    reverse,
)
from .realization import Colligation, SynthesisResult, synthesize
from .detrep import DetRepCertificate, DetRepNotFoundError, search_detrep

__all__ = [
    "InnerReport",
    "StabilityReport",
    "AglerBoundReport",
    "RudinFactorization",
    "NotInnerFormError",
    "LiftResult",
    "check_inner",
    "rudin_factorize",
    "stability_scan",
    "agler_lower_bound",
    "eventual_sa_lift",
]

NEAR_SINGULAR = 1e-8


class NotInnerFormError(PolyballError):
    """The fraction does not have the det-powers-times-reverse shape."""

    def __init__(self, residual: float, message: str | None = None):
        self.residual = float(residual)
        super().__init__(
            message or f"not of inner form (residual {residual:.3e})"
        )


@dataclass(frozen=True)
class InnerReport:
    samples: int
    max_defect: float
    near_singular_fraction: float
    verdict: str  # "pass" | "fail" | "inconclusive"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> dict:
        return {
            "samples": self.samples,
            "max_defect": self.max_defect,
            "near_singular_fraction": self.near_singular_fraction,
            "verdict": self.verdict,
        }


def check_inner(q: MPoly, p: MPoly, samples: int = 200, seed: int = 0) -> InnerReport:
    """Sample the Shilov boundary and report ``max | |q(U)/p(U)| - 1 |``,
    skipping points where the denominator nearly vanishes."""
    if p.is_zero():
        raise ValueError("denominator must be nonzero")
    if q.structure != p.structure:
        raise StructureMismatchError("numerator over a different structure")
    worst = 0.0
    skipped = 0
    for i in range(samples):
        U = sample_shilov(p.structure, [201, seed, i])
        pv = p.eval(U)
        if abs(pv) < NEAR_SINGULAR:
            skipped += 1
            continue
        worst = max(worst, abs(abs(q.eval(U) / pv) - 1.0))
    frac = skipped / samples if samples else 0.0
    if skipped == samples:
        verdict = "inconclusive"
    else:
        verdict = "pass" if worst < 1e-8 else "fail"
    return InnerReport(samples, float(worst), float(frac), verdict)


@dataclass(frozen=True)
class RudinFactorization:
    m: tuple[int, ...]
    gamma: complex
    residual: float

    def to_json(self) -> dict:
        return {
            "m": list(self.m),
            "gamma": [self.gamma.real, self.gamma.imag],
            "residual": self.residual,
        }


def rudin_factorize(q: MPoly, p: MPoly, tol: float = 1e-9) -> RudinFactorization:
    """Recover the exponents in ``q = gamma * prod det^{m_r} * reverse(p)``
    with unimodular ``gamma`` (the caller asserts ``q/p`` is inner and in
    lowest terms).  Raises :class:`NotInnerFormError` when the shape fails,
    which signals either non-innerness or a non-coprime representation."""
    if q.is_zero() or p.is_zero():
        raise ValueError("q and p must be nonzero")
    if q.structure != p.structure:
        raise StructureMismatchError("q over a different structure")
    rp = reverse(p)
    m_q, core_q = factor_det_powers(q)
    mu, core_rp = factor_det_powers(rp)
    m = tuple(a - b for a, b in zip(m_q, mu))
    if any(x < 0 for x in m):
        raise NotInnerFormError(float("inf"), "determinant powers of q fall short")
    # proportionality core_q = gamma * core_rp with |gamma| = 1
    if set(core_q.terms) != set(core_rp.terms):
        raise NotInnerFormError(core_q.distance(core_rp))
    lead = max(core_rp.terms, key=lambda k: abs(core_rp.terms[k]))
    gamma = core_q.terms[lead] / core_rp.terms[lead]
    residual = core_q.distance(gamma * core_rp) / max(core_q.coeff_norm(), 1e-300)
    if residual > tol or abs(abs(gamma) - 1.0) > tol:
        raise NotInnerFormError(residual)
    return RudinFactorization(m, complex(gamma), float(residual))


@dataclass(frozen=True)
class StabilityReport:
    mode: str  # "open" | "closed"
    min_abs: float
    argmin: MatrixPoint
    verdict: str  # "no-zero-found" | "zero-found"
    budget: int
    polish_count: int

    @property
    def zero_found(self) -> bool:
        return self.verdict == "zero-found"

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "min_abs": self.min_abs,
            "argmin": self.argmin.to_json(),
            "verdict": self.verdict,
            "budget": self.budget,
            "polish_count": self.polish_count,
        }


def _clamped_blocks(structure: BlockStructure, x: np.ndarray, cap: float) -> list[np.ndarray]:
    """Real parameter vector -> blocks with norms smoothly retracted into
    the ball of radius ``cap`` (norm -> cap * tanh(norm / cap), an
    increasing bijection onto [0, cap), so boundary minima are reachable
    in the limit without a flat plateau)."""
    blocks = []
    pos = 0
    for l in structure.ell:
        cnt = l * l
        b = (x[pos : pos + cnt] + 1j * x[pos + cnt : pos + 2 * cnt]).reshape(l, l)
        pos += 2 * cnt
        nrm = abs(b[0, 0]) if l == 1 else spectral_norm(b)
        if nrm > 0:
            b = b * (cap * np.tanh(nrm / cap) / nrm)
        blocks.append(b)
    return blocks


def _clamped_point(structure: BlockStructure, x: np.ndarray, cap: float) -> MatrixPoint:
    return MatrixPoint(structure, tuple(_clamped_blocks(structure, x, cap)))


def _point_params(point: MatrixPoint) -> np.ndarray:
    parts = []
    for b in point.blocks:
        parts.append(b.real.ravel())
        parts.append(b.imag.ravel())
    return np.concatenate(parts)


def _sample_rank_deficient(structure: BlockStructure, seed) -> MatrixPoint:
    """Boundary point with top singular value 1 but generically not unitary."""
    rng = np.random.default_rng(seed)
    blocks = []
    for l in structure.ell:
        u = haar_unitary(l, rng)
        w = haar_unitary(l, rng)
        sv = np.sort(rng.uniform(0.0, 1.0, size=l))[::-1]
        sv[0] = 1.0
        blocks.append(u @ np.diag(sv) @ w)
    return MatrixPoint(structure, tuple(blocks))


def stability_scan(
    p: MPoly,
    mode: str = "open",
    budget: int = 2000,
    seed: int = 0,
    polish_top: int = 24,
) -> StabilityReport:
    """Heuristic zero search: minimize ``|p|^2`` from ``budget`` random
    starts (interior for the open ball; interior, Shilov, and rank-deficient
    boundary points for the closed ball), then polish the best candidates
    with Nelder-Mead in the real block parametrization with spectral-norm
    retraction.  ``zero-found`` requires ``|p| < 1e-8`` at a scanned point;
    anything else is ``no-zero-found`` with the budget disclosed."""
    if p.is_zero():
        raise ValueError("p must be nonzero")
    mode = mode.lower()
    if mode not in ("open", "closed"):
        raise ValueError("mode must be 'open' or 'closed'")
    structure = p.structure
    cap = 1.0 - 1e-3 if mode == "open" else 1.0

    candidates: list[tuple[float, MatrixPoint]] = []
    rows = np.empty((budget, structure.d), dtype=np.complex128)
    points = []
    for i in range(budget):
        if mode == "closed" and i % 3 == 1:
            Z = sample_shilov(structure, [202, seed, i])
        elif mode == "closed" and i % 3 == 2:
            Z = _sample_rank_deficient(structure, [203, seed, i])
        else:
            Z = sample_interior(structure, [204, seed, i])
        points.append(Z)
        rows[i] = Z.flat_entries()
    vals = np.abs(p.eval_many(rows))
    candidates = sorted(zip(vals.tolist(), range(budget)), key=lambda t: t[0])

    def objective(x):
        blocks = _clamped_blocks(structure, x, cap)
        entries = np.concatenate([b.ravel() for b in blocks])
        return abs(p.eval_entries(entries)) ** 2

    polish_count = min(polish_top, len(candidates))
    best_val = float(candidates[0][0])
    best_point = points[candidates[0][1]]
    for rank in range(polish_count):
        x0 = _point_params(points[candidates[rank][1]])
        res = scipy.optimize.minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"maxiter": 250 * len(x0), "fatol": 1e-15, "xatol": 1e-10},
        )
        val = np.sqrt(max(res.fun, 0.0))
        if val < best_val:
            best_val = float(val)
            best_point = _clamped_point(structure, res.x, cap)
    if best_val < 1e-3:
        # zero candidate: drive it to full precision (the loose tolerances
        # above stall around |p| ~ 1e-7)
        res = scipy.optimize.minimize(
            objective,
            _point_params(best_point),
            method="Nelder-Mead",
            options={"maxiter": 4000 * structure.d, "fatol": 1e-30, "xatol": 1e-14},
        )
        if np.sqrt(max(res.fun, 0.0)) < best_val:
            best_val = float(np.sqrt(max(res.fun, 0.0)))
            best_point = _clamped_point(structure, res.x, cap)

    verdict = "zero-found" if best_val < 1e-8 else "no-zero-found"
    return StabilityReport(
        mode=mode,
        min_abs=float(best_val),
        argmin=best_point,
        verdict=verdict,
        budget=budget,
        polish_count=polish_count,
    )


@dataclass(frozen=True)
class AglerBoundReport:
    bound: float
    witness: CommutingTuple | None
    witness_value: float
    tuples_tried: int
    skipped: int
    n_max: int
    verdict: str  # "ok" | "inconclusive"

    def to_json(self) -> dict:
        return {
            "bound": self.bound,
            "witness": None if self.witness is None else self.witness.to_json(),
            "witness_value": self.witness_value,
            "tuples_tried": self.tuples_tried,
            "skipped": self.skipped,
            "n_max": self.n_max,
            "verdict": self.verdict,
        }


def agler_lower_bound(
    Q,
    P,
    tuples: int = 50,
    n_max: int = 4,
    seed: int = 0,
) -> AglerBoundReport:
    """Monte-Carlo lower bound for the Agler norm of ``F = Q P^{-1}``:
    the maximum of ``||Q(T) P(T)^{-1}||`` over sampled commuting tuples of
    both families and all representation dimensions up to ``n_max``.

    The sampling grid is indexed by (draw, family, N) with seeds derived
    from each index, so enlarging ``tuples`` or ``n_max`` only adds
    samples; with a fixed seed the bound is monotone in both parameters.
    The best witness tuple is stored for independent re-evaluation."""
    Q, P = coerce_matpoly(Q), coerce_matpoly(P)
    if Q.structure != P.structure:
        raise StructureMismatchError("Q and P over different structures")
    structure = P.structure
    best = -1.0
    witness = None
    tried = 0
    skipped = 0
    for i in range(tuples):
        for fam_id, fam in enumerate(("diagonalizable", "single-generator")):
            for N in range(1, n_max + 1):
                T = sample_commuting_tuple(structure, N, fam, [205, seed, i, fam_id, N])
                tried += 1
                Pt = P.eval_tuple(T)
                if condition_number(Pt) > 1e12:
                    skipped += 1
                    continue
                val = spectral_norm(Q.eval_tuple(T) @ np.linalg.inv(Pt))
                if val > best:
                    best = val
                    witness = T
    if witness is None:
        return AglerBoundReport(
            float("nan"), None, float("nan"), tried, skipped, n_max, "inconclusive"
        )
    wv = spectral_norm(Q.eval_tuple(witness) @ np.linalg.inv(P.eval_tuple(witness)))
    return AglerBoundReport(
        float(best), witness, float(wv), tried, skipped, n_max, "ok"
    )


@dataclass(frozen=True)
class LiftResult:
    verdict: str  # "lifted" | "precondition-failed" | "not-found"
    shifts: tuple[int, ...] | None
    colligation: Colligation | None
    certificate: DetRepCertificate | None
    factorization: RudinFactorization | None
    stability: StabilityReport | None
    synthesis: SynthesisResult | None

    @property
    def passed(self) -> bool:
        return self.verdict == "lifted"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "shifts": None if self.shifts is None else list(self.shifts),
            "colligation": None if self.colligation is None else self.colligation.to_json(),
            "certificate": None if self.certificate is None else self.certificate.to_json(),
            "factorization": None if self.factorization is None else self.factorization.to_json(),
            "stability": None if self.stability is None else self.stability.to_json(),
            "synthesis": None if self.synthesis is None else self.synthesis.to_json(),
        }


def eventual_sa_lift(
    q: MPoly,
    p: MPoly,
    n_schedule,
    seed: int = 0,
    stability_budget: int = 1500,
    search_iters: int = 4000,
    search_starts: int = 8,
) -> LiftResult:
    """Lift a rational inner function ``q/p`` into the Schur-Agler class by
    determinant powers: factorize, screen the denominator for closed-ball
    zeros, search the multiplicity schedule for a contractive determinantal
    certificate, then synthesize a unitary realization of the lifted
    function ``prod det^{s_r + m_r} * gamma * reverse(p) / p``.

    The stability screen is a heuristic assumption, and schedule exhaustion
    reports ``not-found`` rather than any nonexistence claim."""
    fact = rudin_factorize(q, p)
    stab = stability_scan(p, mode="closed", budget=stability_budget, seed=seed)
    if stab.zero_found:
        return LiftResult("precondition-failed", None, None, None, fact, stab, None)
    cert = None
    for n in n_schedule:
        try:
            cert = search_detrep(
                p, tuple(n), iters=search_iters, seed=seed, starts=search_starts
            )
            break
        except DetRepNotFoundError:
            continue
    if cert is None:
        return LiftResult("not-found", None, None, None, fact, stab, None)

    structure = p.structure
    lifted_q = fact.gamma * reverse(p)
    for r in range(structure.k):
        power = cert.shifts[r] + fact.m[r]
        if power:
            lifted_q = lifted_q * det_poly(structure, r) ** power
    g = int(max(lifted_q.total_degree(), p.total_degree()))
    synth = synthesize(p, lifted_q, g=g, seed=seed)
    if not synth.passed:
        return LiftResult("not-found", None, None, cert, fact, stab, synth)
    return LiftResult(
        "lifted", cert.shifts, synth.colligation, cert, fact, stab, synth
    )
