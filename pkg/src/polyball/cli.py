"""Command-line surface: every pipeline with JSON I/O and stable reports.

Exit codes follow a strict trichotomy so shell pipelines can distinguish
"checked and false" from "could not check":

    0   pass / success
    1   well-formed negative (check failed, nothing found, infeasible)
    2   input or usage error

Reports are JSON envelopes ``{"command", "config", "verdict", "data",
"timestamp"}`` written atomically; identical inputs and seeds reproduce
byte-identical reports apart from the timestamp field.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys

import numpy as np

from . import analysis, detrep, realization
from .domain import (
    BlockStructure,
    CommutingTuple,
    MatrixPoint,
    PolyballError,
    encode_complex,
)
from .jsonio import InputError, dump_report, load_json, parse_with
from .mpoly import (
    MPoly,
    NotDivisibleError,
    factor_det_powers,
    reverse,
)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _unwrap(obj, required: tuple[str, ...], nested: tuple[str, ...] = ()):
    """Accept a bare artifact or a report envelope wrapping one.

    Envelopes carry the artifact under ``data`` (possibly under a named
    sub-key such as ``colligation``); descend until the required fields
    appear.
    """
    for _ in range(4):
        if not isinstance(obj, dict):
            break
        if all(f in obj for f in required):
            return obj
        if "data" in obj and "command" in obj:
            obj = obj["data"]
            continue
        descended = False
        for key in nested:
            if isinstance(obj.get(key), dict):
                obj = obj[key]
                descended = True
                break
        if not descended:
            break
    return obj


def _load_poly(path: str) -> MPoly:
    obj = _unwrap(load_json(path), ("ell", "terms"))
    return parse_with(path, MPoly.from_json, obj, "polynomial")


def _load_point(path: str) -> MatrixPoint:
    obj = _unwrap(load_json(path), ("blocks",))
    return parse_with(path, MatrixPoint.from_json, obj, "matrix point")


def _load_tuple(path: str) -> CommutingTuple:
    obj = _unwrap(load_json(path), ("N", "mats"), nested=("witness",))
    return parse_with(path, CommutingTuple.from_json, obj, "commuting tuple")


def _load_colligation(path: str) -> realization.Colligation:
    obj = _unwrap(load_json(path), ("A", "B", "C", "D"), nested=("colligation",))
    return parse_with(path, realization.Colligation.from_json, obj, "colligation")


def _load_certificate(path: str) -> detrep.DetRepCertificate:
    obj = _unwrap(
        load_json(path), ("p", "K", "v", "shifts"), nested=("certificate",)
    )
    return parse_with(
        path, detrep.DetRepCertificate.from_json, obj, "certificate"
    )


def _parse_int_list(text: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip() != "")
    except ValueError:
        raise InputError("<arg>", f"{what} must be a comma-separated integer list") from None


def _emit(args, command: str, config: dict, verdict: str, data, code: int) -> int:
    envelope = {
        "command": command,
        "config": config,
        "verdict": verdict,
        "data": data,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    text = dump_report(envelope, getattr(args, "out", None))
    if not getattr(args, "out", None):
        sys.stdout.write(text)
    return code


def _common(parser: argparse.ArgumentParser, seed=True, out=True):
    if seed:
        parser.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    if out:
        parser.add_argument("--out", help="write the JSON report here instead of stdout")
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker cap for parallel sampling loops; execution is "
        "deterministic and serial at desk scale (default 1)",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="polyball",
        description="Rational inner functions on square-matrix polyballs: "
        "reversal and factorization, unitary colligation synthesis, and "
        "contractive determinantal certificates.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "reverse",
        help="reverse a polynomial with respect to the polyball",
        description="Compute reverse(p)(Z) = prod_r det(Z^(r))^{t_r} * "
        "conj(p((Z*)^{-1})), the polyball generalization of one-variable "
        "coefficient reversal used throughout Rudin-type factorization.",
    )
    p.add_argument("--in", dest="inp", required=True, help="polynomial JSON")
    p.add_argument("--degrees", help="comma-separated degree vector (default: natural)")
    _common(p, seed=False)

    p = sub.add_parser(
        "factorize",
        help="factor det powers, or a full Rudin-type inner factorization",
        description="Without --den: peel maximal block-determinant powers "
        "off a polynomial. With --den: recover the exponents m_r and the "
        "unimodular phase in the Rudin / Koranyi-Vagi representation "
        "q = gamma * prod det^{m_r} * reverse(p) of a rational inner "
        "function q/p.",
    )
    p.add_argument("--in", dest="inp", required=True, help="numerator polynomial JSON")
    p.add_argument("--den", help="denominator polynomial JSON")
    _common(p, seed=False)

    p = sub.add_parser(
        "check-inner",
        help="sampled innerness check of q/p on the distinguished boundary",
        description="Samples the Shilov boundary (tuples of Haar-unitary "
        "blocks) and reports max ||q(U)/p(U)| - 1| away from denominator "
        "zeros; a rational inner function passes by definition.",
    )
    p.add_argument("--num", required=True, help="numerator polynomial JSON")
    p.add_argument("--den", required=True, help="denominator polynomial JSON")
    p.add_argument("--samples", type=int, default=200)
    _common(p)

    p = sub.add_parser(
        "stability",
        help="heuristic zero scan over the open or closed polyball",
        description="Multi-start minimization of |p| classifying the "
        "polynomial as ball-stable (no zero found in the open ball) or "
        "strongly stable (closed ball); verdicts are heuristic and the "
        "search budget is disclosed in the report.",
    )
    p.add_argument("--in", dest="inp", required=True, help="polynomial JSON")
    p.add_argument("--mode", choices=["open", "closed"], default="open")
    p.add_argument("--budget", type=int, default=2000, help="random starts (default 2000)")
    _common(p)

    p = sub.add_parser(
        "synthesize",
        help="build a unitary colligation realizing Q P^{-1}",
        description="Realization of a rational inner Schur-Agler function "
        "as the transfer function D + C Z_n (I - A Z_n)^{-1} B of a "
        "finite-dimensional unitary colligation: boundary check, PSD Gram "
        "search for the Agler decomposition, then the lurking-isometry "
        "completion.",
    )
    p.add_argument("--num", required=True, help="numerator polynomial JSON (Q)")
    p.add_argument("--den", required=True, help="denominator polynomial JSON (P)")
    p.add_argument("--g", type=int, help="common total degree bound (default: max degree)")
    p.add_argument("--tol", type=float, default=1e-7, help="feasibility tolerance (default 1e-7)")
    p.add_argument("--max-iters", type=int, default=200_000, help="projection iteration cap")
    p.add_argument("--match-points", type=int, default=50)
    _common(p)

    p = sub.add_parser(
        "verify-colligation",
        help="check unitarity, boundary innerness, and the Schur-Agler bound",
        description="A unitary colligation produces a rational inner "
        "transfer function with ||F(T)|| <= 1 over commuting strict "
        "contractions; this verifies all three properties by sampling.",
    )
    p.add_argument("--in", dest="inp", required=True, help="colligation JSON")
    p.add_argument("--samples", type=int, default=100)
    _common(p)

    p = sub.add_parser(
        "eval",
        help="evaluate a polynomial or transfer function at a point or tuple",
        description="Evaluate a polynomial (--poly) or a colligation "
        "transfer function (--colligation) at a matrix point (--point) or "
        "a commuting tuple (--tuple).",
    )
    p.add_argument("--poly", help="polynomial JSON")
    p.add_argument("--colligation", help="colligation JSON")
    p.add_argument("--point", help="matrix point JSON")
    p.add_argument("--tuple", dest="tuple_path", help="commuting tuple JSON")
    _common(p, seed=False)

    p = sub.add_parser(
        "detrep",
        help="expand the determinantal pencil det(I - K Z_n)",
        description="Symbolic expansion of the contractive determinantal "
        "pencil det(I - K Z_n) with Z_n the Kronecker inflation; the "
        "starting point of eventual-Agler-denominator certificates.",
    )
    p.add_argument("--k-matrix", required=True, help="JSON file {\"K\": [[..]]}")
    p.add_argument("--ell", required=True, help="comma-separated block sizes")
    p.add_argument("--n", required=True, help="comma-separated multiplicities")
    _common(p, seed=False)

    p = sub.add_parser(
        "extract-v",
        help="extract a determinantal certificate from a colligation",
        description="For a unitary colligation realizing "
        "prod det^{s_r} reverse(p)/p with p stable and coprime with its "
        "reverse, p divides det(I - A Z_n); the quotient v is almost "
        "self-reversive and K = A is contractive, yielding an "
        "eventual-Agler-denominator certificate.",
    )
    p.add_argument("--poly", required=True, help="denominator polynomial JSON")
    p.add_argument("--colligation", required=True, help="colligation JSON")
    _common(p)

    p = sub.add_parser(
        "verify-cert",
        help="independently re-verify a determinantal certificate",
        description="Re-checks contractivity of K, the pencil division "
        "p v = det(I - K Z_n), almost self-reversiveness of v, and the "
        "nonnegative determinant shifts, from the JSON alone.",
    )
    p.add_argument("--in", dest="inp", required=True, help="certificate JSON")
    p.add_argument("--samples", type=int, default=50)
    _common(p)

    p = sub.add_parser(
        "search-detrep",
        help="best-effort search for det(I - K Z_n) = p v with K contractive",
        description="Every strongly ball-stable polynomial admits a "
        "strictly contractive determinantal representation at some "
        "multiplicities; this searches the given n by multi-start "
        "nonlinear least squares and verifies any certificate it returns. "
        "Failure is reported honestly and never claims nonexistence.",
    )
    p.add_argument("--poly", required=True, help="polynomial JSON")
    p.add_argument("--n", required=True, help="comma-separated multiplicities")
    p.add_argument("--iters", type=int, default=4000, help="objective evaluations per start")
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--tol", type=float, default=1e-7)
    _common(p)

    p = sub.add_parser(
        "agler-bound",
        help="Monte-Carlo lower bound for the Agler norm of Q P^{-1}",
        description="The Agler norm is the supremum of ||F(T)|| over "
        "commuting strict matrix contractions; von Neumann's inequality "
        "fails on most polyballs, so this sampled lower bound can exceed "
        "the sup-norm. The best witness tuple is saved for independent "
        "re-verification.",
    )
    p.add_argument("--num", required=True, help="numerator polynomial JSON")
    p.add_argument("--den", required=True, help="denominator polynomial JSON")
    p.add_argument("--tuples", type=int, default=50)
    p.add_argument("--n-max", type=int, default=4)
    p.add_argument("--witness-out", help="write the witness tuple JSON here")
    _common(p)

    p = sub.add_parser(
        "lift",
        help="certify that det-power lifts of q/p land in the Schur-Agler class",
        description="For a rational inner q/p with strongly stable "
        "denominator, some determinant powers prod det^{s_r} * q/p lie in "
        "the Schur-Agler class: factorize, screen stability, search for a "
        "contractive determinantal certificate over the schedule, then "
        "synthesize the lifted realization.",
    )
    p.add_argument("--num", required=True, help="numerator polynomial JSON")
    p.add_argument("--den", required=True, help="denominator polynomial JSON")
    p.add_argument(
        "--schedule",
        required=True,
        help="semicolon-separated multiplicity vectors, e.g. '1,1;2,2'",
    )
    p.add_argument("--budget", type=int, default=1500, help="stability scan starts")
    p.add_argument("--iters", type=int, default=4000)
    p.add_argument("--starts", type=int, default=8)
    _common(p)

    return ap


def _config_of(args, skip=("command", "out")) -> dict:
    cfg = {}
    for key, val in sorted(vars(args).items()):
        if key in skip or val is None:
            continue
        cfg[key] = val
    return cfg


def _run(args) -> int:
    cmd = args.command
    cfg = _config_of(args)

    if cmd == "reverse":
        poly = _load_poly(args.inp)
        degrees = _parse_int_list(args.degrees, "--degrees") if args.degrees else None
        try:
            out = reverse(poly, degrees)
        except NotDivisibleError as exc:
            return _emit(
                args, cmd, cfg, "not-a-polynomial", {"residual": exc.residual}, EXIT_FAIL
            )
        return _emit(args, cmd, cfg, "ok", out.to_json(), EXIT_PASS)

    if cmd == "factorize":
        poly = _load_poly(args.inp)
        if args.den:
            den = _load_poly(args.den)
            try:
                fact = analysis.rudin_factorize(poly, den)
            except analysis.NotInnerFormError as exc:
                return _emit(
                    args, cmd, cfg, "not-inner-form",
                    {"residual": exc.residual}, EXIT_FAIL,
                )
            return _emit(args, cmd, cfg, "ok", fact.to_json(), EXIT_PASS)
        m, core = factor_det_powers(poly)
        data = {"m": list(m), "core": core.to_json()}
        return _emit(args, cmd, cfg, "ok", data, EXIT_PASS)

    if cmd == "check-inner":
        q = _load_poly(args.num)
        p = _load_poly(args.den)
        rep = analysis.check_inner(q, p, samples=args.samples, seed=args.seed)
        code = EXIT_PASS if rep.passed else EXIT_FAIL
        return _emit(args, cmd, cfg, rep.verdict, rep.to_json(), code)

    if cmd == "stability":
        poly = _load_poly(args.inp)
        rep = analysis.stability_scan(
            poly, mode=args.mode, budget=args.budget, seed=args.seed
        )
        return _emit(args, cmd, cfg, rep.verdict, rep.to_json(), EXIT_PASS)

    if cmd == "synthesize":
        q = _load_poly(args.num)
        p = _load_poly(args.den)
        res = realization.synthesize(
            p,
            q,
            g=args.g,
            seed=args.seed,
            match_points=args.match_points,
            tol=args.tol,
            max_iters=args.max_iters,
        )
        code = EXIT_PASS if res.passed else EXIT_FAIL
        return _emit(args, cmd, cfg, res.verdict, res.to_json(), code)

    if cmd == "verify-colligation":
        coll = _load_colligation(args.inp)
        rep = realization.verify_colligation(coll, trials=args.samples, seed=args.seed)
        code = EXIT_PASS if rep.passed else EXIT_FAIL
        return _emit(args, cmd, cfg, "pass" if rep.passed else "fail", rep.to_json(), code)

    if cmd == "eval":
        if (args.poly is None) == (args.colligation is None):
            raise InputError("<args>", "give exactly one of --poly or --colligation")
        if (args.point is None) == (args.tuple_path is None):
            raise InputError("<args>", "give exactly one of --point or --tuple")
        if args.poly:
            poly = _load_poly(args.poly)
            if args.point:
                val = poly.eval(_load_point(args.point))
                data = {"value": encode_complex(val)}
            else:
                mat = poly.eval_tuple(_load_tuple(args.tuple_path))
                from .domain import encode_matrix

                data = {"value_matrix": encode_matrix(mat)}
        else:
            coll = _load_colligation(args.colligation)
            from .domain import encode_matrix

            if args.point:
                data = {"value_matrix": encode_matrix(realization.eval_transfer(coll, _load_point(args.point)))}
            else:
                data = {
                    "value_matrix": encode_matrix(
                        realization.eval_transfer_tuple(coll, _load_tuple(args.tuple_path))
                    )
                }
        return _emit(args, cmd, cfg, "ok", data, EXIT_PASS)

    if cmd == "detrep":
        obj = load_json(args.k_matrix)
        if not isinstance(obj, dict) or "K" not in obj:
            raise InputError(args.k_matrix, "expected an object with field 'K'")
        from .domain import decode_matrix

        K = parse_with(args.k_matrix, decode_matrix, obj["K"], "matrix field 'K'")
        structure = BlockStructure(_parse_int_list(args.ell, "--ell"))
        n = _parse_int_list(args.n, "--n")
        pencil = detrep.det_pencil(K, structure, n)
        return _emit(args, cmd, cfg, "ok", pencil.to_json(), EXIT_PASS)

    if cmd == "extract-v":
        poly = _load_poly(args.poly)
        coll = _load_colligation(args.colligation)
        try:
            cert = detrep.extract_v(poly, coll)
        except (NotDivisibleError, detrep.SelfReversiveError, detrep.CertificateError) as exc:
            return _emit(args, cmd, cfg, "failed", {"reason": str(exc)}, EXIT_FAIL)
        return _emit(args, cmd, cfg, "ok", cert.to_json(), EXIT_PASS)

    if cmd == "verify-cert":
        cert = _load_certificate(args.inp)
        rep = detrep.verify_certificate(cert, samples=args.samples, seed=args.seed)
        code = EXIT_PASS if rep.passed else EXIT_FAIL
        return _emit(args, cmd, cfg, rep.verdict, rep.to_json(), code)

    if cmd == "search-detrep":
        poly = _load_poly(args.poly)
        n = _parse_int_list(args.n, "--n")
        try:
            cert = detrep.search_detrep(
                poly, n, iters=args.iters, seed=args.seed,
                starts=args.starts, tol=args.tol,
            )
        except detrep.DetRepNotFoundError as exc:
            return _emit(
                args, cmd, cfg, "not-found",
                {"best_residual": exc.best_residual}, EXIT_FAIL,
            )
        return _emit(args, cmd, cfg, "ok", cert.to_json(), EXIT_PASS)

    if cmd == "agler-bound":
        q = _load_poly(args.num)
        p = _load_poly(args.den)
        rep = analysis.agler_lower_bound(
            q, p, tuples=args.tuples, n_max=args.n_max, seed=args.seed
        )
        if args.witness_out and rep.witness is not None:
            dump_report(rep.witness.to_json(), args.witness_out)
        code = EXIT_PASS if rep.verdict == "ok" else EXIT_FAIL
        data = rep.to_json()
        if args.witness_out:
            data["witness_path"] = args.witness_out
        return _emit(args, cmd, cfg, rep.verdict, data, code)

    if cmd == "lift":
        q = _load_poly(args.num)
        p = _load_poly(args.den)
        schedule = [
            _parse_int_list(part, "--schedule")
            for part in args.schedule.split(";")
            if part.strip()
        ]
        res = analysis.eventual_sa_lift(
            q, p, schedule, seed=args.seed,
            stability_budget=args.budget,
            search_iters=args.iters,
            search_starts=args.starts,
        )
        code = EXIT_PASS if res.passed else EXIT_FAIL
        return _emit(args, cmd, cfg, res.verdict, res.to_json(), code)

    raise InputError("<args>", f"unknown command {cmd!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 for usage errors and 0 for --help
        return int(exc.code) if exc.code else 0
    try:
        return _run(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PolyballError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
