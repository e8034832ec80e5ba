"""Command-line interface and the JSON generator-file format.

Exit codes
----------
0  success / conjugate
1  unreadable or invalid input (parse errors, convention mismatch, invalid
   parameters, generators outside the scope of the command)
2  generator outside D(A, rho)
3  internal oracle disagreement
4  not conjugate (fingerprints differ)
5  conjugacy inconclusive
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .cohomology import exactness_report
from .core import StateAlgebra, Superoperator, fnorm, make_state_algebra, tracial
from .errors import (
    ConventionMismatch,
    DynvarError,
    IncompatibleStateAlgebras,
    InternalInconsistency,
    NotElliptic,
    NotExact,
    ParseError,
)
from .generators import (
    GroundTruth,
    in_domain,
    is_elliptic_ccp,
    is_elliptic_form,
    make_momentum_space,
    sample_generator,
)
from .invariants import (
    check_conjugacy,
    extract_invariant,
    fingerprint,
    projection_distance,
    search_conjugacy,
)
from .semigroup import DEFAULT_TIMES, markov_checks, mixing_analysis

VEC_CONVENTION = "column-major"
FIXTURE_DIR = Path(__file__).parent / "fixtures"

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DOMAIN = 2
EXIT_ORACLE = 3
EXIT_NOT_CONJUGATE = 4
EXIT_INCONCLUSIVE = 5

RECOVERY_TOL = 1e-8


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def encode_matrix(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def decode_matrix(obj, shape: tuple | None = None, name: str = "matrix") -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{name}: not a nested array of numbers") from exc
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ParseError(f"{name}: expected rows of [re, im] pairs, got shape {arr.shape}")
    out = arr[..., 0] + 1j * arr[..., 1]
    if shape is not None and out.shape != shape:
        raise ParseError(f"{name}: expected shape {shape}, got {out.shape}")
    return out


@dataclass(frozen=True, eq=False)
class GeneratorFile:
    sa: StateAlgebra
    L: Superoperator
    ground_truth: GroundTruth | None = None
    meta: dict | None = None

    def to_json(self) -> dict:
        out = {
            "n": self.sa.n,
            "vec_convention": VEC_CONVENTION,
            "omega": encode_matrix(self.sa.omega),
            "L": encode_matrix(self.L.mat),
        }
        if self.ground_truth is not None:
            out["ground_truth"] = {
                "momenta": [encode_matrix(p) for p in self.ground_truth.momenta],
                "v": encode_matrix(self.ground_truth.v),
            }
        if self.meta:
            out["meta"] = dict(self.meta)
        return out


def _finite(obj):
    """JSON has no infinities; map non-finite floats to null."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.floating):
        return _finite(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_finite(obj), sort_keys=True, indent=1) + "\n"


def parse_generator(data) -> GeneratorFile:
    if not isinstance(data, dict):
        raise ParseError("generator file must be a JSON object")
    for key in ("n", "omega", "L", "vec_convention"):
        if key not in data:
            raise ParseError(f"missing field {key!r}")
    if data["vec_convention"] != VEC_CONVENTION:
        raise ConventionMismatch(f"vec_convention {data['vec_convention']!r} is not {VEC_CONVENTION!r}")
    n = data["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ParseError("n must be a positive integer")
    omega = decode_matrix(data["omega"], (n, n), "omega")
    L = decode_matrix(data["L"], (n * n, n * n), "L")
    sa = make_state_algebra(n, omega)
    gt = None
    if "ground_truth" in data:
        g = data["ground_truth"]
        if not isinstance(g, dict) or "momenta" not in g or "v" not in g:
            raise ParseError("ground_truth needs 'momenta' and 'v'")
        momenta = tuple(decode_matrix(p, (n, n), "momentum") for p in g["momenta"])
        gt = GroundTruth(momenta, decode_matrix(g["v"], (n, n), "v"))
    return GeneratorFile(sa, Superoperator(n, L), gt, data.get("meta"))


def load_generator(path) -> GeneratorFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return parse_generator(data)


def load_fixture(name: str) -> GeneratorFile:
    if not name.endswith(".json"):
        name += ".json"
    return load_generator(FIXTURE_DIR / name)


def fixture_files() -> dict[str, GeneratorFile]:
    """The shipped fixtures, built from their defining data."""
    from .core import ad
    from .generators import automorphism_generator, make_generator, shift_unitary

    out = {}
    sa2, sa3 = tracial(2), tracial(3)
    p = np.diag([1j, -1j])
    zero2 = np.zeros((2, 2), dtype=complex)
    out["dephasing_n2"] = GeneratorFile(sa2, make_generator(sa2, [p], zero2), GroundTruth((p,), zero2),
                                        {"description": "dephasing Laplacian, P = {diag(i, -i)}, v = 0"})
    out["cyclic_shift_n3"] = GeneratorFile(sa3, automorphism_generator(shift_unitary(3)), None,
                                         {"description": "x -> W x W* - x, W the cyclic shift; elliptic, not exact"})
    e = np.eye(3, dtype=complex)
    p1 = np.diag([1j, -1j, 0])
    p2 = (np.outer(e[0], e[1]) - np.outer(e[1], e[0])) / np.sqrt(2)
    zero3 = np.zeros((3, 3), dtype=complex)
    out["free_laplacian_n3"] = GeneratorFile(sa3, make_generator(sa3, [p1, p2], zero3), GroundTruth((p1, p2), zero3),
                                             {"description": "free Laplacian (v = 0) with two momenta"})
    v = np.diag([0.5j, -0.5j])
    out["pure_potential_n2"] = GeneratorFile(sa2, ad(v), GroundTruth((), v),
                                             {"description": "pure potential L = [v, .], empty momentum space"})
    return out


def parse_omega(spec: str, n: int) -> StateAlgebra:
    """``tracial`` or ``diag:a,b,...`` with exact rational entries."""
    if spec == "tracial":
        return tracial(n)
    if not spec.startswith("diag:"):
        raise ParseError(f"unknown omega specification {spec!r}")
    try:
        entries = [Fraction(x.strip()) for x in spec[5:].split(",")]
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"bad diagonal entries in {spec!r}") from exc
    if len(entries) != n:
        raise ParseError(f"{len(entries)} diagonal entries given for n = {n}")
    if sum(entries) != 1:
        raise ParseError(f"diagonal entries sum to {sum(entries)}, not 1")
    return make_state_algebra(n, np.diag([float(x) for x in entries]))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def analyze(gf: GeneratorFile) -> tuple[dict, int]:
    """Full pipeline; returns the report and the exit code."""
    sa, L = gf.sa, gf.L
    report: dict = {"n": sa.n}
    domain = in_domain(sa, L)
    report["domain"] = domain.as_dict()
    if not domain.ok:
        return report, EXIT_DOMAIN

    form = is_elliptic_form(sa, L)
    ccp = is_elliptic_ccp(sa, L)
    report["ellipticity"] = {"form": form.verdict, "ccp": ccp, "min_eig": form.min_eig}
    if form.verdict != ccp:
        report["error"] = "ellipticity oracles disagree"
        return report, EXIT_ORACLE
    report["elliptic"] = form.verdict

    try:
        ex = exactness_report(sa, L)
    except InternalInconsistency as exc:
        report["error"] = str(exc)
        return report, EXIT_ORACLE
    report["exactness"] = ex.as_dict()
    report["exact"] = ex.exact

    if form.verdict and ex.exact:
        inv = extract_invariant(sa, L)
        report["invariant"] = {
            "m": inv.m,
            "momenta": [encode_matrix(p) for p in inv.P.basis],
            "v": encode_matrix(inv.v),
            "v_norm": fnorm(inv.v),
            "provenance": inv.provenance,
        }
        report["fingerprint"] = fingerprint(inv, sa).as_dict()
        if gf.ground_truth is not None:
            gt = gf.ground_truth
            P_true = make_momentum_space(sa, list(gt.momenta))
            v_err = fnorm(inv.v - gt.v) / max(fnorm(gt.v), 1.0)
            span = projection_distance(inv.P, P_true) if inv.m == P_true.m else float("inf")
            report["ground_truth"] = {
                "m_true": P_true.m,
                "v_error": v_err,
                "span_distance": span,
                "recovered": bool(inv.m == P_true.m and v_err <= RECOVERY_TOL and span <= RECOVERY_TOL),
            }

    report["markov"] = markov_checks(sa, L, DEFAULT_TIMES).as_dict()
    mix = mixing_analysis(sa, L)
    report["mixing"] = mix.as_dict()
    return report, EXIT_OK


def _human(report: dict) -> str:
    lines = [f"n = {report['n']}"]
    if not report["domain"]["ok"]:
        lines.append("generator is NOT in D(A, rho): " + json.dumps(report["domain"], sort_keys=True))
        return "\n".join(lines)
    if "ellipticity" in report:
        e = report["ellipticity"]
        lines.append(f"elliptic: {e['form']} (symbol) / {e['ccp']} (Choi); min eigenvalue {e['min_eig']:.3e}")
    if "error" in report:
        lines.append("ERROR: " + report["error"])
        return "\n".join(lines)
    lines.append(f"exact: {report['exact']}  {report['exactness']['per_criterion']}")
    if "invariant" in report:
        inv = report["invariant"]
        lines.append(f"momentum dimension m = {inv['m']}, |v| = {inv['v_norm']:.6g}")
        fp = report["fingerprint"]
        lines.append(f"spec_v = {fp['spec_v']}")
        lines.append(f"spec_C = {fp['spec_C']}")
    if "ground_truth" in report:
        g = report["ground_truth"]
        lines.append(f"ground truth recovered: {g['recovered']} (v error {g['v_error']:.2e}, span distance {g['span_distance']:.2e})")
    mk = report["markov"]
    lines.append(f"Markov axioms at t = {mk['times']}: {'pass' if mk['ok'] else 'FAIL'}")
    mx = report["mixing"]
    lines.append(f"mixing (limit exists): {mx['limit_exists']}, spectral gap {mx['gap']}")
    return "\n".join(lines)


def cmd_analyze(args) -> int:
    gf = load_generator(args.file)
    report, code = analyze(gf)
    report["exit_code"] = code
    print(dumps(report) if args.json else _human(report), end="" if args.json else "\n")
    return code


def random_generator_file(n: int, omega: str, m: int, seed: int, kind: str) -> GeneratorFile:
    sa = parse_omega(omega, n)
    s = sample_generator(sa, m, seed, kind)
    meta = {"kind": kind, "m": m, "seed": seed, "omega": omega}
    return GeneratorFile(sa, s.L, s.ground_truth, meta)


def cmd_random(args) -> int:
    gf = random_generator_file(args.n, args.omega, args.m, args.seed, args.kind)
    text = dumps(gf.to_json())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _invariant_of(gf: GeneratorFile, label: str):
    try:
        return extract_invariant(gf.sa, gf.L)
    except NotExact as exc:
        raise NotExact(f"{label}: {exc}") from exc
    except NotElliptic as exc:
        raise NotElliptic(f"{label}: {exc}") from exc


def compare(a: GeneratorFile, b: GeneratorFile, certificate=None, budget: int = 100, seed: int = 0) -> tuple[dict, int]:
    if a.sa.n != b.sa.n or fnorm(a.sa.omega - b.sa.omega) > 1e-12:
        raise IncompatibleStateAlgebras("generators live on different state algebras")
    sa = a.sa
    inv1, inv2 = _invariant_of(a, "A"), _invariant_of(b, "B")
    f1, f2 = fingerprint(inv1, sa), fingerprint(inv2, sa)
    out = {"fingerprint_A": f1.as_dict(), "fingerprint_B": f2.as_dict()}
    if not f1.matches(f2):
        out["verdict"] = "NotConjugate"
        out["reason"] = "fingerprints differ"
        return out, EXIT_NOT_CONJUGATE
    if certificate is not None:
        if check_conjugacy(sa, inv1, inv2, certificate):
            out["verdict"] = "Conjugate"
            out["certificate"] = encode_matrix(certificate)
            return out, EXIT_OK
        out["verdict"] = "Inconclusive"
        out["reason"] = "certificate rejected"
        return out, EXIT_INCONCLUSIVE
    res = search_conjugacy(sa, inv1, inv2, budget=budget, seed=seed)
    out["search"] = {"restarts": res.restarts, "best_objective": res.best_objective}
    if res.status == "conjugate":
        out["verdict"] = "Conjugate"
        out["certificate"] = encode_matrix(res.u)
        return out, EXIT_OK
    out["verdict"] = "Inconclusive"
    out["reason"] = res.reason
    return out, EXIT_INCONCLUSIVE


def load_certificate(path, n: int) -> np.ndarray:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read certificate {path}: {exc}") from exc
    if isinstance(data, dict):
        if "u" not in data:
            raise ParseError("certificate object needs a 'u' field")
        data = data["u"]
    return decode_matrix(data, (n, n), "certificate")


def cmd_compare(args) -> int:
    a, b = load_generator(args.a), load_generator(args.b)
    cert = load_certificate(args.certificate, a.sa.n) if args.certificate else None
    out, code = compare(a, b, cert, budget=args.search, seed=args.seed)
    out["exit_code"] = code
    sys.stdout.write(dumps(out))
    return code


def parse_times(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise ParseError(f"bad time list {text!r}") from exc


def cmd_evolve(args) -> int:
    gf = load_generator(args.file)
    times = parse_times(args.t)
    report = markov_checks(gf.sa, gf.L, times).as_dict()
    sys.stdout.write(dumps(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynvar", description="Exact elliptic generators and their dynamical invariants.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="validate and classify a generator file")
    p.add_argument("file")
    p.add_argument("--json", action="store_true", help="emit the full JSON report")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("random", help="write a seeded random generator file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--omega", default="tracial", help="'tracial' or 'diag:a,b,...' (rationals)")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", default="exact", choices=["exact", "elliptic_generic", "nonexact_auto"])
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=cmd_random)

    p = sub.add_parser("compare", help="decide conjugacy of two exact elliptic generators")
    p.add_argument("a")
    p.add_argument("b")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--certificate", help="JSON file with a candidate unitary")
    g.add_argument("--search", type=int, default=100, metavar="BUDGET", help="random restarts (default 100)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("evolve", help="Markov-axiom checks of exp(tL) at given times")
    p.add_argument("file")
    p.add_argument("--t", required=True, help="comma-separated times")
    p.set_defaults(func=cmd_evolve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DynvarError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
