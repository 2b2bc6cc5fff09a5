"""Command-line front end.

Exit codes
    0  success
    1  a verification check failed
    2  invalid graph or coupling input
    3  solver failure
    4  incommensurate lengths (abscissa polynomial unavailable)
    5  the two methods (backends or polynomial constructions) disagree
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .analysis import (abscissa_crosscheck, bound_violations, eigenspace_at, mu_measure, mu_prediction,
                       rayleigh_identity_residual, spectrum_re_bounds, verify_graph)
from .coupling import CouplingError, CouplingResonance
from .graph import GraphError, IncommensurateLengths, is_commensurate
from .io import corpus_names, load_corpus, load_graph
from .orbits import OrbitSizeError, abscissa_polynomials, abscissa_report, max_relative_difference
from .rootfinding import ComplexWindow, RootFindingError, find_roots
from .secular import SecularSystem
from .waves import IntegrationError

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_SOLVER, EXIT_INCOMMENSURATE, EXIT_DISAGREE = 0, 1, 2, 3, 4, 5
BACKEND_MATCH_TOL = 1e-6
POLY_MATCH_RTOL = 1e-9



class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _load(spec: str):
    """A file path, or ``corpus:NAME`` for a bundled graph."""
    try:
        if spec.startswith("corpus:"):
            name = spec.split(":", 1)[1]
            if name not in corpus_names():
                raise CliFailure(EXIT_INPUT, f"unknown corpus graph {name!r}; available: {', '.join(corpus_names())}")
            return load_corpus(name)
        return load_graph(spec)
    except (GraphError, CouplingError) as exc:
        raise CliFailure(EXIT_INPUT, f"invalid graph: {exc}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise CliFailure(EXIT_INPUT, f"cannot read graph: {exc}") from None


def _window(args, graph) -> ComplexWindow:
    lo, hi = spectrum_re_bounds(graph)
    re_min = lo if args.re_min is None else args.re_min
    re_max = hi if args.re_max is None else args.re_max
    try:
        return ComplexWindow(re_min, re_max, args.im_min, args.im_max)
    except ValueError as exc:
        raise CliFailure(EXIT_INPUT, f"bad window: {exc}") from None


def _emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _seed():
    seed = os.environ.get("DWGS_SEED")
    if seed is not None:
        np.random.seed(int(seed))
    return seed


# ---------------------------------------------------------------------------
# spectrum


def cmd_spectrum(args) -> int:
    graph, couplings = _load(args.graph)
    window = _window(args, graph)
    primary = "scattering" if args.method == "scattering" else "flower"
    system = SecularSystem(graph, couplings, primary)
    try:
        found = find_roots(system, window, tol=args.tol, workers=args.workers)
    except (RootFindingError, IntegrationError, CouplingResonance, np.linalg.LinAlgError) as exc:
        raise CliFailure(EXIT_SOLVER, f"solver failed: {exc}") from None
    summary = {"graph": args.graph, "window": [window.re_min, window.re_max, window.im_min, window.im_max],
               "backend": primary, "count": found.count, "found": found.total, "notes": found.notes}
    disagreement = None
    if args.method == "both":
        try:
            other = find_roots(system.with_backend("scattering"), window, tol=args.tol, workers=args.workers)
        except (RootFindingError, CouplingResonance, np.linalg.LinAlgError) as exc:
            raise CliFailure(EXIT_SOLVER, f"scattering backend failed: {exc}") from None
        a, b = found.expanded(), other.expanded()
        dist = 0.0
        if len(a) and len(b):
            d = np.abs(a[:, None] - b[None, :])
            dist = float(max(d.min(axis=1).max(), d.min(axis=0).max()))
        elif len(a) != len(b):
            dist = math.inf
        disagreement = dist if len(a) == len(b) else math.inf
        summary["scattering_found"] = other.total
        summary["backend_distance"] = disagreement

    rows = []
    for r in found.roots:
        ray = float("nan")
        if abs(r.lam.imag) > 1e-6 and r.residual < 1e-6:
            ray = max(rayleigh_identity_residual(system.with_backend("flower"), ef)
                      for ef in eigenspace_at(system.with_backend("flower"), r.lam))
        rows.append((r.lam.real, r.lam.imag, r.multiplicity, r.residual, ray))
    rows.sort(key=lambda t: (t[1], t[0]))
    bad = bound_violations(graph, [complex(x, y) for x, y, *_ in rows])
    summary["bound_violations"] = len(bad)
    summary["max_rayleigh_residual"] = max((t[4] for t in rows if not math.isnan(t[4])), default=None)

    if is_commensurate(graph):
        try:
            char, _ = abscissa_polynomials(graph, couplings, max_bonds=0)
            rep = abscissa_report(char)
            centers = np.array([c.c for c in rep.clusters])
            assign = {}
            for x, *_ in rows:
                k = int(np.argmin(np.abs(centers - x)))
                key = _fmt(centers[k])
                assign.setdefault(key, {"count": 0, "max_distance": 0.0})
                assign[key]["count"] += 1
                assign[key]["max_distance"] = max(assign[key]["max_distance"], abs(centers[k] - x))
            summary["abscissa_assignment"] = assign
        except (GraphError, OrbitSizeError, ValueError) as exc:
            summary["abscissa_assignment"] = f"unavailable: {exc}"

    if args.format == "json":
        text = json.dumps({"summary": summary, "eigenvalues": [
            {"re": x, "im": y, "multiplicity": m, "residual": res, "rayleigh_residual": None if math.isnan(ray) else ray}
            for x, y, m, res, ray in rows]}, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "multiplicity", "residual", "rayleigh_residual"])
        for x, y, m, res, ray in rows:
            w.writerow([_fmt(x), _fmt(y), m, _fmt(res), _fmt(ray)])
        text = buf.getvalue()
        print(json.dumps(summary, indent=2), file=sys.stderr)
    _emit(text, args.out)
    if disagreement is not None and not disagreement <= BACKEND_MATCH_TOL:
        print(f"backends disagree: distance {disagreement}", file=sys.stderr)
        return EXIT_DISAGREE
    return EXIT_OK


# ---------------------------------------------------------------------------
# abscissas


def cmd_abscissas(args) -> int:
    graph, couplings = _load(args.graph)
    if not is_commensurate(graph):
        raise CliFailure(EXIT_INCOMMENSURATE,
                         "edge lengths are incommensurate; no abscissa polynomial exists. "
                         "Use the 'spectrum' subcommand to compute eigenvalues directly.")
    try:
        max_bonds = 0 if args.poly_method == "characteristic" else 24
        char, orb = abscissa_polynomials(graph, couplings, max_bonds=max_bonds)
    except IncommensurateLengths as exc:
        raise CliFailure(EXIT_INCOMMENSURATE, str(exc)) from None
    if args.poly_method == "orbit" and orb is None:
        raise CliFailure(EXIT_SOLVER, "too many bonds for the orbit expansion; use --poly-method characteristic")
    primary = orb if args.poly_method == "orbit" else char
    report = abscissa_report(primary, args.cluster_tol)
    out = report.to_dict()
    disagree = False
    if orb is not None and args.poly_method == "both":
        diff = max_relative_difference(char, orb)
        out["orbit_polynomial"] = orb.to_dict()
        out["methods_max_relative_difference"] = diff
        disagree = not diff <= POLY_MATCH_RTOL
    elif args.poly_method == "both":
        out["orbit_polynomial"] = None
        out["methods_note"] = "orbit expansion skipped (more than 24 bonds)"
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["c", "m", "mu"])
        for cl in report.clusters:
            w.writerow([_fmt(cl.c), cl.m, f"{cl.m}/{primary.n_bonds}"])
        text = buf.getvalue()
    else:
        text = json.dumps(out, indent=2) + "\n"
    _emit(text, args.out)
    if disagree:
        print("orbit and characteristic polynomials disagree", file=sys.stderr)
        return EXIT_DISAGREE
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    if args.all_corpus:
        targets = [f"corpus:{n}" for n in corpus_names()]
    elif args.graph:
        targets = [args.graph]
    else:
        raise CliFailure(EXIT_INPUT, "give --graph or --all-corpus")
    results = {}
    failed = False
    for target in targets:
        graph, couplings = _load(target)
        try:
            checks = verify_graph(graph, couplings, band=args.band, tol=args.tol, workers=args.workers,
                                  sequences=args.sequences)
        except (IntegrationError, CouplingResonance, np.linalg.LinAlgError) as exc:
            raise CliFailure(EXIT_SOLVER, f"{target}: {exc}") from None
        if args.averaging and is_commensurate(graph) and not all(e.is_constant for e in graph.edges):
            from .analysis import Check
            rep = abscissa_crosscheck(graph, couplings)
            checks.append(Check("averaging", rep.ok, rep.max_difference, "true vs edge-averaged fitted c0"))
        results[target] = [c.to_dict() for c in checks]
        failed |= any(c.passed is False for c in checks)
    text = json.dumps(results, indent=2) + "\n"
    _emit(text, args.out)
    for target, checks in results.items():
        for c in checks:
            if c["status"] == "fail":
                print(f"FAIL {target} {c['name']}: value={c['value']} {c['detail']}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


# ---------------------------------------------------------------------------
# mu


def cmd_mu(args) -> int:
    graph, couplings = _load(args.graph)
    system = SecularSystem(graph, couplings)
    Rs = args.R or [2 * math.pi * 20, 2 * math.pi * 40, 2 * math.pi * 60]
    prediction = None
    if is_commensurate(graph):
        try:
            char, _ = abscissa_polynomials(graph, couplings, max_bonds=0)
            prediction = mu_prediction(abscissa_report(char), args.interval)
        except (GraphError, ValueError):
            prediction = None
    a, b = args.interval
    if not a < b:
        # an empty interval has measure zero; no counting needed
        rows = [(R, 0, None) for R in Rs]
        extrap = (0.0, 0.0)
    else:
        try:
            dist = mu_measure(system, (a, b), Rs[0], sweep=Rs[1:], prediction=prediction)
        except (RootFindingError, IntegrationError) as exc:
            raise CliFailure(EXIT_SOLVER, f"counting failed: {exc}") from None
        rows = [(R, dist.sweep[R], None) for R in sorted(dist.sweep)]
        extrap = dist.extrapolate()
    if args.format == "json":
        text = json.dumps({"interval": [a, b], "rows": [{"R": R, "mu_R": str(v)} for R, v, _ in rows],
                           "extrapolated": extrap[0], "spread": extrap[1],
                           "prediction": None if prediction is None else str(prediction)}, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R", "mu_R", "mu_R_float", "prediction"])
        for R, v, _ in rows:
            w.writerow([_fmt(R), str(v), _fmt(float(v)), "" if prediction is None else str(prediction)])
        text = buf.getvalue()
    _emit(text, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _positive(x: str) -> float:
    v = float(x)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dwgs", description="Spectra of damped wave equations on metric graphs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt_default="csv"):
        sp.add_argument("--graph", help="graph JSON file, or corpus:NAME for a bundled example")
        sp.add_argument("--out", help="output file (default: standard output)")
        sp.add_argument("--format", choices=("csv", "json"), default=fmt_default)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--tol", type=_positive, default=1e-8)

    s = sub.add_parser("spectrum", help="eigenvalues in a rectangle of the complex plane")
    common(s)
    s.add_argument("--re-min", type=float)
    s.add_argument("--re-max", type=float)
    s.add_argument("--im-min", type=float, default=0.0)
    s.add_argument("--im-max", type=float, default=2 * math.pi * 10)
    s.add_argument("--method", choices=("flower", "scattering", "both"), default="both")
    s.set_defaults(func=cmd_spectrum)

    a = sub.add_parser("abscissas", help="high-frequency abscissas from the abscissa polynomial")
    common(a, "json")
    a.add_argument("--poly-method", choices=("orbit", "characteristic", "both"), default="both")
    a.add_argument("--cluster-tol", type=_positive, default=1e-6)
    a.set_defaults(func=cmd_abscissas)

    v = sub.add_parser("verify", help="run the structural checks")
    common(v, "json")
    v.add_argument("--all-corpus", action="store_true", help="check every bundled graph")
    v.add_argument("--band", type=int, default=10, help="check eigenvalues near Im = 2 pi band")
    v.add_argument("--sequences", type=int, default=2, help="sequences used for the counting-slope fit")
    v.add_argument("--averaging", action="store_true", help="also compare with edge-averaged dampings")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("mu", help="distribution of real parts mu_R(I)")
    common(m)
    m.add_argument("--interval", type=float, nargs=2, required=True, metavar=("A", "B"))
    m.add_argument("--R", type=_positive, action="append", help="cutoff (repeatable)")
    m.set_defaults(func=cmd_mu)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    _seed()
    if args.command != "verify" and not args.graph:
        parser.error("--graph is required")
    try:
        return args.func(args)
    except CliFailure as exc:
        print(f"dwgs: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
