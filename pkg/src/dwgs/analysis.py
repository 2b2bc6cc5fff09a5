"""Checks of spectral identities on computed eigenpairs, and the eigenvalue distribution.

* eigenfunctions from the null vector of the flower matrix,
* the energy identity ``Re lambda = -int a|u|^2 / int |u|^2`` for nonreal eigenvalues,
* the counting measure ``mu_R(I)`` of real parts,
* the averaging check: variable dampings and their edge averages share abscissas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.integrate import simpson

from .graph import Edge, MetricGraph, is_commensurate
from .orbits import abscissa_polynomials, abscissa_report
from .profiles import Constant
from .rootfinding import ComplexWindow, SequenceFit, count_zeros, track_sequence
from .secular import SecularSystem, flower_matrix
from .waves import solutions_on_grid

NULL_RTOL = 1e-6
RAYLEIGH_TOL = 1e-6
POINTS_PER_WAVENUMBER = 20


class AnalysisError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Eigenfunctions


@dataclass
class EdgeSamples:
    edge_id: str
    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    alpha: tuple  # coefficients of the scaled (w+, w-) pair


@dataclass
class Eigenfunction:
    """Eigenfunction sampled per edge and normalized so that ``sum_j ||u_j||^2 = 1``."""

    lam: complex
    edges: list
    singular_values: np.ndarray
    null_dim: int = 1
    basis_index: int = 0

    def edge(self, edge_id: str) -> EdgeSamples:
        for s in self.edges:
            if s.edge_id == edge_id:
                return s
        raise KeyError(edge_id)

    def norm_squared(self) -> float:
        return float(sum(simpson(np.abs(s.u) ** 2, x=s.x) for s in self.edges))

    def weighted_norm_squared(self, graph: MetricGraph) -> float:
        """``sum_j int a_j |u_j|^2``, integrated piece by piece across damping jumps."""
        total = 0.0
        for e, s in zip(graph.edges, self.edges):
            w = np.abs(s.u) ** 2
            pieces = e.damping.pieces()
            if pieces is None:
                total += simpson(np.asarray(e.damping(s.x), dtype=float) * w, x=s.x)
                continue
            for x0, x1, value in pieces:
                tol = 1e-12 * e.length
                sel = (s.x >= x0 - tol) & (s.x <= x1 + tol)
                if np.count_nonzero(sel) >= 2:
                    total += value * simpson(w[sel], x=s.x[sel])
        return float(total)

    def derivative_norm_squared(self) -> float:
        return float(sum(simpson(np.abs(s.du) ** 2, x=s.x) for s in self.edges))

    def slot_values(self):
        """Values and outgoing derivatives at the endpoint slots (``2j`` tail, ``2j+1`` head)."""
        psi = np.empty(2 * len(self.edges), dtype=complex)
        dpsi = np.empty_like(psi)
        for j, s in enumerate(self.edges):
            psi[2 * j], psi[2 * j + 1] = s.u[0], s.u[-1]
            dpsi[2 * j], dpsi[2 * j + 1] = s.du[0], -s.du[-1]
        return psi, dpsi

    def coupling_residual(self, system: SecularSystem) -> float:
        """Vertex-condition residual relative to the size of the boundary data."""
        psi, dpsi = self.slot_values()
        r = system._Um @ psi + system._Up @ dpsi
        umax = max(np.max(np.abs(s.u)) for s in self.edges)
        dumax = max(np.max(np.abs(s.du)) for s in self.edges)
        scale = np.linalg.norm(system._Um, 2) * umax + np.linalg.norm(system._Up, 2) * dumax
        return float(np.linalg.norm(r) / scale) if scale > 0 else 0.0

    def ode_residual(self, graph: MetricGraph, samples: int = 10) -> float:
        """``|u'' - (lambda^2 + 2 a lambda + b) u|`` at interior points, relative to ``|lambda|^2 max|u|``.

        ``u''`` comes from fourth-order differences of the sampled ``u'``,
        so this is a consistency check at the level of the grid resolution.
        """
        lam = self.lam
        worst = 0.0
        for e, s in zip(graph.edges, self.edges):
            n = len(s.x)
            if n < 9:
                continue
            idx = np.linspace(3, n - 4, min(samples, n - 6)).astype(int)
            for i in idx:
                x = s.x[i - 2:i + 3]
                h = np.diff(x)
                if np.ptp(h) > 1e-9 * h.mean():
                    continue
                d2 = (s.du[i - 2] - 8 * s.du[i - 1] + 8 * s.du[i + 1] - s.du[i + 2]) / (12 * h[0])
                q = lam ** 2 + 2 * e.damping(s.x[i]) * lam + e.potential(s.x[i])
                worst = max(worst, abs(d2 - q * s.u[i]))
        umax = max(np.max(np.abs(s.u)) for s in self.edges)
        return float(worst / (max(abs(lam), 1.0) ** 2 * umax))


def _grid_points(edge: Edge, lam: complex) -> int:
    n = max(65, int(math.ceil(POINTS_PER_WAVENUMBER * max(abs(lam), 1.0) * edge.length)) + 1)
    return n + (n + 1) % 2  # odd, for Simpson


def eigenspace_at(system: SecularSystem, lam: complex, null_rtol: float = NULL_RTOL) -> list:
    """Basis of eigenfunctions at ``lam`` (one per near-null singular vector)."""
    lam = complex(lam)
    F, _ = flower_matrix(system, np.array([lam]))
    F = F[0]
    rn = np.linalg.norm(F, axis=1, keepdims=True)
    rn[rn == 0] = 1.0
    _, s, vh = np.linalg.svd(F / rn)
    rel = s / s[0]
    null_dim = max(1, int(np.sum(rel < null_rtol)))
    out = []
    grids = [solutions_on_grid(e, lam, _grid_points(e, lam)) for e in system.graph.edges]
    for k in range(null_dim):
        alpha = np.conj(vh[-1 - k])
        edges = []
        for j, (e, (x, wp, dwp, wm, dwm)) in enumerate(zip(system.graph.edges, grids)):
            ap, am = alpha[2 * j], alpha[2 * j + 1]
            edges.append(EdgeSamples(e.id, x, ap * wp + am * wm, ap * dwp + am * dwm, (ap, am)))
        ef = Eigenfunction(lam, edges, s, null_dim, k)
        nrm = math.sqrt(ef.norm_squared())
        if nrm == 0:
            raise AnalysisError("null vector reconstructs to zero")
        for es in ef.edges:
            es.u = es.u / nrm
            es.du = es.du / nrm
        out.append(ef)
    return out


def eigenfunction_at(system: SecularSystem, lam: complex, null_rtol: float = NULL_RTOL) -> Eigenfunction:
    """Eigenfunction for the smallest singular value; see :func:`eigenspace_at` for the full basis."""
    return eigenspace_at(system, lam, null_rtol)[0]


def rayleigh_identity_residual(system: SecularSystem, eig, lam: complex | None = None) -> float:
    """``|Re lambda + int a|u|^2 / int |u|^2|`` for a nonreal eigenpair.

    ``eig`` is an :class:`Eigenfunction` or an eigenvalue (the eigenfunction
    is then computed).
    """
    if not isinstance(eig, Eigenfunction):
        eig = eigenfunction_at(system, eig)
    lam = eig.lam if lam is None else lam
    if abs(lam.imag) <= 1e-6:
        raise AnalysisError("the energy identity for Re(lambda) needs a nonreal eigenvalue")
    return abs(lam.real + eig.weighted_norm_squared(system.graph) / eig.norm_squared())


def loop_symmetry_residual(eig: Eigenfunction, loops) -> float:
    """Mismatch of ``|u|`` under the mirror symmetry of each loop, relative to ``max |u|``.

    Each loop is a list of edge ids in cyclic order, oriented consistently
    and starting at the vertex the mirror passes through; edge ``k`` is
    compared with edge ``n - 1 - k`` traversed backwards.
    """
    umax = max(np.max(np.abs(s.u)) for s in eig.edges)
    worst = 0.0
    for loop in loops:
        n = len(loop)
        for k in range((n + 1) // 2):
            a = np.abs(eig.edge(loop[k]).u)
            b = np.abs(eig.edge(loop[n - 1 - k]).u)[::-1]
            m = min(len(a), len(b))
            worst = max(worst, float(np.max(np.abs(a[:m] - b[:m]))))
    return worst / umax


# ---------------------------------------------------------------------------
# Bounds


def pointwise_damping_bounds(graph: MetricGraph, samples: int = 2001):
    lo, hi = math.inf, -math.inf
    for e in graph.edges:
        v = np.asarray(e.damping(np.linspace(0.0, e.length, samples)), dtype=float)
        lo, hi = min(lo, float(v.min())), max(hi, float(v.max()))
    return lo, hi


def bound_violations(graph: MetricGraph, eigenvalues, tol: float = 1e-9, imag_tol: float = 1e-6):
    """Nonreal eigenvalues whose real part leaves ``[-max a, -min a]``."""
    lo, hi = pointwise_damping_bounds(graph)
    return [z for z in eigenvalues
            if abs(z.imag) > imag_tol and not (-hi - tol <= z.real <= -lo + tol)]


# ---------------------------------------------------------------------------
# Counting measure


@dataclass
class MuDistribution:
    interval: tuple
    R: float
    numerator: int
    denominator: int
    sweep: dict = field(default_factory=dict)  # R -> Fraction
    prediction: Fraction | None = None

    @property
    def value(self) -> Fraction:
        return Fraction(self.numerator, self.denominator) if self.denominator else Fraction(0)

    @property
    def stabilized(self) -> bool:
        """All sweep values equal (as rationals)."""
        vals = set(self.sweep.values())
        return len(vals) == 1

    def extrapolate(self):
        """Fit ``mu_R = mu + beta / R`` over the sweep; returns ``(mu, spread)``."""
        if len(self.sweep) < 2:
            return float(self.value), math.inf
        Rs = np.array(sorted(self.sweep))
        mus = np.array([float(self.sweep[r]) for r in Rs])
        A = np.stack([np.ones_like(Rs), 1.0 / Rs], axis=1)
        coef, *_ = np.linalg.lstsq(A, mus, rcond=None)
        return float(coef[0]), float(np.ptp(mus))

    def to_dict(self) -> dict:
        mu, spread = self.extrapolate()
        return {"interval": list(self.interval), "R": self.R,
                "counts": [self.numerator, self.denominator], "mu_R": str(self.value),
                "sweep": {f"{r:.12g}": str(v) for r, v in sorted(self.sweep.items())},
                "extrapolated": mu, "spread": spread,
                "prediction": None if self.prediction is None else str(self.prediction)}


def spectrum_re_bounds(graph: MetricGraph, margin: float = 0.5):
    """A real-part range holding every eigenvalue for nonnegative potentials.

    Nonreal eigenvalues lie in ``[-max a, -min a]``; real ones solve
    ``lambda^2 + 2 A lambda + K = 0`` with ``A`` a weighted damping average and
    ``K >= 0``, so they lie in ``[-2 max a, 0]``.  Negative potentials widen the
    range by ``sqrt(max(-b))``.
    """
    lo, hi = pointwise_damping_bounds(graph)
    bneg = 0.0
    for e in graph.edges:
        v = np.asarray(e.potential(np.linspace(0.0, e.length, 257)), dtype=float)
        bneg = max(bneg, float(-v.min()))
    extra = math.sqrt(bneg)
    return -2.0 * max(hi, 0.0) - extra - margin, max(0.0, -lo) + extra + margin


def count_in_band(system: SecularSystem, re_min: float, re_max: float, R: float) -> int:
    return count_zeros(system, ComplexWindow(re_min, re_max, -R, R))


def mu_measure(system: SecularSystem, interval, R: float, sweep=(), prediction: Fraction | None = None,
               re_bounds=None) -> MuDistribution:
    """``mu_R(I) = #{Re lambda in I, |Im lambda| < R} / #{|Im lambda| < R}`` as an exact rational.

    ``sweep`` lists further cutoffs; ``re_bounds`` overrides the real-part
    range used for the denominator (default :func:`spectrum_re_bounds`).
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise AnalysisError("empty interval")
    lo, hi = re_bounds if re_bounds is not None else spectrum_re_bounds(system.graph)
    Rs = sorted(set([float(R), *map(float, sweep)]))
    values = {}
    counts = {}
    for r in Rs:
        den = count_in_band(system, lo, hi, r)
        ia, ib = max(a, lo), min(b, hi)
        num = count_in_band(system, ia, ib, r) if ia < ib else 0
        counts[r] = (num, den)
        values[r] = Fraction(num, den) if den else Fraction(0)
    num, den = counts[float(R)]
    return MuDistribution((a, b), float(R), num, den, values, prediction)


def mu_prediction(report, interval) -> Fraction:
    """``m_I / 2N`` from the abscissa report's clusters inside ``interval``."""
    a, b = interval
    n2 = report.polynomial.n_bonds
    return Fraction(sum(c.m for c in report.clusters if a < c.c < b), n2)


def counting_slope(fit: SequenceFit, r_min: float, r_max: float, samples: int = 401) -> float:
    """Least-squares slope of ``N(R) = #{n : |Im lambda_n| < R}`` over ``[r_min, r_max]``."""
    ims = np.abs(fit.lams.imag)
    if ims.max() < r_max or ims.min() > r_min:
        raise AnalysisError("tracked range does not cover the requested cutoffs")
    Rs = np.linspace(r_min, r_max, samples)
    N = np.array([np.sum(ims < r) for r in Rs], dtype=float)
    slope, _ = np.polyfit(Rs, N, 1)
    return float(slope)


# ---------------------------------------------------------------------------
# Averaging


def averaged_graph(graph: MetricGraph) -> MetricGraph:
    """Every damping and potential replaced by its edge average."""
    edges = [Edge(e.id, e.tail, e.head, e.length, Constant(e.mean_damping, e.length),
                  Constant(e.mean_potential, e.length)) for e in graph.edges]
    return graph.with_edges(edges)


@dataclass
class CrosscheckRow:
    guess: complex
    c0_true: complex
    c0_averaged: complex

    @property
    def difference(self) -> float:
        return abs(self.c0_true - self.c0_averaged)


@dataclass
class CrosscheckReport:
    rows: list
    tol: float

    @property
    def max_difference(self) -> float:
        return max((r.difference for r in self.rows), default=0.0)

    @property
    def ok(self) -> bool:
        return self.max_difference <= self.tol


def abscissa_crosscheck(graph: MetricGraph, couplings: dict, n_range=range(38, 43), tol: float = 5e-3,
                        guesses=None) -> CrosscheckReport:
    """Fitted ``c0`` of the true and of the edge-averaged system, sequence by sequence.

    Starting guesses default to the abscissa polynomial roots of the averaged
    graph (one per distinct complex ``c0``).
    """
    if not is_commensurate(graph):
        raise AnalysisError("averaging check needs commensurate edge lengths")
    avg = averaged_graph(graph)
    char, _ = abscissa_polynomials(avg, couplings, max_bonds=0)
    report = abscissa_report(char)
    period = 2.0 * math.pi / char.l0
    if guesses is None:
        guesses = []
        for c in report.c0:
            if all(abs(c - g) > 1e-6 for g in guesses):
                guesses.append(complex(c))
    true_sys = SecularSystem(graph, couplings)
    avg_sys = SecularSystem(avg, couplings)
    rows = []
    for g in guesses:
        ft = track_sequence(true_sys, g, n_range, period)
        fa = track_sequence(avg_sys, g, n_range, period)
        rows.append(CrosscheckRow(g, ft.c0, fa.c0))
    return CrosscheckReport(rows, tol)


# ---------------------------------------------------------------------------
# Bundled verification


@dataclass
class Check:
    name: str
    passed: bool | None  # None = not applicable
    value: object = None
    detail: str = ""

    def __post_init__(self):
        if self.passed is not None:
            self.passed = bool(self.passed)

    def to_dict(self) -> dict:
        v = self.value
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        status = "skipped" if self.passed is None else ("pass" if self.passed else "fail")
        return {"name": self.name, "status": status,
                "value": v if isinstance(v, (int, float, str, type(None))) else str(v),
                "detail": self.detail}


def _match_sets(a, b, tol):
    """Largest distance from a point of ``a`` to ``b`` and vice versa."""
    if len(a) == 0 or len(b) == 0:
        return 0.0 if len(a) == len(b) else math.inf
    d = np.abs(np.asarray(a)[:, None] - np.asarray(b)[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def verify_graph(graph: MetricGraph, couplings: dict, band: int = 10, tol: float = 1e-8, workers: int = 1,
                 sequences: int = 2, window: ComplexWindow | None = None, max_bonds: int = 200) -> list:
    """Run the structural checks on one graph; returns a list of :class:`Check`.

    Eigenvalue checks use ``window`` (default: one period of height ``2 pi`` at
    ``Im ~ 2 pi band`` across the damping range).  Polynomial checks run when
    the lengths are commensurate and the equilateral form has at most
    ``max_bonds`` bonds.
    """
    from .coupling import CouplingResonance
    from .graph import common_unit, is_bipartite
    from .orbits import equilateral_form
    from .rootfinding import RootFindingError, find_roots

    checks = []
    lo, hi = pointwise_damping_bounds(graph)
    if window is None:
        y0 = 2.0 * math.pi * band
        window = ComplexWindow(-hi - 0.25, -lo + 0.25, y0, y0 + 2.0 * math.pi)
    flower = SecularSystem(graph, couplings, "flower")
    scat = flower.with_backend("scattering")
    roots = None
    try:
        roots = find_roots(flower, window, tol=tol, workers=workers)
        checks.append(Check("completeness", roots.is_complete(), roots.total,
                            f"argument principle count {roots.count}"))
    except RootFindingError as exc:
        checks.append(Check("completeness", False, None, str(exc)))
    if roots is not None:
        try:
            other = find_roots(scat, window, tol=tol, workers=workers)
            dist = _match_sets(roots.expanded(), other.expanded(), 1e-6)
            ok = other.total == roots.total and dist < 1e-6
            checks.append(Check("backend_agreement", ok, dist,
                                f"flower {roots.total} zeros, scattering {other.total}"))
        except (RootFindingError, CouplingResonance) as exc:
            checks.append(Check("backend_agreement", False, None, str(exc)))
        worst = 0.0
        n_pairs = 0
        for r in roots.roots:
            if abs(r.lam.imag) <= 1e-6 or r.residual > 1e-6:
                continue
            for ef in eigenspace_at(flower, r.lam):
                worst = max(worst, rayleigh_identity_residual(flower, ef))
                n_pairs += 1
        checks.append(Check("rayleigh_identity", worst < RAYLEIGH_TOL, worst, f"{n_pairs} certified pairs"))
        bad = bound_violations(graph, roots.values)
        checks.append(Check("eigenvalue_bound", not bad, len(bad),
                            f"Re in [{-hi:.6g}, {-lo:.6g}] for nonreal eigenvalues"))

    if not is_commensurate(graph):
        for name in ("weights_sum", "abscissa_bound", "dual_polynomial", "bipartite_parity",
                     "periodic_count", "counting_slope"):
            checks.append(Check(name, None, None, "incommensurate lengths"))
        return checks
    l0 = common_unit([e.length for e in graph.edges])
    eq_graph, eq_couplings, _ = equilateral_form(graph, couplings)
    n2 = 2 * eq_graph.n_edges
    if n2 > max_bonds:
        for name in ("weights_sum", "abscissa_bound", "dual_polynomial", "bipartite_parity",
                     "periodic_count", "counting_slope"):
            checks.append(Check(name, None, n2, f"{n2} bonds exceed the limit {max_bonds}"))
        return checks
    char, orb = abscissa_polynomials(graph, couplings)
    report = abscissa_report(char)
    checks.append(Check("weights_sum", report.total_weight == n2, report.total_weight, f"2N = {n2}"))
    alo, ahi = min(e.mean_damping for e in graph.edges), max(e.mean_damping for e in graph.edges)
    out = [c.c for c in report.clusters if not (-ahi - 1e-9 <= c.c <= -alo + 1e-9)]
    checks.append(Check("abscissa_bound", not out, len(out), f"clusters within [{-ahi:.6g}, {-alo:.6g}]"))
    if orb is not None:
        from .orbits import max_relative_difference
        diff = max_relative_difference(char, orb)
        checks.append(Check("dual_polynomial", diff <= 1e-9, diff, "orbit vs characteristic coefficients"))
    else:
        checks.append(Check("dual_polynomial", None, n2, "too many bonds for orbit enumeration"))
    if is_bipartite(eq_graph):
        checks.append(Check("bipartite_parity", char.odd_coefficients_vanish(), None, "odd powers vanish"))
    else:
        checks.append(Check("bipartite_parity", None, None, "not bipartite"))
    period = 2.0 * math.pi / l0
    if n2 <= 64:
        k = max(1, int(math.ceil(2.0 * math.pi * band / period)))
        w = ComplexWindow(-hi - 0.25, -lo + 0.25, k * period - period / 2, k * period + period / 2)
        try:
            cnt = count_zeros(flower, w)
            checks.append(Check("periodic_count", cnt == n2, cnt, f"one period at Im ~ {k * period:.6g}"))
        except RootFindingError as exc:
            checks.append(Check("periodic_count", False, None, str(exc)))
    else:
        checks.append(Check("periodic_count", None, n2, "skipped above 64 bonds"))
    if sequences > 0:
        guesses = []
        for c in report.c0:
            if all(abs(c - g) > 1e-6 for g in guesses):
                guesses.append(complex(c))
        worst = 0.0
        try:
            for g in guesses[-sequences:]:
                fit = track_sequence(flower, g, range(15, 66), period)
                slope = counting_slope(fit, period * 20, period * 60)
                worst = max(worst, abs(slope * period - 1.0))
            checks.append(Check("counting_slope", worst < 0.01, worst,
                                f"relative slope error over {min(sequences, len(guesses))} sequences"))
        except (RootFindingError, AnalysisError) as exc:
            checks.append(Check("counting_slope", False, None, str(exc)))
    return checks
