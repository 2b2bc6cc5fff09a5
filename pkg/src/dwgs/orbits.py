"""High-frequency abscissa polynomial from pseudo orbits and from a characteristic determinant.

At leading order in ``n`` the scattering secular equation of an equilateral
graph (edge length ``l0``) evaluated at ``lambda = 2 pi i n / l0 + c0``
reduces to ``det(D S0 - y I) = 0`` with ``y = exp(c0 l0)``.  ``S0`` is the
bond scattering matrix built from the leading vertex scattering matrices
and ``D = diag(exp(-abar_b l0))``.  The polynomial is monic of degree ``2N``.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .coupling import scattering_leading_term
from .graph import (GraphError, MetricGraph, common_unit, directed_double, is_bipartite, is_tree,
                    require_valid, subdivide_to_equilateral)
from .coupling import named_coupling

MAX_ORBIT_BONDS = 24
CLEANUP_RTOL = 1e-10
SNAP_TOL = 1e-13
DEFAULT_CLUSTER_TOL = 1e-6
SWEEP_TOLS = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3)


class OrbitSizeError(ValueError):
    """Too many bonds for exhaustive pseudo-orbit enumeration."""


# ---------------------------------------------------------------------------
# Bond scattering matrix


def _edge_length(graph: MetricGraph) -> float:
    l0 = graph.edges[0].length
    for e in graph.edges:
        if abs(e.length - l0) > 1e-9 * l0:
            raise GraphError("graph is not equilateral; subdivide it first")
    return l0


def bond_scattering(graph: MetricGraph, couplings: dict):
    """``(double, S0)`` with ``S0[b', b]`` the leading amplitude for bond ``b`` -> ``b'``."""
    double = directed_double(graph)
    n2 = double.size
    S = np.zeros((n2, n2), dtype=complex)
    sigma = {v: scattering_leading_term(c) for v, c in couplings.items()}
    pos = {}
    for v in graph.vertices:
        for k, slot in enumerate(graph.endpoints(v)):
            pos[slot] = (v, k)
    for b in range(n2):
        v, kin = pos[double.end_slot(b)]
        for b2 in double.outgoing[v]:
            v2, kout = pos[double.start_slot(b2)]
            S[b2, b] = sigma[v][kout, kin]
    # Round-off from the eigen-decomposition would otherwise create spurious arcs.
    S.real[np.abs(S.real) < SNAP_TOL] = 0.0
    S.imag[np.abs(S.imag) < SNAP_TOL] = 0.0
    return double, S


def bond_weights(graph: MetricGraph, double, l0: float) -> np.ndarray:
    return np.array([math.exp(-graph.edges[b.edge].mean_damping * l0) for b in double.bonds])


def equilateral_form(graph: MetricGraph, couplings: dict):
    """Subdivide a commensurate graph so that every edge has the common length ``l0``."""
    require_valid(graph)
    l0 = common_unit([e.length for e in graph.edges])
    if all(abs(e.length - l0) <= 1e-9 * l0 for e in graph.edges):
        return graph, couplings, l0
    sub, inserted = subdivide_to_equilateral(graph, l0)
    couplings = dict(couplings)
    for v in inserted:
        couplings[v] = named_coupling("standard", 2)
    return sub, couplings, l0


# ---------------------------------------------------------------------------
# Pseudo orbits


@dataclass(frozen=True)
class PseudoOrbit:
    orbits: tuple
    bonds: frozenset
    amplitude: complex

    @property
    def m(self) -> int:
        return len(self.orbits)

    @property
    def length(self) -> int:
        return len(self.bonds)


def simple_cycles(S: np.ndarray, tol: float = 0.0):
    """All simple directed cycles of the bond digraph (arc ``b -> b'`` iff ``S[b', b] != 0``).

    Each cycle is listed once, starting from its smallest bond.
    """
    n = S.shape[0]
    succ = [[b2 for b2 in range(n) if abs(S[b2, b]) > tol] for b in range(n)]
    cycles = []
    for start in range(n):
        path = [start]
        on_path = {start}
        stack = [iter(succ[start])]
        while stack:
            for nxt in stack[-1]:
                if nxt == start:
                    cycles.append(tuple(path))
                elif nxt > start and nxt not in on_path:
                    path.append(nxt)
                    on_path.add(nxt)
                    stack.append(iter(succ[nxt]))
                    break
            else:
                stack.pop()
                on_path.discard(path.pop())
    return cycles


def _cycle_amplitude(S, cyc) -> complex:
    amp = 1.0 + 0j
    for i, b in enumerate(cyc):
        amp *= S[cyc[(i + 1) % len(cyc)], b]
    return amp


def enumerate_pseudo_orbits(double, S: np.ndarray, max_bonds: int = MAX_ORBIT_BONDS):
    """Every irreducible pseudo orbit (sets of bond-disjoint cycles), the empty one included."""
    if double.size > max_bonds:
        raise OrbitSizeError(f"{double.size} bonds exceed the enumeration limit {max_bonds}")
    cycles = simple_cycles(S)
    masks = [sum(1 << b for b in c) for c in cycles]
    amps = [_cycle_amplitude(S, c) for c in cycles]
    out = []

    def grow(first, used, chosen, amp):
        out.append(PseudoOrbit(tuple(cycles[i] for i in chosen),
                               frozenset(b for i in chosen for b in cycles[i]), amp))
        for i in range(first, len(cycles)):
            if not masks[i] & used:
                chosen.append(i)
                grow(i + 1, used | masks[i], chosen, amp * amps[i])
                chosen.pop()

    grow(0, 0, [], 1.0 + 0j)
    return out


# ---------------------------------------------------------------------------
# Polynomials


@dataclass
class AbscissaPolynomial:
    """``sum_k coeffs[k] y^k`` with ``y = exp(c0 l0)``; monic of degree ``2N``."""

    coeffs: np.ndarray
    provenance: str
    l0: float = 1.0
    matrix: np.ndarray | None = None
    bipartite: bool | None = None
    exact: list | None = None  # high-precision coefficients, when available
    term_scale: np.ndarray | None = None  # largest single orbit term per power

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(self.coeffs)
        return int(nz[-1]) if nz.size else -1

    @property
    def n_bonds(self) -> int:
        return len(self.coeffs) - 1

    def balance_radius(self) -> float:
        c0 = abs(self.coeffs[0])
        cn = abs(self.coeffs[-1])
        if c0 == 0 or cn == 0:
            return 1.0
        return (c0 / cn) ** (1.0 / self.n_bonds)

    def scaled(self) -> np.ndarray:
        rho = self.balance_radius()
        return self.coeffs * rho ** np.arange(len(self.coeffs))

    def odd_coefficients_vanish(self, rtol: float = CLEANUP_RTOL) -> bool:
        sc = np.abs(self.scaled())
        return bool(np.all(sc[1::2] <= rtol * sc.max()))

    def __call__(self, y):
        return np.polyval(self.coeffs[::-1], y)

    def to_dict(self) -> dict:
        return {"provenance": self.provenance, "l0": self.l0,
                "coefficients": [{"re": float(c.real), "im": float(c.imag)} for c in self.coeffs]}


def orbit_polynomial(graph: MetricGraph, couplings: dict, max_bonds: int = MAX_ORBIT_BONDS) -> AbscissaPolynomial:
    """Coefficients collected from the pseudo-orbit expansion."""
    l0 = _edge_length(graph)
    double, S = bond_scattering(graph, couplings)
    w = bond_weights(graph, double, l0)
    n2 = double.size
    sums = np.zeros(n2 + 1, dtype=complex)
    scale = np.zeros(n2 + 1)
    for po in enumerate_pseudo_orbits(double, S, max_bonds):
        term = (-1) ** po.m * po.amplitude * math.prod(w[b] for b in po.bonds)
        k = n2 - po.length
        sums[k] += term
        scale[k] = max(scale[k], abs(term))
    sums[np.abs(sums) < CLEANUP_RTOL * scale] = 0
    return AbscissaPolynomial(sums, "orbit-expansion", l0, w[:, None] * S, is_bipartite(graph),
                              term_scale=scale)


def characteristic_polynomial(graph: MetricGraph, couplings: dict, dps: int | None = None,
                              mp_limit: int = 80) -> AbscissaPolynomial:
    """``det(D S0 - y I)`` interpolated on a circle (a Vandermonde solve on roots of unity).

    Evaluations use ``mpmath`` with enough digits to resolve the smallest
    coefficient; above ``mp_limit`` bonds the coefficients come from the
    double-precision eigenvalues instead.
    """
    l0 = _edge_length(graph)
    double, S = bond_scattering(graph, couplings)
    w = bond_weights(graph, double, l0)
    A = w[:, None] * S
    n2 = double.size
    total_decay = sum(graph.edges[b.edge].mean_damping * l0 for b in double.bonds)
    if n2 > mp_limit:
        ev = np.linalg.eigvals(A)
        coeffs = np.poly(ev)[::-1].astype(complex) * (1 if n2 % 2 == 0 else -1)
        coeffs = _cleanup_scaled(coeffs)
        return AbscissaPolynomial(coeffs, "characteristic", l0, A, is_bipartite(graph))
    if dps is None:
        dps = 30 + int(math.ceil(max(total_decay, 0.0) / math.log(10.0)))
    with mpmath.workdps(dps):
        Amp = mpmath.matrix([[mpmath.mpc(z.real, z.imag) for z in row] for row in A])
        detA = mpmath.det(Amp)
        rho = abs(detA) ** (mpmath.mpf(1) / n2) if detA != 0 else mpmath.mpf(1)
        M = n2 + 1
        vals = []
        for j in range(M):
            y = rho * mpmath.expjpi(mpmath.mpf(2 * j) / M)
            B = Amp.copy()
            for i in range(n2):
                B[i, i] -= y
            vals.append(mpmath.det(B))
        exact = []
        for k in range(M):
            s = mpmath.fsum(vals[j] * mpmath.expjpi(-mpmath.mpf(2 * j * k) / M) for j in range(M))
            exact.append(s / M / rho ** k)
        # Interpolation noise sits near 10**-dps relative to the largest
        # scaled coefficient; a fixed 1e-10 cut would erase genuine
        # coefficients when the dampings span many orders of magnitude.
        scaled = [abs(exact[k]) * rho ** k for k in range(M)]
        top = max(scaled)
        cut = min(CLEANUP_RTOL, mpmath.mpf(10) ** (12 - dps))
        for k in range(M):
            if scaled[k] < cut * top:
                exact[k] = mpmath.mpc(0)
        coeffs = np.array([complex(c) for c in exact])
    return AbscissaPolynomial(coeffs, "characteristic", l0, A, is_bipartite(graph), exact)


def _cleanup_scaled(coeffs):
    rho = 1.0
    if coeffs[0] != 0 and coeffs[-1] != 0:
        rho = (abs(coeffs[0]) / abs(coeffs[-1])) ** (1.0 / (len(coeffs) - 1))
    s = np.abs(coeffs) * rho ** np.arange(len(coeffs))
    out = coeffs.copy()
    out[s < 1e-14 * s.max()] = 0
    return out


def polynomials_agree(p: AbscissaPolynomial, q: AbscissaPolynomial, rtol: float = 1e-9) -> bool:
    """Coefficient-wise relative agreement (two zero coefficients agree)."""
    return max_relative_difference(p, q) <= rtol


def max_relative_difference(p: AbscissaPolynomial, q: AbscissaPolynomial) -> float:
    """Largest coefficient-wise relative difference.

    When either polynomial comes from the orbit expansion, a coefficient that
    is below ``CLEANUP_RTOL`` times its largest individual orbit term counts as
    zero: it is a cancellation residue of rounded vertex amplitudes.
    """
    if len(p.coeffs) != len(q.coeffs):
        return math.inf
    floor = np.zeros(len(p.coeffs))
    for poly in (p, q):
        if poly.term_scale is not None:
            floor = np.maximum(floor, CLEANUP_RTOL * poly.term_scale)
    worst = 0.0
    for a, b, f in zip(p.coeffs, q.coeffs, floor):
        a = 0 if abs(a) < f else a
        b = 0 if abs(b) < f else b
        m = max(abs(a), abs(b))
        if m == 0:
            continue
        worst = max(worst, abs(a - b) / m)
    return worst


# ---------------------------------------------------------------------------
# Report


@dataclass(frozen=True)
class Cluster:
    c: float
    m: int
    mu: Fraction
    members: tuple


@dataclass
class AbscissaReport:
    polynomial: AbscissaPolynomial
    roots: np.ndarray
    c0: np.ndarray
    clusters: list
    cluster_tol: float
    sweep: dict = field(default_factory=dict)

    @property
    def distinct_real_parts(self) -> np.ndarray:
        return np.array([c.c for c in self.clusters])

    @property
    def total_weight(self) -> int:
        return sum(c.m for c in self.clusters)

    def to_dict(self) -> dict:
        return {
            "polynomial": self.polynomial.to_dict(),
            "roots": [{"re": float(z.real), "im": float(z.imag)} for z in self.roots],
            "c0": [{"re": float(z.real), "im": float(z.imag)} for z in self.c0],
            "cluster_tol": self.cluster_tol,
            "clusters": [{"c": cl.c, "m": cl.m, "mu": f"{cl.m}/{self.polynomial.n_bonds}"}
                         for cl in self.clusters],
            "sweep": {f"{t:g}": n for t, n in self.sweep.items()},
        }


def polynomial_roots(poly: AbscissaPolynomial) -> np.ndarray:
    """Roots of the polynomial: eigenvalues of the carried matrix, else a balanced companion matrix."""
    if poly.matrix is not None:
        return np.linalg.eigvals(poly.matrix)
    rho = poly.balance_radius()
    sc = poly.coeffs * rho ** np.arange(len(poly.coeffs))
    nz = np.flatnonzero(sc)
    if nz.size == 0:
        raise ValueError("zero polynomial")
    lead = nz[-1]
    low = nz[0]
    roots = np.roots(sc[low:lead + 1][::-1]) * rho
    roots = np.concatenate([roots, np.zeros(low, dtype=complex)])
    return np.array([_polish(poly, z) for z in roots])


def _polish(poly, z, iters: int = 8):
    if poly.exact is None or z == 0:
        return z
    with mpmath.workdps(mpmath.mp.dps + 40):
        coeffs = poly.exact[::-1]
        x = mpmath.mpc(z.real, z.imag)
        for _ in range(iters):
            p, dp = mpmath.polyval(coeffs, x, derivative=True)
            if dp == 0:
                break
            step = p / dp
            x -= step
            if abs(step) <= abs(x) * mpmath.mpf(10) ** (-30):
                break
        return complex(x)


def cluster_real_parts(values, tol: float):
    """Group sorted real parts whose consecutive gaps are at most ``tol``."""
    order = np.argsort(values, kind="stable")
    groups = []
    for i in order:
        if groups and values[i] - values[groups[-1][-1]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def abscissa_report(poly: AbscissaPolynomial, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> AbscissaReport:
    if not np.any(poly.coeffs):
        raise ValueError("zero polynomial")
    roots = polynomial_roots(poly)
    roots = roots[np.abs(roots) > 0]
    c0 = np.array([_principal_c0(y, poly.l0) for y in roots])
    order = np.lexsort((c0.imag, c0.real))
    roots, c0 = roots[order], c0[order]
    n2 = poly.n_bonds

    def clusters_for(tol):
        out = []
        for g in cluster_real_parts(c0.real, tol):
            out.append(Cluster(float(np.mean(c0.real[g])), len(g), Fraction(len(g), n2), tuple(g)))
        out.sort(key=lambda c: c.c)
        return out

    clusters = clusters_for(cluster_tol)
    sweep = {t: len(clusters_for(t)) for t in SWEEP_TOLS}
    return AbscissaReport(poly, roots, c0, clusters, cluster_tol, sweep)


def _principal_c0(y: complex, l0: float) -> complex:
    """``log(y) / l0`` with imaginary part in ``(-pi/l0, pi/l0]``."""
    z = cmath.log(y)
    im = z.imag
    if im <= -math.pi:
        im += 2 * math.pi
    return complex(z.real, im) / l0


def abscissa_polynomials(graph: MetricGraph, couplings: dict, max_bonds: int = MAX_ORBIT_BONDS):
    """Both constructions on the equilateral form of a commensurate graph.

    Returns ``(characteristic, orbit or None)``; the orbit expansion is skipped
    above ``max_bonds`` bonds.
    """
    g, c, _ = equilateral_form(graph, couplings)
    char = characteristic_polynomial(g, c)
    orb = None
    if 2 * g.n_edges <= max_bonds:
        orb = orbit_polynomial(g, c, max_bonds)
    return char, orb


# ---------------------------------------------------------------------------
# Local vertex combinatorics (standard coupling)


def _cycle_count(perm) -> int:
    seen = [False] * len(perm)
    count = 0
    for i in range(len(perm)):
        if not seen[i]:
            count += 1
            j = i
            while not seen[j]:
                seen[j] = True
                j = perm[j]
    return count


def vertex_coefficient_bruteforce(d: int, v: int) -> float:
    """Sum over all local pseudo-orbit configurations at a standard vertex of degree ``d``.

    The ``v`` used edges end in reflecting leaves, so every permutation of
    incoming to outgoing edges is one pseudo orbit whose periodic orbits are
    the permutation's cycles.
    """
    if not 1 <= v <= d:
        raise ValueError("need 1 <= v <= d")
    s1 = 2.0 / d - 1.0
    s2 = 2.0 / d
    total = 0.0
    for perm in itertools.permutations(range(v)):
        fixed = sum(1 for i, p in enumerate(perm) if i == p)
        total += (-1) ** _cycle_count(perm) * s1 ** fixed * s2 ** (v - fixed)
    return total


def nonreflecting_count(v: int) -> int:
    """``g(v)``: signed number of pseudo orbits on a ``v``-star without reflection at the center."""
    total = 0
    for perm in itertools.permutations(range(v)):
        if all(i != p for i, p in enumerate(perm)):
            total += (-1) ** _cycle_count(perm)
    return total


def vertex_coefficient(d: int, v: int) -> float:
    """``A_X = -s1^v (s - 1)^(v-1) [(v - 1) s + 1]`` with ``s = 2 / (2 - d)``.

    The leading minus sign is the one certified by
    :func:`vertex_coefficient_bruteforce`.  For ``d = 2`` the formula's
    singular ``s`` is replaced by its limit ``1 - v``.
    """
    if not 1 <= v <= d:
        raise ValueError("need 1 <= v <= d")
    if d == 2:
        return float(1 - v)
    s1 = 2.0 / d - 1.0
    s = 2.0 / (2.0 - d)
    return -(s1 ** v) * (s - 1.0) ** (v - 1) * ((v - 1) * s + 1.0)


# ---------------------------------------------------------------------------
# Trees with many abscissas


def tree_max_abscissas_damping(graph: MetricGraph, couplings: dict | None = None, separation: float = 5.0):
    """Constant dampings ``a_j = (N - j + 1) * separation`` in edge order (``a_1`` largest).

    Returns ``(damped_graph, dampings)``.  Requires a tree whose vertices all
    have odd degree; leaves must carry a scalar (Robin or Dirichlet) coupling.
    """
    from .graph import Edge
    from .profiles import Constant

    require_valid(graph)
    if not is_tree(graph):
        raise GraphError("graph is not a tree")
    even = [v for v, d in graph.degrees().items() if d % 2 == 0]
    if even:
        raise GraphError(f"vertices of even degree present: {even}")
    if couplings is not None:
        for v, c in couplings.items():
            if graph.degree(v) > 1 and c.origin != "standard":
                raise GraphError(f"interior vertex {v} must carry standard coupling")
    n = graph.n_edges
    dampings = {e.id: (n - j) * separation for j, e in enumerate(graph.edges)}
    edges = [Edge(e.id, e.tail, e.head, e.length, Constant(dampings[e.id], e.length), e.potential)
             for e in graph.edges]
    return graph.with_edges(edges), dampings


def dominant_balance_prediction(poly: AbscissaPolynomial) -> np.ndarray:
    """Abscissas predicted by dominant balance in the even polynomial in ``Y = y^2``.

    For strongly separated dampings consecutive coefficients balance,
    ``Y_j ~ -q_{j-1} / q_j``.  Vanishing coefficients are handled by the
    Newton polygon: each edge of the upper hull of ``(k, log|q_k|)`` of
    horizontal extent ``r`` predicts ``r`` roots of equal modulus.  Returns the
    predicted real parts ``Re c0 = log|Y| / (2 l0)`` with multiplicity, sorted.
    """
    q = poly.coeffs[0::2]
    pts = [(k, math.log(abs(v))) for k, v in enumerate(q) if v != 0]
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (p[0] - x1) <= (p[1] - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(p)
    pred = []
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        slope = (y2 - y1) / (x2 - x1)
        pred.extend([-slope / (2.0 * poly.l0)] * (x2 - x1))
    return np.sort(np.array(pred))
