import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import loop, make_edge, single_edge, star
from dwgs.coupling import default_couplings
from dwgs.graph import GraphError, MetricGraph, directed_double, is_bipartite
from dwgs.io import corpus_names, load_corpus
from dwgs.orbits import (
    OrbitSizeError, abscissa_polynomials, abscissa_report, bond_scattering, characteristic_polynomial,
    dominant_balance_prediction, enumerate_pseudo_orbits, equilateral_form, max_relative_difference,
    nonreflecting_count, orbit_polynomial, polynomials_agree, simple_cycles, tree_max_abscissas_damping,
    vertex_coefficient, vertex_coefficient_bruteforce,
)
from dwgs.rootfinding import track_sequence
from dwgs.secular import SecularSystem

COMMENSURATE_SMALL = [n for n in corpus_names() if n not in ("star_103", "star_141", "star_incommensurate")]


def test_single_edge_pseudo_orbits():
    g, c = single_edge()
    double, S = bond_scattering(g, c)
    orbits = enumerate_pseudo_orbits(double, S)
    assert len(orbits) == 2
    empty = [p for p in orbits if p.m == 0][0]
    assert empty.amplitude == 1 and empty.length == 0
    full = [p for p in orbits if p.m == 1][0]
    assert full.length == 2 and full.amplitude == pytest.approx(1.0)


def test_single_edge_polynomial():
    g, c = single_edge(a=0.7)
    p = orbit_polynomial(g, c)
    # y^2 - e^{-2a}: the only orbit is the bounce (e, e-hat)
    assert np.allclose(p.coeffs, [-math.exp(-1.4), 0, 1])


def test_pseudo_orbits_use_each_bond_once(corpus):
    g, c = corpus("ex72_loop_appendix")
    double, S = bond_scattering(g, c)
    for po in enumerate_pseudo_orbits(double, S):
        bonds = [b for cyc in po.orbits for b in cyc]
        assert len(bonds) == len(set(bonds)) == po.length


def test_simple_cycles_of_a_triangle():
    S = np.zeros((3, 3))
    S[1, 0] = S[2, 1] = S[0, 2] = 1
    assert simple_cycles(S) == [(0, 1, 2)]


def test_orbit_size_guard(corpus):
    g, c = corpus("k4_max_abscissas")
    double, S = bond_scattering(g, c)
    with pytest.raises(OrbitSizeError):
        enumerate_pseudo_orbits(double, S, max_bonds=10)


@pytest.mark.parametrize("v", [2, 3, 4, 5, 6])
def test_nonreflecting_count(v):
    assert nonreflecting_count(v) == 1 - v


@pytest.mark.parametrize("d", [3, 4, 5, 6])
def test_vertex_coefficient_closed_form(d):
    for v in range(1, d + 1):
        assert vertex_coefficient(d, v) == pytest.approx(vertex_coefficient_bruteforce(d, v), abs=1e-12)
        assert (abs(vertex_coefficient(d, v)) < 1e-12) == (d == 2 * v)


def test_vertex_coefficient_degree_two():
    for v in (1, 2):
        assert vertex_coefficient(2, v) == pytest.approx(vertex_coefficient_bruteforce(2, v))
    with pytest.raises(ValueError):
        vertex_coefficient(3, 4)


def test_example_72_factorisation(corpus):
    g, c = corpus("ex72_loop_appendix")
    a1, a2 = 3.0, 0.0
    char, orb = abscissa_polynomials(g, c)
    quintic = [1, 0, -math.exp(-2 * a1) / 3, -math.exp(-3 * a2) / 3, 0, math.exp(-2 * a1 - 3 * a2)]
    full = np.polymul(quintic, [1, 0, 0, -math.exp(-3 * a2)])
    for p in (char, orb):
        assert np.allclose(p.coeffs[::-1], full, atol=1e-12)


def test_remark_cubic(corpus):
    g, c = corpus("remark_three_edge")
    a = 1.0
    char, orb = abscissa_polynomials(g, c)
    published = np.array([3, -(2 * math.exp(2 * a) + 1), -(math.exp(4 * a) + 2 * math.exp(2 * a)),
                          3 * math.exp(4 * a)])
    for p in (char, orb):
        assert p.odd_coefficients_vanish()
        cubic = p.coeffs[0::2].real
        assert np.allclose(cubic / cubic[-1], published / published[-1], rtol=1e-10)


def test_undamped_roots_on_unit_circle():
    g, c = loop(5)
    rep = abscissa_report(orbit_polynomial(*equilateral_form(g, c)[:2]))
    assert np.allclose(np.abs(rep.roots), 1.0)
    assert np.allclose(rep.c0.real, 0.0, atol=1e-9)


@pytest.mark.parametrize("name", COMMENSURATE_SMALL)
def test_dual_polynomial_identity(name):
    g, c = load_corpus(name)
    char, orb = abscissa_polynomials(g, c)
    if orb is None:
        pytest.skip("too many bonds for the orbit expansion")
    assert char.n_bonds == orb.n_bonds == 2 * equilateral_form(g, c)[0].n_edges
    assert max_relative_difference(char, orb) < 1e-9
    assert polynomials_agree(char, orb)
    assert char.degree <= char.n_bonds


@pytest.mark.parametrize("name", COMMENSURATE_SMALL)
def test_report_invariants(name):
    g, c = load_corpus(name)
    char, _ = abscissa_polynomials(g, c)
    rep = abscissa_report(char)
    lo = min(e.mean_damping for e in g.edges)
    hi = max(e.mean_damping for e in g.edges)
    assert rep.total_weight == char.n_bonds
    assert sum(cl.mu for cl in rep.clusters) == 1
    assert np.all(rep.c0.real >= -hi - 1e-9) and np.all(rep.c0.real <= -lo + 1e-9)
    assert np.all(rep.c0.imag > -math.pi) and np.all(rep.c0.imag <= math.pi)
    if is_bipartite(equilateral_form(g, c)[0]):
        assert char.odd_coefficients_vanish()
        assert len(rep.clusters) <= char.n_bonds // 2


def test_bipartite_loop_has_even_powers():
    g, c = loop(4, [1.0, 2.0, 1.0, 2.0])
    p = characteristic_polynomial(g, c)
    sc = np.abs(p.scaled())
    assert np.all(sc[1::2] < 1e-10 * sc.max())


def test_example_71_weights(corpus):
    g, c = corpus("ex71_two_loops")
    rep = abscissa_report(abscissa_polynomials(g, c)[0])
    assert rep.distinct_real_parts == pytest.approx([-2.0, -1.5, -1.0], abs=1e-9)
    assert [cl.mu for cl in rep.clusters] == [Fraction(3, 12), Fraction(6, 12), Fraction(3, 12)]


def test_constant_damping_single_cluster():
    g, c = loop(3, [1.3, 1.3, 1.3])
    rep = abscissa_report(characteristic_polynomial(g, c))
    assert len(rep.clusters) == 1 and rep.clusters[0].c == pytest.approx(-1.3)
    assert rep.clusters[0].mu == 1


def test_tree_constant_damping_single_cluster(corpus):
    g, c = corpus("tree_odd")
    g = g.with_edges([make_edge(e.id, e.tail, e.head, 1.0, 2.0) for e in g.edges])
    rep = abscissa_report(abscissa_polynomials(g, c)[0])
    assert rep.distinct_real_parts == pytest.approx([-2.0])


def _loop_with_tail(a_loop, n_loop, a_tail):
    vs = tuple(f"V{i}" for i in range(n_loop)) + ("T",)
    edges = [make_edge(f"l{i}", vs[i], vs[(i + 1) % n_loop], 1.0, a_loop) for i in range(n_loop)]
    edges.append(make_edge("t", "V0", "T", 1.0, a_tail))
    g = MetricGraph(vs, tuple(edges))
    return g, default_couplings(g, {"T": "dirichlet"})


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 4.0), st.integers(3, 6), st.floats(0.0, 4.0))
def test_loop_abscissa_present(a_loop, n_loop, a_tail):
    g, c = _loop_with_tail(a_loop, n_loop, a_tail)
    rep = abscissa_report(characteristic_polynomial(g, c))
    assert np.min(np.abs(rep.distinct_real_parts + a_loop)) < 1e-6


@pytest.mark.parametrize("name", ["ex71_two_loops", "ex73_circle_two_appendices", "tree_odd"])
def test_clusters_agree_with_tracked_sequences(name):
    g, c = load_corpus(name)
    rep = abscissa_report(abscissa_polynomials(g, c)[0])
    system = SecularSystem(g, c)
    for z in rep.c0[:: max(1, len(rep.c0) // 4)]:
        fit = track_sequence(system, z, range(38, 43))
        assert abs(fit.c0.real - z.real) < 5e-3


def test_tree_max_abscissas_three_star():
    g, c = star()
    damped, dampings = tree_max_abscissas_damping(g, c)
    assert list(dampings.values()) == [15.0, 10.0, 5.0]
    rep = abscissa_report(characteristic_polynomial(damped, c))
    assert len(rep.clusters) >= 3
    predicted = np.unique(np.round(dominant_balance_prediction(characteristic_polynomial(damped, c)), 6))
    assert len(predicted) == len(rep.clusters)
    assert np.allclose(predicted, rep.distinct_real_parts, atol=math.exp(-2 * 5.0))


def test_tree_max_abscissas_odd_tree(corpus):
    g, c = corpus("tree_odd")
    damped, dampings = tree_max_abscissas_damping(g, c)
    poly = characteristic_polynomial(damped, c)
    rep = abscissa_report(poly)
    assert len(rep.clusters) >= g.n_edges
    predicted = np.unique(np.round(dominant_balance_prediction(poly), 6))
    assert np.allclose(predicted, rep.distinct_real_parts, atol=math.exp(-2 * 5.0))


def test_tree_single_edge():
    g, c = single_edge()
    damped, dampings = tree_max_abscissas_damping(g, c)
    rep = abscissa_report(characteristic_polynomial(damped, c))
    assert rep.distinct_real_parts == pytest.approx([-dampings["e1"]])


def test_tree_max_abscissas_errors(corpus):
    path = MetricGraph(("A", "M", "B"), (make_edge("e1", "A", "M"), make_edge("e2", "M", "B")))
    with pytest.raises(GraphError, match="even degree"):
        tree_max_abscissas_damping(path)
    with pytest.raises(GraphError, match="not a tree"):
        tree_max_abscissas_damping(corpus("ex71_two_loops")[0])
