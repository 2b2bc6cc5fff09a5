import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TWO_PI, loop, make_edge, single_edge, star
from dwgs.coupling import default_couplings, named_coupling, UnitaryCoupling
from dwgs.graph import (
    GraphError, IncommensurateLengths, MetricGraph, average_damping_bounds, common_unit, directed_double,
    is_bipartite, is_commensurate, is_tree, scale_graph, subdivide_to_equilateral, validate,
)
from dwgs.profiles import PiecewiseConstant, sample_function
from dwgs.rootfinding import ComplexWindow, find_roots
from dwgs.secular import SecularSystem


def test_validate_single_edge():
    g, _ = single_edge()
    rep = validate(g)
    assert rep.valid and rep.degrees == {"A": 1, "B": 1}
    assert rep.boundary_vertices == ["A", "B"]


def test_validate_disconnected():
    g = MetricGraph(("A", "B", "C", "D"), (make_edge("e1", "A", "B"), make_edge("e2", "C", "D")))
    rep = validate(g)
    assert not rep.valid
    assert any("disconnected" in e for e in rep.errors)


def test_validate_dangling_and_length():
    g = MetricGraph(("A", "B"), (make_edge("e1", "A", "Z"),))
    assert any("dangling" in e for e in validate(g).errors)
    g = MetricGraph(("A", "B"), (make_edge("e1", "A", "B", length=-1.0),))
    assert any("nonpositive" in e for e in validate(g).errors)


def test_validate_ex72(corpus):
    g, _ = corpus("ex72_loop_appendix")
    rep = validate(g)
    assert rep.valid
    assert sorted(rep.degrees.values(), reverse=True) == [3, 2, 2, 1]
    assert rep.total_length == 4.0


def _check_double(g):
    dd = directed_double(g)
    assert dd.size == 2 * g.n_edges
    for b in range(dd.size):
        r = dd.reverse[b]
        assert r != b and dd.reverse[r] == b
        assert dd.bonds[b].length == dd.bonds[r].length
        assert dd.bonds[b].start == dd.bonds[r].end
        assert dd.start_slot(b) == dd.end_slot(r)
    for v in g.vertices:
        assert len(dd.incoming[v]) == len(dd.outgoing[v]) == g.degree(v)
    return dd


def test_directed_double_examples(corpus):
    assert _check_double(single_edge()[0]).size == 2
    assert _check_double(corpus("ex71_two_loops")[0]).size == 12
    dd = _check_double(star()[0])
    assert dd.size == 6
    for leaf in ("L1", "L2", "L3"):
        assert len(dd.incoming[leaf]) == 1 and len(dd.outgoing[leaf]) == 1


def test_subdivide_length_three():
    g = MetricGraph(("A", "B"), (make_edge("e1", "A", "B", 3.0, 1.0),))
    sub, inserted = subdivide_to_equilateral(g, 1.0)
    assert sub.n_edges == 3 and len(inserted) == 2
    assert all(sub.degree(v) == 2 for v in inserted)
    assert all(e.length == 1.0 for e in sub.edges)


def test_subdivide_star_103(corpus):
    g, _ = corpus("star_103")
    sub, inserted = subdivide_to_equilateral(g, 0.01)
    assert sub.n_edges == 303
    assert len(inserted) == 300


def test_subdivide_incommensurate():
    g = MetricGraph(("A", "B"), (make_edge("e1", "A", "B", math.sqrt(2)),))
    with pytest.raises(IncommensurateLengths):
        subdivide_to_equilateral(g, 0.1)


def test_subdivide_restricts_profiles():
    g = MetricGraph(("A", "B"), (make_edge("e1", "A", "B", 2.0),))
    prof = PiecewiseConstant([0.5], [0.0, 2.0], 2.0)
    g = g.with_edges([g.edges[0].__class__("e1", "A", "B", 2.0, prof)])
    sub, _ = subdivide_to_equilateral(g, 1.0)
    assert sub.edges[0].mean_damping == pytest.approx(1.0)
    assert sub.edges[1].mean_damping == pytest.approx(2.0)


def test_common_unit_and_commensurability(corpus):
    assert common_unit([1.0, 1.0, 1.03]) == pytest.approx(0.01)
    assert common_unit([2.0, 3.0]) == pytest.approx(1.0)
    assert common_unit([0.5, 0.75]) == pytest.approx(0.25)
    assert not is_commensurate(corpus("star_incommensurate")[0])
    assert is_commensurate(corpus("star_141")[0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=1, max_size=5), st.sampled_from([0.1, 0.25, 1.0, 1.7]))
def test_common_unit_divides_all(mults, unit):
    lengths = [m * unit for m in mults]
    l0 = common_unit(lengths)
    for l in lengths:
        assert abs(l / l0 - round(l / l0)) < 1e-8
    assert l0 >= unit * (1 - 1e-9)


def test_bipartite_examples():
    assert not is_bipartite(loop(3)[0])
    assert is_bipartite(star()[0])
    assert is_bipartite(loop(4)[0])
    selfloop = MetricGraph(("A",), (make_edge("e1", "A", "A"),))
    assert not is_bipartite(selfloop)


def test_is_tree(corpus):
    assert is_tree(corpus("tree_odd")[0])
    assert not is_tree(corpus("ex71_two_loops")[0])


def test_average_damping_bounds(corpus):
    assert average_damping_bounds(loop(3, [2.0, 2.0, 2.0])[0]) == (2.0, 2.0)
    assert average_damping_bounds(corpus("ex71_two_loops")[0]) == (1.0, 2.0)
    g = MetricGraph(("A", "B"), (make_edge("e1", "A", "B"),))
    g = g.with_edges([g.edges[0].__class__("e1", "A", "B", 1.0, sample_function(lambda x: np.sin(np.pi * x)))])
    lo, hi = average_damping_bounds(g)
    assert lo == hi and abs(lo - 2 / math.pi) < 1e-8


def test_scale_graph_identity_and_fixed_points():
    g, c = star(dampings=(1.0, 2.0, 3.0))
    g1, c1 = scale_graph(g, c, 1.0)
    for v in c:
        assert np.allclose(c1[v].matrix, c[v].matrix)
    g2, c2 = scale_graph(g, c, 2.0)
    for v in c:
        assert np.allclose(c2[v].matrix, c[v].matrix, atol=1e-12)
    assert all(e.length == 2.0 for e in g2.edges)
    assert [e.mean_damping for e in g2.edges] == pytest.approx([0.5, 1.0, 1.5])


def test_scale_graph_scalar_coupling():
    # (1 + 3i) / (3 + i) = (1 + 3i)(3 - i) / 10 = (6 + 8i) / 10, a unit complex number
    g = MetricGraph(("A", "B"), (make_edge("e1", "A", "B"),))
    c = {"A": UnitaryCoupling([[1j]]), "B": named_coupling("dirichlet", 1)}
    _, c2 = scale_graph(g, c, 2.0)
    u = c2["A"].matrix[0, 0]
    assert u == pytest.approx((6 + 8j) / 10, abs=1e-14)
    assert abs(abs(u) - 1) < 1e-14


def test_scale_graph_requires_unit_edges(corpus):
    g, c = corpus("star_103")
    with pytest.raises(GraphError):
        scale_graph(g, c, 2.0)


def _roots(g, c, window):
    return np.sort_complex(find_roots(SecularSystem(g, c), window).expanded())


def test_subdivision_preserves_spectrum():
    g = MetricGraph(("A", "B", "C"), (make_edge("e1", "A", "B", 2.0, 1.0), make_edge("e2", "B", "C", 1.0, 2.5)))
    c = default_couplings(g, {"A": "dirichlet", "C": "dirichlet"})
    sub, inserted = subdivide_to_equilateral(g, 1.0)
    csub = default_couplings(sub, {"A": "dirichlet", "C": "dirichlet"})
    w = ComplexWindow(-3.2, 0.2, 20.1, 26.2)
    a, b = _roots(g, c, w), _roots(sub, csub, w)
    assert len(a) == len(b) > 0
    assert np.max(np.abs(a - b)) < 1e-6


def test_flipping_an_edge_preserves_spectrum(corpus):
    g, c = corpus("variable_piecewise_edge")
    flipped = g.with_edges([g.edges[0].flipped()])
    w = ComplexWindow(-2.5, 0.5, 30.0, 40.0)
    a, b = _roots(g, c, w), _roots(flipped, c, w)
    assert len(a) == len(b) > 0
    assert np.max(np.abs(a - b)) < 1e-6
