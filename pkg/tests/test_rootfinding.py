import math

import numpy as np
import pytest

from conftest import TWO_PI, loop, single_edge
from dwgs.rootfinding import ComplexWindow, RootFindingError, count_zeros, find_roots, newton, track_sequence
from dwgs.secular import SecularSystem


def test_window_validation():
    with pytest.raises(ValueError):
        ComplexWindow(0.0, 0.0, 0.0, 1.0)
    w = ComplexWindow(-1, 1, -2, 2)
    assert w.is_conjugate_symmetric() and w.contains(0.5 + 1.9j)


def test_count_undamped_string():
    g, c = single_edge()
    assert count_zeros(SecularSystem(g, c), ComplexWindow(-1, 1, 0.5 * math.pi, 3.5 * math.pi)) == 3


def test_count_damped_string():
    g, c = single_edge(a=1.0)
    assert count_zeros(SecularSystem(g, c), ComplexWindow(-2, 0, 0, 20)) == 6


def test_count_example_72_period(corpus):
    g, c = corpus("ex72_loop_appendix")
    w = ComplexWindow(-3, 0.5, TWO_PI * 10 - math.pi, TWO_PI * 10 + math.pi)
    assert count_zeros(SecularSystem(g, c), w) == 8


def test_boundary_nudging_moves_off_zeros():
    g, c = single_edge()
    # the top edge passes exactly through the zero 3 i pi
    n, settled = count_zeros(SecularSystem(g, c), ComplexWindow(-1, 1, 0.5, 3 * math.pi), return_window=True)
    assert n in (2, 3)
    assert abs(settled.im_max - 3 * math.pi) >= 1e-4 * (1 - 1e-9)
    assert abs(settled.im_max - 3 * math.pi) <= 1e-2


def test_find_damped_root():
    g, c = single_edge(a=1.0)
    res = find_roots(SecularSystem(g, c), ComplexWindow(-1.5, -0.5, 5.5, 7.0))
    assert res.total == 1
    assert res.roots[0].lam == pytest.approx(-1 + 1j * math.sqrt(4 * math.pi ** 2 - 1), abs=1e-9)
    assert res.roots[0].residual < 1e-6


def test_empty_window():
    g, c = single_edge(a=1.0)
    res = find_roots(SecularSystem(g, c), ComplexWindow(-1.5, -0.5, 0.5, 2.5))
    assert res.total == 0 and res.is_complete()


def test_example_71_roots_near_abscissas(corpus):
    g, c = corpus("ex71_two_loops")
    res = find_roots(SecularSystem(g, c), ComplexWindow(-2.5, 0.5, TWO_PI * 20 - math.pi, TWO_PI * 20 + math.pi))
    assert res.is_complete() and res.total == 12
    re = res.values.real
    assert np.all(np.min(np.abs(re[:, None] - np.array([-2, -1.5, -1])), axis=1) < 1.0 / 20)
    im = [r.lam.imag for r in res.roots]
    assert im == sorted(im)


def test_multiplicity_on_symmetric_graph():
    # an undamped 3-loop has double eigenvalues 2 pi i n +- 2 pi i / 3
    g, c = loop(3)
    res = find_roots(SecularSystem(g, c), ComplexWindow(-0.5, 0.5, TWO_PI * 5 + 0.5, TWO_PI * 5 + 3.0))
    assert res.total == 2
    assert [r.multiplicity for r in res.roots] == [2]
    assert res.roots[0].lam == pytest.approx(1j * (TWO_PI * 5 + TWO_PI / 3), abs=1e-6)


def test_conjugate_closed_window():
    g, c = single_edge(a=1.0)
    res = find_roots(SecularSystem(g, c), ComplexWindow(-1.5, 0.5, -15.0, 15.0))
    assert res.total == 8 and res.conjugate_closed()


def test_worker_count_does_not_change_result(corpus):
    g, c = corpus("ex73_circle_two_appendices")
    w = ComplexWindow(-5.5, -2.5, 30.0, 30.0 + 4 * math.pi)
    a = find_roots(SecularSystem(g, c), w, workers=1)
    b = find_roots(SecularSystem(g, c), w, workers=2)
    assert [(r.lam, r.multiplicity) for r in a.roots] == [(r.lam, r.multiplicity) for r in b.roots]


def test_find_roots_rejects_bad_tol():
    g, c = single_edge()
    with pytest.raises(ValueError):
        find_roots(SecularSystem(g, c), ComplexWindow(-1, 1, 1, 2), tol=0.0)


def test_track_sequence_single_edge():
    g, c = single_edge(a=1.0)
    fit = track_sequence(SecularSystem(g, c), -1.0, range(20, 61, 5), period=math.pi)
    assert fit.ok
    assert abs(fit.c0 - (-1.0)) < 1e-4


@pytest.mark.parametrize("guess, published", [
    (-0.364 + 2.091j, -0.364 + 2.091j), (-0.364 - 2.091j, -0.364 - 2.091j),
    (-2.452 + math.pi * 1j, -2.452 + math.pi * 1j), (-2.450, -2.450), (-0.371, -0.371),
])
def test_track_sequence_example_72(corpus, guess, published):
    g, c = corpus("ex72_loop_appendix")
    fit = track_sequence(SecularSystem(g, c), guess, range(30, 41))
    assert fit.ok
    assert abs(fit.c0 - published) < 1.5e-3


def test_track_sequence_undamped():
    g, c = loop(4)
    for guess in (0.0, 0.5 * math.pi * 1j, math.pi * 1j):
        fit = track_sequence(SecularSystem(g, c), guess, range(10, 16))
        assert abs(fit.c0.real) < 1e-9


def test_newton_respects_box():
    g, c = single_edge(a=1.0)
    box = ComplexWindow(2.0, 3.0, 0.0, 1.0)
    assert newton(SecularSystem(g, c), 2.5 + 0.5j, box=box) is None
