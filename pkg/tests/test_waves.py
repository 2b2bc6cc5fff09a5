import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_edge
from dwgs.graph import Edge
from dwgs.profiles import PiecewiseConstant, sample_function
from dwgs.waves import (
    fundamental_solution_data, lam_tilde, lam_tilde_asymptotic, solutions_on_grid, wkb_initial_slope, wkb_log_u,
    wkb_phase_coefficients,
)


def sine_edge():
    return Edge("s", "A", "B", 1.0, sample_function(lambda x: 1 + np.sin(2 * np.pi * x), 1.0, 257))


def test_lam_tilde_example():
    lt = complex(lam_tilde(1 + 2j, 1.0))
    assert lt == pytest.approx(1.878 + 2.130j, abs=2e-3)
    assert abs(lt ** 2 - ((1 + 2j) ** 2 + 2 * (1 + 2j))) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.complex_numbers(max_magnitude=200, allow_nan=False, allow_infinity=False),
       st.floats(-5, 5), st.floats(-5, 5))
def test_lam_tilde_branch(lam, a, b):
    lt = complex(lam_tilde(lam, a, b))
    assert lt.real >= 0
    if lt.real == 0:
        assert lt.imag >= 0
    assert abs(lt ** 2 - (lam * lam + 2 * a * lam - b)) <= 1e-9 * max(1.0, abs(lam) ** 2)
    asym = complex(lam_tilde_asymptotic(lam, a, b))
    assert abs(asym ** 2 - lt ** 2) <= 1e-9 * max(1.0, abs(lam) ** 2)


def test_undamped_u_plus_at_pi():
    w = fundamental_solution_data(make_edge("e", "A", "B"), 1j * math.pi)
    logmag, phase = w.u_plus_at_l()
    assert abs(math.exp(logmag) * phase - (-1)) < 1e-12


def test_u_plus_high_frequency_asymptotics():
    lam = 2j * math.pi * 40
    w = fundamental_solution_data(make_edge("e", "A", "B", a=1.0), lam)
    logmag, phase = w.u_plus_at_l()
    u = math.exp(logmag) * phase
    ref = np.exp(lam + 1.0)
    assert abs(u / ref - 1) < 1 / (2 * math.pi * 40)


@pytest.mark.parametrize("edge", [
    make_edge("c", "A", "B", 1.7, 2.0, 0.5),
    Edge("p", "A", "B", 1.0, PiecewiseConstant([0.3, 0.6], [0.0, 4.0, 1.0])),
    sine_edge(),
])
@pytest.mark.parametrize("lam", [3.0 + 0.1j, -1.0 + 25j, -2.5 + 300j, 0.01j])
def test_wronskian_constant_along_edge(edge, lam):
    assert fundamental_solution_data(edge, lam).wronskian_mismatch() < 1e-8


def test_constant_edge_matches_closed_form():
    e = make_edge("c", "A", "B", 1.3, 0.8, -0.4)
    lam = -0.7 + 11.2j
    lt = complex(lam_tilde(lam, 0.8, -0.4))
    w = fundamental_solution_data(e, lam, slopes=(lt, lt))
    logmag, phase = w.u_plus_at_l()
    assert abs(math.exp(logmag) * phase / np.exp(lt * 1.3) - 1) < 1e-10


def test_phase_coefficients_examples():
    e = make_edge("c", "A", "B", 1.0, 1.5)
    phi = wkb_phase_coefficients(e, 2)
    assert np.allclose(phi[0], 1.5) and np.allclose(phi[1], -1.5 ** 2 / 2) and np.allclose(phi[2], 1.5 ** 3 / 2)
    zero = wkb_phase_coefficients(make_edge("z", "A", "B"), 3)
    assert all(np.allclose(p, 0) for p in zero)
    lin = Edge("x", "A", "B", 1.0, sample_function(lambda x: x, 1.0, 129))
    grid = np.linspace(0, 1, 129)
    phi = wkb_phase_coefficients(lin, 1, +1, grid)
    assert np.allclose(phi[1], -0.5 * (1 + grid ** 2), atol=1e-10)


def test_phase_coefficients_grid_requirements():
    coarse = Edge("x", "A", "B", 1.0, sample_function(lambda x: x, 1.0, 8))
    with pytest.raises(ValueError):
        wkb_phase_coefficients(coarse, 2)
    with pytest.raises(ValueError):
        wkb_phase_coefficients(make_edge("c", "A", "B"), 1, sign=0)


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_wkb_matches_integrator_at_rate(order):
    # truncating at order m leaves an O(lambda^{-(m+1)}) error in log u+(l)
    edge = sine_edge()
    errs = []
    for n in (10, 20, 40):
        lam = 2j * math.pi * n - 1.0
        s0 = wkb_initial_slope(edge, lam, order)
        logmag, phase = fundamental_solution_data(edge, lam, slopes=(s0, s0)).u_plus_at_l()
        integrated = logmag + 1j * np.angle(phase)
        errs.append(abs(np.exp(wkb_log_u(edge, lam, order) - integrated) - 1))
    rates = [errs[i] / errs[i + 1] for i in range(2)]
    expected = 2.0 ** (order + 1)
    assert all(0.8 * expected < r < 1.4 * expected for r in rates), rates


def test_solutions_on_grid_satisfy_ode():
    edge = sine_edge()
    lam = -1.0 + 2j * math.pi * 7
    x, wp, dwp, wm, dwm = solutions_on_grid(edge, lam, min_points=2001)
    h = x[1] - x[0]
    q = lam ** 2 + 2 * lam * edge.damping(x)
    for w in (wp, wm):
        second = (w[2:] - 2 * w[1:-1] + w[:-2]) / h ** 2
        rel = np.max(np.abs(second - q[1:-1] * w[1:-1])) / np.max(np.abs(q * w))
        assert rel < 1e-4
    assert np.allclose(np.gradient(wp, h)[5:-5], dwp[5:-5], rtol=1e-3, atol=1e-3 * np.max(np.abs(dwp)))
