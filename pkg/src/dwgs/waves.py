"""Edge solutions of ``u'' = (lambda^2 + 2 lambda a(x) - b(x)) u`` in overflow-safe form.

Every edge is cut into segments.  Constant and piecewise-constant profiles
give exact segment transfer matrices; sampled profiles use a fourth-order
Magnus step (two Gauss points), whose exponential has the same closed form.
All matrices are stored as ``(mantissa, log-scale)`` pairs.

For each edge two solutions are produced:

* ``w+`` starts at ``x = 0`` with data ``(1, mu0)``, ``mu0`` the local
  wavenumber there, and is carried forward;
* ``w-`` starts at ``x = l`` with data ``(1, -mu_l)`` and is carried backward.

Both grow in their direction of travel, so the pair stays well conditioned.
``w+`` is returned divided by ``exp(s_plus)``, ``w-`` by ``exp(s_minus)``.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from .profiles import CoefficientProfile, Sampled

_G1 = 0.5 - math.sqrt(3.0) / 6.0
_G2 = 0.5 + math.sqrt(3.0) / 6.0
_SMALL_WAVENUMBER = 0.25
MAGNUS_RTOL = 1e-11
MAGNUS_MAX_STEPS = 2 ** 17


class IntegrationError(ArithmeticError):
    pass


def lam_tilde(lam, a, b=0.0):
    """``sqrt(lambda^2 + 2 a lambda - b)`` on the branch ``Re >= 0`` (ties: ``Im >= 0``)."""
    lam = np.asarray(lam, dtype=complex)
    return _sqrt_re_pos(lam * lam + 2.0 * a * lam - b)


def lam_tilde_asymptotic(lam, a, b=0.0):
    """Same square root on the branch ``(lambda + a) sqrt(1 - (a^2 + b)/(lambda + a)^2)``.

    This branch is analytic outside a real segment around ``-a`` and behaves
    like ``lambda + a`` for large ``|lambda|``; it is what the scattering
    backend uses so that its determinant is analytic in the strip of interest.
    """
    lam = np.asarray(lam, dtype=complex)
    w = lam + a
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(np.abs(w) > 1e-100, w * np.sqrt(1.0 - (a * a + b) / (w * w)), _sqrt_re_pos(-(a * a + b) + 0j))
    return t


def _sqrt_re_pos(z):
    r = np.sqrt(np.asarray(z, dtype=complex))
    flip = (r.real == 0) & (r.imag < 0)
    return np.where(flip, -r, r)


def _cosh_sinhc_scaled(delta):
    """``(e^{-r} cosh d, e^{-r} sinh(d)/d, r)`` with ``d`` on the ``Re >= 0`` branch and ``r = Re d``."""
    d = _sqrt_re_pos(delta * delta)
    r = d.real
    ep = np.exp(1j * d.imag)
    em = np.exp(-2.0 * r - 1j * d.imag)
    ch = 0.5 * (ep + em)
    small = np.abs(d) < 1e-2
    with np.errstate(divide="ignore", invalid="ignore"):
        sc = np.where(small, 0.0, 0.5 * (ep - em) / d)
    if np.any(small):
        d2 = d[small] ** 2
        sc = np.asarray(sc)
        sc[small] = (1.0 + d2 / 6.0 * (1.0 + d2 / 20.0 * (1.0 + d2 / 42.0))) * np.exp(-r[small])
    return ch, sc, r


# ---------------------------------------------------------------------------
# Discretization


@dataclass(frozen=True)
class Discretization:
    """Segment end points ``x`` and coefficient values at the two Gauss nodes of each segment."""

    x: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.x)

    @property
    def n_segments(self) -> int:
        return len(self.x) - 1


def _is_exact(profile: CoefficientProfile) -> bool:
    return profile.pieces() is not None


def _merge_breaks(edge, extra=None):
    pts = {0.0, float(edge.length)}
    for prof in (edge.damping, edge.potential):
        for x0, x1, _ in prof.pieces():
            pts.update((x0, x1))
    if extra is not None:
        pts.update(float(v) for v in extra)
    return np.array(sorted(pts))


def exact_discretization(edge, grid=None) -> Discretization:
    """Segments on which both profiles are constant (optionally refined by ``grid``)."""
    x = _merge_breaks(edge, grid)
    x = x[np.concatenate([[True], np.diff(x) > 1e-14 * edge.length])]
    mid = 0.5 * (x[:-1] + x[1:])
    a = np.asarray(edge.damping(mid), dtype=float)
    b = np.asarray(edge.potential(mid), dtype=float)
    return Discretization(x, a, a, b, b)


_magnus_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def magnus_discretization(edge, steps: int) -> Discretization:
    x = np.linspace(0.0, edge.length, steps + 1)
    h = np.diff(x)
    g1 = x[:-1] + _G1 * h
    g2 = x[:-1] + _G2 * h
    return Discretization(x, edge.damping(g1), edge.damping(g2), edge.potential(g1), edge.potential(g2))


def discretization_for(edge, lam_scale: float) -> Discretization:
    """Discretization adequate for ``|lambda| <= lam_scale``."""
    if _is_exact(edge.damping) and _is_exact(edge.potential):
        return exact_discretization(edge)
    return magnus_discretization(edge, magnus_steps(edge, lam_scale))


def _bucket(edge, lam_scale: float) -> int:
    return max(0, int(math.ceil(math.log2(1.0 + lam_scale * edge.length))))


def magnus_steps(edge, lam_scale: float) -> int:
    """Step count for the Magnus integrator, calibrated once per frequency octave.

    The count is chosen by step doubling at a fixed probe point of the
    octave, so it depends only on the edge and the octave (never on the
    order in which points are evaluated).
    """
    bucket = _bucket(edge, lam_scale)
    per_profile = _magnus_cache.setdefault(edge.damping, {})
    key = (id(edge.potential), float(edge.length), bucket)
    if key in per_profile:
        return per_profile[key]
    probe = np.array([-edge.mean_damping + 1j * (2.0 ** bucket) / edge.length])
    steps = max(128, 2 ** int(math.ceil(math.log2(8.0 * (2.0 ** bucket) + 1.0))))
    prev = _probe_vectors(edge, probe, steps)
    while True:
        if 2 * steps > MAGNUS_MAX_STEPS:
            raise IntegrationError(
                f"edge {edge.id}: Magnus integration did not converge near lambda={probe[0]:.6g}")
        cur = _probe_vectors(edge, probe, 2 * steps)
        if np.max(np.abs(cur - prev)) < MAGNUS_RTOL:
            steps *= 2
            break
        prev = cur
        steps *= 2
    per_profile[key] = steps
    return steps


def _probe_vectors(edge, lam, steps):
    data = edge_data(edge, lam, magnus_discretization(edge, steps))
    v = np.stack([data.wp_l, data.dwp_l / (1 + abs(lam)), data.wm_0, data.dwm_0 / (1 + abs(lam))], axis=-1)
    return v


# ---------------------------------------------------------------------------
# Transfer matrices


def step_matrices(disc: Discretization, lams):
    """Scaled step propagators, shape ``(B, K, 2, 2)``, and their log scales ``(B, K)``."""
    lam = np.asarray(lams, dtype=complex)[:, None]
    h = disc.h[None, :]
    q1 = lam * lam + 2.0 * lam * disc.a1[None, :] - disc.b1[None, :]
    q2 = lam * lam + 2.0 * lam * disc.a2[None, :] - disc.b2[None, :]
    w11 = (math.sqrt(3.0) / 12.0) * h * h * (q1 - q2)
    w21 = 0.5 * h * (q1 + q2)
    delta2 = w11 * w11 + h * w21
    ch, sc, r = _cosh_sinhc_scaled(np.sqrt(delta2))
    E = np.empty(q1.shape + (2, 2), dtype=complex)
    E[..., 0, 0] = ch + sc * w11
    E[..., 0, 1] = sc * h
    E[..., 1, 0] = sc * w21
    E[..., 1, 1] = ch - sc * w11
    return E, r


def chain_product(E, logs):
    """``E_K ... E_1`` by pairwise reduction with renormalization; returns ``(T, log)``."""
    E = np.asarray(E)
    logs = np.asarray(logs, dtype=float)
    while E.shape[1] > 1:
        if E.shape[1] % 2:
            eye = np.broadcast_to(np.eye(2, dtype=complex), E.shape[:1] + (1, 2, 2))
            E = np.concatenate([E, eye], axis=1)
            logs = np.concatenate([logs, np.zeros(logs.shape[:1] + (1,))], axis=1)
        P = E[:, 1::2] @ E[:, 0::2]
        L = logs[:, 1::2] + logs[:, 0::2]
        m = np.max(np.abs(P), axis=(-2, -1))
        m = np.where(m > 0, m, 1.0)
        E = P / m[..., None, None]
        logs = L + np.log(m)
    return E[:, 0], logs[:, 0]


# ---------------------------------------------------------------------------
# Edge data


def start_wavenumbers(edge, lams):
    """``(mu0, mu_l)``: local wavenumbers at both ends, shifted by 1 when nearly zero."""
    lam = np.asarray(lams, dtype=complex)
    out = []
    for x in (0.0, edge.length):
        a = float(edge.damping(np.array(x)))
        b = float(edge.potential(np.array(x)))
        mu = lam_tilde(lam, a, b)
        out.append(np.where(np.abs(mu) < _SMALL_WAVENUMBER, mu + 1.0, mu))
    return out[0], out[1]


@dataclass(frozen=True)
class EdgeData:
    """Vectorized scaled edge data for a batch of ``lambda`` values.

    ``wp_l, dwp_l`` are ``w+(l), w+'(l)`` times ``exp(-s_plus)``;
    ``wm_0, dwm_0`` are ``w-(0), w-'(0)`` times ``exp(-s_minus)``.
    """

    lam: np.ndarray
    mu0: np.ndarray
    mul: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray
    wp_l: np.ndarray
    dwp_l: np.ndarray
    wm_0: np.ndarray
    dwm_0: np.ndarray

    def omega_scaled(self):
        """``exp(-s_minus)`` times the Wronskian ``W(w+, w-)`` evaluated at ``x = 0``."""
        return self.dwm_0 - self.mu0 * self.wm_0

    def omega_scaled_at_l(self):
        """``exp(-s_plus)`` times the same Wronskian evaluated at ``x = l``."""
        return -self.mul * self.wp_l - self.dwp_l


def edge_data(edge, lams, disc: Discretization | None = None, slopes=None) -> EdgeData:
    """Scaled ``w+-`` data; ``slopes = (mu0, mu_l)`` overrides the starting log-derivatives."""
    lam = np.atleast_1d(np.asarray(lams, dtype=complex))
    if disc is None:
        disc = discretization_for(edge, float(np.max(np.abs(lam))) if lam.size else 0.0)
    if slopes is None:
        mu0, mul = start_wavenumbers(edge, lam)
    else:
        mu0, mul = (np.broadcast_to(np.asarray(s, dtype=complex), lam.shape) for s in slopes)
    E, r = step_matrices(disc, lam)
    T, logT = chain_product(E, r)
    vp = T[:, :, 0] + T[:, :, 1] * mu0[:, None]
    # adj(T) [1, -mu_l]: T^{-1} up to det(T) = 1 (times the mantissa scale)
    vm = np.stack([T[:, 1, 1] + T[:, 0, 1] * mul, -T[:, 1, 0] - T[:, 0, 0] * mul], axis=-1)
    np_ = np.max(np.abs(vp), axis=-1)
    nm = np.max(np.abs(vm), axis=-1)
    return EdgeData(
        lam=lam, mu0=mu0, mul=mul,
        s_plus=logT + np.log(np_), s_minus=logT + np.log(nm),
        wp_l=vp[:, 0] / np_, dwp_l=vp[:, 1] / np_,
        wm_0=vm[:, 0] / nm, dwm_0=vm[:, 1] / nm,
    )


@dataclass(frozen=True)
class EdgeWave:
    """Fundamental-solution data of one edge at one ``lambda``."""

    edge_id: str
    lam: complex
    lam_tilde: complex
    mu0: complex
    mul: complex
    s_plus: float
    s_minus: float
    wp_l: complex
    dwp_l: complex
    wm_0: complex
    dwm_0: complex

    def u_plus_at_l(self):
        """``w+(l)`` as ``(log|.|, unit phase)``."""
        return self.s_plus + math.log(abs(self.wp_l)), self.wp_l / abs(self.wp_l)

    def wronskian(self):
        """Wronskian at ``x = 0`` and at ``x = l`` as ``(log|.|, phase)`` pairs."""
        w0 = self.dwm_0 - self.mu0 * self.wm_0
        wl = -self.mul * self.wp_l - self.dwp_l
        return ((self.s_minus + math.log(abs(w0)), w0 / abs(w0)),
                (self.s_plus + math.log(abs(wl)), wl / abs(wl)))

    def wronskian_mismatch(self) -> float:
        (l0, p0), (l1, p1) = self.wronskian()
        return abs(p0 * math.exp(l0 - l1) - p1)


def fundamental_solution_data(edge, lam: complex, slopes=None) -> EdgeWave:
    d = edge_data(edge, np.array([lam]), slopes=slopes)
    return EdgeWave(
        edge_id=edge.id, lam=complex(lam),
        lam_tilde=complex(lam_tilde(lam, edge.mean_damping, edge.mean_potential)),
        mu0=complex(d.mu0[0]), mul=complex(d.mul[0]),
        s_plus=float(d.s_plus[0]), s_minus=float(d.s_minus[0]),
        wp_l=complex(d.wp_l[0]), dwp_l=complex(d.dwp_l[0]),
        wm_0=complex(d.wm_0[0]), dwm_0=complex(d.dwm_0[0]),
    )


def _propagate_all(E, r, v0):
    """All partial products ``E[k-1] ... E[0] v0`` (with their log scales), ``k = 0..K``.

    Uses a doubling prefix scan over the step matrices, renormalizing every
    partial product, so the work is a handful of batched 2x2 products.
    """
    K = len(r)
    M = E.copy()
    L = np.asarray(r, dtype=float).copy()
    s = 1
    while s < K:
        prod = M[s:] @ M[:-s]
        nrm = np.max(np.abs(prod).reshape(len(prod), -1), axis=1)
        M = np.concatenate([M[:s], prod / nrm[:, None, None]])
        L = np.concatenate([L[:s], L[s:] + L[:-s] + np.log(nrm)])
        s *= 2
    n0 = np.max(np.abs(v0))
    v = np.empty((K + 1, 2), dtype=complex)
    logs = np.empty(K + 1)
    v[0], logs[0] = v0 / n0, math.log(n0)
    w = M @ (v0 / n0)
    nw = np.max(np.abs(w), axis=1)
    v[1:] = w / nw[:, None]
    logs[1:] = logs[0] + L + np.log(nw)
    return v, logs


def solutions_on_grid(edge, lam: complex, min_points: int = 65, disc: Discretization | None = None):
    """``x`` and scaled ``w+, w+', w-, w-'`` on a grid, consistent with :func:`edge_data`.

    Scaling matches :func:`edge_data` for the same discretization, so a null
    vector of the scaled flower matrix can be applied directly.
    """
    lam = complex(lam)
    if disc is None:
        if _is_exact(edge.damping) and _is_exact(edge.potential):
            disc = exact_discretization(edge, np.linspace(0.0, edge.length, min_points))
        else:
            disc = magnus_discretization(edge, max(magnus_steps(edge, abs(lam)), min_points - 1))
    ref = edge_data(edge, np.array([lam]), disc)
    E, r = step_matrices(disc, np.array([lam]))
    E, r = E[0], r[0]
    K = len(r)
    mu0, mul = complex(ref.mu0[0]), complex(ref.mul[0])

    fwd, flog = _propagate_all(E, r, np.array([1.0, mu0]))
    wp = fwd * np.exp(flog - float(ref.s_plus[0]))[:, None]
    adj = np.empty_like(E)
    adj[:, 0, 0], adj[:, 1, 1] = E[:, 1, 1], E[:, 0, 0]
    adj[:, 0, 1], adj[:, 1, 0] = -E[:, 0, 1], -E[:, 1, 0]
    bwd, blog = _propagate_all(adj[::-1], r[::-1], np.array([1.0, -mul]))
    wm = bwd[::-1] * np.exp(blog[::-1] - float(ref.s_minus[0]))[:, None]
    return disc.x, wp[:, 0], wp[:, 1], wm[:, 0], wm[:, 1]


# ---------------------------------------------------------------------------
# WKB phase functions


def _d4(f, h):
    """Fourth-order finite-difference derivative on a uniform grid."""
    f = np.asarray(f, dtype=float)
    n = len(f)
    d = np.empty(n)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return d


def wkb_grid(edge, order: int) -> np.ndarray:
    damping = edge.damping
    if isinstance(damping, Sampled):
        return damping.grid
    return np.linspace(0.0, edge.length, max(4 * (order + 1) + 1, 33))


def wkb_phase_coefficients(edge, order: int = 2, sign: int = +1, grid=None):
    """``[phi_0, ..., phi_m]`` on ``grid`` for the asymptotic solutions ``u+-``.

    Piecewise-constant profiles are treated piece by piece (all derivatives
    vanish inside a piece).  Sampled profiles need at least ``4 (m + 1)``
    grid values.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if grid is None:
        grid = wkb_grid(edge, order)
    grid = np.asarray(grid, dtype=float)
    if isinstance(edge.damping, Sampled) and len(edge.damping.values) < 4 * (order + 1):
        raise ValueError(f"sampled damping has {len(edge.damping.values)} points; "
                         f"order {order} needs at least {4 * (order + 1)}")
    exact = _is_exact(edge.damping) and _is_exact(edge.potential)
    if not exact and len(grid) < 5:
        raise ValueError("grid too coarse for fourth-order differences")
    h = grid[1] - grid[0] if len(grid) > 1 else 1.0

    def deriv(f):
        return np.zeros_like(f) if exact else _d4(f, h)

    a = np.asarray(edge.damping(grid), dtype=float)
    b = np.asarray(edge.potential(grid), dtype=float)
    phis = [a]
    if order >= 1:
        da = np.zeros_like(a) if exact else np.asarray(edge.damping.derivative(grid), dtype=float)
        phis.append(-0.5 * (sign * da + a * a + b))
    for i in range(2, order + 1):
        conv = sum(phis[s] * phis[i - 1 - s] for s in range(i))
        phis.append(-0.5 * (sign * deriv(phis[i - 1]) + conv))
    return phis


def wkb_log_u(edge, lam: complex, order: int = 2, sign: int = +1) -> complex:
    """``log u+-(l)`` from the truncated WKB expansion ``+-(lambda l + int sum phi_i lambda^-i)``."""
    from scipy.integrate import simpson

    grid = wkb_grid(edge, order)
    phis = wkb_phase_coefficients(edge, order, sign, grid)
    total = sum(simpson(p, x=grid) * lam ** (-i) for i, p in enumerate(phis))
    return sign * (lam * edge.length + total)


def wkb_initial_slope(edge, lam: complex, order: int = 2, sign: int = +1, at_end: bool = False) -> complex:
    """``+-(lambda + phi+-(x, lambda))`` at ``x = 0`` (or ``x = l``), truncated at ``order``."""
    grid = wkb_grid(edge, order)
    phis = wkb_phase_coefficients(edge, order, sign, grid)
    k = -1 if at_end else 0
    return sign * (lam + sum(p[k] * lam ** (-i) for i, p in enumerate(phis)))
