"""Secular determinants: flower-model block determinant and vertex-scattering determinant.

Values are returned as ``(mantissa, log_scale)`` with ``|mantissa| = 1``
(or 0), i.e. ``det = mantissa * exp(log_scale)``.

Flower backend
    Rows are the ``2N`` coupling equations in the endpoint-slot basis (slot
    ``2j`` is the tail of edge ``j``, slot ``2j+1`` its head).  Columns are the
    balanced edge solutions ``w+, w-`` of :mod:`dwgs.waves`.  The determinant
    is divided by the per-edge Wronskians, which makes it equal to the
    determinant in the ``(cosh, sinh)`` basis: an entire function of
    ``lambda`` independent of every branch choice.

Scattering backend
    ``det(E Sigma - I)`` where ``Sigma`` holds the vertex scattering matrices
    and ``E`` propagates outgoing amplitudes along each edge to incoming
    amplitudes at the other end.  Wavenumbers use the asymptotic branch of
    the square root, analytic in the strip where the spectrum lives.
"""

from __future__ import annotations

import math

import numpy as np

from .coupling import CouplingResonance, assemble_flower, scattering_exact
from .graph import MetricGraph, require_valid
from .waves import edge_data, lam_tilde, lam_tilde_asymptotic, step_matrices, chain_product, discretization_for

BACKENDS = ("flower", "scattering")


def _slogdet(M):
    sign, logabs = np.linalg.slogdet(M)
    return sign, logabs


class SecularSystem:
    """Graph plus couplings plus a backend tag.

    ``flip_edges`` selects edges whose wavenumber branch is negated; the zero
    set must not change (this is what the branch-invariance tests check).
    """

    def __init__(self, graph: MetricGraph, couplings: dict, backend: str = "flower", flip_edges=()):
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        require_valid(graph)
        self.graph = graph
        self.couplings = couplings
        self.backend = backend
        self.flip_edges = frozenset(flip_edges)
        self.flower = assemble_flower(graph, couplings)
        U = self.flower.matrix
        eye = np.eye(U.shape[0])
        self._Um = U - eye
        self._Up = 1j * (U + eye)
        self.size = U.shape[0]

    def with_backend(self, backend: str) -> "SecularSystem":
        return SecularSystem(self.graph, self.couplings, backend, self.flip_edges)

    # -- evaluation -------------------------------------------------------

    def evaluate(self, lams):
        """``(mantissa, log_scale)`` arrays for a batch of ``lambda``."""
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        if self.backend == "flower":
            return flower_determinant(self, lams)
        return scattering_determinant(self, lams)

    def value(self, lams, ref_log: float):
        """``det * exp(-ref_log)`` as plain complex numbers (for Newton steps)."""
        mant, log = self.evaluate(lams)
        return mant * np.exp(log - ref_log)

    def matrix(self, lams):
        """The scaled secular matrices, shape ``(B, 2N, 2N)``."""
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        if self.backend == "flower":
            return flower_matrix(self, lams)[0]
        return scattering_matrix(self, lams)

    def residual(self, lam) -> float:
        """``sigma_min / sigma_max`` of the row-normalized secular matrix at ``lam``."""
        return float(matrix_residual(self.matrix(np.array([lam]))[0]))

    def normalized_abs(self, lams):
        """``|det|`` divided by the product of row norms (Hadamard-normalized), in ``[0, 1]``."""
        M = self.matrix(lams)
        rn = np.linalg.norm(M, axis=-1)
        rn = np.where(rn > 0, rn, 1.0)
        sign, logabs = np.linalg.slogdet(M / rn[..., None])
        return np.where(sign == 0, 0.0, np.exp(logabs))


def matrix_residual(M) -> float:
    rn = np.linalg.norm(M, axis=-1, keepdims=True)
    rn = np.where(rn > 0, rn, 1.0)
    s = np.linalg.svd(M / rn, compute_uv=False)
    return s[-1] / s[0]


# ---------------------------------------------------------------------------
# Flower backend


def flower_columns(system: SecularSystem, lams):
    """Scaled M1, M2 (slot values and outgoing derivatives of ``w+, w-``) and edge data."""
    g = system.graph
    B = len(lams)
    n = g.n_edges
    M1 = np.zeros((B, 2 * n, 2 * n), dtype=complex)
    M2 = np.zeros_like(M1)
    datas = []
    for j, e in enumerate(g.edges):
        d = edge_data(e, lams)
        if j in system.flip_edges:
            d = edge_data(e, lams, slopes=(-d.mu0, -d.mul))
        datas.append(d)
        ep = np.exp(-d.s_plus)
        em = np.exp(-d.s_minus)
        t, h, cp, cm = 2 * j, 2 * j + 1, 2 * j, 2 * j + 1
        M1[:, t, cp] = ep
        M1[:, h, cp] = d.wp_l
        M2[:, t, cp] = d.mu0 * ep
        M2[:, h, cp] = -d.dwp_l
        M1[:, t, cm] = d.wm_0
        M1[:, h, cm] = em
        M2[:, t, cm] = d.dwm_0
        M2[:, h, cm] = d.mul * em
    return M1, M2, datas


def flower_matrix(system: SecularSystem, lams):
    M1, M2, datas = flower_columns(system, lams)
    F = system._Um @ M1 + system._Up @ M2
    return F, datas


def flower_determinant(system: SecularSystem, lams):
    """Flower-model secular determinant in the ``(cosh, sinh)`` normalization."""
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    F, datas = flower_matrix(system, lams)
    sign, logabs = _slogdet(F)
    for d in datas:
        om = d.omega_scaled()
        aom = np.abs(om)
        with np.errstate(divide="ignore", invalid="ignore"):
            sign = sign * np.conj(om) / aom
            logabs = logabs + d.s_plus - np.log(aom)
    return sign, logabs


# ---------------------------------------------------------------------------
# Scattering backend


def _slot_wavenumbers(system: SecularSystem, lams):
    """Asymptotic-branch local wavenumbers at every endpoint slot, shape ``(B, 2N)``."""
    g = system.graph
    K = np.empty((len(lams), 2 * g.n_edges), dtype=complex)
    for j, e in enumerate(g.edges):
        sgn = -1.0 if j in system.flip_edges else 1.0
        for end, x in ((0, 0.0), (1, e.length)):
            a = float(e.damping(np.array(x)))
            b = float(e.potential(np.array(x)))
            K[:, 2 * j + end] = sgn * lam_tilde_asymptotic(lams, a, b)
    return K


def _edge_propagator(system, j, e, lams, K):
    """2x2 map from outgoing amplitudes (tail, head) to incoming amplitudes (tail, head)."""
    B = len(lams)
    P = np.zeros((B, 2, 2), dtype=complex)
    if e.is_constant:
        k = K[:, 2 * j]
        z = np.exp(-k * e.length)
        P[:, 0, 1] = z
        P[:, 1, 0] = z
        return P
    # general profile: through the balanced solution basis
    d = edge_data(e, lams)
    ep, em = np.exp(-d.s_plus), np.exp(-d.s_minus)
    V = np.empty((B, 2, 2), dtype=complex)
    D = np.empty((B, 2, 2), dtype=complex)
    V[:, 0, 0], V[:, 1, 0] = ep, d.wp_l
    V[:, 0, 1], V[:, 1, 1] = d.wm_0, em
    D[:, 0, 0], D[:, 1, 0] = d.mu0 * ep, -d.dwp_l
    D[:, 0, 1], D[:, 1, 1] = d.dwm_0, d.mul * em
    k = K[:, 2 * j: 2 * j + 2][..., None]
    A_in = 0.5 * (V + D / k)
    A_out = 0.5 * (V - D / k)
    return np.linalg.solve(np.swapaxes(A_out, -1, -2), np.swapaxes(A_in, -1, -2)).swapaxes(-1, -2)


def scattering_matrix(system: SecularSystem, lams):
    """``E Sigma - I`` in the slot basis, shape ``(B, 2N, 2N)``."""
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    g = system.graph
    n2 = 2 * g.n_edges
    B = len(lams)
    K = _slot_wavenumbers(system, lams)
    Sigma = np.zeros((B, n2, n2), dtype=complex)
    for v, slots in system.flower.blocks:
        idx = np.array(slots)
        sv = scattering_exact(system.couplings[v], K[:, idx])
        Sigma[:, idx[:, None], idx[None, :]] = sv
    E = np.zeros((B, n2, n2), dtype=complex)
    for j, e in enumerate(g.edges):
        E[:, 2 * j: 2 * j + 2, 2 * j: 2 * j + 2] = _edge_propagator(system, j, e, lams, K)
    return E @ Sigma - np.eye(n2)


def scattering_determinant(system: SecularSystem, lams):
    """``det(E Sigma - I)`` as ``(mantissa, log_scale)``; raises :class:`CouplingResonance`."""
    M = scattering_matrix(system, lams)
    return _slogdet(M)


# ---------------------------------------------------------------------------
# Closed form for stars


def star_secular_closed_form(lengths, dampings, potentials, lams):
    """``sum_j t_j cosh(t_j l_j) prod_{i != j} sinh(t_i l_i)`` as ``(mantissa, log_scale)``.

    Star with Dirichlet leaves and a standard center; ``t_j`` is the
    ``Re >= 0`` wavenumber of edge ``j``.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    lengths = np.asarray(lengths, dtype=float)
    if potentials is None:
        potentials = np.zeros_like(lengths)
    t = np.stack([lam_tilde(lams, a, b) for a, b in zip(dampings, potentials)], axis=-1)
    z = t * lengths
    r = z.real
    ep = np.exp(1j * z.imag)
    em = np.exp(-2 * r - 1j * z.imag)
    ch = 0.5 * (ep + em)
    sh = 0.5 * (ep - em)
    total = np.zeros(len(lams), dtype=complex)
    for j in range(len(lengths)):
        term = t[:, j] * ch[:, j]
        for i in range(len(lengths)):
            if i != j:
                term = term * sh[:, i]
        total += term
    a = np.abs(total)
    with np.errstate(divide="ignore"):
        return np.where(a > 0, total / np.where(a > 0, a, 1), 0), np.log(a) + r.sum(axis=-1)


def edge_transfer_matrix(edge, lam: complex):
    """Scaled transfer matrix ``[u(l), u'(l)] = T [u(0), u'(0)]`` and its log scale."""
    lam = np.array([complex(lam)])
    disc = discretization_for(edge, abs(lam[0]))
    E, r = step_matrices(disc, lam)
    T, logT = chain_product(E, r)
    return T[0], float(logT[0])


def transfer_determinant(system: SecularSystem, lam: complex):
    """Secular determinant built from raw transfer matrices (``(cosh, sinh)`` columns).

    Numerically inferior to :func:`flower_determinant` for strongly
    unbalanced edges, but free of any basis choice; used as a test oracle.
    """
    g = system.graph
    n = g.n_edges
    M1 = np.zeros((2 * n, 2 * n), dtype=complex)
    M2 = np.zeros_like(M1)
    log_total = 0.0
    for j, e in enumerate(g.edges):
        T, logT = edge_transfer_matrix(e, lam)
        s = math.exp(-logT)
        M1[2 * j, 2 * j] = s
        M1[2 * j + 1, 2 * j], M1[2 * j + 1, 2 * j + 1] = T[0, 0], T[0, 1]
        M2[2 * j, 2 * j + 1] = s
        M2[2 * j + 1, 2 * j], M2[2 * j + 1, 2 * j + 1] = -T[1, 0], -T[1, 1]
        log_total += 2.0 * logT
    F = system._Um @ M1 + system._Up @ M2
    sign, logabs = np.linalg.slogdet(F)
    return complex(sign), float(logabs + log_total)


__all__ = [
    "BACKENDS", "CouplingResonance", "SecularSystem", "flower_determinant", "scattering_determinant",
    "star_secular_closed_form", "transfer_determinant", "matrix_residual",
]
