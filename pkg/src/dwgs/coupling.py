"""Unitary vertex couplings ``(U - I) Psi + i (U + I) Psi' = 0`` and vertex scattering."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

UNITARITY_TOL = 1e-12
SNAP_TOL = 1e-9


class CouplingError(ValueError):
    pass


class CouplingResonance(ArithmeticError):
    """The vertex scattering system is singular at the requested wavenumbers."""


@dataclass(frozen=True)
class EigenSplit:
    n_minus: int
    n_plus: int
    D: np.ndarray
    V: np.ndarray

    @property
    def phases(self) -> np.ndarray:
        return np.angle(self.D)

    def diagonal(self) -> np.ndarray:
        return np.concatenate([-np.ones(self.n_minus), np.ones(self.n_plus), self.D])


class UnitaryCoupling:
    """Vertex coupling matrix together with its ``(-1, +1, D)`` eigensplit.

    Rows and columns follow the vertex's incident endpoint slots as returned
    by :meth:`MetricGraph.endpoints`.
    """

    def __init__(self, matrix, origin: str = "custom", parameter=None, *, snap_tol: float = SNAP_TOL):
        U = np.atleast_2d(np.asarray(matrix, dtype=complex))
        if U.shape[0] != U.shape[1]:
            raise CouplingError("coupling matrix must be square")
        err = np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0])))
        if err >= UNITARITY_TOL:
            raise CouplingError(f"coupling matrix is not unitary (max |U*U - I| = {err:.3e})")
        self.matrix = U
        self.origin = origin
        self.parameter = parameter
        self.snap_tol = snap_tol

    @property
    def degree(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def split(self) -> EigenSplit:
        return eigensplit(self.matrix, self.snap_tol)

    @cached_property
    def leading_scattering(self) -> np.ndarray:
        return scattering_leading_term(self)

    def to_dict(self) -> dict:
        if self.origin == "standard":
            return {"type": "standard"}
        if self.origin in ("dirichlet", "neumann"):
            return {"type": self.origin}
        if self.origin == "delta":
            return {"type": "delta", "alpha": self.parameter}
        if self.origin == "delta_prime_s":
            return {"type": "delta_prime_s", "beta": self.parameter}
        if self.origin == "robin":
            return {"type": "robin", "theta": self.parameter}
        return {"type": "custom",
                "matrix": [[{"re": z.real, "im": z.imag} for z in row] for row in self.matrix]}

    def __repr__(self):
        return f"UnitaryCoupling(origin={self.origin!r}, degree={self.degree})"


def named_coupling(kind: str, degree: int, parameter: float | None = None) -> UnitaryCoupling:
    d = int(degree)
    if d < 1:
        raise CouplingError("vertex degree must be >= 1")
    I = np.eye(d)
    J = np.ones((d, d))
    if kind == "standard":
        U = 2.0 / d * J - I
    elif kind == "dirichlet":
        U = -I
    elif kind == "neumann":
        U = I.astype(complex)
    elif kind == "delta":
        U = 2.0 / (d + 1j * parameter) * J - I
    elif kind == "delta_prime_s":
        U = I - 2.0 / (d - 1j * parameter) * J
    elif kind == "robin":
        if d != 1:
            raise CouplingError("robin coupling is only defined for degree-1 vertices")
        U = np.exp(1j * parameter) * I
    else:
        raise CouplingError(f"unknown coupling kind {kind!r}")
    return UnitaryCoupling(U, origin=kind, parameter=parameter)


def coupling_from_dict(spec: dict, degree: int) -> UnitaryCoupling:
    kind = spec.get("type")
    if kind == "custom":
        rows = spec["matrix"]
        U = np.array([[complex(z["re"], z.get("im", 0.0)) if isinstance(z, dict) else complex(z)
                       for z in row] for row in rows])
        if U.shape != (degree, degree):
            raise CouplingError(f"custom coupling is {U.shape}, vertex degree is {degree}")
        return UnitaryCoupling(U, origin="custom")
    param = {"delta": "alpha", "delta_prime_s": "beta", "robin": "theta"}.get(kind)
    return named_coupling(kind, degree, spec[param] if param else None)


def eigensplit(U, snap_tol: float = SNAP_TOL) -> EigenSplit:
    """Unitary ``V`` with ``U = V^H diag(-I, +I, D) V``; eigenvalues near -1/+1 are snapped."""
    U = np.asarray(U, dtype=complex)
    T, Z = scipy.linalg.schur(U, output="complex")
    ev = np.diag(T)
    minus = np.flatnonzero(np.abs(ev + 1.0) < snap_tol)
    plus = np.flatnonzero(np.abs(ev - 1.0) < snap_tol)
    rest = np.setdiff1d(np.arange(len(ev)), np.concatenate([minus, plus]))
    order = np.concatenate([minus, plus, rest]).astype(int)
    V = Z[:, order].conj().T
    D = ev[rest]
    return EigenSplit(len(minus), len(plus), D / np.abs(D), V)


def scattering_leading_term(coupling: UnitaryCoupling) -> np.ndarray:
    """High-frequency limit ``V^H diag(-I_{n-}, I, I) V`` of the vertex scattering matrix."""
    s = coupling.split
    diag = np.concatenate([-np.ones(s.n_minus), np.ones(coupling.degree - s.n_minus)])
    return s.V.conj().T @ (diag[:, None] * s.V)


def scattering_exact(coupling: UnitaryCoupling, wavenumbers) -> np.ndarray:
    """Vertex scattering matrix for waves ``a_in e^{k x} + a_out e^{-k x}`` (x from the vertex).

    ``wavenumbers`` has shape ``(..., d)``; the result has shape ``(..., d, d)``.
    """
    U = coupling.matrix
    d = U.shape[0]
    K = np.asarray(wavenumbers, dtype=complex)
    I = np.eye(d)
    Um, Up = U - I, U + I
    A = Um - 1j * Up * K[..., None, :]
    B = Um + 1j * Up * K[..., None, :]
    # smallest singular value relative to the size of the two terms (a plain
    # condition number misses the scalar case)
    sv = np.linalg.svd(A, compute_uv=False)
    scale = np.linalg.norm(Um, 2) + np.max(np.abs(K), axis=-1) * np.linalg.norm(Up, 2)
    rel = sv[..., -1] / scale
    if np.any(~np.isfinite(rel)) or np.any(rel < 1e-13):
        raise CouplingResonance(f"singular vertex scattering system (relative sigma_min={np.min(rel):.3e})")
    return -np.linalg.solve(A, B)


def boundary_form(coupling: UnitaryCoupling, psi3) -> tuple:
    """Boundary data satisfying the coupling, built from ``Psi_3`` components on the D block.

    Returns ``(Psi, Psi_out_derivative, sum tan(phi/2)|Psi_3|^2)``; the
    components on the -1/+1 blocks are drawn as zero value / zero derivative.
    """
    s = coupling.split
    d = coupling.degree
    psi3 = np.asarray(psi3, dtype=complex)
    rng = np.random.default_rng(0)
    w = np.zeros(d, dtype=complex)
    wp = np.zeros(d, dtype=complex)
    # -1 block: Psi component 0, derivative free
    wp[: s.n_minus] = rng.normal(size=s.n_minus) + 1j * rng.normal(size=s.n_minus)
    # +1 block: derivative 0, value free
    sl = slice(s.n_minus, s.n_minus + s.n_plus)
    w[sl] = rng.normal(size=s.n_plus) + 1j * rng.normal(size=s.n_plus)
    t = np.tan(s.phases / 2.0)
    w[s.n_minus + s.n_plus:] = psi3
    wp[s.n_minus + s.n_plus:] = -t * psi3
    Vh = s.V.conj().T
    return Vh @ w, Vh @ wp, float(np.sum(t * np.abs(psi3) ** 2))


@dataclass(frozen=True)
class FlowerAssembly:
    """Block-diagonal coupling over all endpoint slots (slot ``2j`` tail, ``2j+1`` head of edge ``j``)."""

    matrix: np.ndarray
    slot_order: tuple
    blocks: tuple

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def assemble_flower(graph, couplings: dict) -> FlowerAssembly:
    n = graph.n_edges
    U = np.zeros((2 * n, 2 * n), dtype=complex)
    order, blocks = [], []
    for v in graph.vertices:
        slots = [2 * j + end for j, end in graph.endpoints(v)]
        if not slots:
            continue
        c = couplings.get(v)
        if c is None:
            raise CouplingError(f"vertex {v!r} has no coupling")
        if c.degree != len(slots):
            raise CouplingError(f"vertex {v!r}: coupling degree {c.degree} != vertex degree {len(slots)}")
        U[np.ix_(slots, slots)] = c.matrix
        order.extend(slots)
        blocks.append((v, tuple(slots)))
    return FlowerAssembly(U, tuple(order), tuple(blocks))


def default_couplings(graph, overrides: dict | None = None) -> dict:
    """Standard coupling everywhere, except where ``overrides`` names a kind or gives a coupling."""
    out = {}
    overrides = overrides or {}
    for v in graph.vertices:
        d = graph.degree(v)
        spec = overrides.get(v, "standard")
        if isinstance(spec, UnitaryCoupling):
            out[v] = spec
        elif isinstance(spec, str):
            out[v] = named_coupling(spec, d)
        else:
            kind, param = spec
            out[v] = named_coupling(kind, d, param)
    return out
