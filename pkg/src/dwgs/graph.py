"""Finite metric graphs with per-edge damping and potential profiles."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import reduce

import numpy as np

from .profiles import CoefficientProfile, Constant


class GraphError(ValueError):
    pass


class IncommensurateLengths(GraphError):
    pass


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    length: float
    damping: CoefficientProfile
    potential: CoefficientProfile = None

    def __post_init__(self):
        if self.potential is None:
            object.__setattr__(self, "potential", Constant(0.0, self.length))

    @property
    def is_loop(self) -> bool:
        return self.tail == self.head

    @property
    def mean_damping(self) -> float:
        return self.damping.average

    @property
    def mean_potential(self) -> float:
        return self.potential.average

    @property
    def is_constant(self) -> bool:
        return isinstance(self.damping, Constant) and isinstance(self.potential, Constant)

    def flipped(self) -> "Edge":
        """Same edge with reversed orientation (profiles mirrored)."""
        return Edge(self.id, self.head, self.tail, self.length,
                    _mirror(self.damping), _mirror(self.potential))


def _mirror(profile: CoefficientProfile) -> CoefficientProfile:
    from .profiles import PiecewiseConstant, Sampled

    if isinstance(profile, Constant):
        return profile
    if isinstance(profile, PiecewiseConstant):
        l = profile.length
        return PiecewiseConstant((l - profile.breakpoints)[::-1], profile.values[::-1], l)
    grid = np.linspace(0.0, profile.length, max(len(profile.values), 9))
    return Sampled(profile(profile.length - grid), profile.length)


@dataclass(frozen=True)
class MetricGraph:
    vertices: tuple
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    def degree(self, v: str) -> int:
        return sum((e.tail == v) + (e.head == v) for e in self.edges)

    def degrees(self) -> dict:
        return {v: self.degree(v) for v in self.vertices}

    def endpoints(self, v: str):
        """Incident endpoint slots of ``v`` as ``(edge_index, 0 for tail | 1 for head)``, deterministic order."""
        slots = []
        for j, e in enumerate(self.edges):
            if e.tail == v:
                slots.append((j, 0))
            if e.head == v:
                slots.append((j, 1))
        return slots

    def edge_index(self, edge_id: str) -> int:
        for j, e in enumerate(self.edges):
            if e.id == edge_id:
                return j
        raise KeyError(edge_id)

    def with_edges(self, edges) -> "MetricGraph":
        return replace(self, edges=tuple(edges))


@dataclass
class ValidationReport:
    connected: bool
    degrees: dict
    boundary_vertices: list
    total_length: float
    errors: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.errors


def validate(graph: MetricGraph) -> ValidationReport:
    errors = []
    vset = set(graph.vertices)
    if len(vset) != len(graph.vertices):
        errors.append("duplicate vertex ids")
    if graph.n_edges < 1:
        errors.append("graph has no edges")
    ids = [e.id for e in graph.edges]
    if len(set(ids)) != len(ids):
        errors.append("duplicate edge ids")
    for e in graph.edges:
        for end in (e.tail, e.head):
            if end not in vset:
                errors.append(f"edge {e.id}: dangling endpoint {end!r}")
        if not (e.length > 0 and math.isfinite(e.length)):
            errors.append(f"edge {e.id}: nonpositive length {e.length}")
    connected = _is_connected(graph) if not errors else False
    if not errors and not connected:
        errors.append("disconnected graph")
    degrees = {v: graph.degree(v) for v in graph.vertices}
    return ValidationReport(
        connected=connected,
        degrees=degrees,
        boundary_vertices=[v for v, d in degrees.items() if d == 1],
        total_length=graph.total_length,
        errors=errors,
    )


def require_valid(graph: MetricGraph) -> None:
    report = validate(graph)
    if not report.valid:
        raise GraphError("; ".join(report.errors))


def _adjacency(graph):
    adj = {v: [] for v in graph.vertices}
    for e in graph.edges:
        adj[e.tail].append(e.head)
        adj[e.head].append(e.tail)
    return adj


def _is_connected(graph) -> bool:
    if not graph.vertices:
        return False
    adj = _adjacency(graph)
    seen = {graph.vertices[0]}
    queue = deque(seen)
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == len(graph.vertices)


@dataclass(frozen=True)
class Bond:
    """Directed copy of an edge; ``forward`` runs tail -> head."""

    index: int
    edge: int
    forward: bool
    start: str
    end: str
    length: float


@dataclass(frozen=True)
class DirectedDouble:
    graph: MetricGraph
    bonds: tuple
    reverse: tuple
    incoming: dict
    outgoing: dict

    @property
    def size(self) -> int:
        return len(self.bonds)

    def start_slot(self, b: int):
        """Endpoint slot a bond leaves from."""
        bond = self.bonds[b]
        return (bond.edge, 0 if bond.forward else 1)

    def end_slot(self, b: int):
        """Endpoint slot a bond arrives at."""
        bond = self.bonds[b]
        return (bond.edge, 1 if bond.forward else 0)


def directed_double(graph: MetricGraph) -> DirectedDouble:
    """Bonds ``e_1..e_N`` (tail->head) followed by ``ê_1..ê_N``."""
    n = graph.n_edges
    bonds = []
    for j, e in enumerate(graph.edges):
        bonds.append(Bond(j, j, True, e.tail, e.head, e.length))
    for j, e in enumerate(graph.edges):
        bonds.append(Bond(n + j, j, False, e.head, e.tail, e.length))
    reverse = tuple((b + n) % (2 * n) for b in range(2 * n))
    incoming = {v: [] for v in graph.vertices}
    outgoing = {v: [] for v in graph.vertices}
    for b in bonds:
        outgoing[b.start].append(b.index)
        incoming[b.end].append(b.index)
    return DirectedDouble(graph, tuple(bonds), reverse,
                          {v: tuple(x) for v, x in incoming.items()},
                          {v: tuple(x) for v, x in outgoing.items()})


def common_unit(lengths, max_denominator: int = 10_000, rtol: float = 1e-9) -> float:
    """Largest ``l0`` with every length an integer multiple of it (continued-fraction test)."""
    lengths = [float(l) for l in lengths]
    ref = lengths[0]
    fracs = []
    for l in lengths:
        ratio = l / ref
        f = Fraction(ratio).limit_denominator(max_denominator)
        if abs(float(f) - ratio) > rtol * ratio:
            raise IncommensurateLengths(f"length {l} is incommensurate with {ref}")
        fracs.append(f)
    q = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fracs), 1)
    mult = [f.numerator * (q // f.denominator) for f in fracs]
    g = reduce(math.gcd, mult)
    return ref * g / q


def is_commensurate(graph: MetricGraph) -> bool:
    try:
        common_unit([e.length for e in graph.edges])
    except IncommensurateLengths:
        return False
    return True


def subdivide_to_equilateral(graph: MetricGraph, l0: float, rtol: float = 1e-9):
    """Split every edge into ``length / l0`` pieces joined at new degree-2 vertices.

    Returns the new graph and the list of inserted vertex ids (they carry
    standard coupling).
    """
    require_valid(graph)
    vertices = list(graph.vertices)
    edges, inserted = [], []
    for e in graph.edges:
        m = e.length / l0
        k = int(round(m))
        if k < 1 or abs(m - k) > rtol * max(m, 1.0):
            raise IncommensurateLengths(f"edge {e.id}: length {e.length} is not a multiple of {l0}")
        if k == 1:
            edges.append(e)
            continue
        nodes = [e.tail] + [f"{e.id}#{i}" for i in range(1, k)] + [e.head]
        inserted.extend(nodes[1:-1])
        vertices.extend(nodes[1:-1])
        h = e.length / k
        for i in range(k):
            x0, x1 = i * h, (i + 1) * h
            edges.append(Edge(f"{e.id}.{i}", nodes[i], nodes[i + 1], l0,
                              e.damping.restrict(x0, x1), e.potential.restrict(x0, x1)))
    return MetricGraph(tuple(vertices), tuple(edges)), inserted


def is_bipartite(graph: MetricGraph) -> bool:
    """BFS two-colouring; a self-loop is an odd cycle."""
    color = {}
    adj = _adjacency(graph)
    for e in graph.edges:
        if e.is_loop:
            return False
    for root in graph.vertices:
        if root in color:
            continue
        color[root] = 0
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if w not in color:
                    color[w] = 1 - color[v]
                    queue.append(w)
                elif color[w] == color[v]:
                    return False
    return True


def is_tree(graph: MetricGraph) -> bool:
    return _is_connected(graph) and graph.n_edges == len(graph.vertices) - 1


def average_damping_bounds(graph: MetricGraph):
    means = [e.mean_damping for e in graph.edges]
    return min(means), max(means)


def scale_graph(graph: MetricGraph, couplings: dict, l0: float):
    """Unit equilateral graph -> edges of length ``l0`` with the matching coupling transform.

    Eigenvalues of the result are those of the input divided by ``l0``.
    """
    from .coupling import UnitaryCoupling

    for e in graph.edges:
        if abs(e.length - 1.0) > 1e-12:
            raise GraphError("scale_graph expects unit edge lengths")
    edges = [Edge(e.id, e.tail, e.head, l0,
                  e.damping.rescaled(l0, 1.0 / l0),
                  e.potential.rescaled(l0, 1.0 / l0 ** 2)) for e in graph.edges]
    new_couplings = {}
    for v, c in couplings.items():
        d = c.matrix.shape[0]
        eye = np.eye(d)
        left = (l0 - 1.0) * c.matrix + (l0 + 1.0) * eye
        assert abs(np.linalg.det(left)) > 1e-12, "singular scaling transform"
        matrix = np.linalg.solve(left, (l0 + 1.0) * c.matrix + (l0 - 1.0) * eye)
        origin = c.origin if np.allclose(matrix, c.matrix, atol=1e-12) else "custom"
        new_couplings[v] = UnitaryCoupling(matrix, origin=origin)
    return MetricGraph(graph.vertices, tuple(edges)), new_couplings
