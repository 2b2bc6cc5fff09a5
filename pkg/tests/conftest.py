import math

import numpy as np
import pytest

from dwgs.coupling import default_couplings
from dwgs.graph import Edge, MetricGraph
from dwgs.io import load_corpus
from dwgs.profiles import Constant


def make_edge(eid, tail, head, length=1.0, a=0.0, b=0.0):
    return Edge(eid, tail, head, length, Constant(a, length), Constant(b, length))


def star(lengths=(1.0, 1.0, 1.0), dampings=(0.0, 0.0, 0.0), leaf="dirichlet"):
    edges = [make_edge(f"e{i + 1}", "C", f"L{i + 1}", l, a) for i, (l, a) in enumerate(zip(lengths, dampings))]
    graph = MetricGraph(("C",) + tuple(f"L{i + 1}" for i in range(len(lengths))), tuple(edges))
    return graph, default_couplings(graph, {f"L{i + 1}": leaf for i in range(len(lengths))})


def single_edge(length=1.0, a=0.0, b=0.0, ends="dirichlet"):
    graph = MetricGraph(("A", "B"), (make_edge("e1", "A", "B", length, a, b),))
    return graph, default_couplings(graph, {"A": ends, "B": ends})


def loop(n, dampings=None):
    dampings = dampings or [0.0] * n
    vs = tuple(f"V{i}" for i in range(n))
    edges = tuple(make_edge(f"e{i + 1}", vs[i], vs[(i + 1) % n], 1.0, dampings[i]) for i in range(n))
    graph = MetricGraph(vs, edges)
    return graph, default_couplings(graph)


@pytest.fixture(scope="session")
def corpus():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_corpus(name)
        return cache[name]

    return get


TWO_PI = 2.0 * math.pi


def nearest_distance(values, targets):
    values = np.asarray(values, dtype=complex)
    targets = np.asarray(targets, dtype=complex)
    return np.abs(values[:, None] - targets[None, :]).min(axis=1)
