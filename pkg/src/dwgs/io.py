"""Reading and writing graph definition files (JSON)."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .coupling import CouplingError, coupling_from_dict, named_coupling
from .graph import Edge, GraphError, MetricGraph, validate
from .profiles import profile_from_dict


def graph_from_dict(spec: dict):
    """Build ``(graph, couplings)``; vertices without a coupling entry get standard coupling."""
    try:
        vertices = [str(v) for v in spec["vertices"]]
        raw_edges = spec["edges"]
    except KeyError as exc:
        raise GraphError(f"graph file lacks required key {exc.args[0]!r}") from None
    edges = []
    for i, e in enumerate(raw_edges):
        eid = str(e.get("id", f"e{i}"))
        if "damping" not in e:
            raise GraphError(f"edge {eid}: missing damping profile")
        for key in ("tail", "head", "length"):
            if key not in e:
                raise GraphError(f"edge {eid}: missing {key}")
        length = float(e["length"])
        if not length > 0:
            raise GraphError(f"edge {eid}: nonpositive length {length}")
        try:
            damping = profile_from_dict(e["damping"], length)
            potential = profile_from_dict(e["potential"], length) if "potential" in e else None
        except (ValueError, KeyError, TypeError) as exc:
            raise GraphError(f"edge {eid}: bad profile ({exc})") from None
        edges.append(Edge(eid, str(e["tail"]), str(e["head"]), length, damping, potential))
    graph = MetricGraph(tuple(vertices), tuple(edges))
    report = validate(graph)
    if not report.valid:
        raise GraphError("; ".join(report.errors))
    couplings = {}
    raw = spec.get("couplings", {}) or {}
    unknown = set(raw) - set(vertices)
    if unknown:
        raise GraphError(f"couplings given for unknown vertices {sorted(unknown)}")
    for v in vertices:
        d = graph.degree(v)
        if v in raw:
            try:
                couplings[v] = coupling_from_dict(raw[v], d)
            except KeyError as exc:
                raise CouplingError(f"vertex {v}: coupling lacks parameter {exc.args[0]!r}") from None
        else:
            couplings[v] = named_coupling("standard", d)
    return graph, couplings


def load_graph(path):
    with open(path, encoding="utf-8") as fh:
        return graph_from_dict(json.load(fh))


def graph_to_dict(graph: MetricGraph, couplings: dict, **extra) -> dict:
    out = dict(extra)
    out["vertices"] = list(graph.vertices)
    out["edges"] = [{
        "id": e.id, "tail": e.tail, "head": e.head, "length": e.length,
        "damping": e.damping.to_dict(), "potential": e.potential.to_dict(),
    } for e in graph.edges]
    out["couplings"] = {v: c.to_dict() for v, c in couplings.items()}
    return out


def dump_graph(graph: MetricGraph, couplings: dict, path, **extra) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph, couplings, **extra), indent=2) + "\n",
                          encoding="utf-8")


def corpus_names() -> list:
    root = resources.files("dwgs") / "corpus"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def corpus_path(name: str):
    return resources.files("dwgs") / "corpus" / f"{name}.json"


def corpus_spec(name: str) -> dict:
    return json.loads(corpus_path(name).read_text(encoding="utf-8"))


def load_corpus(name: str):
    return graph_from_dict(corpus_spec(name))
