"""JSON and DOT serialization for graphs and patterns.

JSON layout::

    {"nodes": [{"name": "X", "kind": "substantive"},
               {"name": "R_Y", "kind": "indicator", "of": "Y"}],
     "directed": [["X", "Y"]], "undirected": [["X", "Z"]]}

Nodes are listed by index and edges sorted by index pair, so the output is
byte-stable for equal graphs.
"""

from __future__ import annotations

import json
from typing import Any, Mapping

from .graph import GraphError, MGraph, Pattern


def _nodes_json(g: MGraph | Pattern) -> list[dict[str, Any]]:
    out = []
    for name, of in zip(g.names, g.indicator_of):
        if of is None:
            out.append({"name": name, "kind": "substantive"})
        else:
            out.append({"name": name, "kind": "indicator", "of": g.names[of]})
    return out


def _nodes_from_json(nodes: list[Mapping[str, Any]]) -> tuple[tuple[str, ...], tuple[int | None, ...]]:
    names = tuple(str(n["name"]) for n in nodes)
    pos = {nm: i for i, nm in enumerate(names)}
    indicator_of: list[int | None] = []
    for n in nodes:
        kind = n.get("kind", "substantive")
        if kind == "substantive":
            indicator_of.append(None)
        elif kind == "indicator":
            if n.get("of") not in pos:
                raise GraphError(f"indicator {n['name']!r} refers to unknown variable {n.get('of')!r}")
            indicator_of.append(pos[n["of"]])
        else:
            raise GraphError(f"unknown node kind {kind!r}")
    return names, tuple(indicator_of)


def _edges_from_json(names: tuple[str, ...], edges: list[list[str]]) -> set[tuple[int, int]]:
    pos = {nm: i for i, nm in enumerate(names)}
    try:
        return {(pos[a], pos[b]) for a, b in edges}
    except KeyError as exc:
        raise GraphError(f"edge refers to unknown node {exc.args[0]!r}") from None


def pattern_to_dict(p: MGraph | Pattern) -> dict[str, Any]:
    if isinstance(p, MGraph):
        directed, undirected = p.edges, frozenset()
    else:
        directed, undirected = p.directed, p.undirected
    return {
        "nodes": _nodes_json(p),
        "directed": [[p.names[a], p.names[b]] for a, b in sorted(directed)],
        "undirected": [[p.names[a], p.names[b]] for a, b in sorted(undirected)],
    }


def pattern_from_dict(d: Mapping[str, Any]) -> Pattern:
    names, indicator_of = _nodes_from_json(d["nodes"])
    return Pattern(
        names,
        indicator_of,
        frozenset(_edges_from_json(names, d.get("directed", []))),
        frozenset(_edges_from_json(names, d.get("undirected", []))),
    )


def mgraph_from_dict(d: Mapping[str, Any]) -> MGraph:
    if d.get("undirected"):
        raise GraphError("an m-graph cannot contain undirected edges")
    names, indicator_of = _nodes_from_json(d["nodes"])
    return MGraph(names, indicator_of, frozenset(_edges_from_json(names, d.get("directed", []))))


def dumps(obj: Any) -> str:
    """Canonical JSON text used for every file this package writes."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def to_dot(
    p: MGraph | Pattern,
    provenance: Mapping[tuple[int, int], str] | None = None,
    name: str = "G",
) -> str:
    """Render as a DOT digraph; undirected edges carry ``dir=none``.

    ``provenance`` maps a directed edge to a label stored in a ``provenance``
    attribute (``anm`` or ``rule`` for learned orientations).
    """
    d = pattern_to_dict(p)
    lines = [f"digraph {name} {{"]
    for node in d["nodes"]:
        shape = "box" if node["kind"] == "indicator" else "ellipse"
        lines.append(f'  "{node["name"]}" [shape={shape}];')
    pos = {nm: i for i, nm in enumerate(p.names)}
    for a, b in d["directed"]:
        attrs = []
        if provenance is not None:
            label = provenance.get((pos[a], pos[b]))
            if label:
                attrs.append(f'provenance="{label}"')
        suffix = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f'  "{a}" -> "{b}"{suffix};')
    for a, b in d["undirected"]:
        extra = ', provenance="undirected"' if provenance is not None else ""
        lines.append(f'  "{a}" -> "{b}" [dir=none{extra}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
