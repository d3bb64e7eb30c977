"""Missingness graphs, partially directed patterns and graphical queries.

Nodes are dense integer indices.  Substantive variables come first, then one
indicator node per partially observed variable, named ``R_<var>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Mapping, Sequence


class GraphError(ValueError):
    """Invalid argument to a graph operation."""


class OrientationRejected(GraphError):
    """Orienting an edge would close a directed cycle."""


def indicator_name(var: str) -> str:
    return f"R_{var}"


def _toposort(n: int, edges: Iterable[tuple[int, int]]) -> list[int] | None:
    children: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for a, b in edges:
        children[a].append(b)
        indeg[b] += 1
    order = [v for v in range(n) if indeg[v] == 0]
    i = 0
    while i < len(order):
        for c in children[order[i]]:
            indeg[c] -= 1
            if indeg[c] == 0:
                order.append(c)
        i += 1
    return order if len(order) == n else None


def _check_nodes(names: Sequence[str], indicator_of: Sequence[int | None]) -> None:
    if len(names) != len(indicator_of):
        raise GraphError("names and indicator_of differ in length")
    if len(set(names)) != len(names):
        raise GraphError("node names must be unique")
    seen: set[int] = set()
    for i, of in enumerate(indicator_of):
        if of is None:
            continue
        if not 0 <= of < len(names) or indicator_of[of] is not None:
            raise GraphError(f"indicator {names[i]} must refer to a substantive node")
        if of in seen:
            raise GraphError(f"variable {names[of]} has more than one indicator")
        seen.add(of)


class _Nodes:
    """Node bookkeeping shared by graphs and patterns."""

    names: tuple[str, ...]
    indicator_of: tuple[int | None, ...]

    @property
    def n_nodes(self) -> int:
        return len(self.names)

    @cached_property
    def substantive(self) -> tuple[int, ...]:
        return tuple(i for i, of in enumerate(self.indicator_of) if of is None)

    @cached_property
    def indicators(self) -> tuple[int, ...]:
        return tuple(i for i, of in enumerate(self.indicator_of) if of is not None)

    @cached_property
    def _indicator_index(self) -> dict[int, int]:
        return {of: i for i, of in enumerate(self.indicator_of) if of is not None}

    @cached_property
    def _name_index(self) -> dict[str, int]:
        return {nm: i for i, nm in enumerate(self.names)}

    def index(self, name: str) -> int:
        try:
            return self._name_index[name]
        except KeyError:
            raise GraphError(f"unknown node {name!r}") from None

    def indicator(self, v: int) -> int | None:
        """Index of the indicator of variable ``v``, or None if fully observed."""
        return self._indicator_index.get(v)

    def is_indicator(self, v: int) -> bool:
        return self.indicator_of[v] is not None

    def partially_observed(self, v: int) -> bool:
        return v in self._indicator_index

    def _check(self, *nodes: int) -> None:
        for v in nodes:
            if not isinstance(v, (int,)) or not 0 <= v < self.n_nodes:
                raise GraphError(f"unknown node id {v!r}")


@dataclass(frozen=True)
class MGraph(_Nodes):
    """A missingness graph: a DAG over substantive variables and indicators."""

    names: tuple[str, ...]
    indicator_of: tuple[int | None, ...]
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "indicator_of", tuple(self.indicator_of))
        object.__setattr__(self, "edges", frozenset((int(a), int(b)) for a, b in self.edges))
        _check_nodes(self.names, self.indicator_of)
        n = len(self.names)
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise GraphError(f"bad edge ({a}, {b})")
            if self.indicator_of[a] is not None:
                raise GraphError(f"indicator {self.names[a]} cannot be a cause")
        if _toposort(n, self.edges) is None:
            raise GraphError("graph has a directed cycle")

    @classmethod
    def build(
        cls,
        variables: Sequence[str],
        edges: Iterable[tuple[str, str]] = (),
        indicator_parents: Mapping[str, Iterable[str]] | None = None,
    ) -> "MGraph":
        """Build from variable names, substantive edges and indicator parent lists.

        Every key of ``indicator_parents`` is a partially observed variable; listing
        the variable among its own indicator's parents makes it self-masking.
        """
        indicator_parents = dict(indicator_parents or {})
        names = list(variables)
        pos = {v: i for i, v in enumerate(names)}
        indicator_of: list[int | None] = [None] * len(names)
        for var in variables:
            if var in indicator_parents:
                names.append(indicator_name(var))
                indicator_of.append(pos[var])
        index = {nm: i for i, nm in enumerate(names)}
        try:
            es = {(pos[a], pos[b]) for a, b in edges}
            for var, pars in indicator_parents.items():
                r = index[indicator_name(var)]
                es.update((pos[p], r) for p in pars)
        except KeyError as exc:
            raise GraphError(f"unknown variable {exc.args[0]!r}") from None
        return cls(tuple(names), tuple(indicator_of), frozenset(es))

    @cached_property
    def _children(self) -> tuple[tuple[int, ...], ...]:
        ch: list[list[int]] = [[] for _ in self.names]
        for a, b in sorted(self.edges):
            ch[a].append(b)
        return tuple(tuple(c) for c in ch)

    @cached_property
    def _parents(self) -> tuple[tuple[int, ...], ...]:
        pa: list[list[int]] = [[] for _ in self.names]
        for a, b in sorted(self.edges):
            pa[b].append(a)
        return tuple(tuple(p) for p in pa)

    def children(self, v: int) -> tuple[int, ...]:
        self._check(v)
        return self._children[v]

    def parents(self, v: int) -> tuple[int, ...]:
        self._check(v)
        return self._parents[v]

    def adjacent(self, a: int, b: int) -> bool:
        return (a, b) in self.edges or (b, a) in self.edges

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        return tuple(_toposort(self.n_nodes, sorted(self.edges)))  # type: ignore[arg-type]

    def self_masking(self, v: int) -> bool:
        """True if ``v`` is a parent of its own indicator."""
        r = self.indicator(v)
        return r is not None and v in self._parents[r]

    def weak_self_masking(self, v: int) -> bool:
        r = self.indicator(v)
        return r is not None and self._parents[r] == (v,)

    @property
    def self_masking_vars(self) -> frozenset[int]:
        return frozenset(v for v in self.substantive if self.self_masking(v))

    def substantive_edges(self) -> frozenset[tuple[int, int]]:
        return frozenset(e for e in self.edges if not self.is_indicator(e[1]))


def descendants(g: MGraph, v: int) -> frozenset[int]:
    """All nodes reachable from ``v`` by a directed path, ``v`` excluded."""
    g._check(v)
    return _descendants(g, v)


@lru_cache(maxsize=65536)
def _descendants(g: MGraph, v: int) -> frozenset[int]:
    seen: set[int] = set()
    stack = list(g._children[v])
    while stack:
        u = stack.pop()
        if u not in seen:
            seen.add(u)
            stack.extend(g._children[u])
    return frozenset(seen)


def ancestors(g: MGraph, nodes: Iterable[int]) -> frozenset[int]:
    seen: set[int] = set()
    stack = list(nodes)
    while stack:
        u = stack.pop()
        for p in g._parents[u]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return frozenset(seen)


def d_separated(g: MGraph, x: int, y: int, z: Iterable[int] = ()) -> bool:
    """Whether ``x`` and ``y`` are d-separated given ``z`` in ``g``."""
    z = frozenset(z)
    g._check(x, y, *z)
    if x == y:
        raise GraphError("origin and target must differ")
    if x in z or y in z:
        raise GraphError("origin and target must not be conditioned on")
    return _d_separated(g, x, y, z)


@lru_cache(maxsize=1 << 16)
def _d_separated(g: MGraph, x: int, y: int, z: frozenset[int]) -> bool:
    # reachability with arrival direction ("Bayes ball")
    anc_z = z | ancestors(g, z)
    up, down = True, False
    visited: set[tuple[int, bool]] = set()
    stack = [(x, up)]
    while stack:
        node, d = stack.pop()
        if (node, d) in visited:
            continue
        visited.add((node, d))
        if node == y:
            return False
        if d is up:
            if node in z:
                continue
            stack.extend((p, up) for p in g._parents[node])
            stack.extend((c, down) for c in g._children[node])
        else:
            if node not in z:
                stack.extend((c, down) for c in g._children[node])
            if node in anc_z:
                stack.extend((p, up) for p in g._parents[node])
    return True


def anm_identifiable_in_missing(g: MGraph, child: int, parents: Iterable[int]) -> bool:
    """Whether the additive noise model of ``child`` on ``parents`` stays identifiable
    once the data are restricted to rows where the involved variables are observed.

    It fails exactly when the indicator of the child or of one of the parents is a
    descendant of the child.
    """
    parents = frozenset(parents)
    g._check(child, *parents)
    if child in parents:
        raise GraphError("child listed among its parents")
    for v in (child, *parents):
        if g.is_indicator(v):
            raise GraphError(f"{g.names[v]} is not a substantive node")
    for p in parents:
        if (p, child) not in g.edges:
            raise GraphError(f"no edge {g.names[p]} -> {g.names[child]}")
    des = descendants(g, child)
    for v in (child, *sorted(parents)):
        r = g.indicator(v)
        if r is not None and r in des:
            return False
    return True


@dataclass(frozen=True)
class Pattern(_Nodes):
    """Partially directed m-graph.

    ``undirected`` holds pairs ``(a, b)`` with ``a < b``.  Edges touching an
    indicator are always directed into the indicator.
    """

    names: tuple[str, ...]
    indicator_of: tuple[int | None, ...]
    directed: frozenset[tuple[int, int]]
    undirected: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "indicator_of", tuple(self.indicator_of))
        object.__setattr__(self, "directed", frozenset((int(a), int(b)) for a, b in self.directed))
        object.__setattr__(
            self,
            "undirected",
            frozenset((min(int(a), int(b)), max(int(a), int(b))) for a, b in self.undirected),
        )
        _check_nodes(self.names, self.indicator_of)
        n = len(self.names)
        pairs: set[tuple[int, int]] = set()
        for a, b in self.directed:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise GraphError(f"bad edge ({a}, {b})")
            if self.indicator_of[a] is not None:
                raise GraphError(f"indicator {self.names[a]} cannot be a cause")
            key = (min(a, b), max(a, b))
            if key in pairs:
                raise GraphError("pair appears twice among directed edges")
            pairs.add(key)
        for a, b in self.undirected:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise GraphError(f"bad edge ({a}, {b})")
            if self.indicator_of[a] is not None or self.indicator_of[b] is not None:
                raise GraphError("edges touching an indicator must be directed into it")
            if (a, b) in pairs:
                raise GraphError("pair is both directed and undirected")
        if _toposort(n, self.directed) is None:
            raise GraphError("directed part has a cycle")

    @classmethod
    def empty(cls, names: Sequence[str], indicator_of: Sequence[int | None]) -> "Pattern":
        return cls(tuple(names), tuple(indicator_of), frozenset(), frozenset())

    @cached_property
    def _nbrs(self) -> tuple[tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]], ...]:
        pa: list[list[int]] = [[] for _ in self.names]
        ch: list[list[int]] = [[] for _ in self.names]
        un: list[list[int]] = [[] for _ in self.names]
        for a, b in sorted(self.directed):
            ch[a].append(b)
            pa[b].append(a)
        for a, b in sorted(self.undirected):
            un[a].append(b)
            un[b].append(a)
        return tuple((tuple(pa[i]), tuple(ch[i]), tuple(sorted(un[i]))) for i in range(self.n_nodes))

    def parents(self, v: int) -> tuple[int, ...]:
        return self._nbrs[v][0]

    def children(self, v: int) -> tuple[int, ...]:
        return self._nbrs[v][1]

    def undirected_neighbors(self, v: int) -> tuple[int, ...]:
        return self._nbrs[v][2]

    def neighbors(self, v: int) -> frozenset[int]:
        pa, ch, un = self._nbrs[v]
        return frozenset(pa) | frozenset(ch) | frozenset(un)

    def substantive_neighbors(self, v: int) -> frozenset[int]:
        return frozenset(u for u in self.neighbors(v) if not self.is_indicator(u))

    def adjacent(self, a: int, b: int) -> bool:
        return (
            (min(a, b), max(a, b)) in self.undirected
            or (a, b) in self.directed
            or (b, a) in self.directed
        )

    def adjacencies(self) -> frozenset[frozenset[int]]:
        """All adjacent pairs, direction ignored."""
        return frozenset(frozenset(e) for e in self.directed | self.undirected)

    def has_directed_path(self, a: int, b: int) -> bool:
        """Directed path ``a -> ... -> b`` using directed edges only (``a == b`` counts)."""
        seen = {a}
        stack = [a]
        while stack:
            u = stack.pop()
            if u == b:
                return True
            for c in self._nbrs[u][1]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return False

    def replace_edges(
        self,
        directed: Iterable[tuple[int, int]] | None = None,
        undirected: Iterable[tuple[int, int]] | None = None,
    ) -> "Pattern":
        return Pattern(
            self.names,
            self.indicator_of,
            frozenset(self.directed if directed is None else directed),
            frozenset(self.undirected if undirected is None else undirected),
        )

    def without_edge(self, a: int, b: int) -> "Pattern":
        key = (min(a, b), max(a, b))
        return self.replace_edges(
            {e for e in self.directed if e not in ((a, b), (b, a))},
            {e for e in self.undirected if e != key},
        )


def skeleton_of(g: MGraph) -> Pattern:
    """Drop the direction of every substantive edge; indicator edges stay directed."""
    directed = {e for e in g.edges if g.is_indicator(e[1])}
    undirected = {e for e in g.edges if not g.is_indicator(e[1])}
    return Pattern(g.names, g.indicator_of, frozenset(directed), frozenset(undirected))


def as_pattern(g: MGraph) -> Pattern:
    """The fully directed pattern of ``g``."""
    return Pattern(g.names, g.indicator_of, g.edges, frozenset())


def orient_edge(p: Pattern, frm: int, to: int) -> Pattern:
    """Turn the undirected edge ``frm - to`` into ``frm -> to``."""
    p._check(frm, to)
    key = (min(frm, to), max(frm, to))
    if key not in p.undirected:
        raise GraphError(f"{p.names[frm]} - {p.names[to]} is not an undirected edge")
    if p.has_directed_path(to, frm):
        raise OrientationRejected(f"{p.names[frm]} -> {p.names[to]} closes a directed cycle")
    return p.replace_edges(p.directed | {(frm, to)}, p.undirected - {key})


def potential_nonidentifiable_paths(p: Pattern, v: int) -> list[tuple[int, ...]]:
    """Paths ``w - v ~> R`` that could explain why an edge into ``v`` stayed undirected.

    ``w`` is an undirected neighbour of ``v``.  The walk after ``v`` follows directed
    edges forward or undirected edges that can be oriented along the walk without
    closing a cycle, visits no node twice, and stops at the indicator of ``v``, of
    ``w``, or of any other node that could be a parent of ``v`` (a directed parent
    or another undirected neighbour).
    """
    p._check(v)
    if p.is_indicator(v):
        raise GraphError(f"{p.names[v]} is an indicator")
    und = p.undirected_neighbors(v)
    if not und:
        return []
    targets = {
        r
        for u in (v, *p.parents(v), *und)
        if (r := p.indicator(u)) is not None
    }
    if not targets:
        return []
    found: list[tuple[int, ...]] = []

    def walk(path: list[int]) -> None:
        u = path[-1]
        if u in targets:
            found.append(tuple(path))
            return
        _, ch, un = p._nbrs[u]
        for nxt in ch:
            if nxt not in path:
                path.append(nxt)
                walk(path)
                path.pop()
        for nxt in un:
            if nxt not in path and not p.has_directed_path(nxt, u):
                path.append(nxt)
                walk(path)
                path.pop()

    for w in und:
        if p.has_directed_path(v, w):
            continue
        walk([w, v])
    return found
