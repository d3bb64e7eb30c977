"""Edge orientation with additive noise models on test-wise deleted data.

Each variable is regressed on candidate parent sets drawn from its neighbours,
largest first.  The first set whose residual is independent of every candidate
parent is oriented into the variable.  Edges left undirected are then oriented
away from any variable with no path that could make its noise model
unidentifiable under deletion, repeated until nothing changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Protocol

from .data import Dataset, EmptyAfterDeletion
from .graph import (
    MGraph,
    OrientationRejected,
    Pattern,
    anm_identifiable_in_missing,
    orient_edge,
    potential_nonidentifiable_paths,
)
from .independence import CITestOutcome, InsufficientData, TestConfig, hsic_test
from .regression import InsufficientRows, Regressor, fit_regressor
from .skeleton import SkeletonResult

__all__ = [
    "InPattern",
    "Regressor",
    "anm_direction_test",
    "apply_orientation_rule",
    "estimate_in_pattern",
    "fit_regressor",
    "lcs_md",
]

log = logging.getLogger(__name__)


def anm_direction_test(
    d: Dataset,
    child: int,
    parents: Iterable[int],
    cfg: TestConfig = TestConfig(),
) -> CITestOutcome:
    """Is the regression residual of ``child`` on ``parents`` independent of each parent?

    Uses the rows where the child and all parents are observed.  Each parent is
    tested at ``alpha / len(parents)``; the reported p-value is the smallest one
    times the number of parents (capped at 1).
    """
    parents = tuple(sorted(set(parents)))
    if not parents:
        raise ValueError("at least one parent is required")
    if child in parents:
        raise ValueError("child listed among its parents")
    try:
        reg = fit_regressor(
            d, child, parents, seed=cfg.seed, min_rows=cfg.min_effective_n, n_features=cfg.regression_features
        )
    except InsufficientRows as exc:
        raise InsufficientData(str(exc)) from None
    resid = d.values[reg.rows, child] - reg.predict(d.values[reg.rows][:, list(parents)])
    outs = [
        hsic_test(resid, d.values[reg.rows, p], None, cfg, seed=(cfg.seed, 3, child, p, *parents))
        for p in parents
    ]
    m = len(parents)
    p_min = min(o.p_value for o in outs)
    p_adj = min(1.0, p_min * m)
    stat = max(o.statistic for o in outs)
    return CITestOutcome(stat, p_adj, p_adj > cfg.alpha, outs[0].effective_n, False, cfg.alpha, outs[0].bandwidth)


class ResidualJudge(Protocol):
    audit: list[dict]

    def accepts(self, child: int, parents: tuple[int, ...]) -> bool: ...


class DataResiduals:
    """Residual-independence decisions from data."""

    def __init__(self, d: Dataset, cfg: TestConfig = TestConfig()):
        self.data = d
        self.cfg = cfg
        self.audit: list[dict] = []

    def accepts(self, child: int, parents: tuple[int, ...]) -> bool:
        names = self.data.names
        rec = {"kind": "anm", "child": names[child], "parents": [names[p] for p in parents]}
        try:
            out = anm_direction_test(self.data, child, parents, self.cfg)
        except (InsufficientData, EmptyAfterDeletion) as exc:
            rec["skipped"] = str(exc)
            self.audit.append(rec)
            return False
        rec.update(statistic=out.statistic, p_value=out.p_value, independent=out.independent, effective_n=out.effective_n)
        self.audit.append(rec)
        return out.independent


class OracleResiduals:
    """Decisions a perfect test would make on data from the m-graph ``g``: the
    residual is independent of the candidate parents exactly when they are the
    true parents and deletion leaves the noise model identifiable."""

    def __init__(self, g: MGraph):
        self.graph = g
        self.audit: list[dict] = []

    def accepts(self, child: int, parents: tuple[int, ...]) -> bool:
        true_pa = tuple(v for v in self.graph.parents(child) if not self.graph.is_indicator(v))
        ok = tuple(sorted(parents)) == true_pa and anm_identifiable_in_missing(self.graph, child, parents)
        self.audit.append(
            {"kind": "anm", "child": self.graph.names[child], "parents": [self.graph.names[p] for p in parents], "independent": ok}
        )
        return ok


@dataclass
class InPattern:
    """A pattern plus the origin of each oriented substantive edge."""

    pattern: Pattern
    oriented_by_anm: frozenset[tuple[int, int]] = frozenset()
    oriented_by_rule: frozenset[tuple[int, int]] = frozenset()
    conflicts: list[dict] = field(default_factory=list)
    audit: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.oriented_by_anm & self.oriented_by_rule:
            raise ValueError("an edge cannot be oriented by both stages")
        if not (self.oriented_by_anm | self.oriented_by_rule) <= self.pattern.directed:
            raise ValueError("recorded orientations must be directed edges of the pattern")

    def provenance(self) -> dict[tuple[int, int], str]:
        out = {e: "anm" for e in self.oriented_by_anm}
        out.update({e: "rule" for e in self.oriented_by_rule})
        return out

    def to_dict(self) -> dict:
        from .graphio import pattern_to_dict

        names = self.pattern.names

        def edges(es):
            return [[names[a], names[b]] for a, b in sorted(es)]

        return {
            "pattern": pattern_to_dict(self.pattern),
            "oriented_by_anm": edges(self.oriented_by_anm),
            "oriented_by_rule": edges(self.oriented_by_rule),
            "conflicts": self.conflicts,
        }


def _judge(source: Dataset | MGraph | ResidualJudge, cfg: TestConfig) -> ResidualJudge:
    if isinstance(source, Dataset):
        return DataResiduals(source, cfg)
    if isinstance(source, MGraph):
        return OracleResiduals(source)
    return source


def _skeleton_pattern(sk: SkeletonResult | Pattern) -> Pattern:
    return sk.pattern if isinstance(sk, SkeletonResult) else sk


def _candidate_sets(adj: list[int], max_parents: int | None):
    top = len(adj) if max_parents is None else min(len(adj), max_parents)
    for size in range(top, 0, -1):
        yield from combinations(adj, size)


def estimate_in_pattern(
    source: Dataset | MGraph | ResidualJudge,
    sk: SkeletonResult | Pattern,
    cfg: TestConfig = TestConfig(),
    max_parents: int | None = 4,
) -> InPattern:
    """Orient ``Pa -> V`` for the first accepted candidate parent set of each ``V``.

    An edge claimed by both endpoints stays undirected.  A parent set that would
    close a cycle with orientations accepted earlier is dropped as a whole.
    """
    judge = _judge(source, cfg)
    p = _skeleton_pattern(sk)
    accepted: dict[int, tuple[int, ...]] = {}
    for v in p.substantive:
        adj = sorted(p.undirected_neighbors(v))
        for pa in _candidate_sets(adj, max_parents):
            if judge.accepts(v, pa):
                accepted[v] = pa
                break
    claims = {(u, v) for v, pa in accepted.items() for u in pa}
    ties = {(u, v) for u, v in claims if (v, u) in claims}
    conflicts: list[dict] = []
    for a, b in sorted(t for t in ties if t[0] < t[1]):
        conflicts.append({"kind": "both-directions", "edge": [p.names[a], p.names[b]]})
    anm: set[tuple[int, int]] = set()
    for v in p.substantive:
        if v not in accepted:
            continue
        edges = [(u, v) for u in accepted[v] if (u, v) not in ties]
        trial = p
        try:
            for u, w in edges:
                trial = orient_edge(trial, u, w)
        except OrientationRejected:
            conflicts.append(
                {"kind": "cycle", "child": p.names[v], "parents": [p.names[u] for u in accepted[v]]}
            )
            continue
        p = trial
        anm.update(edges)
    return InPattern(p, frozenset(anm), frozenset(), conflicts, judge.audit)


def apply_orientation_rule(ip: InPattern) -> InPattern:
    """Orient every undirected edge at a variable with no potential
    non-identifiable path away from that variable, until a pass changes nothing."""
    p = ip.pattern
    rule = set(ip.oriented_by_rule)
    conflicts = list(ip.conflicts)
    changed = True
    while changed:
        changed = False
        for v in p.substantive:
            und = p.undirected_neighbors(v)
            if not und or potential_nonidentifiable_paths(p, v):
                continue
            for w in und:
                try:
                    p = orient_edge(p, v, w)
                except OrientationRejected:
                    conflicts.append({"kind": "rule-cycle", "edge": [p.names[v], p.names[w]]})
                    continue
                rule.add((v, w))
                changed = True
    return InPattern(p, ip.oriented_by_anm, frozenset(rule), conflicts, ip.audit)


def lcs_md(
    source: Dataset | MGraph | ResidualJudge,
    sk: SkeletonResult | Pattern,
    cfg: TestConfig = TestConfig(),
    max_parents: int | None = 4,
) -> InPattern:
    """Residual-independence orientation followed by the orientation rule."""
    return apply_orientation_rule(estimate_in_pattern(source, sk, cfg, max_parents))
