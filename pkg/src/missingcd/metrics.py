"""Scores for a learned structure against the generating m-graph.

Edges are matched by node name, so an estimate only needs the same variable and
indicator names as the truth, not the same node order.  A rate whose denominator
is zero scores 1.0 and is listed in ``vacuous``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

from .direction import InPattern
from .graph import GraphError, MGraph, Pattern
from .skeleton import SkeletonResult

__all__ = [
    "EvalReport",
    "Scores",
    "UniverseMismatch",
    "config_hash",
    "evaluate",
    "indicator_metrics",
    "orientation_metrics",
    "skeleton_metrics",
]


class UniverseMismatch(GraphError):
    """Estimate and truth are over different nodes."""

    def __init__(self, extra: list[str], missing: list[str]):
        self.extra = extra
        self.missing = missing
        super().__init__(f"node sets differ: extra in estimate {extra}, missing from estimate {missing}")


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    shd: int
    vacuous: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["vacuous"] = list(self.vacuous)
        return out


def _rate(num: int, den: int, name: str, vacuous: list[str]) -> float:
    if den == 0:
        vacuous.append(name)
        return 1.0
    return num / den


def _scores(tp: int, n_est: int, n_true: int, shd: int) -> Scores:
    vac: list[str] = []
    p = _rate(tp, n_est, "precision", vac)
    r = _rate(tp, n_true, "recall", vac)
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return Scores(p, r, f1, shd, tuple(vac))


def _graph(est: Pattern | MGraph | SkeletonResult | InPattern) -> Pattern | MGraph:
    if isinstance(est, (SkeletonResult, InPattern)):
        return est.pattern
    return est


def _check_universe(est: Pattern | MGraph, truth: MGraph, indicators: bool) -> None:
    def names(g):
        nodes = g.substantive + (g.indicators if indicators else ())
        return {g.names[v] for v in nodes}

    a, b = names(est), names(truth)
    if a != b:
        raise UniverseMismatch(sorted(a - b), sorted(b - a))


def _adjacencies(g: Pattern | MGraph, indicators: bool) -> set[frozenset[str]]:
    out = set()
    for a, b in set(g.directed if isinstance(g, Pattern) else g.edges) | set(getattr(g, "undirected", ())):
        if not indicators and (g.is_indicator(a) or g.is_indicator(b)):
            continue
        out.add(frozenset((g.names[a], g.names[b])))
    return out


def skeleton_metrics(
    est: Pattern | MGraph | SkeletonResult | InPattern,
    truth: MGraph,
    indicators: bool = False,
) -> Scores:
    """Adjacency precision, recall and F1 over variable pairs; SHD is the size of
    the symmetric difference.  ``indicators`` also scores indicator-parent edges."""
    g = _graph(est)
    _check_universe(g, truth, indicators)
    e, t = _adjacencies(g, indicators), _adjacencies(truth, indicators)
    return _scores(len(e & t), len(e), len(t), len(e ^ t))


def orientation_metrics(est: Pattern | MGraph | InPattern, truth: MGraph) -> Scores:
    """Directed-edge scores over substantive variables.

    An undirected estimate is neutral for precision, a miss for recall and costs
    1 in SHD when the pair is adjacent in the truth.
    """
    g = _graph(est)
    _check_universe(g, truth, False)
    names = g.names
    if isinstance(g, Pattern):
        directed = {(names[a], names[b]) for a, b in g.directed if not g.is_indicator(b)}
    else:
        directed = {(names[a], names[b]) for a, b in g.substantive_edges()}
    t_dir = {(truth.names[a], truth.names[b]) for a, b in truth.substantive_edges()}
    e_adj, t_adj = _adjacencies(g, False), _adjacencies(truth, False)
    shd = len(e_adj ^ t_adj)
    for pair in e_adj & t_adj:
        a, b = sorted(pair)
        if not ((a, b) in directed and (a, b) in t_dir or (b, a) in directed and (b, a) in t_dir):
            shd += 1
    tp = len(directed & t_dir)
    return _scores(tp, len(directed), len(t_dir), shd)


@dataclass(frozen=True)
class IndicatorScores:
    parent_set_accuracy: float
    self_masking_accuracy: float
    vacuous: bool = False

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def indicator_metrics(est: SkeletonResult | Pattern | MGraph, truth: MGraph) -> IndicatorScores:
    """Fraction of indicators with the right self-masking flag, and with exactly
    the right substantive parents."""
    g = _graph(est)
    _check_universe(g, truth, True)
    if not truth.indicators:
        return IndicatorScores(1.0, 1.0, True)
    if isinstance(est, SkeletonResult):
        flagged = {g.names[r] for r in est.self_masking}
    else:
        flagged = {g.names[r] for r in g.indicators if g.indicator_of[r] in g.parents(r)}
    flag_ok = parents_ok = 0
    for r in truth.indicators:
        name = truth.names[r]
        er = g.index(name)
        flag_ok += (name in flagged) == truth.self_masking(truth.indicator_of[r])
        est_pa = {g.names[v] for v in g.parents(er)}
        true_pa = {truth.names[v] for v in truth.parents(r)}
        parents_ok += est_pa == true_pa
    k = len(truth.indicators)
    return IndicatorScores(parents_ok / k, flag_ok / k)


def config_hash(config: Mapping[str, Any] | None) -> str:
    text = json.dumps(config or {}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class EvalReport:
    """``skeleton`` scores substantive adjacencies; ``mgraph_skeleton`` adds the
    indicator-parent edges."""

    skeleton: Scores
    mgraph_skeleton: Scores
    orientation: Scores
    indicator: IndicatorScores
    meta: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "skeleton": self.skeleton.to_dict(),
            "mgraph_skeleton": self.mgraph_skeleton.to_dict(),
            "orientation": self.orientation.to_dict(),
            "indicator": self.indicator.to_dict(),
            "meta": dict(self.meta),
        }

    def row(self) -> dict[str, Any]:
        """Flat record for one CSV line."""
        out: dict[str, Any] = dict(self.meta)
        for part in ("skeleton", "mgraph_skeleton", "orientation"):
            s: Scores = getattr(self, part)
            out.update({f"{part}_{k}": getattr(s, k) for k in ("precision", "recall", "f1", "shd")})
        out["indicator_parent_set_accuracy"] = self.indicator.parent_set_accuracy
        out["indicator_self_masking_accuracy"] = self.indicator.self_masking_accuracy
        return out

    def csv(self) -> str:
        buf = io.StringIO()
        row = self.row()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow(row)
        return buf.getvalue()


def evaluate(
    skeleton: SkeletonResult | Pattern,
    oriented: InPattern | Pattern | None,
    truth: MGraph,
    meta: Mapping[str, Any] | None = None,
) -> EvalReport:
    """Full report.  Without ``oriented`` the skeleton pattern is scored for direction."""
    return EvalReport(
        skeleton=skeleton_metrics(skeleton, truth),
        mgraph_skeleton=skeleton_metrics(skeleton, truth, indicators=True),
        orientation=orientation_metrics(oriented if oriented is not None else _graph(skeleton), truth),
        indicator=indicator_metrics(skeleton, truth),
        meta=dict(meta or {}),
    )
