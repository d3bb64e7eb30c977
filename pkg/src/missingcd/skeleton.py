"""Skeleton and missingness-indicator discovery under test-wise deletion.

Stages, in order:

1. PC edge removal over the substantive variables with test-wise deleted tests.
2. Indicator parents: ``V_j -> R_i`` is kept unless some conditioning set
   separates them.  A self-masking variable cannot be tested against its own
   indicator, so its neighbours attach to the indicator instead.
3. Self-masking detection: two non-adjacent attached parents X, Y of ``R_i`` that
   are separated by a set containing ``V_i`` are impossible if ``R_i`` were a
   collider between them, so ``V_i`` must be self-masking.  Its indicator then
   gets the single parent ``V_i``.
4. Correction: adjacent pairs are retested on reweighted data, which removes
   edges produced by conditioning on a non-self-masking indicator.

Stages 3 and 4 repeat until nothing changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator, Mapping

from .data import Dataset
from .graph import MGraph, Pattern
from .independence import InsufficientData, TestConfig
from .testers import OracleTester, StatisticalTester, Tester, node_layout

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SepSet:
    """Separating set of a pair and how it was found (``deleted`` or ``corrected``)."""

    nodes: tuple[int, ...]
    kind: str = "deleted"


SepSetTable = dict[frozenset[int], SepSet]


@dataclass(frozen=True)
class SkeletonConfig:
    """``max_cond=None`` lifts the cap on conditioning-set size."""

    max_cond: int | None = 3
    max_sweeps: int = 10
    candidate_pairs: str = "all"

    def __post_init__(self) -> None:
        if self.max_cond is not None and self.max_cond < 0:
            raise ValueError("max_cond must be nonnegative")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be positive")
        if self.candidate_pairs not in ("shared", "all"):
            raise ValueError("candidate_pairs must be 'shared' or 'all'")


@dataclass
class SkeletonResult:
    pattern: Pattern
    sepsets: SepSetTable
    self_masking: frozenset[int]
    undetermined: frozenset[int]
    initial: Pattern
    audit: list[dict] = field(default_factory=list)
    converged: bool = True
    sweeps: int = 0

    def self_masking_names(self) -> list[str]:
        return [self.pattern.names[r] for r in sorted(self.self_masking)]

    def to_dict(self) -> dict:
        from .graphio import pattern_to_dict

        names = self.pattern.names
        return {
            "pattern": pattern_to_dict(self.pattern),
            "self_masking": self.self_masking_names(),
            "undetermined": [names[r] for r in sorted(self.undetermined)],
            "sepsets": [
                {"pair": [names[a] for a in sorted(k)], "set": [names[c] for c in s.nodes], "kind": s.kind}
                for k, s in sorted(self.sepsets.items(), key=lambda kv: sorted(kv[0]))
            ],
            "converged": self.converged,
            "sweeps": self.sweeps,
        }


def make_tester(source: Dataset | MGraph | Tester, cfg: TestConfig = TestConfig()) -> Tester:
    if isinstance(source, Dataset):
        return StatisticalTester(source, cfg)
    if isinstance(source, MGraph):
        return OracleTester(source)
    return source


def _subsets(pool: Iterable[int], size: int) -> Iterator[tuple[int, ...]]:
    return combinations(sorted(pool), size)


def _separated(test, *args) -> bool:
    try:
        return test(*args)
    except InsufficientData:
        # too few rows: skip this candidate, never treat as independence
        return False


def _empty_pattern(tester: Tester) -> Pattern:
    names, indicator_of = node_layout(tester.names, tester.partially_observed)
    return Pattern.empty(names, indicator_of)


def _adjacency(p: Pattern) -> dict[int, set[int]]:
    return {v: set(p.substantive_neighbors(v)) for v in p.substantive}


def _with_substantive(p: Pattern, adj: Mapping[int, set[int]]) -> Pattern:
    und = {(a, b) for a in adj for b in adj[a] if a < b}
    ind = {e for e in p.directed if p.is_indicator(e[1])}
    return p.replace_edges(ind, und)


def _with_indicator_parents(p: Pattern, r: int, parents: Iterable[int]) -> Pattern:
    directed = {e for e in p.directed if e[1] != r} | {(v, r) for v in parents}
    return p.replace_edges(directed, p.undirected)


def _within(size: int, max_cond: int | None) -> bool:
    return max_cond is None or size <= max_cond


def pc_skeleton_deleted(
    source: Dataset | MGraph | Tester,
    cfg: TestConfig = TestConfig(),
    max_cond: int | None = 3,
) -> tuple[Pattern, SepSetTable]:
    """PC edge removal among the substantive variables with test-wise deletion.

    Adjacencies are frozen at the start of each conditioning-set size, so the
    result does not depend on the order pairs are visited.
    """
    tester = make_tester(source, cfg)
    p = _empty_pattern(tester)
    n = tester.n_vars
    adj = {v: set(range(n)) - {v} for v in range(n)}
    sepsets: SepSetTable = {}
    size = 0
    while _within(size, max_cond):
        frozen = {v: set(a) for v, a in adj.items()}
        if all(len(a) - 1 < size for a in frozen.values()):
            break
        for x in range(n):
            for y in sorted(frozen[x]):
                if y < x or y not in adj[x]:
                    continue
                pools = [frozen[x] - {y}, frozen[y] - {x}]
                tried: set[tuple[int, ...]] = set()
                for pool in pools:
                    for z in _subsets(pool, size):
                        if z in tried:
                            continue
                        tried.add(z)
                        if _separated(tester.ci, x, y, z):
                            adj[x].discard(y)
                            adj[y].discard(x)
                            sepsets[frozenset((x, y))] = SepSet(z, "deleted")
                            break
                    if y not in adj[x]:
                        break
        size += 1
    return _with_substantive(p, adj), sepsets


def detect_indicator_parents(
    source: Dataset | MGraph | Tester,
    p: Pattern,
    cfg: TestConfig = TestConfig(),
    max_cond: int | None = 3,
) -> Pattern:
    """Attach to each indicator every variable it cannot be separated from.

    For ``R_i`` and ``V_j`` the conditioning sets are drawn from the other
    candidate parents of ``R_i`` and the neighbours of ``V_j``, never ``V_i``.
    """
    tester = make_tester(source, cfg)
    adj = _adjacency(p)
    for i in tester.partially_observed:
        r = p.indicator(i)
        parents = set(adj) - {i}
        size = 0
        while _within(size, max_cond):
            frozen = set(parents)
            pools = {j: (frozen | adj[j]) - {i, j} for j in frozen}
            if all(len(pool) < size for pool in pools.values()):
                break
            for j in sorted(frozen):
                for z in _subsets(pools[j], size):
                    if _separated(tester.indicator_ci, i, j, z):
                        parents.discard(j)
                        break
            size += 1
        p = _with_indicator_parents(p, r, parents)
    return p


def _self_masking_witness(
    tester: Tester,
    p: Pattern,
    sepsets: SepSetTable,
    i: int,
    max_cond: int | None,
) -> bool:
    r = p.indicator(i)
    attached = sorted(v for v in p.parents(r) if v != i)
    hypothesis = _with_indicator_parents(p, r, (i,))
    pairs = [(x, y) for x, y in combinations(attached, 2) if not p.adjacent(x, y)]
    if p.substantive_neighbors(i) <= set(attached):
        # every neighbour attached: an extraneous edge may be hiding the witness
        pairs += [(x, y) for x, y in combinations(attached, 2) if p.adjacent(x, y)]
    for x, y in pairs:
        sep = sepsets.get(frozenset((x, y)))
        if sep is not None and sep.kind == "deleted" and i in sep.nodes:
            return True
        pool = (p.substantive_neighbors(x) | p.substantive_neighbors(y)) - {x, y, i}
        size = 0
        while _within(size + 1, max_cond) and size <= len(pool):
            for extra in _subsets(pool, size):
                if _separated(tester.corrected_ci, x, y, (i, *extra), hypothesis):
                    return True
            size += 1
    return False


def detect_self_masking(
    source: Dataset | MGraph | Tester,
    p: Pattern,
    sepsets: SepSetTable,
    cfg: TestConfig = TestConfig(),
    max_cond: int | None = 3,
    flagged: Iterable[int] = (),
) -> tuple[Pattern, frozenset[int]]:
    """Flag self-masking indicators and give each the single parent it masks.

    Returns the updated pattern and the flagged indicator nodes.
    """
    tester = make_tester(source, cfg)
    flagged = set(flagged)
    for i in tester.partially_observed:
        r = p.indicator(i)
        if r in flagged:
            continue
        if _self_masking_witness(tester, p, sepsets, i, max_cond):
            flagged.add(r)
            p = _with_indicator_parents(p, r, (i,))
    return p, frozenset(flagged)


def undetermined_indicators(p: Pattern, flagged: Iterable[int]) -> frozenset[int]:
    """Unflagged indicators whose attached parents cover every neighbour of their
    variable: the data cannot tell these apart from self-masking ones."""
    flagged = set(flagged)
    out = set()
    for r in p.indicators:
        if r in flagged:
            continue
        v = p.indicator_of[r]
        if p.substantive_neighbors(v) <= set(p.parents(r)):
            out.add(r)
    return frozenset(out)


def _candidate_pairs(p: Pattern, mode: str) -> list[tuple[int, int]]:
    out = []
    for a, b in sorted(p.undirected):
        if mode == "all":
            out.append((a, b))
            continue
        common = (p.substantive_neighbors(a) & p.substantive_neighbors(b)) or (
            set(p.children(a)) & set(p.children(b))
        )
        if common:
            out.append((a, b))
    return out


def correct_extraneous_edges(
    source: Dataset | MGraph | Tester,
    p: Pattern,
    sepsets: SepSetTable,
    cfg: TestConfig = TestConfig(),
    max_cond: int | None = 3,
    candidate_pairs: str = "all",
) -> tuple[Pattern, SepSetTable, bool]:
    """One correction sweep.  Removals are applied together at the end of the sweep.

    Returns the new pattern, the updated separating sets and whether anything changed.
    """
    tester = make_tester(source, cfg)
    sepsets = dict(sepsets)
    removals: list[tuple[int, int, tuple[int, ...]]] = []
    for x, y in _candidate_pairs(p, candidate_pairs):
        pools = [p.substantive_neighbors(x) - {y}, p.substantive_neighbors(y) - {x}]
        top = max(len(pool) for pool in pools)
        found = None
        size = 0
        while found is None and size <= top and _within(size, max_cond):
            tried: set[tuple[int, ...]] = set()
            for pool in pools:
                for z in _subsets(pool, size):
                    if z in tried:
                        continue
                    tried.add(z)
                    if _separated(tester.corrected_ci, x, y, z, p):
                        found = z
                        break
                if found is not None:
                    break
            size += 1
        if found is not None:
            removals.append((x, y, found))
    for x, y, z in removals:
        p = p.without_edge(x, y)
        sepsets[frozenset((x, y))] = SepSet(z, "corrected")
    return p, sepsets, bool(removals)


def td_pc(
    source: Dataset | MGraph | Tester,
    cfg: TestConfig = TestConfig(),
    max_cond: int | None = 3,
) -> tuple[Pattern, SepSetTable]:
    """Plain test-wise deletion PC over variables and indicators (no self-masking
    handling, no correction); the comparison baseline."""
    tester = make_tester(source, cfg)
    p, sepsets = pc_skeleton_deleted(tester, cfg, max_cond)
    return detect_indicator_parents(tester, p, cfg, max_cond), sepsets


def sm_mvpc(
    source: Dataset | MGraph | Tester,
    cfg: TestConfig = TestConfig(),
    skel: SkeletonConfig = SkeletonConfig(),
) -> SkeletonResult:
    """Learn the skeleton, the indicator parents and the self-masking indicators.

    ``source`` is a dataset, a known m-graph (answers by d-separation) or a tester.
    """
    tester = make_tester(source, cfg)
    initial, sepsets = td_pc(tester, cfg, skel.max_cond)
    p = initial
    flagged: frozenset[int] = frozenset()
    converged = False
    sweeps = 0
    for sweeps in range(1, skel.max_sweeps + 1):
        p, now_flagged = detect_self_masking(tester, p, sepsets, cfg, skel.max_cond, flagged)
        p, sepsets, removed = correct_extraneous_edges(
            tester, p, sepsets, cfg, skel.max_cond, skel.candidate_pairs
        )
        changed = removed or now_flagged != flagged
        flagged = now_flagged
        if not changed:
            converged = True
            break
    if not converged:
        log.warning("correction did not reach a fixpoint in %d sweeps", skel.max_sweeps)
    return SkeletonResult(
        pattern=p,
        sepsets=sepsets,
        self_masking=flagged,
        undetermined=undetermined_indicators(p, flagged),
        initial=initial,
        audit=tester.audit,
        converged=converged,
        sweeps=sweeps,
    )
