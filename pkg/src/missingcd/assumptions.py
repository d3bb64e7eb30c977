"""Checks for the structural assumptions under which the learners are exact."""

from __future__ import annotations

from itertools import combinations

from .graph import MGraph


def structural_condition_holds(g: MGraph, v: int) -> bool:
    """Whether ``v`` has two non-adjacent neighbours that ``v`` does not collide.

    Only then can a set containing ``v`` separate two variables that are both
    dependent on the indicator of ``v``.
    """
    nb = [u for u in g.substantive if g.adjacent(u, v)]
    for x, y in combinations(nb, 2):
        if g.adjacent(x, y):
            continue
        if (x, v) in g.edges and (y, v) in g.edges:
            continue
        return True
    return False


def reweighting_closed(g: MGraph) -> bool:
    """Whether the indicators that can be reweighted never need a self-masking
    variable to be observed.

    Reweighting the indicator of ``v`` needs the parents of that indicator, which
    may pull in further indicators.  If a self-masking variable is reached, the
    reweighted sample is conditioned on its indicator and a collider above it can
    stay open.
    """
    sm = g.self_masking_vars
    for r in g.indicators:
        if g.indicator_of[r] in sm:
            continue
        stack = list(g.parents(r))
        seen: set[int] = set()
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            if u in sm:
                return False
            ru = g.indicator(u)
            if ru is not None:
                stack.extend(g.parents(ru))
    return True


def weak_self_masking_only(g: MGraph) -> bool:
    """Every indicator that its own variable causes has no other parent."""
    return all(g.weak_self_masking(v) for v in g.self_masking_vars)


def satisfies_assumptions(g: MGraph) -> bool:
    return (
        weak_self_masking_only(g)
        and all(structural_condition_holds(g, v) for v in g.self_masking_vars)
        and reweighting_closed(g)
    )
