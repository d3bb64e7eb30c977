import pytest

from conftest import xyzw_mgraph, xyzw_pattern
from missingcd.graph import MGraph, skeleton_of
from missingcd.direction import (
    InPattern,
    OracleResiduals,
    anm_direction_test,
    apply_orientation_rule,
    estimate_in_pattern,
    lcs_md,
)
from missingcd.skeleton import sm_mvpc
from scenarios import masked_cause_data


def directed_names(p):
    return {(p.names[a], p.names[b]) for a, b in p.directed if not p.is_indicator(b)}


def undirected_names(p):
    return {frozenset((p.names[a], p.names[b])) for a, b in p.undirected}


XYZW_DIRECTED = {("X", "Z"), ("Y", "Z"), ("Y", "W"), ("Z", "W")}


def test_oracle_estimate_on_xyzw_is_xyzw_pattern():
    g = xyzw_mgraph()
    ip = estimate_in_pattern(OracleResiduals(g), sm_mvpc(g))
    assert directed_names(ip.pattern) == XYZW_DIRECTED
    assert undirected_names(ip.pattern) == {frozenset("XY")}
    assert directed_names(ip.pattern) == directed_names(xyzw_pattern())


def test_rule_orients_exactly_x_to_y_on_xyzw_pattern():
    ip = apply_orientation_rule(InPattern(xyzw_pattern()))
    assert directed_names(ip.pattern) == XYZW_DIRECTED | {("X", "Y")}
    g = ip.pattern
    assert {(g.names[a], g.names[b]) for a, b in ip.oriented_by_rule} == {("X", "Y")}
    assert not ip.pattern.undirected


def test_full_oracle_pipeline_on_xyzw():
    g = xyzw_mgraph()
    ip = lcs_md(g, sm_mvpc(g))
    assert directed_names(ip.pattern) == XYZW_DIRECTED | {("X", "Y")}
    assert ip.provenance()[(g.index("X"), g.index("Y"))] == "rule"


class FakeJudge:
    def __init__(self, accept):
        self.accept = accept
        self.audit = []

    def accepts(self, child, parents):
        return (child, tuple(parents)) in self.accept


def triangle():
    return skeleton_of(MGraph.build(["A", "B", "C"], [("A", "B"), ("B", "C"), ("A", "C")]))


def test_tie_leaves_edge_undirected():
    p = skeleton_of(MGraph.build(["A", "B"], [("A", "B")]))
    ip = estimate_in_pattern(FakeJudge({(0, (1,)), (1, (0,))}), p)
    assert undirected_names(ip.pattern) == {frozenset("AB")}
    assert ip.conflicts == [{"kind": "both-directions", "edge": ["A", "B"]}]


def test_cycle_drops_later_parent_set_whole():
    judge = FakeJudge({(1, (0,)), (2, (1,)), (0, (2,))})
    ip = estimate_in_pattern(judge, triangle())
    # A <- C is examined first and accepted, then B <- A; C <- B would close the cycle
    assert directed_names(ip.pattern) == {("C", "A"), ("A", "B")}
    assert undirected_names(ip.pattern) == {frozenset("BC")}
    assert ip.conflicts == [{"kind": "cycle", "child": "C", "parents": ["B"]}]


def test_largest_candidate_set_first():
    judge = FakeJudge({(2, (0, 1)), (2, (0,))})
    ip = estimate_in_pattern(judge, skeleton_of(MGraph.build(["A", "B", "C"], [("A", "C"), ("B", "C")])))
    assert directed_names(ip.pattern) == {("A", "C"), ("B", "C")}


def test_max_parents_limits_candidates():
    judge = FakeJudge({(2, (0, 1))})
    p = skeleton_of(MGraph.build(["A", "B", "C"], [("A", "C"), ("B", "C")]))
    assert directed_names(estimate_in_pattern(judge, p, max_parents=1).pattern) == set()


def test_oracle_judge_rejects_nonidentifiable_parent_set():
    g = xyzw_mgraph()
    judge = OracleResiduals(g)
    assert not judge.accepts(g.index("Y"), (g.index("X"),))
    assert judge.accepts(g.index("W"), (g.index("Y"), g.index("Z")))
    assert not judge.accepts(g.index("W"), (g.index("Y"),))


def test_anm_forward_accepted_reverse_rejected_under_self_masking():
    d = masked_cause_data(5000, 0)
    assert 0.25 < d.mask[:, 0].mean() < 0.35
    assert anm_direction_test(d, 1, [0]).independent
    assert not anm_direction_test(d, 0, [1]).independent


def test_statistical_lcs_md_orients_masked_cause():
    d = masked_cause_data(5000, 1)
    ip = lcs_md(d, sm_mvpc(d))
    assert directed_names(ip.pattern) == {("X", "Y")}
    assert ip.oriented_by_anm == {(0, 1)}


def test_anm_test_validation():
    d = masked_cause_data(200, 0)
    with pytest.raises(ValueError):
        anm_direction_test(d, 1, [])
    with pytest.raises(ValueError):
        anm_direction_test(d, 1, [1])


def test_deterministic():
    d = masked_cause_data(1500, 3)
    a = lcs_md(d, sm_mvpc(d)).to_dict()
    b = lcs_md(d, sm_mvpc(d)).to_dict()
    assert a == b


def test_in_pattern_invariants():
    p = xyzw_pattern()
    with pytest.raises(ValueError):
        InPattern(p, frozenset({(0, 1)}))
    e = (p.index("Z"), p.index("W"))
    with pytest.raises(ValueError):
        InPattern(p, frozenset({e}), frozenset({e}))
