import numpy as np
import pytest

from conftest import xyzw_mgraph
from missingcd.data import Dataset
from missingcd.graph import MGraph
from missingcd.independence import TestConfig
from missingcd.skeleton import (
    SkeletonConfig,
    detect_indicator_parents,
    pc_skeleton_deleted,
    sm_mvpc,
    td_pc,
)
from missingcd.synth import random_spec, sample


def adjacencies(p):
    return {frozenset((p.names[a], p.names[b])) for a, b in p.directed | p.undirected if not p.is_indicator(b)}


def indicator_parents(p):
    return {p.names[r]: {p.names[v] for v in p.parents(r)} for r in p.indicators}


def pairs(*names):
    return {frozenset(n.split("-")) for n in names}


XYZW_ADJ = pairs("X-Y", "X-Z", "Y-Z", "Y-W", "Z-W")


def test_xyzw_deleted_pc_keeps_true_adjacencies():
    p, sep = pc_skeleton_deleted(xyzw_mgraph())
    assert adjacencies(p) == XYZW_ADJ
    g = xyzw_mgraph()
    assert sep[frozenset((g.index("X"), g.index("W")))].nodes == (g.index("Y"), g.index("Z"))


def test_xyzw_indicator_parents_before_self_masking():
    g = xyzw_mgraph()
    p, _ = pc_skeleton_deleted(g)
    parents = indicator_parents(detect_indicator_parents(g, p))
    assert parents["R_W"] == {"Z"}
    assert {"X", "W"} <= parents["R_Y"]
    assert "Y" not in parents["R_Y"]


def test_xyzw_full_pipeline_flags_y():
    res = sm_mvpc(xyzw_mgraph())
    assert adjacencies(res.pattern) == XYZW_ADJ
    assert indicator_parents(res.pattern) == {"R_Y": {"Y"}, "R_W": {"Z"}}
    assert res.self_masking_names() == ["R_Y"]
    assert res.converged and not res.undetermined


def collider_indicator_graph() -> MGraph:
    """A -> C -> B with R_C caused by A and B: deleting on C opens A -> R_C <- B."""
    return MGraph.build(["A", "B", "C"], [("A", "C"), ("C", "B")], {"C": ["A", "B"]})


def test_correction_removes_collider_indicator_edge():
    g = collider_indicator_graph()
    res = sm_mvpc(g)
    assert frozenset(("A", "B")) in adjacencies(res.initial)
    assert adjacencies(res.pattern) == pairs("A-C", "C-B")
    assert res.sepsets[frozenset((0, 1))].kind == "corrected"
    assert not res.self_masking


def test_shared_candidate_mode_also_fixes_collider_case():
    res = sm_mvpc(collider_indicator_graph(), skel=SkeletonConfig(candidate_pairs="shared"))
    assert adjacencies(res.pattern) == pairs("A-C", "C-B")


def test_self_masking_found_behind_extraneous_edge():
    # B - C is extraneous until corrected (R_C's parent E descends from the
    # collider D), so A's only non-adjacent neighbour pair starts out adjacent
    g = MGraph.build(
        ["A", "B", "C", "D", "E"],
        [("A", "B"), ("A", "C"), ("A", "D"), ("B", "D"), ("C", "D"), ("D", "E")],
        {"A": ["A"], "C": ["E"], "D": ["D"], "E": []},
    )
    res = sm_mvpc(g, skel=SkeletonConfig(max_cond=None))
    assert frozenset(("B", "C")) in adjacencies(res.initial)
    assert adjacencies(res.pattern) == pairs("A-B", "A-C", "A-D", "B-D", "C-D", "D-E")
    assert set(res.self_masking_names()) == {"R_A", "R_D"}
    assert indicator_parents(res.pattern) == {"R_A": {"A"}, "R_C": {"E"}, "R_D": {"D"}, "R_E": set()}


def random_dag(n: int, rng: np.random.Generator) -> MGraph:
    names = [f"V{i}" for i in range(n)]
    order = rng.permutation(n)
    edges = [(names[order[a]], names[order[b]]) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.4]
    return MGraph.build(names, edges)


def test_fully_observed_oracle_pc_recovers_skeleton():
    rng = np.random.default_rng(0)
    for _ in range(150):
        g = random_dag(int(rng.integers(2, 7)), rng)
        res = sm_mvpc(g, skel=SkeletonConfig(max_cond=None))
        truth = {frozenset((g.names[a], g.names[b])) for a, b in g.edges}
        assert adjacencies(res.pattern) == truth
        assert adjacencies(res.initial) == truth


def test_sepset_invariants_on_random_specs():
    for seed in range(30):
        g = random_spec(8, 4, 2, seed).graph
        res = sm_mvpc(g)
        p = res.pattern
        for a in p.substantive:
            for b in p.substantive:
                if a < b:
                    assert p.adjacent(a, b) != (frozenset((a, b)) in res.sepsets)
        for r in res.self_masking:
            assert p.parents(r) == (p.indicator_of[r],)


def test_edgeless_data_gives_edgeless_pattern():
    d = Dataset.from_array(np.random.default_rng(0).normal(size=(600, 4)))
    res = sm_mvpc(d)
    assert adjacencies(res.pattern) == set()


def test_single_column():
    d = Dataset.from_array(np.random.default_rng(0).normal(size=(100, 1)))
    res = sm_mvpc(d)
    assert not res.pattern.directed and not res.pattern.undirected


def test_mcar_indicator_has_no_parents():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2000, 3))
    x[:, 1] += x[:, 0]
    x[rng.random(2000) < 0.2, 2] = np.nan
    p = td_pc(Dataset.from_array(x, ["A", "B", "C"]))[0]
    assert indicator_parents(p) == {"R_C": set()}


def self_masked_chain(n: int, seed: int) -> Dataset:
    """X -> Y -> Z, with Y self-masking."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2, 2, n)
    y = np.tanh(x) + 0.5 * rng.uniform(-1, 1, n)
    z = np.sin(2 * y) + 0.3 * rng.uniform(-1, 1, n)
    v = np.column_stack([x, y, z])
    v[rng.random(n) < 1 / (1 + np.exp(-(3 * (y - y.mean()) / y.std() - 1.5))), 1] = np.nan
    return Dataset.from_array(v, ["X", "Y", "Z"])


def test_statistical_chain_self_masking_flagged():
    res = sm_mvpc(self_masked_chain(4000, 0))
    assert res.self_masking_names() == ["R_Y"]
    assert adjacencies(res.pattern) == pairs("X-Y", "Y-Z")


def test_self_masking_flags_relabel_equivariant():
    d = self_masked_chain(900, 1)
    perm = [2, 0, 1]
    shuffled = Dataset.from_array(d.values[:, perm], [d.names[j] for j in perm])
    a = sm_mvpc(d, TestConfig(seed=3))
    b = sm_mvpc(shuffled, TestConfig(seed=3))
    assert set(a.self_masking_names()) == set(b.self_masking_names())
    assert adjacencies(a.pattern) == adjacencies(b.pattern)


def test_oracle_self_masking_relabel_equivariant():
    for seed in range(10):
        g = random_spec(7, 3, 2, seed).graph
        perm = list(np.random.default_rng(seed).permutation(7))
        names = [g.names[v] for v in perm]
        edges = [(g.names[a], g.names[b]) for a, b in g.substantive_edges()]
        ind = {g.names[g.indicator_of[r]]: [g.names[v] for v in g.parents(r)] for r in g.indicators}
        h = MGraph.build(names, edges, ind)
        assert set(sm_mvpc(g).self_masking_names()) == set(sm_mvpc(h).self_masking_names())


def test_audit_records_every_test():
    res = sm_mvpc(self_masked_chain(500, 2))
    kinds = {rec["kind"] for rec in res.audit}
    assert {"ci", "indicator"} <= kinds
    assert all("independent" in rec for rec in res.audit)


def test_config_validation():
    with pytest.raises(ValueError):
        SkeletonConfig(candidate_pairs="some")
    with pytest.raises(ValueError):
        SkeletonConfig(max_sweeps=0)
