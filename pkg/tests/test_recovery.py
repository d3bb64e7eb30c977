import numpy as np
import pytest

from missingcd.data import Dataset
from missingcd.graph import GraphError, MGraph, as_pattern
from missingcd.independence import TestConfig, ci_test
from missingcd.recovery import (
    corrected_ci_test,
    deletion_closure,
    fit_propensity,
    recovery_weights,
)

from scenarios import COLLIDER, collider_selection, mask, sigmoid


def test_mcar_propensity_is_the_observation_rate():
    rng = np.random.default_rng(0)
    n = 7000
    z = rng.normal(size=n)
    w = mask(z + rng.normal(size=n), rng.random(n) < 0.25)
    d = Dataset.from_array(np.column_stack([z, w]), ["Z", "W"])
    g = as_pattern(MGraph.build(["Z", "W"], [("Z", "W")], {"W": []}))
    model = fit_propensity(d, g, g.index("R_W"))
    assert model.predictor is None
    assert abs(model.constant - 0.75) < 0.05
    g2 = as_pattern(MGraph.build(["Z", "W"], [("Z", "W")], {"W": ["Z"]}))
    # a spurious parent costs little on average
    p = fit_propensity(d, g2, g2.index("R_W")).predict(d)
    assert np.mean(np.abs(p - 0.75)) < 0.02


def test_logistic_propensity_curve():
    rng = np.random.default_rng(1)
    n = 7000
    z = rng.normal(size=n)
    truth = 1.0 - sigmoid(2.0 * z - 1.0)
    w = mask(z + rng.normal(size=n), rng.random(n) > truth)
    d = Dataset.from_array(np.column_stack([z, w]), ["Z", "W"])
    g = as_pattern(MGraph.build(["Z", "W"], [("Z", "W")], {"W": ["Z"]}))
    p = fit_propensity(d, g, g.index("R_W")).predict(d)
    assert np.mean(np.abs(p - truth)) < 0.05


def test_never_missing_indicator_predicts_one():
    rng = np.random.default_rng(0)
    z = rng.normal(size=200)
    d = Dataset.from_array(np.column_stack([z, z]), ["Z", "W"])
    g = as_pattern(MGraph.build(["Z", "W"], [], {"W": ["Z"]}))
    p = fit_propensity(d, g, g.index("R_W")).predict(d)
    assert np.all(p > 0.99)


def test_self_masking_propensity_rejected():
    d = Dataset.from_array(np.array([[1.0], [np.nan], [2.0]]), ["Y"])
    g = as_pattern(MGraph.build(["Y"], [], {"Y": ["Y"]}))
    with pytest.raises(GraphError):
        fit_propensity(d, g, g.index("R_Y"))


def test_fully_observed_weights_are_one():
    d = Dataset.from_array(np.random.default_rng(0).normal(size=(100, 2)), ["A", "B"])
    g = as_pattern(MGraph.build(["A", "B"], [("A", "B")]))
    rw = recovery_weights(d, g, [0, 1])
    assert not rw.used and np.all(rw.weights == 1.0)


def test_self_masking_only_weights_are_one_and_never_in_product():
    rng = np.random.default_rng(0)
    y = rng.normal(size=500)
    x = rng.normal(size=500)
    y = mask(y, rng.random(500) < sigmoid(2 * y))
    d = Dataset.from_array(np.column_stack([x, y]), ["X", "Y"])
    g = as_pattern(MGraph.build(["X", "Y"], [], {"Y": ["Y"]}))
    rw = recovery_weights(d, g, [0, 1])
    assert np.all(rw.weights == 1.0)
    assert rw.skipped_self_masking == (g.index("R_Y"),)
    assert g.index("R_Y") not in rw.factors


def discrete_toy(n: int, seed: int) -> Dataset:
    """Binary C -> A and C -> R_A; P(A=1) = 0.5 exactly."""
    rng = np.random.default_rng(seed)
    c = (rng.random(n) < 0.5).astype(float)
    a = (rng.random(n) < 0.2 + 0.6 * c).astype(float)
    miss = rng.random(n) < 0.1 + 0.6 * c
    return Dataset.from_array(np.column_stack([c, mask(a, miss)]), ["C", "A"])


def test_discrete_toy_weights_are_inverse_propensities():
    d = discrete_toy(50_000, 0)
    g = as_pattern(MGraph.build(["C", "A"], [("C", "A")], {"A": ["C"]}))
    rw = recovery_weights(d, g, [1])
    c = d.values[rw.rows, 0]
    exact = np.where(c == 1, 1 / 0.3, 1 / 0.9)
    assert np.allclose(rw.factors[g.index("R_A")], exact, rtol=0.03)
    a = d.values[rw.rows, 1]
    naive = a.mean()
    weighted = float(np.average(a, weights=rw.weights))
    assert abs(naive - 0.5) > 0.1
    assert abs(weighted - 0.5) < 0.02


def test_deletion_closure_follows_indicator_parents():
    g = as_pattern(MGraph.build(["A", "B", "C", "D"], [], {"A": ["B"], "B": ["C"], "D": ["D", "A"]}))
    assert deletion_closure(g, [0]) == {0, 1, 2}
    assert deletion_closure(g, [3]) == {3}


def test_factors_decompose_over_target_union():
    rng = np.random.default_rng(3)
    n = 3000
    z = rng.normal(size=n)
    a = mask(z + rng.normal(size=n), rng.random(n) < sigmoid(z))
    b = mask(z + rng.normal(size=n), rng.random(n) < sigmoid(-z))
    d = Dataset.from_array(np.column_stack([z, a, b]), ["Z", "A", "B"])
    g = as_pattern(MGraph.build(["Z", "A", "B"], [("Z", "A"), ("Z", "B")], {"A": ["Z"], "B": ["Z"]}))
    ra, rb = g.index("R_A"), g.index("R_B")
    joint = recovery_weights(d, g, [1, 2])
    sa = recovery_weights(d, g, [0, 1])
    sb = recovery_weights(d, g, [0, 2])
    assert set(joint.factors) == {ra, rb}
    rows = np.flatnonzero(joint.rows)
    assert np.array_equal(joint.factors[ra], sa.factors[ra][np.isin(np.flatnonzero(sa.rows), rows)])
    assert np.array_equal(joint.factors[rb], sb.factors[rb][np.isin(np.flatnonzero(sb.rows), rows)])
    raw = joint.factors[ra] * joint.factors[rb]
    assert joint.n_clipped == 0
    assert np.allclose(joint.weights * joint.normalization, raw)
    assert joint.weights.mean() == pytest.approx(1.0)
    clipped = recovery_weights(d, g, [1, 2], clip_quantile=0.99)
    assert np.allclose(clipped.weights * clipped.normalization, np.minimum(raw, np.quantile(raw, 0.99)))


def test_positivity_cap():
    rng = np.random.default_rng(4)
    n = 4000
    z = rng.normal(size=n)
    a = mask(z + rng.normal(size=n), rng.random(n) < sigmoid(6 * z))
    d = Dataset.from_array(np.column_stack([z, a]), ["Z", "A"])
    g = as_pattern(MGraph.build(["Z", "A"], [("Z", "A")], {"A": ["Z"]}))
    rw = recovery_weights(d, g, [1])
    raw = rw.factors[g.index("R_A")]
    assert rw.n_clipped > 0
    assert rw.weights.max() * rw.normalization == pytest.approx(100 * np.median(raw))


def test_corrected_test_removes_spurious_dependence():
    d = collider_selection(5000, 0)
    assert not ci_test(d, "A", "B", ["C"]).independent
    assert corrected_ci_test(d, COLLIDER, 0, 1, [2]).independent


def test_corrected_equals_plain_when_fully_observed():
    d = Dataset.from_array(np.random.default_rng(0).normal(size=(400, 3)), ["A", "B", "C"])
    g = as_pattern(MGraph.build(["A", "B", "C"]))
    assert corrected_ci_test(d, g, 0, 1, [2]) == ci_test(d, 0, 1, [2])


def test_corrected_equals_plain_under_self_masking_only():
    rng = np.random.default_rng(2)
    n = 1500
    x = rng.normal(size=n)
    y = x + rng.normal(size=n)
    y = mask(y, rng.random(n) < sigmoid(2 * y - 1))
    z = rng.normal(size=n)
    d = Dataset.from_array(np.column_stack([x, y, z]), ["X", "Y", "Z"])
    g = as_pattern(MGraph.build(["X", "Y", "Z"], [("X", "Y")], {"Y": ["Y"]}))
    cfg = TestConfig(seed=4)
    assert corrected_ci_test(d, g, 0, 2, [1], cfg) == ci_test(d, 0, 2, [1], cfg=cfg)


def test_layout_mismatch_rejected():
    d = Dataset.from_array(np.zeros((10, 2)), ["B", "A"])
    g = as_pattern(MGraph.build(["A", "B"]))
    with pytest.raises(GraphError):
        recovery_weights(d, g, [0])
