"""Inverse-probability weights that undo the selection made by test-wise deletion.

Deleting rows with a missing value conditions the sample on the indicators of the
tested columns.  For an indicator whose parents are known and which is not
self-masking, the selection can be reversed by weighting each retained row with
``1 / P(R = 0 | parents)``.  Self-masking indicators cannot be reweighted; the
result is the distribution conditional on those indicators being zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, MutableMapping

import numpy as np
from sklearn.linear_model import LogisticRegression

from .data import Dataset, EmptyAfterDeletion
from .graph import GraphError, Pattern
from .independence import CITestOutcome, TestConfig, ci_test

log = logging.getLogger(__name__)

PROB_EPS = 1e-6
# weights above this multiple of the median are capped; ordinary tails are left
# alone because trimming them reintroduces the selection the weights undo
MAX_WEIGHT_RATIO = 100.0


def check_layout(d: Dataset, g: Pattern) -> None:
    """The pattern's substantive nodes must be the dataset columns, in order."""
    if tuple(g.names[i] for i in g.substantive) != d.names or g.substantive != tuple(range(d.d)):
        raise GraphError("pattern nodes do not match the dataset columns")


def self_masking_in(g: Pattern, v: int) -> bool:
    r = g.indicator(v)
    return r is not None and v in g.parents(r)


def indicator_parents(g: Pattern, v: int) -> tuple[int, ...]:
    """Substantive parents of the indicator of ``v`` (empty if fully observed)."""
    r = g.indicator(v)
    return () if r is None else g.parents(r)


def deletion_closure(g: Pattern, cols: Iterable[int]) -> frozenset[int]:
    """Smallest superset of ``cols`` containing the indicator parents of its
    non-self-masking members; these are the columns a reweighted test must observe."""
    out = set(cols)
    stack = list(out)
    while stack:
        v = stack.pop()
        if self_masking_in(g, v):
            continue
        for p in indicator_parents(g, v):
            if p not in out:
                out.add(p)
                stack.append(p)
    return frozenset(out)


def _design(x: np.ndarray, mean: np.ndarray, scale: np.ndarray) -> np.ndarray:
    z = (x - mean) / scale
    return np.hstack([z, z * z])


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """``P(R_v = 0 | features)`` for one non-self-masking indicator."""

    indicator: int
    variable: int
    parents_observed: tuple[int, ...]
    parents_missing: tuple[int, ...]
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    predictor: LogisticRegression | None
    constant: float = 1.0
    n_fit: int = 0

    @property
    def features(self) -> tuple[int, ...]:
        return tuple(sorted(self.parents_observed + self.parents_missing))

    def predict(self, d: Dataset, rows: np.ndarray | None = None) -> np.ndarray:
        """Probability of being observed for the given rows (all by default)."""
        vals = d.values if rows is None else d.values[rows]
        if self.predictor is None:
            return np.full(vals.shape[0], self.constant)
        x = vals[:, list(self.features)]
        # indicators of partially observed parents are zero on every usable row
        x = np.hstack([x, np.zeros((x.shape[0], len(self.parents_missing)))])
        if np.isnan(x).any():
            raise ValueError("propensity features must be observed on the requested rows")
        p = self.predictor.predict_proba(_design(x, self.feature_mean, self.feature_scale))[:, 1]
        return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)

    def to_dict(self, names: tuple[str, ...]) -> dict:
        out = {
            "indicator": names[self.variable],
            "features": [names[c] for c in self.features],
            "missing_parent_indicators": [f"R_{names[c]}" for c in self.parents_missing],
            "n_fit": self.n_fit,
        }
        if self.predictor is None:
            out["constant"] = self.constant
        else:
            out["intercept"] = float(self.predictor.intercept_[0])
            out["coef"] = [float(c) for c in self.predictor.coef_[0]]
        return out


def fit_propensity(d: Dataset, g: Pattern, indicator: int) -> PropensityModel:
    """Fit the observation probability of ``indicator`` from its parents in ``g``.

    Uses the rows where every parent is observed; parents that are themselves
    partially observed contribute their own indicator as a (constant zero) feature.
    """
    check_layout(d, g)
    g._check(indicator)
    var = g.indicator_of[indicator]
    if var is None:
        raise GraphError(f"{g.names[indicator]} is not an indicator")
    parents = g.parents(indicator)
    if var in parents:
        raise GraphError(f"{g.names[indicator]} is self-masking; its propensity is not estimable")
    label = ~d.mask[:, var]
    p_obs = tuple(p for p in parents if not d.mask[:, p].any())
    p_mis = tuple(p for p in parents if d.mask[:, p].any())
    rows = d.observed_rows(parents)
    y = label[rows]
    n_fit = int(rows.sum())
    nf = len(parents) + len(p_mis)
    if n_fit == 0:
        raise EmptyAfterDeletion(f"no rows with the parents of {g.names[indicator]} observed")
    if not parents or y.all() or not y.any():
        rate = float(np.clip(y.mean(), PROB_EPS, 1.0 - PROB_EPS))
        return PropensityModel(indicator, var, p_obs, p_mis, np.zeros(nf), np.ones(nf), None, rate, n_fit)
    feats = sorted(parents)
    x = d.values[np.ix_(rows, feats)]
    x = np.hstack([x, np.zeros((x.shape[0], len(p_mis)))])
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    clf = LogisticRegression(C=100.0, max_iter=2000)
    clf.fit(_design(x, mean, scale), y.astype(int))
    return PropensityModel(indicator, var, p_obs, p_mis, mean, scale, clf, 1.0, n_fit)


@dataclass(frozen=True, eq=False)
class RecoveryWeights:
    """Per-row weights for the rows where every column in ``columns`` is observed.

    ``factors`` holds the raw inverse propensity of each reweighted indicator;
    ``weights`` is their product, capped (see ``recovery_weights``) and rescaled
    to mean one.  ``normalization`` is the mean before rescaling.
    """

    weights: np.ndarray
    normalization: float
    rows: np.ndarray
    columns: frozenset[int]
    factors: dict[int, np.ndarray] = field(default_factory=dict)
    skipped_self_masking: tuple[int, ...] = ()
    n_clipped: int = 0

    @property
    def used(self) -> bool:
        return bool(self.factors)


def recovery_weights(
    d: Dataset,
    g: Pattern,
    target: Iterable[int],
    cache: MutableMapping | None = None,
    clip_quantile: float | None = None,
) -> RecoveryWeights:
    """Weights recovering the joint of ``target`` given the self-masking indicators.

    The rows kept are those where the deletion closure of ``target`` is observed,
    so that each required propensity can be evaluated.  The product of inverse
    propensities is capped at ``MAX_WEIGHT_RATIO`` times its median, or at the
    ``clip_quantile`` quantile when that is given.
    """
    if clip_quantile is not None and not 0.5 <= clip_quantile <= 1.0:
        raise ValueError("clip_quantile must lie in [0.5, 1]")
    check_layout(d, g)
    cols = deletion_closure(g, target)
    rows = d.observed_rows(cols)
    if not rows.any():
        raise EmptyAfterDeletion("no rows with the target columns observed")
    factors: dict[int, np.ndarray] = {}
    skipped = []
    for v in sorted(cols):
        r = g.indicator(v)
        if r is None or not d.mask[:, v].any():
            continue
        if self_masking_in(g, v):
            skipped.append(r)
            continue
        key = (r, g.parents(r))
        model = None if cache is None else cache.get(key)
        if model is None:
            model = fit_propensity(d, g, r)
            if cache is not None:
                cache[key] = model
        factors[r] = 1.0 / model.predict(d, rows)
    m = int(rows.sum())
    if not factors:
        return RecoveryWeights(np.ones(m), 1.0, rows, cols, {}, tuple(skipped))
    raw = np.prod(np.vstack(list(factors.values())), axis=0)
    if clip_quantile is None:
        cap = MAX_WEIGHT_RATIO * float(np.median(raw))
    else:
        cap = float(np.quantile(raw, clip_quantile))
    n_clipped = int((raw > cap).sum())
    w = np.minimum(raw, cap)
    if n_clipped and clip_quantile is None:
        log.warning("%d weights capped at %.3g; positivity is doubtful", n_clipped, cap)
    norm = float(w.mean())
    return RecoveryWeights(w / norm, norm, rows, cols, factors, tuple(skipped), n_clipped)


def corrected_ci_test(
    d: Dataset,
    g: Pattern,
    x: int,
    y: int,
    z: Iterable[int] = (),
    cfg: TestConfig = TestConfig(),
    cache: MutableMapping | None = None,
) -> CITestOutcome:
    """``ci_test`` on the reweighted sample, testing independence given only the
    self-masking indicators among the involved columns."""
    z = tuple(sorted(set(z)))
    rw = recovery_weights(d, g, (x, y, *z), cache)
    sub = d.take_rows(rw.rows)
    return ci_test(sub, x, y, z, rw.weights if rw.used else None, cfg)
