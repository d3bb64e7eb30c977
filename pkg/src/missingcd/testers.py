"""Independence queries as the learning algorithms see them.

A tester answers three kinds of question about substantive columns, each under
test-wise deletion:

``ci(x, y, z)``
    x independent of y given z, on rows where x, y and z are observed.
``indicator_ci(r, v, z)``
    the indicator of column r independent of v given z, on rows where v and z
    are observed.
``corrected_ci(x, y, z, pattern)``
    as ``ci`` after reweighting away every indicator the pattern marks as not
    self-masking.

``StatisticalTester`` answers from data; ``OracleTester`` answers from
d-separation in a known m-graph with the indicators that deletion conditions on.
Both keep an audit log with one record per query.
"""

from __future__ import annotations

from typing import Iterable, Protocol, Sequence

import numpy as np

from .data import Dataset, EmptyAfterDeletion
from .graph import GraphError, MGraph, Pattern, d_separated, indicator_name
from .independence import (
    CITestOutcome,
    InsufficientData,
    TestConfig,
    _seed_for,
    fisher_z_test,
    gcm_test,
    hsic_test,
    residualize,
    residualize_transforms,
)
from .recovery import check_layout, deletion_closure, recovery_weights, self_masking_in


def node_layout(names: Sequence[str], partially_observed: Iterable[int]) -> tuple[tuple[str, ...], tuple[int | None, ...]]:
    """Node names and indicator map: the columns, then ``R_<col>`` per partially observed column."""
    names = tuple(names)
    po = sorted(set(partially_observed))
    return (
        names + tuple(indicator_name(names[v]) for v in po),
        (None,) * len(names) + tuple(po),
    )


class Tester(Protocol):
    names: tuple[str, ...]
    partially_observed: tuple[int, ...]
    audit: list[dict]

    @property
    def n_vars(self) -> int: ...

    def ci(self, x: int, y: int, z: Iterable[int] = ()) -> bool: ...

    def indicator_ci(self, r: int, v: int, z: Iterable[int] = ()) -> bool: ...

    def corrected_ci(self, x: int, y: int, z: Iterable[int], pattern: Pattern) -> bool: ...


def _record(tester, kind: str, a: str, b: str, z: Sequence[int], out: CITestOutcome | None, **extra) -> None:
    rec = {"kind": kind, "x": a, "y": b, "z": [tester.names[c] for c in z]}
    if out is None:
        rec["skipped"] = extra.pop("reason")
    else:
        rec.update(
            statistic=out.statistic,
            p_value=out.p_value,
            independent=out.independent,
            effective_n=out.effective_n,
            weights_used=out.weights_used,
        )
    rec.update(extra)
    tester.audit.append(rec)


class StatisticalTester:
    """Answers queries from a dataset.

    Regression residuals are cached by (target, conditioning set, partially observed
    columns involved), which identifies the deleted rows; a result therefore equals
    the one ``ci_test`` would return for the same query.
    """

    def __init__(self, d: Dataset, cfg: TestConfig = TestConfig()):
        self.data = d
        self.cfg = cfg
        self.names = d.names
        self.partially_observed = d.partially_observed()
        self.audit: list[dict] = []
        self._po = frozenset(self.partially_observed)
        self._resid: dict = {}
        self._propensity: dict = {}

    @property
    def n_vars(self) -> int:
        return self.data.d

    def _residual(self, vals: np.ndarray, key: tuple, target: int, z: tuple[int, ...], weights) -> np.ndarray:
        if weights is not None:
            return residualize(vals, target, z, weights, self.cfg)
        k = (target, z, key)
        if k not in self._resid:
            self._resid[k] = residualize(vals, target, z, None, self.cfg)
        return self._resid[k]

    def _pair_test(self, d: Dataset, x: int, y: int, z: tuple[int, ...], weights, rows_key) -> CITestOutcome:
        rows = d.observed_rows((x, y, *z))
        if not rows.any():
            raise EmptyAfterDeletion("no complete rows")
        vals = d.values[rows]
        if vals.shape[0] < self.cfg.min_effective_n:
            raise InsufficientData(f"{vals.shape[0]} complete rows")
        if self.cfg.method == "fisherz":
            return fisher_z_test(vals[:, x], vals[:, y], vals[:, list(z)] if z else None, weights, self.cfg)
        seed = _seed_for(self.cfg, x, y, z)
        if not z:
            return hsic_test(vals[:, x], vals[:, y], weights, self.cfg, seed=seed)
        rx = self._residual(vals, rows_key, x, z, weights)
        ry = self._residual(vals, rows_key, y, z, weights)
        return hsic_test(rx, ry, weights, self.cfg, seed=seed)

    def ci(self, x: int, y: int, z: Iterable[int] = ()) -> bool:
        z = tuple(sorted(set(z)))
        key = frozenset({x, y, *z} & self._po)
        try:
            out = self._pair_test(self.data, x, y, z, None, key)
        except (InsufficientData, EmptyAfterDeletion) as exc:
            _record(self, "ci", self.names[x], self.names[y], z, None, reason=str(exc))
            raise InsufficientData(str(exc)) from None
        _record(self, "ci", self.names[x], self.names[y], z, out)
        return out.independent

    def indicator_ci(self, r: int, v: int, z: Iterable[int] = ()) -> bool:
        z = tuple(sorted(set(z)))
        rname = indicator_name(self.names[r])
        if r == v or r in z or v in z:
            raise ValueError("indicator variable, v and z must be disjoint")
        d = self.data
        rows = d.observed_rows((v, *z))
        try:
            if rows.sum() < self.cfg.min_effective_n:
                raise InsufficientData(f"{int(rows.sum())} complete rows")
            vals = d.values[rows]
            ind = d.mask[rows, r].astype(float)
            seed = _seed_for(self.cfg, r, v, z, tag=2)
            if self.cfg.method == "fisherz":
                out = fisher_z_test(ind, vals[:, v], vals[:, list(z)] if z else None, None, self.cfg)
            elif not z:
                out = hsic_test(ind, vals[:, v], None, self.cfg, delta_x=True, seed=seed)
            else:
                key = frozenset({v, *z} & self._po)
                aug = np.column_stack([vals, ind])
                rr = self._residual(aug, ("indicator", r, key), aug.shape[1] - 1, z, None)
                tk = (v, z, ("transforms", key))
                if tk not in self._resid:
                    self._resid[tk] = residualize_transforms(vals, v, z, self.cfg)
                out = gcm_test(rr, self._resid[tk], self.cfg)
        except InsufficientData as exc:
            _record(self, "indicator", rname, self.names[v], z, None, reason=str(exc))
            raise
        _record(self, "indicator", rname, self.names[v], z, out)
        return out.independent

    def corrected_ci(self, x: int, y: int, z: Iterable[int], pattern: Pattern) -> bool:
        z = tuple(sorted(set(z)))
        check_layout(self.data, pattern)
        try:
            rw = recovery_weights(self.data, pattern, (x, y, *z), self._propensity)
            sub = self.data.take_rows(rw.rows)
            if rw.used:
                out = self._pair_test(sub, x, y, z, rw.weights, None)
            else:
                key = frozenset(rw.columns & self._po)
                out = self._pair_test(sub, x, y, z, None, ("closure", key))
        except (InsufficientData, EmptyAfterDeletion) as exc:
            _record(self, "corrected", self.names[x], self.names[y], z, None, reason=str(exc))
            raise InsufficientData(str(exc)) from None
        _record(
            self,
            "corrected",
            self.names[x],
            self.names[y],
            z,
            out,
            reweighted=[pattern.names[r] for r in sorted(rw.factors)],
            self_masking=[pattern.names[r] for r in rw.skipped_self_masking],
        )
        return out.independent


class OracleTester:
    """Answers queries by d-separation in a known m-graph.

    Substantive nodes of ``g`` must come first, in column order, followed by their
    indicators.
    """

    def __init__(self, g: MGraph):
        po = tuple(g.indicator_of[r] for r in g.indicators)
        if g.substantive != tuple(range(len(g.substantive))) or list(po) != sorted(po):
            raise GraphError("oracle graph must list substantive nodes first, then indicators in variable order")
        self.graph = g
        self.names = tuple(g.names[i] for i in g.substantive)
        self.partially_observed = po
        self.audit: list[dict] = []

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def _indicators(self, cols: Iterable[int]) -> set[int]:
        return {r for c in cols if (r := self.graph.indicator(c)) is not None}

    def _answer(self, kind: str, a: int, b: int, cond: set[int], z: Sequence[int], **extra) -> bool:
        sep = d_separated(self.graph, a, b, frozenset(cond))
        out = CITestOutcome(float(not sep), 1.0 if sep else 0.0, sep, 0, False, 0.01)
        _record(self, kind, self.graph.names[a], self.graph.names[b], z, out, **extra)
        return sep

    def ci(self, x: int, y: int, z: Iterable[int] = ()) -> bool:
        z = tuple(sorted(set(z)))
        return self._answer("ci", x, y, set(z) | self._indicators((x, y, *z)), z)

    def indicator_ci(self, r: int, v: int, z: Iterable[int] = ()) -> bool:
        z = tuple(sorted(set(z)))
        if r == v or r in z or v in z:
            raise ValueError("indicator variable, v and z must be disjoint")
        ind = self.graph.indicator(r)
        if ind is None:
            raise GraphError(f"{self.names[r]} has no indicator")
        return self._answer("indicator", ind, v, set(z) | self._indicators((v, *z)), z)

    def corrected_ci(self, x: int, y: int, z: Iterable[int], pattern: Pattern) -> bool:
        """Independence given z and the indicators that reweighting cannot remove:
        those of self-masking columns (per ``pattern``) in the deletion closure."""
        z = tuple(sorted(set(z)))
        cols = deletion_closure(pattern, (x, y, *z))
        kept = self._indicators(c for c in cols if self_masking_in(pattern, c))
        return self._answer("corrected", x, y, set(z) | kept, z)
