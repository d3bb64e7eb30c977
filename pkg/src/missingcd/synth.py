"""Synthetic additive-noise data with missingness, and the matching ground truth.

Each variable is ``f(parents) + noise``, with ``f`` a random one-hidden-layer tanh
network of width 50 (or linear) and uniform noise by default.  Each partially
observed variable gets one missingness mechanism:

``self_masking``
    logistic in the variable's own standardized value (slope 3), or a hard
    upper threshold;
``parent``
    logistic in the standardized values of one or two fully observed variables;
``mcar``
    a constant rate.

Intercepts and thresholds are tuned on a pilot sample to hit the target rate.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .assumptions import satisfies_assumptions, structural_condition_holds
from .data import Dataset
from .direction import OracleResiduals
from .graph import MGraph, d_separated
from .graphio import mgraph_from_dict, pattern_to_dict
from .testers import OracleTester

HIDDEN = 50
PILOT_N = 4000
SELF_MASKING_SLOPE = 3.0
RATE_TOLERANCE = 0.05
NOISE_LAWS = ("uniform", "gaussian", "laplace")

log = logging.getLogger(__name__)


class StructuralConditionUnsatisfiable(ValueError):
    """No admissible graph was found within the draw budget."""


@dataclass(frozen=True, eq=False)
class ScmSpec:
    """Everything needed to resample a dataset: graph, mechanisms, noise, missingness."""

    graph: MGraph
    mechanisms: dict[int, dict[str, Any]]
    noise: dict[int, dict[str, Any]]
    missingness: dict[int, dict[str, Any]]
    seed: int
    checks: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        g = self.graph
        for v in g.substantive:
            pa = [u for u in g.parents(v)]
            m = self.mechanisms[v]
            arity = len(m.get("parents", []))
            if arity != len(pa) or sorted(m.get("parents", [])) != pa:
                raise ValueError(f"mechanism of {g.names[v]} does not match its parents")
        for v, mech in self.missingness.items():
            r = g.indicator(v)
            if r is None:
                raise ValueError(f"{g.names[v]} has a mechanism but no indicator")
            if mech["kind"] == "self_masking" and g.parents(r) != (v,):
                raise ValueError(f"self-masking indicator of {g.names[v]} must have only its variable as parent")
            if mech["kind"] == "parent" and sorted(mech["parents"]) != list(g.parents(r)):
                raise ValueError(f"indicator mechanism of {g.names[v]} does not match its parents")
            if not 0.0 <= mech.get("target_rate", 0.0) < 0.9:
                raise ValueError("target missing rates must lie in [0, 0.9)")
        if set(self.missingness) != {g.indicator_of[r] for r in g.indicators}:
            raise ValueError("every indicator needs a missingness mechanism")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.graph.names[v] for v in self.graph.substantive)

    def to_dict(self) -> dict:
        names = self.graph.names

        def enc(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            return x

        def mech_json(m: Mapping[str, Any]) -> dict:
            out = {k: enc(v) for k, v in m.items()}
            if "parents" in out:
                out["parents"] = [names[p] for p in out["parents"]]
            return out

        return {
            "graph": pattern_to_dict(self.graph),
            "mechanisms": {names[v]: mech_json(m) for v, m in sorted(self.mechanisms.items())},
            "noise": {names[v]: dict(m) for v, m in sorted(self.noise.items())},
            "missingness": {names[v]: mech_json(m) for v, m in sorted(self.missingness.items())},
            "seed": self.seed,
            "checks": self.checks,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScmSpec":
        g = mgraph_from_dict(d["graph"])

        def dec(m: Mapping[str, Any]) -> dict:
            out = dict(m)
            for k in ("w1", "b1", "w2", "coef", "weights", "centers", "spreads"):
                if k in out:
                    out[k] = np.asarray(out[k], dtype=float)
            if "parents" in out:
                out["parents"] = [g.index(p) for p in out["parents"]]
            return out

        return cls(
            g,
            {g.index(k): dec(m) for k, m in d["mechanisms"].items()},
            {g.index(k): dict(m) for k, m in d["noise"].items()},
            {g.index(k): dec(m) for k, m in d["missingness"].items()},
            int(d["seed"]),
            dict(d.get("checks", {})),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True, eq=False)
class GeneratedBatch:
    dataset: Dataset
    complete: np.ndarray
    noise: np.ndarray
    spec: ScmSpec


def _mechanism(kind: str, parents: Sequence[int], rng: np.random.Generator) -> dict[str, Any]:
    parents = sorted(parents)
    if not parents:
        return {"kind": "root", "parents": []}
    k = len(parents)
    if kind == "linear":
        mag = rng.uniform(0.5, 1.5, k)
        return {"kind": "linear", "parents": parents, "coef": mag * rng.choice([-1.0, 1.0], k), "scale": 1.0}
    if kind != "mlp":
        raise ValueError(f"unknown mechanism {kind!r}")
    w1 = rng.uniform(-1.0, 1.0, (k, HIDDEN))
    w1 /= np.linalg.norm(w1, axis=0, keepdims=True)
    b1 = rng.uniform(-1.0, 1.0, HIDDEN)
    w2 = rng.uniform(-1.0, 1.0, HIDDEN)
    w2 /= np.linalg.norm(w2)
    return {"kind": "mlp", "parents": parents, "w1": w1, "b1": b1, "w2": w2, "scale": 1.0}


def mechanism_output(m: Mapping[str, Any], values: np.ndarray) -> np.ndarray:
    """``f(parents)`` for a mechanism, given the full complete-value matrix."""
    n = values.shape[0]
    if m["kind"] == "root":
        return np.zeros(n)
    x = values[:, m["parents"]]
    if m["kind"] == "linear":
        return m["scale"] * (x @ m["coef"])
    return m["scale"] * (np.tanh(x @ m["w1"] + m["b1"]) @ m["w2"])


def _noise(law: Mapping[str, Any], n: int, rng: np.random.Generator) -> np.ndarray:
    s = law.get("scale", 1.0)
    if law["law"] == "uniform":
        return rng.uniform(-s, s, n)
    if law["law"] == "gaussian":
        return rng.normal(0.0, s, n)
    if law["law"] == "laplace":
        return rng.laplace(0.0, s, n)
    raise ValueError(f"unknown noise law {law['law']!r}")


def missing_probability(mech: Mapping[str, Any], values: np.ndarray, v: int) -> np.ndarray:
    """Per-row probability that ``v`` is missing, from the complete values."""
    n = values.shape[0]
    kind = mech["kind"]
    if kind == "mcar":
        return np.full(n, mech["rate"])
    if kind == "self_masking":
        x = values[:, v]
        if mech["form"] == "threshold":
            return (x >= mech["threshold"]).astype(float)
        return expit(mech["intercept"] + mech["slope"] * (x - mech["center"]) / mech["spread"])
    if kind == "parent":
        x = (values[:, mech["parents"]] - mech["centers"]) / mech["spreads"]
        return expit(mech["intercept"] + x @ mech["weights"])
    raise ValueError(f"unknown missingness kind {kind!r}")


def _complete(g: MGraph, mechs, noise, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    d = len(g.substantive)
    eps = np.zeros((n, d))
    for v in range(d):
        eps[:, v] = _noise(noise[v], n, rng)
    vals = np.zeros((n, d))
    for v in g.topological_order:
        if v < d:
            vals[:, v] = mechanism_output(mechs[v], vals) + eps[:, v]
    return vals, eps


def _tune_rate(prob_of, target: float) -> float:
    """Intercept ``b`` with mean(prob_of(b)) == target, by bracketing root search."""
    if target <= 0.0:
        return -50.0
    f = lambda b: float(np.mean(prob_of(b))) - target  # noqa: E731
    lo, hi = -30.0, 30.0
    return float(brentq(f, lo, hi, xtol=1e-10))


def spec_from_graph(
    g: MGraph,
    seed: int,
    rate: float | Mapping[str, float] = 0.2,
    mechanism: str = "mlp",
    noise: str = "uniform",
    self_masking_form: str = "logistic",
    checks: Mapping[str, Any] | None = None,
) -> ScmSpec:
    """Random mechanisms on a fixed m-graph.

    Indicators whose only parent is their own variable become self-masking, other
    indicators with parents become parent-driven, and parentless ones MCAR.
    ``rate`` is a single target rate or a map from variable name to rate.
    """
    if noise not in NOISE_LAWS:
        raise ValueError(f"noise must be one of {NOISE_LAWS}")
    if self_masking_form not in ("logistic", "threshold"):
        raise ValueError("self_masking_form must be 'logistic' or 'threshold'")
    rng = np.random.default_rng([seed, 0])
    d = len(g.substantive)
    if g.substantive != tuple(range(d)):
        raise ValueError("substantive nodes must come first")
    mechs = {v: _mechanism(mechanism, [u for u in g.parents(v)], rng) for v in range(d)}
    laws = {v: {"law": noise, "scale": 1.0} for v in range(d)}
    pilot_rng = np.random.default_rng([seed, 1])
    # scale each mechanism to unit output spread on a pilot sample, in causal order
    pilot = np.zeros((PILOT_N, d))
    pilot_eps = {v: _noise(laws[v], PILOT_N, pilot_rng) for v in range(d)}
    for v in g.topological_order:
        if v >= d:
            continue
        m = mechs[v]
        if m["kind"] == "mlp":
            out = mechanism_output(m, pilot)
            sd = float(out.std())
            m["scale"] = 1.0 / sd if sd > 0 else 1.0
        pilot[:, v] = mechanism_output(m, pilot) + pilot_eps[v]

    def target_for(v: int) -> float:
        return float(rate[g.names[v]]) if isinstance(rate, Mapping) else float(rate)

    miss: dict[int, dict[str, Any]] = {}
    for r in g.indicators:
        v = g.indicator_of[r]
        pa = list(g.parents(r))
        t = target_for(v)
        if pa == [v]:
            center = float(pilot[:, v].mean())
            spread = float(pilot[:, v].std()) or 1.0
            if self_masking_form == "threshold":
                thr = float(np.quantile(pilot[:, v], 1.0 - t))
                miss[v] = {"kind": "self_masking", "form": "threshold", "threshold": thr, "target_rate": t}
            else:
                z = (pilot[:, v] - center) / spread
                b = _tune_rate(lambda b: expit(b + SELF_MASKING_SLOPE * z), t)
                miss[v] = {
                    "kind": "self_masking",
                    "form": "logistic",
                    "slope": SELF_MASKING_SLOPE,
                    "intercept": b,
                    "center": center,
                    "spread": spread,
                    "target_rate": t,
                }
        elif pa:
            if v in pa:
                raise ValueError(f"{g.names[v]}: only weak self-masking is supported")
            centers = pilot[:, pa].mean(axis=0)
            spreads = pilot[:, pa].std(axis=0)
            spreads[spreads == 0] = 1.0
            weights = rng.uniform(1.0, 2.0, len(pa)) * rng.choice([-1.0, 1.0], len(pa))
            z = (pilot[:, pa] - centers) / spreads @ weights
            b = _tune_rate(lambda b: expit(b + z), t)
            miss[v] = {
                "kind": "parent",
                "parents": pa,
                "weights": weights,
                "intercept": b,
                "centers": centers,
                "spreads": spreads,
                "target_rate": t,
            }
        else:
            miss[v] = {"kind": "mcar", "rate": t, "target_rate": t}
    return ScmSpec(g, mechs, laws, miss, int(seed), dict(checks or {}))


def random_spec(
    n_vars: int,
    n_missing: int,
    n_self_masking: int,
    seed: int,
    degree: float = 2.0,
    rate: float = 0.2,
    mechanism: str = "mlp",
    noise: str = "uniform",
    self_masking_form: str = "logistic",
    max_draws: int = 1000,
) -> ScmSpec:
    """A random DAG with the requested missingness, redrawn until the assumptions hold.

    The DAG is Erdos-Renyi over a random order with expected degree ``degree``.
    Self-masking variables are chosen among those with two non-adjacent neighbours
    they do not collide; other missing variables depend on one or two fully
    observed variables (MCAR if there are none).
    """
    if not 0 <= n_self_masking <= n_missing <= n_vars:
        raise ValueError("need 0 <= n_self_masking <= n_missing <= n_vars")
    if n_vars < 1:
        raise ValueError("n_vars must be positive")
    if not 0.0 < rate < 0.9:
        raise ValueError("rate must lie in (0, 0.9)")
    rng = np.random.default_rng([seed, 2])
    names = [f"X{i + 1}" for i in range(n_vars)]
    p_edge = min(1.0, degree / (n_vars - 1)) if n_vars > 1 else 0.0
    for draw in range(max_draws):
        order = rng.permutation(n_vars)
        edges = [
            (names[order[a]], names[order[b]])
            for a in range(n_vars)
            for b in range(a + 1, n_vars)
            if rng.random() < p_edge
        ]
        dag = MGraph.build(names, edges)
        eligible = [v for v in range(n_vars) if structural_condition_holds(dag, v)]
        if len(eligible) < n_self_masking:
            continue
        sm = sorted(rng.choice(eligible, n_self_masking, replace=False).tolist()) if n_self_masking else []
        rest = [v for v in range(n_vars) if v not in sm]
        other = sorted(rng.choice(rest, n_missing - n_self_masking, replace=False).tolist()) if n_missing > n_self_masking else []
        observed = [v for v in range(n_vars) if v not in sm and v not in other]
        ind: dict[str, list[str]] = {names[v]: [names[v]] for v in sm}
        for v in other:
            if observed:
                k = min(len(observed), int(rng.integers(1, 3)))
                ind[names[v]] = [names[u] for u in sorted(rng.choice(observed, k, replace=False).tolist())]
            else:
                ind[names[v]] = []
        g = MGraph.build(names, edges, ind)
        if not satisfies_assumptions(g):
            continue
        checks = {
            "draws": draw + 1,
            "structural_condition": {names[v]: True for v in sm},
            "assumptions_hold": True,
        }
        return spec_from_graph(g, seed, rate, mechanism, noise, self_masking_form, checks)
    raise StructuralConditionUnsatisfiable(
        f"no admissible graph with {n_self_masking} self-masking variables in {max_draws} draws"
    )


def sample(spec: ScmSpec, n: int) -> GeneratedBatch:
    """Draw ``n`` rows; identical (spec, n) gives identical output."""
    if n < 1:
        raise ValueError("n must be positive")
    g = spec.graph
    rng = np.random.default_rng([spec.seed, 3, n])
    vals, eps = _complete(g, spec.mechanisms, spec.noise, n, rng)
    mask = np.zeros_like(vals, dtype=bool)
    for v in sorted(spec.missingness):
        p = missing_probability(spec.missingness[v], vals, v)
        mask[:, v] = rng.random(n) < p
        target = spec.missingness[v].get("target_rate", spec.missingness[v].get("rate", 0.0))
        if n >= 3000 and abs(mask[:, v].mean() - target) > RATE_TOLERANCE:
            log.warning("%s: missing rate %.3f, target %.3f", spec.names[v], mask[:, v].mean(), target)
    ds = Dataset(vals, mask, spec.names)
    return GeneratedBatch(ds, vals, eps, spec)


def ground_truth(spec: ScmSpec) -> dict:
    """Graph, indicator classification and mechanism summary."""
    g = spec.graph
    names = g.names
    return {
        "graph": pattern_to_dict(g),
        "self_masking": [names[g.indicator(v)] for v in sorted(g.self_masking_vars)],
        "indicator_parents": {names[r]: [names[p] for p in g.parents(r)] for r in g.indicators},
        "mechanisms": {names[v]: spec.mechanisms[v]["kind"] for v in sorted(spec.mechanisms)},
        "missingness": {names[v]: spec.missingness[v]["kind"] for v in sorted(spec.missingness)},
    }


@dataclass(frozen=True, eq=False)
class SpecOracles:
    """Exact answers for a spec: plain d-separation, deletion-aware independence,
    and the true noise draws as residuals."""

    graph: MGraph
    deleted: OracleTester
    residuals: OracleResiduals

    def independent(self, x: int, y: int, z: Sequence[int] = ()) -> bool:
        return d_separated(self.graph, x, y, frozenset(z))

    def deleted_independent(self, x: int, y: int, z: Sequence[int] = ()) -> bool:
        return self.deleted.ci(x, y, z)

    @staticmethod
    def true_residual(batch: GeneratedBatch, v: int) -> np.ndarray:
        return batch.noise[:, v]


def oracle_from_spec(spec: ScmSpec) -> SpecOracles:
    return SpecOracles(spec.graph, OracleTester(spec.graph), OracleResiduals(spec.graph))
