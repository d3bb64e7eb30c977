"""Sensitivity sweeps: generate, discover and score over a grid of settings.

A grid is a JSON object whose list-valued keys are crossed; every combination
is run once per replicate.  Replicate ``k`` uses seed ``base_seed + k`` in every
cell, so cells that differ only in sample size share their graphs.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .config import ConfigError, RunConfig
from .direction import lcs_md
from .metrics import config_hash, evaluate
from .skeleton import sm_mvpc
from .synth import random_spec, sample

log = logging.getLogger(__name__)

GRID_KEYS = ("vars", "missing", "self_masking", "n")
SCORE_KEYS = (
    "skeleton_f1",
    "skeleton_shd",
    "mgraph_skeleton_f1",
    "mgraph_skeleton_shd",
    "orientation_precision",
    "orientation_recall",
    "orientation_f1",
    "orientation_shd",
    "indicator_self_masking_accuracy",
    "indicator_parent_set_accuracy",
)
BASELINE_KEYS = ("baseline_skeleton_f1", "baseline_mgraph_skeleton_f1", "baseline_indicator_self_masking_accuracy")
COLUMNS = ("vars", "missing", "self_masking", "n", "seed", "status", *SCORE_KEYS, *BASELINE_KEYS, "error")


@dataclass(frozen=True)
class Grid:
    vars: tuple[int, ...] = (10,)
    missing: tuple[int, ...] = (5,)
    self_masking: tuple[int, ...] = (3,)
    n: tuple[int, ...] = (7000,)
    seeds: int = 20
    base_seed: int = 0
    rate: float = 0.2
    degree: float = 2.0
    orient: bool = True
    run: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "Grid":
        allowed = set(GRID_KEYS) | {"seeds", "base_seed", "rate", "degree", "orient", "run"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown grid keys: {', '.join(unknown)}")
        kw: dict[str, Any] = {}
        for k in GRID_KEYS:
            if k in data:
                v = data[k]
                v = [v] if isinstance(v, int) else v
                if not isinstance(v, list) or not all(isinstance(x, int) for x in v):
                    raise ConfigError(f"grid key {k!r} must be an integer or a list of integers")
                kw[k] = tuple(v)
        for k in ("seeds", "base_seed"):
            if k in data:
                if not isinstance(data[k], int) or data[k] < 0:
                    raise ConfigError(f"{k} must be a nonnegative integer")
                kw[k] = data[k]
        for k in ("rate", "degree"):
            if k in data:
                kw[k] = float(data[k])
        if "orient" in data:
            kw["orient"] = bool(data["orient"])
        if "run" in data:
            RunConfig.from_mapping(data["run"])
            kw["run"] = dict(data["run"])
        return cls(**kw)

    def cells(self) -> list[dict[str, int]]:
        out = []
        for combo in itertools.product(*(getattr(self, k) for k in GRID_KEYS)):
            for rep in range(self.seeds):
                out.append({**dict(zip(GRID_KEYS, combo)), "seed": self.base_seed + rep})
        return out


def run_cell(cell: Mapping[str, int], grid: Grid) -> dict[str, Any]:
    """One generate-discover-score run; failures become an error row."""
    row: dict[str, Any] = {k: cell[k] for k in (*GRID_KEYS, "seed")}
    try:
        cfg = RunConfig.from_mapping({**grid.run, "seed": cell["seed"]})
        spec = random_spec(cell["vars"], cell["missing"], cell["self_masking"], cell["seed"], grid.degree, grid.rate)
        batch = sample(spec, cell["n"])
        tcfg = cfg.test_config()
        sk = sm_mvpc(batch.dataset, tcfg, cfg.skeleton_config())
        ip = lcs_md(batch.dataset, sk, tcfg, cfg.max_parents) if grid.orient else None
        rep = evaluate(sk, ip, spec.graph, {"config_hash": config_hash(cfg.to_dict())}).row()
        base = evaluate(sk.initial, None, spec.graph).row()
    except Exception as exc:  # noqa: BLE001 - a failed cell is reported, not fatal
        log.warning("cell %s failed: %s", cell, exc)
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
        return row
    row["status"] = "ok"
    row.update({k: rep[k] for k in SCORE_KEYS})
    row.update({f"baseline_{k}": base[k] for k in ("skeleton_f1", "mgraph_skeleton_f1", "indicator_self_masking_accuracy")})
    if not grid.orient:
        for k in SCORE_KEYS:
            if k.startswith("orientation"):
                row[k] = ""
    return row


def _sort_key(row: Mapping[str, Any]) -> tuple:
    return tuple(row[k] for k in (*GRID_KEYS, "seed"))


def run_sweep(grid: Grid, workers: int | None = None) -> list[dict[str, Any]]:
    """Run every cell, in parallel when ``workers > 1``; rows come back in grid order."""
    cells = grid.cells()
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(cells) <= 1:
        rows = [run_cell(c, grid) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, cells, itertools.repeat(grid)))
    return sorted(rows, key=_sort_key)


def _fmt(v: Any) -> Any:
    if isinstance(v, float):
        return repr(round(v, 12))
    return v


def rows_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str] = COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k, "")) for k in columns})
    return buf.getvalue()


def summarize(rows: Sequence[Mapping[str, Any]]) -> list[dict[str, Any]]:
    """Per-cell means of every score over the successful replicates."""
    groups: dict[tuple, list[Mapping[str, Any]]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in GRID_KEYS), []).append(r)
    out = []
    for key in sorted(groups):
        ok = [r for r in groups[key] if r["status"] == "ok"]
        rec: dict[str, Any] = dict(zip(GRID_KEYS, key))
        rec["runs"] = len(ok)
        rec["errors"] = len(groups[key]) - len(ok)
        for k in (*SCORE_KEYS, *BASELINE_KEYS):
            vals = [float(r[k]) for r in ok if r.get(k, "") != ""]
            rec[k] = float(np.mean(vals)) if vals else ""
        out.append(rec)
    return out


SUMMARY_COLUMNS = (*GRID_KEYS, "runs", "errors", *SCORE_KEYS, *BASELINE_KEYS)


def write_sweep(rows: Sequence[Mapping[str, Any]], out: str | Path) -> tuple[Path, Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    results = out / "results.csv"
    summary = out / "summary.csv"
    results.write_text(rows_csv(rows))
    summary.write_text(rows_csv(summarize(rows), SUMMARY_COLUMNS))
    return results, summary


def load_grid(path: str | Path) -> Grid:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read grid {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("grid must be a JSON object")
    return Grid.from_mapping(data)
