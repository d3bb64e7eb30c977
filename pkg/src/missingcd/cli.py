"""``missingcd`` command line: generate, discover, eval, sweep.

Exit status is 0 on success, 2 when the input or arguments are invalid and 1
when a pipeline stage fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .config import ConfigError, RunConfig
from .data import CsvParseError, Dataset, read_csv, write_csv
from .direction import InPattern, OracleResiduals, lcs_md
from .graph import GraphError, MGraph, Pattern, skeleton_of
from .graphio import dumps, mgraph_from_dict, pattern_from_dict, to_dot
from .metrics import UniverseMismatch, config_hash, evaluate
from .skeleton import SkeletonResult, sm_mvpc
from .synth import StructuralConditionUnsatisfiable, ground_truth, random_spec, sample
from .sweep import load_grid, run_sweep, write_sweep

log = logging.getLogger("missingcd")


class UsageError(Exception):
    """Invalid arguments or unreadable input (exit status 2)."""


class StageError(Exception):
    """A pipeline stage failed (exit status 1)."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage} failed: {type(exc).__name__}: {exc}")


def _read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _graph_from_json(data: Any) -> MGraph:
    """The m-graph in a ground-truth file, or a bare graph object."""
    if isinstance(data, dict) and "graph" in data:
        data = data["graph"]
    try:
        return mgraph_from_dict(data)
    except (GraphError, KeyError, TypeError) as exc:
        raise UsageError(f"not an m-graph: {exc}") from None


def _pattern_from_json(data: Any) -> Pattern:
    """A skeleton or pattern file, or a ground-truth file (its skeleton is used)."""
    if isinstance(data, dict) and "graph" in data:
        return skeleton_of(_graph_from_json(data))
    if isinstance(data, dict) and "pattern" in data:
        data = data["pattern"]
    if isinstance(data, dict) and "nodes" in data and "pattern" not in data and "directed" in data:
        try:
            return pattern_from_dict(data)
        except (GraphError, KeyError, TypeError) as exc:
            raise UsageError(f"not a pattern: {exc}") from None
    raise UsageError("expected a pattern, skeleton or ground-truth JSON file")


# generate


def cmd_generate(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise UsageError("--n must be positive")
    if not 0 <= args.self_masking <= args.missing <= args.vars:
        raise UsageError("need 0 <= --self-masking <= --missing <= --vars")
    if not 0.0 < args.rate < 0.9:
        raise UsageError("--rate must lie in (0, 0.9)")
    try:
        spec = random_spec(
            args.vars,
            args.missing,
            args.self_masking,
            args.seed,
            degree=args.degree,
            rate=args.rate,
            mechanism=args.mechanism,
            noise=args.noise,
            self_masking_form=args.self_masking_form,
        )
    except StructuralConditionUnsatisfiable as exc:
        raise UsageError(str(exc)) from None
    batch = sample(spec, args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(batch.dataset, out / "data.csv")
    _write(out, "truth.json", dumps(ground_truth(spec)))
    _write(out, "spec.json", spec.dumps())
    return 0


# discover


def _run_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    return cfg.override(
        seed=args.seed,
        alpha=args.alpha,
        method=args.method,
        max_cond=args.max_cond,
        max_parents=args.max_parents,
        correction_sweeps=args.sweeps,
        mode=args.mode,
    )


def _stage(name: str, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (UsageError, StageError):
        raise
    except Exception as exc:  # noqa: BLE001 - reported with the stage name
        raise StageError(name, exc) from exc


def cmd_discover(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    tcfg = cfg.test_config()
    graph: MGraph | None = None
    data: Dataset | None = None
    if cfg.mode == "oracle":
        if not args.graph:
            raise UsageError("oracle mode needs --graph")
        graph = _graph_from_json(_read_json(args.graph))
    else:
        if not args.data:
            raise UsageError("statistical mode needs a data file")
        try:
            data = read_csv(args.data)
        except CsvParseError as exc:
            raise UsageError(f"{args.data}: {exc}") from None
        except OSError as exc:
            raise UsageError(str(exc)) from None
    source = graph if graph is not None else data
    out = Path(args.out)
    audit: list[dict] = []
    if args.given_skeleton:
        skel: SkeletonResult | Pattern = _pattern_from_json(_read_json(args.given_skeleton))
        names = graph.names if graph is not None else None
        if data is not None and tuple(skel.names[i] for i in skel.substantive) != data.names:
            raise UsageError("given skeleton does not match the data columns")
        if names is not None and skel.names != names:
            raise UsageError("given skeleton does not match the oracle graph")
        _write(out, "skeleton.json", dumps({"pattern": _pattern_json(skel), "given": True}))
        _write(out, "skeleton.dot", to_dot(skel, name="skeleton"))
    else:
        skel = _stage("skeleton", sm_mvpc, source, tcfg, cfg.skeleton_config())
        audit.extend({"stage": "skeleton", **rec} for rec in skel.audit)
        _write(out, "skeleton.json", dumps({**skel.to_dict(), "config": cfg.to_dict()}))
        _write(out, "skeleton.dot", to_dot(skel.pattern, name="skeleton"))
    if not args.skeleton_only:
        judge = OracleResiduals(graph) if graph is not None else data
        ip: InPattern = _stage("orientation", lcs_md, judge, skel, tcfg, cfg.max_parents)
        audit.extend({"stage": "orientation", **rec} for rec in ip.audit)
        _write(out, "pattern.json", dumps({**ip.to_dict(), "config": cfg.to_dict()}))
        _write(out, "pattern.dot", to_dot(ip.pattern, ip.provenance(), name="pattern"))
    _write(out, "audit.jsonl", "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in audit))
    return 0


def _pattern_json(p: Pattern) -> dict:
    from .graphio import pattern_to_dict

    return pattern_to_dict(p)


# eval


def cmd_eval(args: argparse.Namespace) -> int:
    truth = _graph_from_json(_read_json(args.truth))
    skel = _pattern_from_json(_read_json(args.skeleton)) if args.skeleton else None
    pat = _pattern_from_json(_read_json(args.pattern)) if args.pattern else None
    if skel is None and pat is None:
        raise UsageError("give --skeleton, --pattern or both")
    meta: dict[str, Any] = {}
    for src in (args.pattern, args.skeleton):
        if src:
            raw = _read_json(src)
            if isinstance(raw, dict) and isinstance(raw.get("config"), dict):
                meta = {"seed": raw["config"].get("seed"), "config_hash": config_hash(raw["config"])}
                break
    if args.n is not None:
        meta["n"] = args.n
    try:
        rep = evaluate(skel if skel is not None else pat, pat, truth, meta)
    except UniverseMismatch as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    _write(out, "report.json", dumps(rep.to_dict()))
    _write(out, "report.csv", rep.csv())
    return 0


# sweep


def cmd_sweep(args: argparse.Namespace) -> int:
    grid = load_grid(args.grid)
    if args.seeds is not None:
        from dataclasses import replace

        grid = replace(grid, seeds=args.seeds)
    rows = run_sweep(grid, args.workers)
    write_sweep(rows, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="missingcd", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a random SCM with missing values")
    g.add_argument("--vars", type=int, default=10)
    g.add_argument("--missing", type=int, default=3)
    g.add_argument("--self-masking", type=int, default=1)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rate", type=float, default=0.2)
    g.add_argument("--degree", type=float, default=2.0)
    g.add_argument("--mechanism", choices=("mlp", "linear"), default="mlp")
    g.add_argument("--noise", choices=("uniform", "gaussian", "laplace"), default="uniform")
    g.add_argument("--self-masking-form", choices=("logistic", "threshold"), default="logistic")
    g.add_argument("--out", default=".")
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("discover", help="learn skeleton, indicators and orientations")
    d.add_argument("data", nargs="?")
    d.add_argument("--config")
    d.add_argument("--mode", choices=("statistical", "oracle"))
    d.add_argument("--graph", help="m-graph answering oracle queries")
    d.add_argument("--seed", type=int)
    d.add_argument("--alpha", type=float)
    d.add_argument("--method", choices=("hsic", "fisherz"))
    d.add_argument("--max-cond", type=int)
    d.add_argument("--max-parents", type=int)
    d.add_argument("--sweeps", type=int)
    d.add_argument("--skeleton-only", action="store_true")
    d.add_argument("--given-skeleton")
    d.add_argument("--out", default=".")
    d.set_defaults(func=cmd_discover)

    e = sub.add_parser("eval", help="score an estimate against the truth")
    e.add_argument("--truth", required=True)
    e.add_argument("--skeleton")
    e.add_argument("--pattern")
    e.add_argument("--n", type=int)
    e.add_argument("--out", default=".")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="run a grid of generate-discover-eval cells")
    s.add_argument("grid")
    s.add_argument("--seeds", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, CsvParseError) as exc:
        print(f"missingcd: error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"missingcd: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"missingcd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
