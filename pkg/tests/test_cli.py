import csv
import json

import pytest

from conftest import xyzw_mgraph
from missingcd.cli import main
from missingcd.graphio import dumps, pattern_to_dict
from missingcd.graph import MGraph, skeleton_of
from missingcd.config import ConfigError, RunConfig


def run(*args) -> int:
    return main([str(a) for a in args])


def read(path):
    return json.loads(path.read_text())


def test_generate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("generate", "--vars", 10, "--missing", 3, "--self-masking", 3, "--n", 500, "--seed", 1, "--out", out) == 0
    for name in ("data.csv", "truth.json", "spec.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert len(read(a / "truth.json")["self_masking"]) == 3


@pytest.mark.parametrize(
    "args",
    [
        ["--n", 0],
        ["--n", 100, "--self-masking", 4, "--missing", 3],
        ["--n", 100, "--rate", 0.95],
        ["--n", 100, "--vars", 2, "--missing", 1, "--self-masking", 1],
        ["--n", 100, "--mechanism", "cubic"],
    ],
)
def test_generate_invalid_args(tmp_path, args, capsys):
    assert run("generate", *args, "--out", tmp_path) == 2
    assert "error" in capsys.readouterr().err


def write_xyzw(tmp_path):
    path = tmp_path / "xyzw.json"
    path.write_text(dumps({"graph": pattern_to_dict(xyzw_mgraph())}))
    return path


def test_discover_oracle_xyzw(tmp_path):
    out = tmp_path / "out"
    assert run("discover", "--mode", "oracle", "--graph", write_xyzw(tmp_path), "--out", out) == 0
    pat = read(out / "pattern.json")
    directed = {tuple(e) for e in pat["pattern"]["directed"]}
    assert {("X", "Y"), ("X", "Z"), ("Y", "Z"), ("Y", "W"), ("Z", "W")} <= directed
    assert not pat["pattern"]["undirected"]
    assert pat["oriented_by_rule"] == [["X", "Y"]]
    assert read(out / "skeleton.json")["self_masking"] == ["R_Y"]
    dot = (out / "pattern.dot").read_text()
    assert '"X" -> "Y" [provenance="rule"];' in dot
    audit = [json.loads(line) for line in (out / "audit.jsonl").read_text().splitlines()]
    assert {r["stage"] for r in audit} == {"skeleton", "orientation"}


def test_discover_oracle_is_reproducible(tmp_path):
    g = write_xyzw(tmp_path)
    for out in ("a", "b"):
        assert run("discover", "--mode", "oracle", "--graph", g, "--out", tmp_path / out) == 0
    for name in ("skeleton.json", "pattern.json", "pattern.dot", "audit.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_discover_with_given_skeleton(tmp_path):
    g = write_xyzw(tmp_path)
    sk = tmp_path / "sk.json"
    sk.write_text(dumps(pattern_to_dict(skeleton_of(xyzw_mgraph()))))
    out = tmp_path / "out"
    assert run("discover", "--mode", "oracle", "--graph", g, "--given-skeleton", sk, "--out", out) == 0
    assert read(out / "skeleton.json")["given"] is True
    assert read(out / "pattern.json")["pattern"]["undirected"] == []


def test_discover_statistical_and_eval(tmp_path):
    data = tmp_path / "gen"
    assert run("generate", "--vars", 5, "--missing", 2, "--self-masking", 1, "--n", 600, "--seed", 2, "--out", data) == 0
    out = tmp_path / "disc"
    assert run("discover", data / "data.csv", "--out", out, "--max-cond", 2) == 0
    rep = tmp_path / "rep"
    assert run("eval", "--truth", data / "truth.json", "--skeleton", out / "skeleton.json", "--pattern", out / "pattern.json", "--n", 600, "--out", rep) == 0
    report = read(rep / "report.json")
    assert 0.0 <= report["skeleton"]["f1"] <= 1.0
    assert report["meta"]["n"] == 600 and report["meta"]["seed"] == 0
    assert (rep / "report.csv").read_text().count("\n") == 2


def test_discover_skeleton_only(tmp_path):
    out = tmp_path / "out"
    assert run("discover", "--mode", "oracle", "--graph", write_xyzw(tmp_path), "--skeleton-only", "--out", out) == 0
    assert (out / "skeleton.json").exists() and not (out / "pattern.json").exists()


def test_eval_truth_against_itself(tmp_path):
    g = write_xyzw(tmp_path)
    assert run("eval", "--truth", g, "--pattern", g, "--out", tmp_path / "r") == 0
    rep = read(tmp_path / "r" / "report.json")
    assert rep["skeleton"]["f1"] == 1.0
    # the truth file's skeleton is scored, so every direction is missed
    assert rep["orientation"]["recall"] == 0.0


def test_eval_universe_mismatch(tmp_path, capsys):
    g = write_xyzw(tmp_path)
    other = tmp_path / "other.json"
    other.write_text(dumps(pattern_to_dict(skeleton_of(MGraph.build(["X", "Y", "Q"], [("X", "Y")])))))
    assert run("eval", "--truth", g, "--pattern", other, "--out", tmp_path / "r") == 2
    err = capsys.readouterr().err
    assert "Q" in err and "W" in err


def test_malformed_csv_names_row_and_column(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("A,B\n1,2\n3,x\n")
    assert run("discover", bad, "--out", tmp_path / "o") == 2
    err = capsys.readouterr().err
    assert "row 3" in err and "'B'" in err


def test_discover_needs_input(tmp_path):
    assert run("discover", "--out", tmp_path) == 2
    assert run("discover", "--mode", "oracle", "--out", tmp_path) == 2


def test_config_file_and_unknown_keys(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "oracle", "max_cond": 2}))
    assert run("discover", "--config", cfg, "--graph", write_xyzw(tmp_path), "--out", tmp_path / "o") == 0
    assert read(tmp_path / "o" / "pattern.json")["config"]["max_cond"] == 2
    cfg.write_text(json.dumps({"mood": "oracle"}))
    assert run("discover", "--config", cfg, "--out", tmp_path / "o") == 2


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(permutations=10)
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"alpha": 2.0})
    assert RunConfig().override(seed=None, alpha=0.05).alpha == 0.05


def test_sweep_empty_grid(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"n": []}))
    assert run("sweep", grid, "--out", tmp_path / "s", "--workers", 1) == 0
    lines = (tmp_path / "s" / "results.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("vars,missing,self_masking,n,seed,status")


def test_sweep_records_failing_cell(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"vars": 4, "missing": 2, "self_masking": [0, 3], "n": 300, "seeds": 2, "orient": False}))
    assert run("sweep", grid, "--out", tmp_path / "s", "--workers", 1) == 0
    rows = list(csv.DictReader((tmp_path / "s" / "results.csv").open()))
    assert [r["status"] for r in rows] == ["ok", "ok", "error", "error"]
    assert "ValueError" in rows[-1]["error"]
    summary = list(csv.DictReader((tmp_path / "s" / "summary.csv").open()))
    assert [(s["runs"], s["errors"]) for s in summary] == [("2", "0"), ("0", "2")]


def test_sweep_bad_grid(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"vars": 4, "colour": 1}))
    assert run("sweep", grid, "--out", tmp_path / "s") == 2


def test_sweep_parallel_matches_serial(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"vars": 4, "missing": 2, "self_masking": 1, "n": [300, 400], "seeds": 2}))
    assert run("sweep", grid, "--out", tmp_path / "one", "--workers", 1) == 0
    assert run("sweep", grid, "--out", tmp_path / "two", "--workers", 2) == 0
    for name in ("results.csv", "summary.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
