import json
import math
from pathlib import Path

import numpy as np
import pytest

from amalgam_lab.cli import main
from amalgam_lab.grid_core import Grid, GridFunction, load_gridfunction, save_gridfunction

from conftest import bump_values

DATA = Path(__file__).parent / "data"
SMALL = str(DATA / "small.json")


@pytest.fixture()
def bump_file(tmp_path):
    g = Grid.centered(1, 256, 4.0)
    path = tmp_path / "bump.grid"
    save_gridfunction(GridFunction(g, bump_values(g), name="bump"), path)
    return path


def test_experiment_matches_golden(tmp_path, capsys):
    out = tmp_path / "run.csv"
    assert main(["experiment", "--config", SMALL, "--out", str(out)]) == 0
    assert out.read_bytes() == (DATA / "golden_small.csv").read_bytes()
    assert capsys.readouterr().out.rstrip().endswith("PASS")


def test_experiment_twice_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["experiment", "--config", SMALL, "--out", str(a)]) == 0
    assert main(["experiment", "--config", SMALL, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_changes_random_members(tmp_path):
    cfg = json.loads(Path(SMALL).read_text())
    cfg["corpus"]["families"] = ["bump", "random", "singular"]
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for seed in ("1", "2"):
        out = tmp_path / f"s{seed}.csv"
        assert main(["experiment", "--config", str(path), "--seed", seed, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] != outs[1]


def test_jsonl_output(tmp_path):
    out = tmp_path / "r.jsonl"
    assert main(["experiment", "--config", SMALL, "--out", str(out), "--format", "jsonl"]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == len((DATA / "golden_small.csv").read_text().splitlines()) - 1
    assert all(math.isfinite(json.loads(x)["ratio"]) for x in lines)


@pytest.mark.parametrize(
    "argv",
    [
        ["bogus"],
        [],
        ["experiment", "--format", "xml"],
        ["experiment", "--config", "/nonexistent.json"],
        ["norm", "/nonexistent.grid"],
    ],
)
def test_usage_errors(argv):
    assert main(argv) == 1


def test_bad_config_value(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"lam": 2.0}))
    assert main(["experiment", "--config", str(path)]) == 1
    path.write_text("{not json")
    assert main(["experiment", "--config", str(path)]) == 1


def test_memory_budget_is_config_error(tmp_path):
    cfg = json.loads(Path(SMALL).read_text())
    cfg["memory_budget_mb"] = 0.01
    path = tmp_path / "m.json"
    path.write_text(json.dumps(cfg))
    assert main(["experiment", "--config", str(path)]) == 1


def test_refine_pass_and_fail(tmp_path, capsys):
    cfg = json.loads(Path(SMALL).read_text())
    cfg["operators"] = ["S", "g"]
    path = tmp_path / "r.json"
    path.write_text(json.dumps(cfg))
    assert main(["refine", "--config", str(path), "--levels", "2"]) == 0
    assert "fubini_error" in capsys.readouterr().out
    assert main(["refine", "--config", str(path), "--levels", "2", "--tolerance", "0"]) == 2


def test_gen_corpus(tmp_path):
    out = tmp_path / "corpus"
    assert main(["gen-corpus", "--config", SMALL, "--out", str(out)]) == 0
    index = (out / "index.txt").read_text().splitlines()
    assert len(index) == len(list(out.glob("*.grid")))
    first = load_gridfunction(out / "000.grid")
    assert first.name == index[0].split(" ", 1)[1]


def test_norm_rows(tmp_path, bump_file):
    out = tmp_path / "n.csv"
    assert main(["norm", str(bump_file), "--config", SMALL, "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "norm_name,q,p,alpha,kappa,weight_kind,value,r_at_max"
    rows = [x.split(",") for x in lines[1:]]
    fofana = {(r[2], r[5]): float(r[6]) for r in rows if r[0] == "fofana"}
    morrey = {(r[2], r[5]): float(r[6]) for r in rows if r[0] == "weighted_morrey"}
    assert morrey and all(morrey[k] == pytest.approx(fofana[k], rel=1e-12) for k in morrey)


@pytest.mark.parametrize("cmd, op", [("square", "S"), ("square", "gstar"), ("commutator", "g")])
def test_operator_commands(tmp_path, bump_file, cmd, op):
    out = tmp_path / "t.grid"
    assert main([cmd, str(bump_file), "--op", op, "--config", SMALL, "--out", str(out)]) == 0
    Tf = load_gridfunction(out)
    assert np.all(Tf.values >= 0) and np.any(Tf.values > 0)


def test_weights_audit(tmp_path, capsys):
    assert main(["weights-audit", "--config", SMALL]) == 0
    out = capsys.readouterr().out
    assert out.rstrip().endswith("PASS")
    cfg = json.loads(Path(SMALL).read_text())
    cfg["weights"] = [{"kind": "power", "a": 3.0}]
    path = tmp_path / "w.json"
    path.write_text(json.dumps(cfg))
    assert main(["weights-audit", "--config", str(path)]) == 2
