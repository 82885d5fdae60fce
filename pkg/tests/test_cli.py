import ast
import json

import numpy as np
import pytest

from ricci_lab import cli, experiments
from ricci_lab.errors import MissingArtifacts, StepFailure
from ricci_lab.io import read_json, read_tfs


def write_cfg(path, out, **extra):
    lines = ["experiment = E1", "points_per_axis = 8", f"output_dir = {out}"]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture(scope="module")
def e1_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("e1")
    out = base / "out"
    code = cli.main(["run", write_cfg(base / "e1.cfg", out)])
    return code, out


def test_run_pass_exit_code(e1_run, capsys):
    code, out = e1_run
    assert code == cli.EXIT_PASS
    assert {"summary.json", "checks.csv"} <= {p.name for p in out.iterdir()}


def test_run_fail_exit_code(tmp_path, monkeypatch):
    def failing(cfg):
        res = experiments.ExperimentResult("E1")
        res.check("always", 2.0, "<= 1", False)
        return res

    monkeypatch.setitem(experiments.EXPERIMENTS, "E1", failing)
    assert cli.main(["run", write_cfg(tmp_path / "c.cfg", tmp_path / "o")]) == cli.EXIT_FAIL


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.cfg", tmp_path / "o")
    assert cli.main(["run", cfg, "--points_per_axis", "7"]) == cli.EXIT_CONFIG
    assert "points_per_axis" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG
    assert cli.main(["run", cfg, "--no_such_key", "1"]) == cli.EXIT_CONFIG


def test_runtime_error_exit_code(tmp_path, monkeypatch, capsys):
    def broken(cfg):
        raise StepFailure("dt underflow")

    monkeypatch.setitem(experiments.EXPERIMENTS, "E1", broken)
    assert cli.main(["run", write_cfg(tmp_path / "c.cfg", tmp_path / "o")]) == cli.EXIT_RUNTIME
    assert "StepFailure" in capsys.readouterr().err


def test_report_missing_artifacts(tmp_path):
    with pytest.raises(MissingArtifacts):
        cli.summarize(tmp_path)
    assert cli.main(["report", str(tmp_path)]) == cli.EXIT_RUNTIME


def test_report_constants_match_summary(e1_run, capsys):
    _, out = e1_run
    assert cli.main(["report", str(out)]) == cli.EXIT_PASS
    lines, passed = cli.summarize(out)
    data = read_json(out / "summary.json")
    assert passed == data["passed"]
    idx = lines.index("  fitted constants:")
    parsed = {}
    for line in lines[idx + 1 :]:
        k, v = line.strip().split(" = ", 1)
        parsed[k] = ast.literal_eval(v)
    assert parsed == data["summary"]


def test_csv_byte_identical_across_runs(e1_run, tmp_path):
    _, first = e1_run
    second = tmp_path / "again"
    assert cli.main(["run", write_cfg(tmp_path / "c.cfg", second)]) == cli.EXIT_PASS
    csvs = sorted(p.name for p in first.glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (first / name).read_bytes() == (second / name).read_bytes()
    a, b = read_json(first / "summary.json"), read_json(second / "summary.json")
    a["config"].pop("output_dir"), b["config"].pop("output_dir")
    assert a == b


def test_gen_writes_snapshot(tmp_path, capsys):
    out = tmp_path / "g.tfs"
    code = cli.main(["gen", "loglog", "eps=0.5", "--out", str(out), "--dim", "3", "--points-per-axis", "8"])
    assert code == cli.EXIT_PASS
    header, grid, comps = read_tfs(out)
    assert header["generator"] == "loglog" and header["params"] == {"eps": 0.5}
    assert grid.dim == 3 and grid.n == 8 and len(comps) == 6
    assert all(np.isfinite(c).all() for c in comps.values())


def test_gen_bad_params(tmp_path):
    base = ["gen", "loglog", "--out", str(tmp_path / "g.tfs"), "--points-per-axis", "8"]
    assert cli.main(base + ["eps"]) == cli.EXIT_CONFIG
    assert cli.main(base + ["eps=big"]) == cli.EXIT_CONFIG
    assert cli.main(["gen", "loglog", "--points-per-axis", "7"]) == cli.EXIT_CONFIG


def test_thread_resolution(monkeypatch):
    monkeypatch.delenv("LAB_THREADS", raising=False)
    assert cli.resolve_threads(3) == 3
    assert cli.resolve_threads(None) >= 1
    monkeypatch.setenv("LAB_THREADS", "2")
    assert cli.resolve_threads(5) == 2


def test_override_split():
    assert cli._split_overrides(["--cfl", "0.1", "--init.eps=2"]) == [("cfl", "0.1"), ("init.eps", "2")]
    with pytest.raises(Exception):
        cli._split_overrides(["cfl"])
