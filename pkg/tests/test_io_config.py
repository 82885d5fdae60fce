import json
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ricci_lab.config import ExperimentConfig, from_mapping, load_config, parse_pairs, read_pairs
from ricci_lab.errors import ConfigError
from ricci_lab.field import GridSpec, MetricField
from ricci_lab.io import (
    atomic_write_text,
    read_csv,
    read_json,
    read_metric,
    read_tfs,
    to_jsonable,
    write_csv,
    write_json,
    write_metric,
    write_tfs,
)


class TestTfs:
    def test_header_and_layout(self, tmp_path):
        grid = GridSpec(2, 8, 2.0)
        a = np.arange(64, dtype=float).reshape(8, 8)
        path = write_tfs(tmp_path / "a.tfs", grid, {"u": a, "v": -a})
        raw = path.read_bytes()
        head, body = raw.split(b"\n", 1)
        header = json.loads(head)
        assert header == {
            "version": 1,
            "dim": 2,
            "N": 8,
            "L": 2.0,
            "components": ["u", "v"],
            "dtype": "f64le",
            "order": "row-major, axis 0 slowest",
        }
        data = np.frombuffer(body, dtype="<f8")
        assert data.size == 128
        # axis 0 slowest: the second value is a[0, 1]
        assert data[1] == a[0, 1] and data[64] == -a[0, 0]

    @given(st.integers(2, 4), st.integers(0, 2**32 - 1))
    def test_metric_roundtrip(self, dim, seed):
        import tempfile

        grid = GridSpec(dim, 8)
        rng = np.random.default_rng(seed)
        g = MetricField(grid, rng.normal(size=grid.shape + (dim * (dim + 1) // 2,)))
        with tempfile.TemporaryDirectory() as d:
            back = read_metric(write_metric(os.path.join(d, "g.tfs"), g, {"note": "x"}))
            _, _, comps = read_tfs(os.path.join(d, "g.tfs"))
        assert np.array_equal(back.components, g.components)
        assert "g01" in comps or dim < 2

    def test_bad_shape(self, tmp_path):
        with pytest.raises(ValueError):
            write_tfs(tmp_path / "b.tfs", GridSpec(2, 8), {"u": np.zeros((8, 4))})

    def test_truncated_body(self, tmp_path):
        path = write_tfs(tmp_path / "c.tfs", GridSpec(2, 8), {"u": np.zeros((8, 8))})
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError):
            read_tfs(path)


class TestTables:
    def test_csv_roundtrip_exact(self, tmp_path):
        rows = [{"t": 0.1, "ok": True, "name": "a"}, {"t": 1 / 3, "ok": False, "name": "b"}]
        write_csv(tmp_path / "x.csv", rows)
        back = read_csv(tmp_path / "x.csv")
        assert [float(r["t"]) for r in back] == [0.1, 1 / 3]
        assert [r["ok"] for r in back] == ["true", "false"]

    def test_json_nonfinite_and_numpy(self, tmp_path):
        data = {"a": np.float64(np.inf), "b": np.arange(3), "c": np.bool_(True), "d": (1, 2)}
        write_json(tmp_path / "s.json", data)
        assert read_json(tmp_path / "s.json") == {"a": "inf", "b": [0, 1, 2], "c": True, "d": [1, 2]}
        assert to_jsonable({1: np.int64(3)}) == {"1": 3}

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        atomic_write_text(tmp_path / "f.txt", "one")
        atomic_write_text(tmp_path / "f.txt", "two")
        assert (tmp_path / "f.txt").read_text() == "two"
        assert os.listdir(tmp_path) == ["f.txt"]

    def test_failed_write_keeps_old_file(self, tmp_path, monkeypatch):
        target = tmp_path / "f.txt"
        atomic_write_text(target, "old")

        def boom(*a, **k):
            raise OSError("disk full")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(OSError):
            atomic_write_text(target, "new")
        assert target.read_text() == "old"
        assert os.listdir(tmp_path) == ["f.txt"]


class TestConfig:
    def test_odd_small_grid(self):
        with pytest.raises(ConfigError) as e:
            from_mapping({"experiment": "E1", "points_per_axis": 7})
        assert e.value.key == "points_per_axis"

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as e:
            parse_pairs([("pionts_per_axis", "16")])
        assert e.value.key == "pionts_per_axis"

    def test_bad_number(self):
        with pytest.raises(ConfigError) as e:
            parse_pairs([("cfl", "fast")])
        assert e.value.key == "cfl"

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError) as e:
            from_mapping({"experiment": "E13"})
        assert e.value.key == "experiment"

    def test_file_and_overrides(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# comment\nexperiment = E4\npoints_per_axis = 16  # trailing\ninit.eps = 0.5\ncfl = 0.1\n")
        cfg = load_config(p, [("cfl", "0.05"), ("init.r", "2")])
        assert cfg.experiment == "E4" and cfg.points_per_axis == 16
        assert cfg.cfl == 0.05 and cfg.init == {"eps": 0.5, "r": 2.0}
        assert cfg.stepper().cfl == 0.05

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")

    def test_malformed_line(self):
        with pytest.raises(ConfigError):
            read_pairs("experiment E1")

    def test_radius_order(self):
        with pytest.raises(ConfigError) as e:
            from_mapping({"experiment": "E4", "radius_inner": 0.3, "radius_outer": 0.2})
        assert e.value.key == "radius_inner"

    def test_defaults(self):
        cfg = from_mapping({"experiment": "E1"})
        assert cfg == ExperimentConfig(experiment="E1")
        assert str(cfg.out_dir()) == os.path.join("runs", "E1")
        assert cfg.as_dict()["abort_a"] == "inf"
