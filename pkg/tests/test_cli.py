import subprocess
import sys

import numpy as np
import pytest
import yaml

from hpinn import cli
from hpinn.model import TrainingDivergedError

TINY = {
    "pde": {"viscosity": 0.0},
    "discretization": {"n_points": 48, "dt": 0.5, "q_stages": 1},
    "network": {"layers": 2, "width": 8, "seed": 0},
    "training": {"max_iterations": 120},
    "reference": {"n_cells": 64},
    "outputs": {"t_final": 0.5, "profile_times": [0.5]},
}


def write_config(tmp_path, overrides=None, name="config.yaml"):
    cfg = yaml.safe_load(yaml.safe_dump(TINY))
    for section, fields in (overrides or {}).items():
        cfg.setdefault(section, {}).update(fields)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


class TestConfigErrors:
    def test_missing_file(self, tmp_path, capsys):
        code = cli.main(["run", "--config", str(tmp_path / "nope.yaml")])
        assert code == 2
        assert "not found" in capsys.readouterr().err

    def test_unknown_field_names_path(self, tmp_path, capsys):
        path = write_config(tmp_path, {"training": {"learning_rte": 1e-4}})
        code = cli.main(["run", "--config", str(path)])
        assert code == 2
        assert "training.learning_rte" in capsys.readouterr().err

    def test_bad_type_names_path(self, tmp_path, capsys):
        path = write_config(tmp_path, {"discretization": {"dt": "soon"}})
        code = cli.main(["run", "--config", str(path)])
        assert code == 2
        assert "discretization.dt" in capsys.readouterr().err

    def test_invalid_yaml(self, tmp_path, capsys):
        path = tmp_path / "broken.yaml"
        path.write_text("pde: [unclosed")
        code = cli.main(["run", "--config", str(path)])
        assert code == 2

    def test_profile_beyond_t_final(self, tmp_path):
        path = write_config(tmp_path, {"outputs": {"profile_times": [0.9]}})
        assert cli.main(["run", "--config", str(path)]) == 2


class TestRun:
    def test_artifacts_and_determinism(self, tmp_path):
        path = write_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert cli.main(["run", "--config", str(path), "--out", str(out1)]) == 0
        assert cli.main(["run", "--config", str(path), "--out", str(out2)]) == 0

        profile = out1 / "profile_t0.5.csv"
        errors = out1 / "errors.csv"
        log = out1 / "diagnostics.jsonl"
        assert profile.is_file() and errors.is_file() and log.is_file()
        header = profile.read_text().splitlines()[0]
        assert header == "x,u_hpinn,u_ref"
        assert errors.read_text().splitlines()[0] == "time,rel_error"
        # identical config and seed: byte-identical artifacts
        assert profile.read_bytes() == (out2 / "profile_t0.5.csv").read_bytes()
        assert errors.read_bytes() == (out2 / "errors.csv").read_bytes()

    def test_config_echoed_in_diagnostics(self, tmp_path):
        import json

        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(path), "--out", str(out)]) == 0
        first = json.loads((out / "diagnostics.jsonl").read_text().splitlines()[0])
        assert first["config"]["discretization"]["n_points"] == 48
        assert first["config"]["training"]["learning_rate"] == pytest.approx(1e-4)

    def test_seed_override_changes_profiles(self, tmp_path):
        path = write_config(tmp_path)
        out1, out2 = tmp_path / "s0", tmp_path / "s1"
        assert cli.main(["run", "--config", str(path), "--out", str(out1)]) == 0
        assert cli.main(["run", "--config", str(path), "--out", str(out2), "--seed", "9"]) == 0
        a = (out1 / "profile_t0.5.csv").read_bytes()
        b = (out2 / "profile_t0.5.csv").read_bytes()
        assert a != b

    def test_numerical_failure_maps_to_exit_3(self, tmp_path, monkeypatch, capsys):
        path = write_config(tmp_path)

        def explode(*args, **kwargs):
            raise TrainingDivergedError("non-finite loss at step 0", iteration=17)

        monkeypatch.setattr(cli, "march", explode)
        code = cli.main(["run", "--config", str(path), "--out", str(tmp_path / "x")])
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err


class TestBaseline:
    def test_baseline_column_name(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "base"
        assert cli.main(["baseline", "--config", str(path), "--out", str(out)]) == 0
        header = (out / "profile_t0.5.csv").read_text().splitlines()[0]
        assert header == "x,u_pinn_baseline,u_ref"


class TestReference:
    def test_reference_profiles(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "ref"
        assert cli.main(["reference", "--config", str(path), "--out", str(out)]) == 0
        lines = (out / "reference_t0.5.csv").read_text().splitlines()
        assert lines[0] == "x,u"
        assert len(lines) == 1 + 64  # one row per reference cell


class TestSweep:
    def test_tiny_grid_schema(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "sweep"
        code = cli.main(
            ["sweep", "--config", str(path), "--out", str(out),
             "--q", "1", "--dt", "0.5", "0.25", "--nu", "0.0"]
        )
        assert code == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "q,dt,nu,rel_error,iterations,converged,error"
        assert len(lines) == 3  # header + 2 cells

    def test_cell_failure_recorded_in_row(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "sweepfail"
        # dt = 0.4 does not divide t_final = 0.5: the cell fails, sweep survives
        code = cli.main(
            ["sweep", "--config", str(path), "--out", str(out),
             "--q", "1", "--dt", "0.4", "--nu", "0.0"]
        )
        assert code == 0
        row = (out / "sweep.csv").read_text().splitlines()[1].split(",")
        assert row[3] == ""  # no rel_error
        assert row[5] == "false"
        assert row[6] != ""

    def test_parallel_jobs_match_serial(self, tmp_path):
        path = write_config(tmp_path)
        serial, parallel = tmp_path / "ser", tmp_path / "par"
        args = ["--q", "1", "--dt", "0.5", "--nu", "0.0", "0.01"]
        assert cli.main(["sweep", "--config", str(path), "--out", str(serial)] + args) == 0
        assert cli.main(
            ["sweep", "--config", str(path), "--out", str(parallel), "--jobs", "2"] + args
        ) == 0
        assert (serial / "sweep.csv").read_bytes() == (parallel / "sweep.csv").read_bytes()


def test_installed_entry_point_smoke():
    proc = subprocess.run(
        [sys.executable, "-m", "hpinn.cli", "run", "--config", "/nonexistent.yaml"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert "config error" in proc.stderr
