"""Command line interface: exit codes, messages, and a small run."""

import os
import subprocess
import sys

import pytest

from deformfield.cli import main
from deformfield.config import PipelineConfig, read_config, write_config


def _mini_cfg_file(path, **overrides):
    cfg = PipelineConfig(
        grid_nx=30,
        grid_ny=30,
        family="powered-exponential",
        variance=0.5,
        alpha=0.7,
        deform="rotational",
        seed=2,
        alpha_max=2.0,
        block=10,
        sim_block=15,
        smooth_window=2,
        flow_steps=4,
        flow_lattice=16,
        harmonic_n=3,
        d1_samples=2000,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    write_config(str(path), cfg)
    return cfg


def test_init_writes_default_config(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    assert main(["init", str(path)]) == 0
    assert "wrote default config" in capsys.readouterr().out
    assert read_config(str(path)) == PipelineConfig()


def test_unknown_command_exits_two(capsys):
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2


def test_bad_config_key_exits_two(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    path.write_text("not_a_key = 1\n")
    assert main(["simulate", "--config", str(path)]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_missing_config_file_exits_four(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "absent.cfg")]) == 4
    assert "i/o failure" in capsys.readouterr().err


def test_estimate_before_simulate_exits_two(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    _mini_cfg_file(path, out_dir=str(tmp_path / "out"))
    assert main(["estimate", "--config", str(path)]) == 2
    assert "missing upstream" in capsys.readouterr().err


def test_bad_threads_env_exits_two(tmp_path, capsys, monkeypatch):
    path = tmp_path / "run.cfg"
    _mini_cfg_file(path, out_dir=str(tmp_path / "out"))
    monkeypatch.setenv("DEFORMFIELD_THREADS", "many")
    assert main(["simulate", "--config", str(path)]) == 2
    assert "DEFORMFIELD_THREADS" in capsys.readouterr().err


def test_pipeline_end_to_end(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    out = str(tmp_path / "out")
    _mini_cfg_file(path)
    assert main(["pipeline", "--config", str(path), "--out", out]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("alpha = ")
    assert lines[1].startswith("d1 = ")
    assert lines[2].startswith("d2 = ")
    for name in ("field.grd", "estimates.csv", "fhat.grd", "report.csv"):
        assert os.path.exists(os.path.join(out, name))


def test_seed_override_changes_field(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    _mini_cfg_file(path)
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    assert main(["simulate", "--config", str(path), "--out", out_a]) == 0
    assert main(["simulate", "--config", str(path), "--out", out_b, "--seed", "9"]) == 0
    with open(os.path.join(out_a, "field.grd"), "rb") as fh:
        blob_a = fh.read()
    with open(os.path.join(out_b, "field.grd"), "rb") as fh:
        blob_b = fh.read()
    assert blob_a != blob_b


def test_threads_flag_accepted(tmp_path, capsys):
    path = tmp_path / "run.cfg"
    out = str(tmp_path / "out")
    _mini_cfg_file(path)
    assert main(["simulate", "--config", str(path), "--out", out]) == 0
    assert main(["estimate", "--config", str(path), "--out", out, "--threads", "2"]) == 0
    assert "alpha = " in capsys.readouterr().out


def test_console_script_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "deformfield.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "simulate" in proc.stdout and "pipeline" in proc.stdout
