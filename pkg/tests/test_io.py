"""Config parsing and the file-oriented pipeline stages."""

import dataclasses
import os

import numpy as np
import pytest

from deformfield.config import (
    PipelineConfig,
    format_config,
    parse_config,
    read_config,
    write_config,
)
from deformfield.errors import ConfigError
from deformfield.pipeline import (
    run_pipeline,
    stage_estimate,
    stage_evaluate,
    stage_reconstruct,
    stage_simulate,
)


def _mini_config(**overrides):
    cfg = PipelineConfig(
        grid_nx=40,
        grid_ny=40,
        family="powered-exponential",
        variance=0.5,
        range=1.0,
        alpha=0.7,
        deform="rotational",
        seed=3,
        alpha_max=2.0,
        block=10,
        sim_block=20,
        smooth_window=2,
        flow_steps=5,
        flow_lattice=24,
        harmonic_n=3,
        d1_samples=4000,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


# ---------------------------------------------------------------------------
# Config round trips


def test_format_parse_round_trip():
    cfg = _mini_config(spacing_x=1.0 / 3.0, variance=0.515100000001, seed=42)
    back = parse_config(format_config(cfg))
    assert back == cfg


def test_config_file_round_trip(tmp_path):
    cfg = _mini_config(deform="affine", affine_b_re=0.3)
    path = str(tmp_path / "run.cfg")
    write_config(path, cfg)
    assert read_config(path) == cfg


def test_parse_accepts_comments_and_blank_lines():
    text = "\n# full line comment\n  \nseed = 7  # trailing comment\n"
    cfg = parse_config(text)
    assert cfg.seed == 7
    assert cfg.grid_nx == PipelineConfig().grid_nx  # untouched default


def test_parse_reports_line_numbers():
    with pytest.raises(ConfigError, match="line 2: unknown key 'sead'"):
        parse_config("seed = 1\nsead = 2\n")
    with pytest.raises(ConfigError, match="line 3: duplicate key 'seed'"):
        parse_config("seed = 1\nblock = 5\nseed = 2\n")
    with pytest.raises(ConfigError, match="line 1: bad value for 'seed'"):
        parse_config("seed = seven\n")
    with pytest.raises(ConfigError, match="line 1: expected 'key = value'"):
        parse_config("just words\n")


def test_validate_rejects_bad_settings():
    with pytest.raises(ConfigError, match="unknown family"):
        _mini_config(family="gaussian").validate()
    with pytest.raises(ConfigError, match="unknown deform"):
        _mini_config(deform="swirl").validate()
    with pytest.raises(ConfigError, match="at least 2"):
        _mini_config(grid_nx=1).validate()
    with pytest.raises(ConfigError, match="positive"):
        _mini_config(spacing_y=0.0).validate()
    with pytest.raises(ConfigError, match="noise_fraction"):
        _mini_config(noise_fraction=1.0).validate()
    with pytest.raises(ConfigError, match="deform_path"):
        _mini_config(deform="grid_map").validate()


def test_config_hash_stability_and_sensitivity():
    cfg = _mini_config()
    h = cfg.config_hash()
    assert parse_config(format_config(cfg)).config_hash() == h
    for field, value in (("seed", 4), ("alpha", 0.9), ("deform", "identity")):
        other = _mini_config(**{field: value})
        assert other.config_hash() != h
    # execution knobs do not change what gets computed
    assert _mini_config(threads=8).config_hash() == h
    assert _mini_config(out_dir="elsewhere").config_hash() == h


def test_config_covers_every_field_in_text():
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    text = format_config(PipelineConfig())
    keys = {line.split("=")[0].strip() for line in text.strip().splitlines()}
    assert keys == names


# ---------------------------------------------------------------------------
# Pipeline stages


def test_stage_order_is_enforced(tmp_path):
    cfg = _mini_config()
    out = str(tmp_path / "run")
    with pytest.raises(ConfigError, match="missing upstream"):
        stage_estimate(cfg, out)
    with pytest.raises(ConfigError, match="missing upstream"):
        stage_reconstruct(cfg, out)
    with pytest.raises(ConfigError, match="missing upstream"):
        stage_evaluate(cfg, out)


def test_stage_hash_mismatch_requires_force(tmp_path):
    out = str(tmp_path / "run")
    stage_simulate(_mini_config(), out)
    other = _mini_config(seed=99)
    with pytest.raises(ConfigError, match="pass force to override"):
        stage_estimate(other, out)


def test_simulate_writes_field_and_meta(tmp_path):
    out = str(tmp_path / "run")
    grid = stage_simulate(_mini_config(), out)
    assert grid.values.shape == (40, 40)
    assert np.all(np.isfinite(grid.values))
    assert os.path.exists(os.path.join(out, "field.grd"))
    assert os.path.exists(os.path.join(out, "field_meta.json"))


def test_simulate_exact_cap_without_tiling(tmp_path):
    cfg = _mini_config(grid_nx=200, grid_ny=200, sim_block=0, deform="identity")
    with pytest.raises(ConfigError, match="sim_block"):
        stage_simulate(cfg, str(tmp_path / "run"))


def test_full_pipeline_mini_run(tmp_path):
    cfg = _mini_config()
    out = str(tmp_path / "run")
    metrics = run_pipeline(cfg, out)
    assert set(metrics) == {"alpha", "d1", "d2"}
    assert 0.05 < metrics["alpha"] <= 2.0
    assert np.isfinite(metrics["d1"]) and metrics["d1"] >= 0.0
    assert np.isfinite(metrics["d2"]) and metrics["d2"] >= 0.0
    for name in (
        "field.grd",
        "field_meta.json",
        "estimates.csv",
        "estimates_meta.json",
        "mustar.grd",
        "fcheck.grd",
        "phicheck.grd",
        "fhat.grd",
        "ellipses.svg",
        "warped.svg",
        "reconstruct_meta.json",
        "report.csv",
        "isotropy.csv",
        "isotropy.svg",
    ):
        assert os.path.exists(os.path.join(out, name)), name
    with open(os.path.join(out, "report.csv")) as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "metric,value,config_hash"
    assert len(lines) == 4


def test_pipeline_reruns_are_deterministic(tmp_path):
    cfg = _mini_config(grid_nx=30, grid_ny=30, flow_lattice=16, d1_samples=2000)
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    run_pipeline(cfg, out_a)
    run_pipeline(cfg, out_b)
    for name in ("field.grd", "fhat.grd", "report.csv"):
        with open(os.path.join(out_a, name), "rb") as fh:
            blob_a = fh.read()
        with open(os.path.join(out_b, name), "rb") as fh:
            blob_b = fh.read()
        assert blob_a == blob_b, name
