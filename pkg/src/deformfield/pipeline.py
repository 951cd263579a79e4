"""File-oriented run stages: simulate, estimate, reconstruct, evaluate.

Each stage reads its predecessor's artifacts from the run directory,
writes its own together with a JSON sidecar stamped with the config
hash, and refuses to run on artifacts produced under a different
configuration unless forced.
"""

from __future__ import annotations

import json
import logging
import os

import numpy as np

from .config import PipelineConfig
from .conformal import compose_estimate, distance_d1, distance_d2
from .diskgeom import interpolate_dilatation, smooth_dilatation
from .errors import ConfigError
from .fields import (
    SampleField,
    add_noise,
    apply_deformation,
    numeric_dilatation,
    simulate_isotropic,
    simulation_blocks,
)
from .flow import MU_STAR_CAP, reconstruct_map
from .grids import (
    ComplexGrid,
    Grid,
    atomic_write_text,
    grid_sample,
    read_grd,
    write_grd,
)
from .likelihood import DilatationScaleField, estimate_alpha, estimate_field, partition_grid
from .svgplots import ellipse_field_svg, scatter_svg, warped_grid_svg

log = logging.getLogger(__name__)

MAX_EXACT_SIM = 20000


def _write_meta(path: str, stage: str, cfg: PipelineConfig, extra: dict | None = None) -> None:
    meta = {"stage": stage, "config_hash": cfg.config_hash()}
    if extra:
        meta.update(extra)
    atomic_write_text(path, json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _read_meta(path: str, cfg: PipelineConfig, force: bool) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"missing upstream artifact {path}; run the earlier stage first")
    with open(path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("config_hash") != cfg.config_hash():
        msg = (
            f"{path} was produced under config {meta.get('config_hash')}, "
            f"current config is {cfg.config_hash()}"
        )
        if not force:
            raise ConfigError(msg + "; pass force to override")
        log.warning("%s (forced)", msg)
    return meta


def stage_simulate(cfg: PipelineConfig, out_dir: str) -> Grid:
    """Draw one deformed-field realization on the observation lattice."""
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    model = cfg.build_model()
    deform = cfg.build_deformation()
    nx, ny = cfg.grid_nx, cfg.grid_ny
    lattice = Grid(
        nx, ny, (cfg.origin_x, cfg.origin_y), (cfg.spacing_x, cfg.spacing_y),
        np.zeros((nx, ny)),
    )
    # sim_block = 0 forces one exact draw; anything else tiles as soon as the
    # lattice is bigger than a single tile, keeping the Cholesky factor small.
    blocks = None
    if cfg.sim_block > 0 and max(nx, ny) > cfg.sim_block:
        blocks = simulation_blocks(nx, ny, cfg.sim_block)
        log.info("simulating %d independent tiles of side %d", len(blocks), cfg.sim_block)
    elif nx * ny > MAX_EXACT_SIM:
        raise ConfigError(
            f"exact simulation of {nx * ny} sites would need a dense Cholesky; "
            "set sim_block to a positive tile size"
        )
    sites = lattice.locations()
    latent = apply_deformation(deform, sites)
    sample = simulate_isotropic(model, latent, cfg.seed, blocks=blocks)
    sample = add_noise(sample, cfg.noise_fraction, cfg.seed)
    grid = lattice.with_values(sample.values.reshape(nx, ny))
    write_grd(grid, os.path.join(out_dir, "field.grd"))
    _write_meta(
        os.path.join(out_dir, "field_meta.json"),
        "simulate",
        cfg,
        {
            "seed": cfg.seed,
            "noise_fraction": cfg.noise_fraction,
            "sim_tiles": 0 if blocks is None else len(blocks),
        },
    )
    return grid


def stage_estimate(cfg: PipelineConfig, out_dir: str, force: bool = False) -> DilatationScaleField:
    """Estimate the fractal index and blockwise dilatation/scale field."""
    cfg.validate()
    _read_meta(os.path.join(out_dir, "field_meta.json"), cfg, force)
    grid = read_grd(os.path.join(out_dir, "field.grd"))
    data = SampleField(grid.locations(), grid.values.ravel())
    partition = partition_grid(
        grid.nx, grid.ny, cfg.block, origin=grid.origin, spacing=grid.spacing
    )
    alpha_hat = estimate_alpha(data, partition, alpha_max=cfg.alpha_max)
    log.info("fractal index estimate: %.4f", alpha_hat)
    est = estimate_field(
        data,
        partition,
        alpha_hat,
        alpha_max=cfg.alpha_max,
        threads=cfg.threads,
    )
    est.to_csv(os.path.join(out_dir, "estimates.csv"))
    est.write_sidecar(
        os.path.join(out_dir, "estimates_meta.json"),
        extra={"stage": "estimate", "config_hash": cfg.config_hash()},
    )
    return est


def _load_estimates(cfg: PipelineConfig, out_dir: str, force: bool) -> DilatationScaleField:
    meta = _read_meta(os.path.join(out_dir, "estimates_meta.json"), cfg, force)
    return DilatationScaleField.from_csv(
        os.path.join(out_dir, "estimates.csv"),
        alpha_used=float(meta["alpha"]),
        geometry=meta["geometry"],
    )


def stage_reconstruct(cfg: PipelineConfig, out_dir: str, force: bool = False) -> ComplexGrid:
    """Smooth the dilatation field, flow to a map, correct the scale."""
    cfg.validate()
    est = _load_estimates(cfg, out_dir, force)
    smoothed = smooth_dilatation(est, cfg.smooth_window)

    m = cfg.flow_lattice
    x0, x1, y0, y1 = cfg.domain()
    spacing = ((x1 - x0) / (m - 1), (y1 - y0) / (m - 1))
    mu_star = ComplexGrid(m, m, (x0, y0), spacing, np.zeros((m, m), dtype=np.complex128))
    mu_vals = np.array(
        [interpolate_dilatation(smoothed, complex(z)) for z in mu_star.locations()]
    )
    wild = np.abs(mu_vals) > MU_STAR_CAP
    if np.any(wild):
        log.warning(
            "clipping %d of %d flow-lattice dilatations to |mu| = %.3f",
            int(wild.sum()), mu_vals.size, MU_STAR_CAP,
        )
        mu_vals[wild] *= MU_STAR_CAP / np.abs(mu_vals[wild])
    mu_star = mu_star.with_values(mu_vals.reshape(m, m))
    write_grd(mu_star, os.path.join(out_dir, "mustar.grd"))

    f_check, phi_check = reconstruct_map(mu_star, steps=cfg.flow_steps)
    f_hat = compose_estimate(f_check, phi_check, smoothed, n_max=cfg.harmonic_n)
    write_grd(f_check, os.path.join(out_dir, "fcheck.grd"))
    write_grd(phi_check, os.path.join(out_dir, "phicheck.grd"))
    write_grd(f_hat, os.path.join(out_dir, "fhat.grd"))
    ellipse_field_svg(
        os.path.join(out_dir, "ellipses.svg"),
        smoothed.centers,
        smoothed.mu,
        title="local distortion ellipses",
    )
    warped_grid_svg(
        os.path.join(out_dir, "warped.svg"), f_hat, title="reconstructed map"
    )
    _write_meta(
        os.path.join(out_dir, "reconstruct_meta.json"),
        "reconstruct",
        cfg,
        {"alpha": est.alpha_used},
    )
    return f_hat


def _isotropy_table(field_grid: Grid, f_hat: ComplexGrid, seed: int, bins: int = 24):
    """Binned squared increments of Y against distances in estimated latent coordinates."""
    sites = f_hat.locations()
    latent = f_hat.values.ravel()
    y = grid_sample(field_grid, sites)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x150,)))
    m = min(20000, 4 * sites.size)
    ia = rng.integers(0, sites.size, size=m)
    ib = rng.integers(0, sites.size, size=m)
    keep = ia != ib
    dist = np.abs(latent[ia] - latent[ib])[keep]
    sq = (y[ia] - y[ib])[keep] ** 2
    hi = np.quantile(dist, 0.5)
    edges = np.linspace(0.0, hi, bins + 1)
    which = np.digitize(dist, edges) - 1
    rows = []
    for b in range(bins):
        sel = which == b
        if sel.sum() < 10:
            continue
        rows.append((0.5 * (edges[b] + edges[b + 1]), float(sq[sel].mean()), int(sel.sum())))
    return rows


def stage_evaluate(cfg: PipelineConfig, out_dir: str, force: bool = False) -> dict:
    """Distances to the true deformation plus an isotropy diagnostic."""
    cfg.validate()
    meta = _read_meta(os.path.join(out_dir, "reconstruct_meta.json"), cfg, force)
    f_hat = read_grd(os.path.join(out_dir, "fhat.grd"))
    if not isinstance(f_hat, ComplexGrid):
        raise ConfigError("fhat.grd does not hold a complex map")
    truth = cfg.build_deformation()
    d1 = distance_d1(f_hat, truth, sample_count=cfg.d1_samples, seed=cfg.seed)
    mu_grid, _ = numeric_dilatation(f_hat, interior_only=True)
    d2 = distance_d2(mu_grid, truth)
    metrics = {"alpha": float(meta.get("alpha", np.nan)), "d1": float(d1), "d2": float(d2)}
    lines = ["metric,value,config_hash"]
    for name in ("alpha", "d1", "d2"):
        lines.append(f"{name},{metrics[name]!r},{cfg.config_hash()}")
    atomic_write_text(os.path.join(out_dir, "report.csv"), "\n".join(lines) + "\n")

    field_grid = read_grd(os.path.join(out_dir, "field.grd"))
    rows = _isotropy_table(field_grid, f_hat, cfg.seed)
    iso_lines = ["distance,mean_sq_increment,count"]
    iso_lines += [f"{float(d)!r},{float(v)!r},{int(n)}" for d, v, n in rows]
    atomic_write_text(os.path.join(out_dir, "isotropy.csv"), "\n".join(iso_lines) + "\n")
    if rows:
        scatter_svg(
            os.path.join(out_dir, "isotropy.svg"),
            [r[0] for r in rows],
            [r[1] for r in rows],
            title="variogram in estimated latent coordinates",
            labels=("distance", "mean squared increment"),
        )
    log.info("d1 = %.5f, d2 = %.5f", d1, d2)
    return metrics


def run_pipeline(cfg: PipelineConfig, out_dir: str, force: bool = False) -> dict:
    """All four stages in order; returns the evaluation metrics."""
    stage_simulate(cfg, out_dir)
    stage_estimate(cfg, out_dir, force)
    stage_reconstruct(cfg, out_dir, force)
    return stage_evaluate(cfg, out_dir, force)
