"""Flat key = value run configuration with exact round-trips.

One file describes a full pipeline run: lattice, covariance family,
deformation, seeds, and stage parameters.  Values are written with
repr so that parse(format(cfg)) reproduces cfg bit for bit, and the
config hash gives artifacts a provenance tag.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

from .errors import ConfigError
from .fields import (
    MATERN,
    POLY_FRACTIONAL,
    POWERED_EXPONENTIAL,
    CovarianceModel,
    DeformationSpec,
)
from .grids import atomic_write_text

_FAMILIES = (POWERED_EXPONENTIAL, MATERN, POLY_FRACTIONAL)
_DEFORM_KINDS = ("identity", "rotational", "affine", "grid_map")


@dataclass
class PipelineConfig:
    # lattice
    grid_nx: int = 100
    grid_ny: int = 100
    origin_x: float = 0.0
    origin_y: float = 0.0
    spacing_x: float = 0.01
    spacing_y: float = 0.01
    # covariance: powered_exponential and matern take (variance, range, alpha),
    # polynomial_plus_fractional takes (variance, alpha, c)
    family: str = POWERED_EXPONENTIAL
    variance: float = 1.0
    range: float = 1.0
    alpha: float = 1.0
    c: float = 1.0
    # deformation
    deform: str = "rotational"
    deform_r0: float = 1.2
    deform_angle: float = 1.5707963267948966
    affine_a_re: float = 1.0
    affine_a_im: float = 0.0
    affine_b_re: float = 0.0
    affine_b_im: float = 0.0
    deform_path: str = ""
    # run
    seed: int = 0
    noise_fraction: float = 0.0
    alpha_max: float = 4.0
    block: int = 10
    sim_block: int = 50
    smooth_window: int = 4
    flow_steps: int = 20
    flow_lattice: int = 64
    harmonic_n: int = 8
    d1_samples: int = 20000
    out_dir: str = "out"
    threads: int = 1

    def validate(self) -> None:
        if self.family not in _FAMILIES:
            raise ConfigError(
                f"unknown family {self.family!r}; expected one of {', '.join(_FAMILIES)}"
            )
        if self.deform not in _DEFORM_KINDS:
            raise ConfigError(
                f"unknown deform {self.deform!r}; expected one of {', '.join(_DEFORM_KINDS)}"
            )
        if self.grid_nx < 2 or self.grid_ny < 2:
            raise ConfigError("grid_nx and grid_ny must be at least 2")
        if self.spacing_x <= 0 or self.spacing_y <= 0:
            raise ConfigError("spacing_x and spacing_y must be positive")
        if not 0.0 <= self.noise_fraction < 1.0:
            raise ConfigError("noise_fraction must be in [0, 1)")
        if self.deform == "grid_map" and not self.deform_path:
            raise ConfigError("deform = grid_map requires deform_path")

    def build_model(self) -> CovarianceModel:
        if self.family == POWERED_EXPONENTIAL:
            return CovarianceModel.powered_exponential(
                variance=self.variance, range=self.range, gamma=self.alpha
            )
        if self.family == MATERN:
            return CovarianceModel.matern(
                variance=self.variance, range=self.range, nu=self.alpha / 2.0
            )
        return CovarianceModel.polynomial_plus_fractional(
            variance=self.variance, alpha=self.alpha, c=self.c
        )

    def domain(self) -> tuple[float, float, float, float]:
        """Lattice bounding box as (x0, x1, y0, y1)."""
        return (
            self.origin_x,
            self.origin_x + (self.grid_nx - 1) * self.spacing_x,
            self.origin_y,
            self.origin_y + (self.grid_ny - 1) * self.spacing_y,
        )

    def build_deformation(self) -> DeformationSpec:
        domain = self.domain()
        if self.deform == "identity":
            return DeformationSpec.identity(domain=domain)
        if self.deform == "rotational":
            return DeformationSpec.rotational(
                r0=self.deform_r0, angle=self.deform_angle, domain=domain
            )
        if self.deform == "affine":
            return DeformationSpec.affine(
                a=complex(self.affine_a_re, self.affine_a_im),
                b=complex(self.affine_b_re, self.affine_b_im),
                domain=domain,
            )
        from .grids import read_grd

        grid = read_grd(self.deform_path)
        return DeformationSpec.grid_map(grid)

    def config_hash(self) -> str:
        """Provenance tag over everything that can change the artifacts.

        threads and out_dir are execution knobs: two runs differing only
        there produce identical files, so they stay out of the hash.
        """
        lines = [
            line
            for line in format_config(self).splitlines()
            if not line.startswith(("threads ", "out_dir "))
        ]
        return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:12]


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> PipelineConfig:
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    seen: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        ftype = fields[key].type
        try:
            if ftype == "int":
                seen[key] = int(value)
            elif ftype == "float":
                seen[key] = float(value)
            else:
                seen[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    cfg = PipelineConfig(**seen)
    cfg.validate()
    return cfg


def read_config(path: str) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def write_config(path: str, cfg: PipelineConfig) -> None:
    atomic_write_text(path, format_config(cfg))
