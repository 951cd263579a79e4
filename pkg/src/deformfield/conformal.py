"""Conformal correction of a reconstructed map, and map distances.

The flow reconstruction pins down the map only up to postcomposition
with a conformal factor.  That factor is recovered from the estimated
local scales: the log-derivative of an analytic correction h is a
harmonic polynomial fitted by least squares on the unit disk, and h
itself is rebuilt by integrating exp of that polynomial from 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .fields import DeformationSpec, apply_deformation, numeric_dilatation
from .grids import ComplexGrid, Grid, grid_sample
from .likelihood import DilatationScaleField

log = logging.getLogger(__name__)

GAUSS_NODES = 32  # Gauss-Legendre nodes per unit of path length


@dataclass(frozen=True)
class DiskTransform:
    """Affine chart w -> (w - center) / radius into the unit disk."""

    center: complex
    radius: float

    def forward(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.complex128) - self.center) / self.radius

    def inverse(self, w) -> np.ndarray:
        return self.center + self.radius * np.asarray(w, dtype=np.complex128)


def embed_to_disk(points) -> tuple[np.ndarray, DiskTransform]:
    """Map a point cloud into the open unit disk.

    The chart centers on the bounding-box center and uses radius
    1.05 * (largest distance to it), so every image has modulus
    at most 1/1.05 < 1.
    """
    pts = np.asarray(points, dtype=np.complex128).ravel()
    if pts.size == 0:
        raise ValueError("no points to embed")
    center = complex(
        0.5 * (pts.real.min() + pts.real.max()),
        0.5 * (pts.imag.min() + pts.imag.max()),
    )
    reach = float(np.max(np.abs(pts - center)))
    radius = 1.05 * reach if reach > 0 else 1.0
    transform = DiskTransform(center, radius)
    return transform.forward(pts), transform


@dataclass
class HarmonicFit:
    """Least-squares fit of Re log h'(w) = a_0 + sum Re(A_n w^n) on the disk."""

    n_max: int
    coefficients: np.ndarray  # complex, A_0 .. A_N with Im A_0 = 0
    disk_transform: DiskTransform | None
    residual: float
    rank_deficient: bool = False


def fit_log_scale(
    w_points, targets, n_max: int, *, transform: DiskTransform | None = None
) -> HarmonicFit:
    """Fit the harmonic expansion of a log conformal factor.

    With w = r e^{i theta}, the design columns are 1, r^n cos(n theta)
    and -r^n sin(n theta) for n = 1..N, i.e. the real part of
    sum (a_n + i b_n) w^n with b_0 fixed to 0.  Solved by least squares
    (minimal-norm solution, flagged, when the design is rank deficient).
    """
    w = np.asarray(w_points, dtype=np.complex128).ravel()
    ell = np.asarray(targets, dtype=np.float64).ravel()
    if w.shape != ell.shape:
        raise ValueError("points and targets must have equal length")
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    if w.size < 2 * n_max + 1:
        raise ValueError(
            f"need at least {2 * n_max + 1} points for degree {n_max}, got {w.size}"
        )
    if np.any(np.abs(w) >= 1.0):
        raise ValueError("design points must lie strictly inside the unit disk")
    r = np.abs(w)
    theta = np.angle(w)
    cols = [np.ones_like(r)]
    for n in range(1, n_max + 1):
        cols.append(r**n * np.cos(n * theta))
    for n in range(1, n_max + 1):
        cols.append(-(r**n) * np.sin(n * theta))
    design = np.column_stack(cols)
    coef, _, rank, _ = np.linalg.lstsq(design, ell, rcond=None)
    deficient = rank < design.shape[1]
    if deficient:
        log.warning("log-scale design is rank deficient (rank %d < %d)", rank, design.shape[1])
    a = coef[: n_max + 1]
    b = np.concatenate([[0.0], coef[n_max + 1 :]])
    residual = float(np.sqrt(np.mean((design @ coef - ell) ** 2)))
    return HarmonicFit(
        n_max=n_max,
        coefficients=a + 1j * b,
        disk_transform=transform,
        residual=residual,
        rank_deficient=deficient,
    )


def _log_hprime(fit: HarmonicFit, z: np.ndarray) -> np.ndarray:
    return np.polynomial.polynomial.polyval(z, fit.coefficients)


def _integrate_segment(fit: HarmonicFit, z0, z1) -> np.ndarray:
    """integral of exp(P) along the straight segment z0 -> z1."""
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_NODES)
    s = 0.5 * (nodes + 1.0)  # [0, 1]
    q = 0.5 * weights
    z0 = np.asarray(z0, dtype=np.complex128)
    z1 = np.asarray(z1, dtype=np.complex128)
    zpts = z0[..., None] + s * (z1 - z0)[..., None]
    vals = np.exp(_log_hprime(fit, zpts))
    return (z1 - z0) * np.sum(q * vals, axis=-1)


def integrate_hprime(fit: HarmonicFit, eval_points) -> np.ndarray:
    """h(w) = int_0^w exp(sum A_n zeta^n) d zeta along straight rays.

    Composite Gauss-Legendre with 32 nodes per unit of path length;
    all disk points are within distance 1 of the origin, so a single
    panel reaches quadrature-level accuracy for these smooth integrands.
    """
    pts = np.asarray(eval_points, dtype=np.complex128)
    scalar = pts.ndim == 0
    pts = np.atleast_1d(pts)
    out = _integrate_segment(fit, np.zeros_like(pts), pts)
    return out[0] if scalar else out


def scale_correction_fit(
    f_check: ComplexGrid,
    phi_check: Grid,
    field: DilatationScaleField,
    n_max: int = 8,
) -> tuple[HarmonicFit, DiskTransform, np.ndarray, np.ndarray]:
    """Fit the conformal log-scale correction against estimated scales.

    Targets are log(phi_hat_j) - log(phi_fcheck at the block center),
    shifted by log(radius) of the disk chart so the chart's affine
    rescaling is absorbed into the constant coefficient.  Returns the
    fit, the chart, the chart images of the centers used, and the targets.
    """
    _, transform = embed_to_disk(f_check.values.ravel())
    ok = field.ok_mask()
    centers = field.centers[ok]
    phi_hat = field.phi[ok]
    w_centers = grid_sample(f_check, centers)
    phi_flow = grid_sample(phi_check, centers)
    good = np.isfinite(phi_hat) & (phi_hat > 0) & (phi_flow > 0)
    targets = (
        np.log(phi_hat[good]) - np.log(phi_flow[good]) + np.log(transform.radius)
    )
    w_disk = transform.forward(w_centers[good])
    fit = fit_log_scale(w_disk, targets, n_max, transform=transform)
    return fit, transform, w_disk, targets


def compose_estimate(
    f_check: ComplexGrid,
    phi_check: Grid,
    field: DilatationScaleField,
    n_max: int = 8,
) -> ComplexGrid:
    """Postcompose the reconstructed map with the fitted conformal factor.

    Returns the corrected map h(chart(f_check)) on f_check's lattice.
    The correction is analytic, so the dilatation field of the result
    matches that of f_check; only local scales change.
    """
    fit, transform, _, _ = scale_correction_fit(f_check, phi_check, field, n_max)
    w_all = transform.forward(f_check.values.ravel())
    corrected = integrate_hprime(fit, w_all).reshape(f_check.nx, f_check.ny)
    return ComplexGrid(
        f_check.nx, f_check.ny, f_check.origin, f_check.spacing, corrected
    )


# ---------------------------------------------------------------------------
# Distances between deformations


def align_rigid(points_src: np.ndarray, points_dst: np.ndarray) -> tuple[complex, complex]:
    """Rigid motion (rotation, shift) minimizing |rot*src + shift - dst|^2.

    Rotation and translation only, no scaling.  Returns (rot, shift)
    with |rot| = 1, to be applied as rot * src + shift.
    """
    src = np.asarray(points_src, dtype=np.complex128).ravel()
    dst = np.asarray(points_dst, dtype=np.complex128).ravel()
    if src.shape != dst.shape or src.size == 0:
        raise ValueError("point sets must be non-empty and of equal length")
    ms, md = src.mean(), dst.mean()
    cross = np.sum((dst - md) * np.conj(src - ms))
    rot = cross / abs(cross) if abs(cross) > 0 else 1.0 + 0.0j
    shift = md - rot * ms
    return complex(rot), complex(shift)


def distance_d1(
    f_hat: ComplexGrid,
    f_true: DeformationSpec,
    sample_count: int = 20000,
    seed: int = 0,
) -> float:
    """Interpoint-distance discrepancy, invariant to rigid motions of either map.

    Monte-Carlo average over seeded pairs of lattice sites of
    (|f_hat(z) - f_hat(w)| - |f(z) - f(w)|)^2, normalized as an
    integral over the squared domain, then square-rooted.
    """
    sites = f_hat.locations()
    values = f_hat.values.ravel()
    truth = apply_deformation(f_true, sites)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xD1,)))
    ia = rng.integers(0, sites.size, size=sample_count)
    ib = rng.integers(0, sites.size, size=sample_count)
    gap = np.abs(values[ia] - values[ib]) - np.abs(truth[ia] - truth[ib])
    return float(np.sqrt(np.mean(gap**2)))


def distance_d2(mu_hat: ComplexGrid, f_true: DeformationSpec) -> float:
    """Dilatation discrepancy: RMS of |mu_hat - mu_true| over interior cells.

    mu_true is measured from the true deformation sampled on mu_hat's
    lattice, with the same finite differences as any estimate, and the
    Riemann sum is normalized by the domain area.
    """
    truth_vals = apply_deformation(f_true, mu_hat.locations()).reshape(
        mu_hat.nx, mu_hat.ny
    )
    truth_grid = ComplexGrid(
        mu_hat.nx, mu_hat.ny, mu_hat.origin, mu_hat.spacing, truth_vals
    )
    mu_true, _ = numeric_dilatation(truth_grid)
    gap = np.abs(mu_hat.values[1:-1, 1:-1] - mu_true.values[1:-1, 1:-1])
    return float(np.sqrt(np.mean(gap**2)))
