"""Isotropic covariance families, Gaussian field simulation, planar
deformations, and finite-difference measurement of dilatation and scale.

Model: an isotropic Gaussian field Z on the plane whose covariance
K(t) behaves near the origin like

    K(t) = (even polynomial in t) + c * G_alpha(t) + o(|t|^alpha),

where G_alpha is the fractal-index kernel below.  Observations are
Y(z) = Z(finv(z)) for an orientation-preserving deformation finv, so
simulation evaluates Z at the deformed locations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy import special

from .errors import OrientationError, SimulationError
from .grids import ComplexGrid, Grid, grid_sample

log = logging.getLogger(__name__)

POWERED_EXPONENTIAL = "powered-exponential"
MATERN = "matern"
POLY_FRACTIONAL = "polynomial-plus-fractional"

#: Jitter ladder applied to covariance factorizations, as multiples of the
#: variance scale.  Shared by simulation and likelihood code.
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


def p_alpha(alpha: float) -> int:
    """Order of the even-polynomial part removed before the fractional term.

    floor(alpha/2) when alpha/2 is not an integer, alpha/2 - 1 otherwise.
    """
    alpha = float(alpha)
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    half = alpha / 2.0
    if half == int(half):
        return int(half) - 1
    return int(np.floor(half))


def g_alpha(alpha: float, t) -> np.ndarray | float:
    """Fractal-index kernel G_alpha.

    G_alpha(t) = (-1)^(1+floor(alpha/2)) |t|^alpha          (alpha/2 not integer)
    G_alpha(t) = (-1)^(1+alpha/2) |t|^alpha log|t|           (alpha/2 integer)

    with G_alpha(0) = 0.  The sign is chosen so that contrast matrices of
    degree >= floor(alpha/2) turn G_alpha into a positive definite form.
    """
    alpha = float(alpha)
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    t = np.abs(np.asarray(t, dtype=np.float64))
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    half = alpha / 2.0
    if half == int(half):
        sign = (-1.0) ** (1 + int(half))
        out = np.zeros_like(t)
        nz = t > 0
        out[nz] = sign * t[nz] ** alpha * np.log(t[nz])
    else:
        sign = (-1.0) ** (1 + int(np.floor(half)))
        out = sign * t**alpha
    return out[0] if scalar else out


@dataclass(frozen=True)
class CovarianceModel:
    """Isotropic covariance with known fractal index alpha and coefficient c.

    Families and their (alpha, c):

    powered-exponential   K(t) = v * exp(-(t/rho)^gamma), gamma in (0, 2);
                          alpha = gamma, c = v / rho^gamma.
    matern                K(t) = v * 2^(1-nu)/Gamma(nu) * (t/rho)^nu K_nu(t/rho)
                          with non-integer nu; alpha = 2 nu and
                          c = v * |Gamma(1-nu)| / (Gamma(1+nu) * (2 rho)^alpha).
    polynomial-plus-fractional
                          the matern form re-parameterized by (v, alpha, c):
                          nu = alpha/2 and rho solved in closed form so the
                          fractional term has coefficient exactly c.  Its
                          expansion is v + (even polynomial) + c*G_alpha(t)
                          + o(|t|^alpha).
    """

    family: str
    variance: float
    range: float
    alpha: float
    c: float

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("variance must be positive")
        if self.range <= 0:
            raise ValueError("range must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.c <= 0:
            raise ValueError("fractional coefficient c must be positive")
        if self.family == POWERED_EXPONENTIAL and not 0 < self.alpha < 2:
            raise ValueError("powered-exponential needs alpha in (0, 2)")
        if self.family in (MATERN, POLY_FRACTIONAL) and (self.alpha / 2) == int(
            self.alpha / 2
        ):
            raise ValueError("matern-form families need non-integer alpha/2")
        if self.family not in (POWERED_EXPONENTIAL, MATERN, POLY_FRACTIONAL):
            raise ValueError(f"unknown covariance family {self.family!r}")

    @classmethod
    def powered_exponential(cls, variance: float, range: float, gamma: float):
        return cls(
            POWERED_EXPONENTIAL,
            variance,
            range,
            gamma,
            variance / range**gamma,
        )

    @classmethod
    def matern(cls, variance: float, range: float, nu: float):
        alpha = 2.0 * nu
        c = (
            variance
            * abs(special.gamma(1.0 - nu))
            / (special.gamma(1.0 + nu) * (2.0 * range) ** alpha)
        )
        return cls(MATERN, variance, range, alpha, c)

    @classmethod
    def polynomial_plus_fractional(cls, variance: float, alpha: float, c: float = 1.0):
        nu = alpha / 2.0
        rho = 0.5 * (
            variance * abs(special.gamma(1.0 - nu)) / (special.gamma(1.0 + nu) * c)
        ) ** (1.0 / alpha)
        return cls(POLY_FRACTIONAL, variance, rho, alpha, c)


def covariance_eval(model: CovarianceModel, t) -> np.ndarray | float:
    """Evaluate K(t) at distances t >= 0."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if model.family == POWERED_EXPONENTIAL:
        out = model.variance * np.exp(-((t / model.range) ** model.alpha))
    else:
        nu = model.alpha / 2.0
        x = t / model.range
        out = np.full_like(t, model.variance)
        nz = x > 0
        xnz = x[nz]
        out[nz] = (
            model.variance
            * 2.0 ** (1.0 - nu)
            / special.gamma(nu)
            * xnz**nu
            * special.kv(nu, xnz)
        )
        # kv underflows to 0 for large arguments, which is the right limit
        out[nz] = np.where(np.isfinite(out[nz]), out[nz], 0.0)
    return out[0] if scalar else out


def covariance_polynomial_part(model: CovarianceModel, t) -> np.ndarray | float:
    """The even-polynomial part sum_{k<=p_alpha} K^(2k)(0) t^(2k) / (2k)!.

    Closed form per family, used to expose the fractional remainder
    K(t) - poly(t) ~ c * G_alpha(t).
    """
    t = np.abs(np.asarray(t, dtype=np.float64))
    p = p_alpha(model.alpha)
    if model.family == POWERED_EXPONENTIAL:
        # alpha < 2 so p = 0: only the constant survives
        return np.full_like(t, model.variance) if t.ndim else model.variance
    nu = model.alpha / 2.0
    out = np.zeros_like(np.atleast_1d(t))
    for k in range(p + 1):
        coef = (
            model.variance
            * special.gamma(1.0 - nu)
            / (special.factorial(k) * special.gamma(k + 1.0 - nu))
            / (2.0 * model.range) ** (2 * k)
        )
        out = out + coef * np.atleast_1d(t) ** (2 * k)
    return out[0] if t.ndim == 0 else out


# ---------------------------------------------------------------------------
# Simulation


@dataclass
class SampleField:
    """Scattered observations: values Y_i at complex locations z_i."""

    locations: np.ndarray
    values: np.ndarray
    provenance: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=np.complex128).ravel()
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.locations.shape != self.values.shape:
            raise ValueError("locations and values must have equal length")

    def __len__(self) -> int:
        return self.locations.size


def cholesky_with_jitter(mat: np.ndarray, scale: float) -> np.ndarray:
    """Lower Cholesky factor, retrying up the shared jitter ladder.

    scale sets the absolute size of the jitter steps (typically the
    variance or the mean diagonal of mat).
    """
    for jitter in JITTER_LADDER:
        try:
            if jitter == 0.0:
                return np.linalg.cholesky(mat)
            return np.linalg.cholesky(mat + jitter * scale * np.eye(mat.shape[0]))
        except np.linalg.LinAlgError:
            continue
    eigs = np.linalg.eigvalsh(mat)
    raise SimulationError(
        f"covariance factorization failed for a {mat.shape[0]}x{mat.shape[0]} matrix "
        f"even with jitter {JITTER_LADDER[-1] * scale:g}; "
        f"eigenvalue range [{eigs[0]:.3e}, {eigs[-1]:.3e}]"
    )


def _simulate_dense(model, locations, rng) -> np.ndarray:
    dist = np.abs(locations[:, None] - locations[None, :])
    cov = covariance_eval(model, dist)
    factor = cholesky_with_jitter(cov, model.variance)
    return factor @ rng.standard_normal(locations.size)


def simulate_isotropic(
    model: CovarianceModel,
    locations,
    seed: int,
    *,
    max_exact: int = 20000,
    blocks=None,
) -> SampleField:
    """Draw one realization of the isotropic field at arbitrary locations.

    Exact dense simulation (symmetric factorization of the full covariance)
    up to max_exact points.  Larger problems must pass ``blocks``, a list of
    index arrays covering every location; each block is then simulated
    exactly but independently of the others.  That approximation matches the
    independence the block likelihood assumes, and block draws are seeded
    per block so results do not depend on evaluation order.

    The generator is numpy's default PCG64, so output is reproducible
    across platforms for a fixed seed.
    """
    locations = np.asarray(locations, dtype=np.complex128).ravel()
    n = locations.size
    if n == 0:
        raise ValueError("no locations to simulate")
    root = np.random.SeedSequence(seed)
    if blocks is None:
        if n > max_exact:
            raise SimulationError(
                f"{n} locations exceed the exact-simulation cap {max_exact}; "
                "pass blocks= for block-independent simulation"
            )
        values = _simulate_dense(model, locations, np.random.default_rng(root))
    else:
        cover = np.concatenate([np.asarray(b).ravel() for b in blocks])
        if np.sort(cover).tolist() != list(range(n)):
            raise ValueError("blocks must partition all location indices exactly")
        values = np.empty(n)
        for k, block in enumerate(blocks):
            idx = np.asarray(block).ravel()
            if idx.size > max_exact:
                raise SimulationError(
                    f"block {k} holds {idx.size} > {max_exact} locations"
                )
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
            values[idx] = _simulate_dense(model, locations[idx], rng)
    return SampleField(
        locations,
        values,
        provenance={"family": model.family, "alpha": model.alpha, "seed": seed},
    )


def simulation_blocks(nx: int, ny: int, max_side: int) -> list[np.ndarray]:
    """Partition lattice indices into roughly max_side x max_side tiles.

    Remainder rows/columns merge into the last tile, so the tiles cover
    every site.  Flat indices follow the row-major (i*ny + j) convention.
    """
    nbx = max(1, nx // max_side)
    nby = max(1, ny // max_side)
    i_id = np.minimum(np.arange(nx) // max_side, nbx - 1)
    j_id = np.minimum(np.arange(ny) // max_side, nby - 1)
    ids = (i_id[:, None] * nby + j_id[None, :]).ravel()
    return [np.flatnonzero(ids == b) for b in range(nbx * nby)]


def add_noise(field: SampleField, fraction: float, seed: int) -> SampleField:
    """Add white observation noise with sd = fraction * sd(values)."""
    if fraction < 0:
        raise ValueError("noise fraction must be non-negative")
    if fraction == 0.0:
        return SampleField(
            field.locations, field.values.copy(), dict(field.provenance)
        )
    sd = fraction * np.std(field.values, ddof=1)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xA0,)))
    noisy = field.values + sd * rng.standard_normal(len(field))
    prov = dict(field.provenance)
    prov["noise_fraction"] = fraction
    return SampleField(field.locations, noisy, prov)


# ---------------------------------------------------------------------------
# Deformations


@dataclass(frozen=True)
class DeformationSpec:
    """An orientation-preserving planar map applied to observation sites.

    kind is one of "rotational", "affine", "grid-map", "composed-flow".
    The map plays the role of finv: observations are the isotropic field
    evaluated at the mapped locations.
    """

    kind: str
    params: dict
    domain: tuple[float, float, float, float]  # x0, x1, y0, y1

    PROBE = 21  # probe lattice resolution used to vet new specs

    @classmethod
    def rotational(cls, r0: float = 1.2, angle: float = np.pi / 2, domain=(0, 1, 0, 1)):
        """Bends the rectangle around i*r0: (r0 - y) e^{-i angle (1-x)} + i r0."""
        spec = cls("rotational", {"r0": float(r0), "angle": float(angle)}, tuple(domain))
        spec._validate()
        return spec

    @classmethod
    def affine(cls, a=1.0, b=0.0, d=0.0, domain=(0, 1, 0, 1)):
        """z -> a z + b conj(z) + d; orientation preserving iff |a| > |b|."""
        a, b, d = complex(a), complex(b), complex(d)
        if abs(a) <= abs(b):
            raise OrientationError(
                f"affine map with |a|={abs(a):g} <= |b|={abs(b):g} reverses orientation"
            )
        spec = cls("affine", {"a": a, "b": b, "d": d}, tuple(domain))
        spec._validate()
        return spec

    @classmethod
    def identity(cls, domain=(0, 1, 0, 1)):
        return cls.affine(1.0, 0.0, 0.0, domain)

    @classmethod
    def grid_map(cls, grid: ComplexGrid):
        """Map given by lattice samples; evaluated by bilinear interpolation."""
        domain = (
            grid.origin[0],
            grid.origin[0] + (grid.nx - 1) * grid.spacing[0],
            grid.origin[1],
            grid.origin[1] + (grid.ny - 1) * grid.spacing[1],
        )
        spec = cls("grid-map", {"grid": grid}, domain)
        spec._validate()
        return spec

    @classmethod
    def composed_flow(cls, mu_star: ComplexGrid, steps: int = 20):
        """Map produced by flowing the identity to prescribed dilatation mu_star."""
        domain = (
            mu_star.origin[0],
            mu_star.origin[0] + (mu_star.nx - 1) * mu_star.spacing[0],
            mu_star.origin[1],
            mu_star.origin[1] + (mu_star.ny - 1) * mu_star.spacing[1],
        )
        return cls("composed-flow", {"mu_star": mu_star, "steps": int(steps)}, domain)

    # -- evaluation --------------------------------------------------------

    def _materialized(self) -> ComplexGrid:
        grid = self.params.get("_cache")
        if grid is None:
            from .flow import reconstruct_map  # deferred: flow imports this module

            grid, _ = reconstruct_map(self.params["mu_star"], self.params["steps"])
            self.params["_cache"] = grid  # params dict is private mutable state
        return grid

    def _validate(self) -> None:
        x0, x1, y0, y1 = self.domain
        xs = np.linspace(x0, x1, self.PROBE)
        ys = np.linspace(y0, y1, self.PROBE)
        xx, yy = np.meshgrid(xs, ys, indexing="ij")
        vals = self._evaluate((xx + 1j * yy).ravel()).reshape(self.PROBE, self.PROBE)
        probe = ComplexGrid(
            self.PROBE,
            self.PROBE,
            (x0, y0),
            ((x1 - x0) / (self.PROBE - 1), (y1 - y0) / (self.PROBE - 1)),
            vals,
        )
        mu, _ = numeric_dilatation(probe)  # raises OrientationError on folds
        worst = np.max(np.abs(mu.values))
        if worst > 1 - 1e-6:
            raise OrientationError(
                f"deformation distortion |mu| reaches {worst:.8f} > 1 - 1e-6 on the probe lattice"
            )

    def _evaluate(self, pts: np.ndarray) -> np.ndarray:
        if self.kind == "rotational":
            r0 = self.params["r0"]
            angle = self.params["angle"]
            x = pts.real
            y = pts.imag
            return (r0 - y) * np.exp(-1j * angle * (1.0 - x)) + 1j * r0
        if self.kind == "affine":
            a, b, d = self.params["a"], self.params["b"], self.params["d"]
            return a * pts + b * np.conj(pts) + d
        if self.kind == "grid-map":
            return grid_sample(self.params["grid"], pts)
        if self.kind == "composed-flow":
            return grid_sample(self._materialized(), pts)
        raise ValueError(f"unknown deformation kind {self.kind!r}")


def apply_deformation(spec: DeformationSpec, locations) -> np.ndarray:
    """Evaluate the deformation at complex locations inside its domain."""
    pts = np.asarray(locations, dtype=np.complex128).ravel()
    x0, x1, y0, y1 = spec.domain
    tol = 1e-9 * max(x1 - x0, y1 - y0, 1.0)
    bad = (
        (pts.real < x0 - tol)
        | (pts.real > x1 + tol)
        | (pts.imag < y0 - tol)
        | (pts.imag > y1 + tol)
    )
    if np.any(bad):
        z = pts[bad][0]
        raise ValueError(
            f"location {z} lies outside the deformation domain "
            f"[{x0}, {x1}] x [{y0}, {y1}]"
        )
    if spec.kind == "composed-flow":
        spec._materialized()  # ensure the flow ran and was vetted
    return spec._evaluate(pts)


def numeric_dilatation(
    fmap: ComplexGrid, *, interior_only: bool = False
) -> tuple[ComplexGrid, Grid]:
    """Measure complex dilatation mu and scale phi of a lattice-sampled map.

    Wirtinger derivatives come from central differences in the interior
    and one-sided differences on the boundary:

        dz  = ((ux + vy) + i (vx - uy)) / 2
        dzb = ((ux - vy) + i (vx + uy)) / 2
        mu  = dzb / dz,   phi = sqrt(det J) = sqrt(|dz|^2 - |dzb|^2).

    Raises OrientationError when det J <= 0 anywhere (or anywhere in the
    interior when interior_only=True); the message lists offending cells.
    """
    f = fmap.values
    if fmap.nx < 2 or fmap.ny < 2:
        raise ValueError("need at least a 2x2 lattice to differentiate")
    fx = np.gradient(f, fmap.spacing[0], axis=0, edge_order=1)
    fy = np.gradient(f, fmap.spacing[1], axis=1, edge_order=1)
    dz = 0.5 * (fx - 1j * fy)
    dzb = 0.5 * (fx + 1j * fy)
    det = np.abs(dz) ** 2 - np.abs(dzb) ** 2
    check = det[1:-1, 1:-1] if interior_only and min(fmap.nx, fmap.ny) > 2 else det
    offset = 1 if check is not det else 0
    if np.any(check <= 0):
        cells = np.argwhere(check <= 0) + offset
        shown = ", ".join(f"({i}, {j})" for i, j in cells[:12])
        more = "" if len(cells) <= 12 else f" and {len(cells) - 12} more"
        raise OrientationError(
            f"map folds over: det J <= 0 at {len(cells)} cells: {shown}{more}"
        )
    safe = np.where(det > 0, det, np.nan)
    mu = np.where(det > 0, dzb / np.where(dz == 0, 1.0, dz), 0.0)
    phi = np.sqrt(np.where(np.isnan(safe), 1.0, safe))
    mu_grid = ComplexGrid(fmap.nx, fmap.ny, fmap.origin, fmap.spacing, mu)
    phi_grid = Grid(fmap.nx, fmap.ny, fmap.origin, fmap.spacing, phi)
    return mu_grid, phi_grid


# ---------------------------------------------------------------------------
# Empirical variograms


def empirical_variogram(
    values: np.ndarray,
    spacing: float,
    max_lag: int = 8,
    block_ids: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean squared increment E(Y(x+h) - Y(x))^2 at axis-aligned lattice lags.

    block_ids, when given, restricts averaging to pairs inside one block;
    useful when the field was simulated block-independently.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 2:
        raise ValueError("values must be a 2-d lattice array")
    lags = np.arange(1, max_lag + 1) * float(spacing)
    msq = np.empty(max_lag)
    for k in range(1, max_lag + 1):
        dx = (vals[k:, :] - vals[:-k, :]) ** 2
        dy = (vals[:, k:] - vals[:, :-k]) ** 2
        if block_ids is not None:
            keep_x = block_ids[k:, :] == block_ids[:-k, :]
            keep_y = block_ids[:, k:] == block_ids[:, :-k]
            total = dx[keep_x].sum() + dy[keep_y].sum()
            count = keep_x.sum() + keep_y.sum()
        else:
            total = dx.sum() + dy.sum()
            count = dx.size + dy.size
        msq[k - 1] = total / count
    return lags, msq


def variogram_slope(
    values: np.ndarray,
    spacing: float,
    max_lag: int = 8,
    block_ids: np.ndarray | None = None,
) -> float:
    """Log-log slope of the small-lag variogram; estimates the fractal index."""
    lags, msq = empirical_variogram(values, spacing, max_lag, block_ids)
    return float(np.polyfit(np.log(lags), np.log(msq), 1)[0])
