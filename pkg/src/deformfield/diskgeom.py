"""Hyperbolic geometry of the open unit disk of dilatation values.

Dilatations live in |mu| < 1; averaging and interpolation use the
Poincare metric so that results respect the conformal structure rather
than the Euclidean one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .likelihood import (
    STATUS_IMPUTED,
    STATUS_MISSING,
    STATUS_OK,
    DilatationScaleField,
)

log = logging.getLogger(__name__)

_EDGE = 1.0 - 1e-9  # projection radius for gradient descent iterates


def _check_disk(z: np.ndarray | complex, name: str) -> None:
    if np.any(np.abs(z) >= 1.0):
        raise ValueError(f"{name} must lie strictly inside the unit disk")


def mobius_diff(a, b) -> np.ndarray | float:
    """Mobius-invariant difference |(a - b) / (1 - a conj(b))|, in [0, 1)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    _check_disk(a, "a")
    _check_disk(b, "b")
    out = np.abs((a - b) / (1.0 - a * np.conj(b)))
    return float(out) if out.ndim == 0 else out


def hyperbolic_distance(a, b) -> np.ndarray | float:
    """Poincare distance (1/2) log((1 + m)/(1 - m)) with m the Mobius difference."""
    m = mobius_diff(a, b)
    return 0.5 * np.log((1.0 + m) / (1.0 - m))


@dataclass(frozen=True)
class EllipseParams:
    """Distortion ellipse of a dilatation value.

    eccentricity = ratio of major to minor axis (>= 1), inclination =
    major-axis angle in [0, pi).
    """

    eccentricity: float
    inclination: float


def mu_to_ellipse(mu: complex) -> EllipseParams:
    m = abs(mu)
    if m >= 1.0:
        raise ValueError("dilatation must lie inside the unit disk")
    if m == 0.0:
        return EllipseParams(1.0, 0.0)  # circle: inclination by convention 0
    incl = float(np.angle(-complex(mu)) / 2.0) % np.pi
    return EllipseParams((1.0 + m) / (1.0 - m), incl)


def ellipse_to_mu(e: EllipseParams) -> complex:
    if e.eccentricity < 1.0:
        raise ValueError("eccentricity must be >= 1")
    m = (e.eccentricity - 1.0) / (e.eccentricity + 1.0)
    return complex(-m * np.exp(2j * e.inclination))


def frechet_mean(
    points,
    weights=None,
    p: float = 2.0,
    *,
    max_iter: int = 500,
    full_output: bool = False,
):
    """Weighted Frechet mean argmin_mu sum_k w_k d(mu, mu_k)^p in the disk.

    Projected gradient descent with finite-difference gradients, started
    from the Euclidean weighted mean, with step halving on non-descent.
    Stops when the accepted step falls below 1e-10 or after max_iter
    iterations; with full_output the second element reports whether the
    stop was stationarity (True) or the iteration cap (False).
    """
    pts = np.asarray(points, dtype=np.complex128).ravel()
    if pts.size == 0:
        raise ValueError("need at least one point")
    _check_disk(pts, "points")
    if weights is None:
        w = np.ones(pts.size)
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.shape != pts.shape or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive sum")
    if pts.size == 1:
        return (complex(pts[0]), True) if full_output else complex(pts[0])

    def objective(mu: complex) -> float:
        m = np.abs((mu - pts) / (1.0 - mu * np.conj(pts)))
        m = np.minimum(m, 1.0 - 1e-15)
        return float(np.sum(w * (0.5 * np.log((1.0 + m) / (1.0 - m))) ** p))

    def project(mu: complex) -> complex:
        r = abs(mu)
        return mu * (_EDGE / r) if r > _EDGE else mu

    x = project(complex(np.sum(w * pts) / np.sum(w)))
    fx = objective(x)
    step = 0.25  # displacement length of a trial move
    h = 1e-6
    converged = False
    for _ in range(max_iter):
        gr = (objective(x + h) - objective(x - h)) / (2 * h)
        gi = (objective(x + 1j * h) - objective(x - 1j * h)) / (2 * h)
        grad = gr + 1j * gi
        gnorm = abs(grad)
        if gnorm < 1e-9:
            converged = True
            break
        # move a fixed length along the downhill direction; halving the
        # length rather than a raw multiplier keeps steep objectives
        # (points near the edge of the disk) from stalling
        while step > 1e-10:
            cand = project(x - (step / gnorm) * grad)
            fc = objective(cand)
            if fc < fx:
                x, fx = cand, fc
                step = min(step * 2.0, 0.5)
                break
            step *= 0.5
        else:
            converged = True  # step collapsed: first-order stationary
            break
    # on iteration cap the best iterate is still returned; the flag says so
    return (complex(x), converged) if full_output else complex(x)


def _window_range(i: int, n: int, window: int) -> tuple[int, int]:
    # window cells i - (window-1)//2 .. i + window//2, clipped at the edges
    lo = max(0, i - (window - 1) // 2)
    hi = min(n, i + window // 2 + 1)
    return lo, hi


def smooth_dilatation(
    field: DilatationScaleField,
    window: int = 4,
    *,
    smooth_phi: bool = False,
) -> DilatationScaleField:
    """Sliding-window Frechet (p=2) smoothing of the dilatation field.

    Uniform weights over the window x window patch, clipped to the
    rectangle that overlaps the field near the boundary.  Missing blocks
    are imputed from the available entries of their patch.  phi is left
    untouched unless smooth_phi is set, in which case it is smoothed as
    exp(mean log phi) over the same patches.
    """
    nbx = field.geometry.get("nbx")
    nby = field.geometry.get("nby")
    if not nbx or not nby or nbx * nby != field.centers.size:
        raise ValueError("field geometry lacks a consistent block lattice")
    if window < 1 or window > min(nbx, nby):
        raise ValueError(f"window {window} does not fit the {nbx}x{nby} block lattice")
    mu2 = field.mu.reshape(nbx, nby)
    ok2 = np.isin(field.status, (STATUS_OK, STATUS_IMPUTED)).reshape(nbx, nby)
    phi2 = field.phi.reshape(nbx, nby)
    new_mu = np.array(mu2)
    new_phi = np.array(phi2)
    new_status = np.array(field.status, dtype=object).reshape(nbx, nby)
    for bx in range(nbx):
        xlo, xhi = _window_range(bx, nbx, window)
        for by in range(nby):
            ylo, yhi = _window_range(by, nby, window)
            patch_ok = ok2[xlo:xhi, ylo:yhi]
            vals = mu2[xlo:xhi, ylo:yhi][patch_ok]
            if vals.size == 0:
                new_status[bx, by] = STATUS_MISSING
                continue
            new_mu[bx, by] = frechet_mean(vals)
            if smooth_phi:
                new_phi[bx, by] = np.exp(np.mean(np.log(phi2[xlo:xhi, ylo:yhi][patch_ok])))
            if not ok2[bx, by]:
                new_status[bx, by] = STATUS_IMPUTED
                if not smooth_phi:
                    new_phi[bx, by] = np.exp(
                        np.mean(np.log(phi2[xlo:xhi, ylo:yhi][patch_ok]))
                    )
    return replace(
        field,
        mu=new_mu.ravel(),
        phi=new_phi.ravel(),
        status=new_status.ravel(),
        centers=field.centers.copy(),
        loglik=field.loglik.copy(),
    )


def interpolate_dilatation(
    field: DilatationScaleField, location: complex, *, return_flag: bool = False
):
    """Dilatation at an arbitrary point by bilinear-weighted Frechet mean.

    The four surrounding block centers contribute with bilinear weights;
    outside the center lattice the nearest block value is used (flagged
    when return_flag is set).
    """
    geo = field.geometry
    nbx, nby = geo["nbx"], geo["nby"]
    cdx = geo["block"] * geo["spacing"][0]
    cdy = geo["block"] * geo["spacing"][1]
    cx0 = field.centers[0].real
    cy0 = field.centers[0].imag
    fx = (location.real - cx0) / cdx
    fy = (location.imag - cy0) / cdy
    extrapolated = not (0 <= fx <= nbx - 1 and 0 <= fy <= nby - 1)
    ok = np.isin(field.status, (STATUS_OK, STATUS_IMPUTED))
    if extrapolated:
        order = np.argsort(np.abs(field.centers - location))
        pick = order[ok[order]]
        if pick.size == 0:
            raise ValueError("no available block values to interpolate from")
        value = complex(field.mu[pick[0]])
        return (value, True) if return_flag else value
    i0 = int(np.clip(np.floor(fx), 0, nbx - 2)) if nbx > 1 else 0
    j0 = int(np.clip(np.floor(fy), 0, nby - 2)) if nby > 1 else 0
    tx = fx - i0
    ty = fy - j0
    corners = []
    weights = []
    for di, dj, wgt in (
        (0, 0, (1 - tx) * (1 - ty)),
        (1, 0, tx * (1 - ty)) if nbx > 1 else (0, 0, 0.0),
        (0, 1, (1 - tx) * ty) if nby > 1 else (0, 0, 0.0),
        (1, 1, tx * ty) if nbx > 1 and nby > 1 else (0, 0, 0.0),
    ):
        k = (i0 + di) * nby + (j0 + dj)
        if wgt > 1e-12 and ok[k]:
            corners.append(field.mu[k])
            weights.append(wgt)
    if not corners:
        order = np.argsort(np.abs(field.centers - location))
        pick = order[ok[order]]
        if pick.size == 0:
            raise ValueError("no available block values to interpolate from")
        value = complex(field.mu[pick[0]])
        return (value, True) if return_flag else value
    value = frechet_mean(np.array(corners), np.array(weights))
    return (value, False) if return_flag else value
