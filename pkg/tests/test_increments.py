"""Contrast matrices: polynomial annihilation and the kernel quadratic form."""

import numpy as np
import pytest

from deformfield.fields import g_alpha
from deformfield.increments import ContrastMatrix, increment_matrix, monomial_basis


def _kernel_form(L: ContrastMatrix, alpha: float) -> np.ndarray:
    G = g_alpha(alpha, np.abs(L.locations[:, None] - L.locations[None, :]))
    return L.rows @ G @ L.rows.T


def _monomial_count(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def test_monomial_basis_shapes():
    pts = np.array([0.0 + 0.0j, 1.0 + 0.0j, 0.5 + 0.5j])
    for d in range(4):
        basis = monomial_basis(pts, d)
        assert basis.shape == (3, _monomial_count(d))


def test_monomial_basis_degree_zero_is_constant():
    pts = np.array([0.3 + 0.1j, 2.0 - 1.0j])
    basis = monomial_basis(pts, 0)
    col = basis[:, 0]
    assert np.allclose(col, col[0])
    assert col[0] != 0


def test_two_point_difference():
    L = increment_matrix(np.array([0.0 + 0.0j, 1.0 + 0.0j]), 0)
    assert L.rows.shape == (1, 2)
    row = L.rows[0]
    assert np.allclose(np.abs(row), 1.0 / np.sqrt(2.0), atol=1e-12)
    assert abs(row.sum()) < 1e-12


def test_three_point_second_difference():
    L = increment_matrix(np.array([0.0 + 0.0j, 1.0 + 0.0j, 2.0 + 0.0j]), 1)
    assert L.rows.shape == (1, 3)
    row = L.rows[0]
    want = np.array([1.0, -2.0, 1.0]) / np.sqrt(6.0)
    assert np.allclose(row, want, atol=1e-12) or np.allclose(row, -want, atol=1e-12)


def test_ten_by_ten_block_row_count():
    xs = np.arange(10.0)
    pts = (xs[:, None] + 1j * xs[None, :]).ravel()
    L = increment_matrix(pts, 2)
    assert L.rows.shape == (94, 100)
    resid = L.rows @ monomial_basis(pts, 2)
    assert np.max(np.abs(resid)) < 1e-10


def test_rows_orthonormal():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 1, 40) + 1j * rng.uniform(0, 1, 40)
    L = increment_matrix(pts, 3)
    gram = L.rows @ L.rows.T
    assert np.allclose(gram, np.eye(L.rows.shape[0]), atol=1e-12)


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_annihilation_of_monomials(degree):
    rng = np.random.default_rng(degree)
    pts = rng.uniform(-1, 2, 30) + 1j * rng.uniform(-1, 2, 30)
    L = increment_matrix(pts, degree)
    assert L.degree == degree
    scale = max(1.0, np.max(np.abs(pts)) ** degree)
    for r1 in range(degree + 1):
        for r2 in range(degree + 1 - r1):
            mono = pts.real**r1 * pts.imag**r2
            assert np.max(np.abs(L.rows @ mono)) < 1e-10 * scale


@pytest.mark.parametrize("degree", [0, 1, 2])
def test_even_distance_powers_annihilated(degree):
    # |z_i - z_j|^(2k) is polynomial of degree 2k in each argument separately,
    # so contrasts of degree >= k on both sides kill it
    rng = np.random.default_rng(5 + degree)
    pts = rng.uniform(0, 1, 25) + 1j * rng.uniform(0, 1, 25)
    L = increment_matrix(pts, degree)
    u = L.rows[0]
    v = L.rows[-1]
    for k in range(degree + 1):
        dist2k = np.abs(pts[:, None] - pts[None, :]) ** (2 * k)
        raw = float(u @ dist2k @ v)
        norm = float(np.abs(u) @ dist2k @ np.abs(v))
        assert abs(raw) <= 1e-8 * max(norm, 1e-30)


def test_collinear_points_gain_rows():
    # rank deficiency of the monomial basis must not be fatal
    pts = np.array([0.0 + 0.0j, 1.0 + 0.0j, 2.0 + 0.0j, 3.0 + 0.0j])
    L = increment_matrix(pts, 1)  # y column is rank-degenerate on this set
    assert L.rows.shape[0] == 2
    assert np.max(np.abs(L.rows @ monomial_basis(pts, 1))) < 1e-10


def test_too_few_points_raises():
    pts = np.array([0.0 + 0.0j, 1.0 + 0.0j, 1.0j])
    with pytest.raises(ValueError, match="smaller than polynomial space"):
        increment_matrix(pts, 1)
    with pytest.raises(ValueError, match="no locations"):
        increment_matrix(np.array([], dtype=complex), 0)


@pytest.mark.parametrize("alpha", [0.5, 1.7, 3.3, 5.9])
def test_kernel_quadratic_form_positive_definite(alpha):
    # L G_alpha L' must be symmetric PD for alpha < 2 (degree + 1)
    rng = np.random.default_rng(int(alpha * 10))
    pts = rng.uniform(0, 1, 30) + 1j * rng.uniform(0, 1, 30)
    degree = max(0, int(np.ceil(alpha / 2.0 - 1.0)) + 0)
    while 2 * (degree + 1) <= alpha:
        degree += 1
    L = increment_matrix(pts, degree)
    sigma = _kernel_form(L, alpha)
    sigma = 0.5 * (sigma + sigma.T)
    assert np.linalg.eigvalsh(sigma).min() > 0


def test_contrast_matrix_is_frozen():
    pts = np.array([0.0 + 0.0j, 1.0 + 0.0j])
    L = increment_matrix(pts, 0)
    assert isinstance(L, ContrastMatrix)
    with pytest.raises(Exception):
        L.degree = 5
