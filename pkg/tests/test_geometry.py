import numpy as np
import pytest

from errors import NonPositiveRadius
from geometry import build_coefficients, cartesian_nodes, evaluate_radius, make_grid
from schemas import BoundaryShape

PERTURBED = BoundaryShape(fourier_cosine=[1.0, 0.1])
WAVY = BoundaryShape(fourier_cosine=[1.0, 0.1, 0.05], fourier_sine=[0.0, 0.03])


def test_grid_lines_hit_both_boundaries_exactly():
    grid = make_grid(20, 150)
    assert grid.t[0] == 1.0
    assert grid.t[-1] == 2.0
    assert grid.d == pytest.approx(0.05)
    assert grid.shape == (21, 150)
    assert grid.interior_t.shape == (19,)


@pytest.mark.parametrize("n_lines,n_theta", [(1, 16), (10, 7)])
def test_grid_rejects_too_few_nodes(n_lines, n_theta):
    with pytest.raises(ValueError):
        make_grid(n_lines, n_theta)


@pytest.mark.parametrize(
    "shape,theta,expected",
    [
        (BoundaryShape.unit_circle(), 0.7, (1.0, 0.0, 0.0)),
        (PERTURBED, 0.0, (1.1, 0.0, -0.1)),
        (PERTURBED, np.pi / 2, (1.0, -0.1, 0.0)),
    ],
)
def test_evaluate_radius(shape, theta, expected):
    r, dr, d2r = evaluate_radius(shape, theta)
    assert (r, dr, d2r) == pytest.approx(expected, abs=1e-15)


def test_evaluate_radius_is_vectorized():
    theta = np.linspace(0.0, 2.0 * np.pi, 9)
    r, dr, d2r = evaluate_radius(PERTURBED, theta)
    np.testing.assert_allclose(r, 1.0 + 0.1 * np.cos(theta), atol=1e-15)
    np.testing.assert_allclose(dr, -0.1 * np.sin(theta), atol=1e-15)
    np.testing.assert_allclose(d2r, -0.1 * np.cos(theta), atol=1e-15)


def test_unit_circle_coefficients():
    grid = make_grid(10, 32)
    geo = build_coefficients(BoundaryShape.unit_circle(), grid)
    np.testing.assert_allclose(geo.f1, 0.0, atol=1e-15)
    np.testing.assert_allclose(geo.f0, 1.0)
    np.testing.assert_allclose(geo.f2, 1.0)
    np.testing.assert_allclose(geo.f3, 0.0, atol=1e-15)
    np.testing.assert_allclose(geo.f4, 1.0)
    np.testing.assert_allclose(geo.h3, 1.0)
    np.testing.assert_allclose(geo.f5, np.cos(grid.theta), atol=1e-15)
    np.testing.assert_allclose(geo.f6, -np.sin(grid.theta), atol=1e-15)
    np.testing.assert_allclose(geo.f7, np.sin(grid.theta), atol=1e-15)
    np.testing.assert_allclose(geo.f8, np.cos(grid.theta), atol=1e-15)
    det = geo.fhat5 * geo.fhat8 - geo.fhat6 * geo.fhat7
    np.testing.assert_allclose(det, 1.0, atol=1e-14)


def test_perturbed_circle_coefficients_at_zero():
    grid = make_grid(10, 32)
    geo = build_coefficients(PERTURBED, grid)
    assert geo.f1[0] == pytest.approx(0.0, abs=1e-15)
    assert geo.f2[0] == pytest.approx(1.0 + 0.1 * 1.1 / 1.21, abs=1e-12)
    assert geo.f2[0] == pytest.approx(1.090909, abs=1e-6)
    assert geo.fhat5[0] == pytest.approx(0.909091, abs=1e-6)
    assert geo.f5[0] == pytest.approx(1.1, abs=1e-12)


def test_coefficient_identities():
    grid = make_grid(10, 64)
    geo = build_coefficients(WAVY, grid)
    np.testing.assert_allclose(geo.f0 * geo.f4, 1.0, atol=1e-14)
    np.testing.assert_allclose(geo.f0, 1.0 + geo.f1 ** 2, atol=1e-14)
    np.testing.assert_allclose(geo.f3, 2.0 * geo.f1 * geo.f4, atol=1e-14)
    np.testing.assert_allclose(geo.f5, geo.r ** 2 / geo.f0 * geo.fhat5, atol=1e-14)
    assert np.all(geo.h3 > 0)


def test_coefficients_are_read_only():
    geo = build_coefficients(BoundaryShape.unit_circle(), make_grid(4, 16))
    with pytest.raises(ValueError):
        geo.f0[0] = 2.0


def test_non_positive_radius_at_a_node():
    shape = BoundaryShape(fourier_cosine=[0.5, 1.0])
    with pytest.raises(NonPositiveRadius):
        build_coefficients(shape, make_grid(4, 16))


def test_non_positive_radius_between_nodes():
    # r = 1 + 1.05 sin 8θ equals 1 at every node of an 8-point grid
    shape = BoundaryShape(fourier_cosine=[1.0], fourier_sine=[0.0] * 7 + [1.05])
    grid = make_grid(4, 8)
    r, _, _ = evaluate_radius(shape, grid.theta)
    assert np.all(r > 0)
    with pytest.raises(NonPositiveRadius):
        build_coefficients(shape, grid)


@pytest.mark.parametrize("delta", [0.3, 2.0 * np.pi * 5 / 64])
def test_phase_shift_equivariance(delta):
    grid = make_grid(10, 64)
    shifted_grid = make_grid(10, 64, theta_offset=delta)
    geo = build_coefficients(WAVY, grid)
    shifted = build_coefficients(WAVY.rotated(delta), shifted_grid)

    for name in ("r", "f0", "f1", "f2", "f3", "f4", "h3"):
        np.testing.assert_allclose(getattr(shifted, name), getattr(geo, name), atol=1e-12)

    c, s = np.cos(delta), np.sin(delta)
    np.testing.assert_allclose(shifted.fhat5, c * geo.fhat5 - s * geo.fhat7, atol=1e-12)
    np.testing.assert_allclose(shifted.fhat7, s * geo.fhat5 + c * geo.fhat7, atol=1e-12)
    np.testing.assert_allclose(shifted.fhat6, c * geo.fhat6 - s * geo.fhat8, atol=1e-12)
    np.testing.assert_allclose(shifted.fhat8, s * geo.fhat6 + c * geo.fhat8, atol=1e-12)


def test_cartesian_nodes_span_the_annulus():
    grid = make_grid(4, 16)
    x, y = cartesian_nodes(BoundaryShape.unit_circle(), grid)
    rho = np.hypot(x, y)
    np.testing.assert_allclose(rho[0], 1.0)
    np.testing.assert_allclose(rho[-1], 2.0)
