import numpy as np
import pytest
from pydantic import ValidationError

import config
from errors import NotAGradient, SolveFailure
from models import RectGrid
from schemas import CertificationOptions
from services.potential_service import derivative_4th, potential_service


def test_fourth_order_derivative_is_exact_on_quartics():
    grid = RectGrid(nx=17, ny=17)
    X, Y = grid.mesh()
    f = X ** 4 + X * Y ** 3
    np.testing.assert_allclose(derivative_4th(f, grid.h, 0), 4.0 * X ** 3 + Y ** 3, atol=1e-9)
    np.testing.assert_allclose(derivative_4th(f, grid.h, 1), 3.0 * X * Y ** 2, atol=1e-9)


def test_xy_potentials_give_linear_velocity():
    grid = RectGrid(nx=33, ny=33)
    w1, bc_w0, bc_w2 = potential_service.case("xy")
    triple = potential_service.solve_potentials(w1, bc_w0, bc_w2, grid)
    X, Y = grid.mesh()
    np.testing.assert_allclose(triple.w2, -(X ** 2 + Y ** 2) / 2.0, atol=1e-10)
    np.testing.assert_allclose(triple.w0, X ** 2 - Y ** 2, atol=1e-10)

    u, v = potential_service.velocity_from_potentials(triple, grid)
    np.testing.assert_allclose(u, 2.0 * X, atol=1e-8)
    np.testing.assert_allclose(v, -2.0 * Y, atol=1e-8)
    assert np.max(np.abs(potential_service.divergence(u, v, grid))) <= 1e-8
    # three nested one-sided stencils at the corners lift roundoff above 1e-8
    assert np.max(np.abs(potential_service.convective_curl(u, v, grid))) <= 1e-7


def test_zero_trace_potentials_satisfy_their_equations():
    grid = RectGrid(nx=33, ny=33)
    w1 = potential_service.field("sin_sin")
    zero = potential_service.field("zero").f
    triple = potential_service.solve_potentials(w1, zero, zero, grid)
    r2, r0 = potential_service.potential_residuals(triple, w1, grid)
    assert r2 <= 1e-10
    assert r0 <= 1e-10
    mask = grid.boundary_mask()
    assert np.all(triple.w2[mask] == 0.0)


def test_linear_pressure_recovery():
    grid = RectGrid(nx=33, ny=33)
    X, Y = grid.mesh()
    P, defect = potential_service.recover_pressure(2.0 * X, -2.0 * Y, None, 1.0, grid)
    np.testing.assert_allclose(P, -2.0 * (X ** 2 + Y ** 2), atol=1e-10)
    assert defect <= 1e-10
    assert P[0, 0] == 0.0


def test_forcing_enters_the_pressure():
    grid = RectGrid(nx=33, ny=33)
    X, Y = grid.mesh()
    forcing = potential_service.field("x2")
    P, _ = potential_service.recover_pressure(2.0 * X, -2.0 * Y, forcing, 1.0, grid)
    np.testing.assert_allclose(P, -2.0 * (X ** 2 + Y ** 2) + X ** 2, atol=1e-10)
    residual = potential_service.momentum_residual(2.0 * X, -2.0 * Y, P, forcing, 1.0, grid)
    assert residual <= 1e-6


def test_pressure_trace_mismatch_ignores_constant():
    grid = RectGrid(nx=17, ny=17)
    X, Y = grid.mesh()
    P = X ** 2
    assert potential_service.trace_mismatch(P, P + 3.0, grid) == pytest.approx(0.0, abs=1e-14)
    assert potential_service.trace_mismatch(P, np.zeros_like(P), grid) > 0.1


def test_non_gradient_field_is_rejected():
    grid = RectGrid(nx=33, ny=33)
    X, Y = grid.mesh()
    # ν∇²u = 6y has a curl, so no pressure balances it
    with pytest.raises(NotAGradient) as excinfo:
        potential_service.recover_pressure(Y ** 3, np.zeros_like(X), None, 1.0, grid)
    assert excinfo.value.defect > excinfo.value.limit
    assert excinfo.value.pressure.shape == (33, 33)


def test_poisson_residual_check(monkeypatch):
    monkeypatch.setattr(config, "POISSON_TOL", -1.0)
    grid = RectGrid(nx=17, ny=17)
    w1, bc_w0, bc_w2 = potential_service.case("xy")
    with pytest.raises(SolveFailure):
        potential_service.solve_potentials(w1, bc_w0, bc_w2, grid)


def test_certify_closed_form_case():
    report = potential_service.certify(CertificationOptions(nodes=33))
    assert report.divergence_sup <= 1e-8
    assert report.curl_sup <= 1e-7
    assert report.pressure_error_sup <= 1e-8
    assert report.momentum_residual_sup <= 1e-6
    assert report.potential_residual_sup <= 1e-12
    assert report.h == pytest.approx(1.0 / 32)


def test_certify_refinement_orders():
    report = potential_service.certify(CertificationOptions(nodes=33))
    assert report.refinement_case == "sin_sin"
    assert report.divergence_order >= 1.8
    assert report.curl_order >= 1.8


def test_certify_smooth_case_has_small_defects():
    report = potential_service.certify(CertificationOptions(nodes=65, w1="sin_sin", forcing="zero"))
    assert report.pressure_error_sup is None
    assert report.divergence_sup <= 1e-2
    assert report.curl_sup <= 1e-3
    assert report.path_defect <= config.GRADIENT_DEFECT_FACTOR * report.h ** 2


def test_certification_options_validation():
    with pytest.raises(ValidationError):
        CertificationOptions(refinement_nodes=[33])
    with pytest.raises(ValidationError):
        CertificationOptions(nodes=8)
    with pytest.raises(ValidationError):
        CertificationOptions(w1="cubic")


def test_smooth_case_curl_is_second_order_up_to_the_edges():
    sups = []
    for nodes in (65, 129):
        grid = RectGrid(nx=nodes, ny=nodes)
        w1 = potential_service.field("sin_sin")
        zero = potential_service.field("zero").f
        u, v = potential_service.velocity_from_potentials(potential_service.solve_potentials(w1, zero, zero, grid), grid)
        sups.append(float(np.max(np.abs(potential_service.convective_curl(u, v, grid)))))
    assert np.log2(sups[0] / sups[1]) >= 1.8


def test_smooth_case_pressure_is_recovered():
    grid = RectGrid(nx=65, ny=65)
    w1 = potential_service.field("sin_sin")
    zero = potential_service.field("zero").f
    u, v = potential_service.velocity_from_potentials(potential_service.solve_potentials(w1, zero, zero, grid), grid)
    P, defect = potential_service.recover_pressure(u, v, None, 1.0, grid)
    assert defect <= config.GRADIENT_DEFECT_FACTOR * grid.h ** 2
    assert P[0, 0] == 0.0
