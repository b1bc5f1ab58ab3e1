import numpy as np
import pytest
from pydantic import ValidationError

from errors import ModeMismatch, NoConvergence
from geometry import build_coefficients, make_grid
from models import BoundaryData, ClosureMode, FlowState, LineScheme, SeedStrategy
from schemas import BoundaryShape, SolverConfig
from services.boundary_service import boundary_service, couette_velocity
from services.solver_service import SolveSession, solver_service

UNIT = BoundaryShape.unit_circle()
# coupling off, N = 10, u0 = 1: solution of the tridiagonal line system
LADDER = [0.8609, 0.7344, 0.6185, 0.5114, 0.4121, 0.3193, 0.2324, 0.1505, 0.0732]


def _setup(N, M, shape=UNIT):
    grid = make_grid(N, M)
    return grid, build_coefficients(shape, grid)


def _uniform_inner(grid, value=1.0):
    M = grid.n_theta
    z = np.zeros(M)
    return BoundaryData(np.full(M, value), z.copy(), z.copy(), z.copy(), z.copy(), z.copy())


def _ladder_oracle(grid):
    N, d = grid.n_lines, grid.d
    A = np.zeros((N - 1, N - 1))
    rhs = np.zeros(N - 1)
    for k, n in enumerate(range(1, N)):
        t = grid.t[n]
        A[k, k] = -2.0 / d ** 2 + 1.0 / (t * d)
        if k + 1 < N - 1:
            A[k, k + 1] = 1.0 / d ** 2
        lower = 1.0 / d ** 2 - 1.0 / (t * d)
        if k > 0:
            A[k, k - 1] = lower
        else:
            rhs[k] -= lower * 1.0
    return np.linalg.solve(A, rhs)


def test_t_map_u_examples():
    grid, geo = _setup(10, 16)
    z = np.zeros(16)
    assert np.all(solver_service.t_map_u(z, z, z, z, z, z, 1, geo, grid, 1.0) == 0.0)

    a = np.full(16, 0.7)
    np.testing.assert_allclose(solver_service.t_map_u(a, a, a, z, z, z, 3, geo, grid, 1.0), 0.7, atol=1e-14)

    ones = np.ones(16)
    out = solver_service.t_map_u(z, ones, ones, z, z, z, 1, geo, grid, 1.0)
    np.testing.assert_allclose(out, 2.0 / 3.0, atol=1e-12)


def test_t_map_v_mirrors_u():
    grid, geo = _setup(10, 16)
    z = np.zeros(16)
    ones = np.ones(16)
    out = solver_service.t_map_v(z, ones, ones, z, z, z, 1, geo, grid, 1.0)
    np.testing.assert_allclose(out, 2.0 / 3.0, atol=1e-12)


def test_t_map_P_pressure_poisson_example():
    grid, geo = _setup(10, 32)
    z = np.zeros(32)
    ones = np.ones(32)
    out = solver_service.t_map_P(z, z, z, ones, z, z, z, 1, geo, grid, ClosureMode.PRESSURE_POISSON)
    np.testing.assert_allclose(out, np.cos(grid.theta) ** 2 / 3.0, atol=1e-12)


def test_t_map_P_artificial_compressibility_needs_epsilon():
    grid, geo = _setup(10, 16)
    z = np.zeros(16)
    with pytest.raises(ModeMismatch):
        solver_service.t_map_P(z, z, z, z, z, z, z, 1, geo, grid, ClosureMode.ARTIFICIAL_COMPRESSIBILITY)


def test_solver_config_validation():
    with pytest.raises(ValidationError):
        SolverConfig(nu=0.1, mode=ClosureMode.ARTIFICIAL_COMPRESSIBILITY)
    with pytest.raises(ValidationError):
        SolverConfig(nu=0.1, mode=ClosureMode.CONTINUITY)
    with pytest.raises(ValidationError):
        SolverConfig(nu=0.1, relaxation=2.0)
    with pytest.raises(ValidationError):
        SolverConfig(nu=0.0)


def test_explicit_line_contraction():
    grid, geo = _setup(10, 16)
    state = FlowState.zeros(grid)
    state.u[0] = 1.0
    cfg = SolverConfig(nu=1.0, coupling=False, line_scheme=LineScheme.EXPLICIT)
    session = SolveSession(state=state, geo=geo, grid=grid, config=cfg)

    changes = []
    u_n, v_n, _, iterations = solver_service.banach_line_solve(1, session, changes)

    assert iterations < cfg.max_inner
    np.testing.assert_allclose(u_n, 0.4762, atol=1e-4)
    np.testing.assert_allclose(v_n, 0.0)
    ratio = changes[2] / changes[1]
    assert ratio <= 0.40
    assert ratio == pytest.approx(1.0 / 3.0 + 0.01 / 0.33, rel=1e-6)


def test_zero_data_gives_zero_solution_in_one_sweep():
    grid, geo = _setup(6, 16)
    boundary = boundary_service.preset("zero", grid)
    state, report = solver_service.solve(boundary, geo, grid, SolverConfig(nu=0.1))
    assert report.sweeps == 1
    assert report.converged
    assert report.J_final == 0.0
    for field in (state.u, state.v, state.P):
        assert np.all(field == 0.0)


def test_solve_requires_pressure_rows_when_coupled():
    grid, geo = _setup(6, 16)
    boundary = boundary_service.preset("example1", grid)
    with pytest.raises(ModeMismatch):
        solver_service.solve(boundary, geo, grid, SolverConfig(nu=0.1))


def test_solve_rejects_sample_count_mismatch():
    grid, geo = _setup(6, 16)
    boundary = boundary_service.preset("zero", make_grid(6, 32))
    with pytest.raises(ModeMismatch):
        solver_service.solve(boundary, geo, grid, SolverConfig(nu=0.1))


@pytest.mark.parametrize("scheme", [LineScheme.CHORD, LineScheme.EXPLICIT])
def test_linear_ladder_matches_tridiagonal_oracle(scheme):
    grid, geo = _setup(10, 16)
    cfg = SolverConfig(nu=1.0, coupling=False, line_scheme=scheme)
    state, report = solver_service.solve(_uniform_inner(grid), geo, grid, cfg)

    oracle = _ladder_oracle(grid)
    profile = state.u[1:-1, 0]
    np.testing.assert_allclose(profile, oracle, atol=1e-8)
    np.testing.assert_allclose(profile, LADDER, atol=5e-3)
    # every angular node carries the same value
    np.testing.assert_allclose(state.u[1:-1], oracle[:, None] * np.ones((1, 16)), atol=1e-8)
    assert np.all(np.diff(state.u[:, 0]) < 0)
    assert report.final_change <= cfg.outer_tol


def test_linear_ladder_endpoints_are_near_reference_values():
    grid, geo = _setup(10, 16)
    state, _ = solver_service.solve(_uniform_inner(grid), geo, grid, SolverConfig(nu=1.0, coupling=False))
    assert state.u[1, 0] == pytest.approx(0.899, abs=0.1)
    assert state.u[9, 0] == pytest.approx(0.099, abs=0.1)


def test_outer_neighbour_seed_reaches_same_fixed_point():
    grid, geo = _setup(10, 16)
    linear, _ = solver_service.solve(_uniform_inner(grid), geo, grid, SolverConfig(nu=1.0, coupling=False))
    seeded, _ = solver_service.solve(
        _uniform_inner(grid), geo, grid,
        SolverConfig(nu=1.0, coupling=False, seed=SeedStrategy.OUTER_NEIGHBOR),
    )
    np.testing.assert_allclose(seeded.u, linear.u, atol=1e-8)


def test_converged_state_is_a_sweep_fixed_point():
    grid, geo = _setup(10, 16)
    cfg = SolverConfig(nu=1.0, coupling=False)
    state, _ = solver_service.solve(_uniform_inner(grid), geo, grid, cfg)
    session = SolveSession(state=state.copy(), geo=geo, grid=grid, config=cfg)
    assert solver_service.sweep(session) <= 2.0 * cfg.outer_tol


def test_doubling_max_inner_does_not_move_the_solution():
    grid, geo = _setup(10, 16)
    first, _ = solver_service.solve(_uniform_inner(grid), geo, grid, SolverConfig(nu=1.0, coupling=False))
    second, _ = solver_service.solve(
        _uniform_inner(grid), geo, grid, SolverConfig(nu=1.0, coupling=False, max_inner=400)
    )
    assert second.max_change(first) <= 1e-10


def test_no_convergence_carries_last_state():
    grid, geo = _setup(10, 16)
    with pytest.raises(NoConvergence) as excinfo:
        solver_service.solve(_uniform_inner(grid), geo, grid, SolverConfig(nu=1.0, coupling=False, max_sweeps=2))
    assert excinfo.value.state is not None
    assert excinfo.value.report.sweeps == 2
    assert not excinfo.value.report.converged
    assert excinfo.value.exit_code == 1


def _couette_errors(N, mode, epsilon=None, M=150):
    grid, geo = _setup(N, M)
    boundary = boundary_service.preset("couette", grid)
    cfg = SolverConfig(nu=0.1, mode=mode, epsilon=epsilon)
    state, report = solver_service.solve(boundary, geo, grid, cfg)
    assert report.converged
    cos, sin = np.cos(grid.theta), np.sin(grid.theta)
    azimuthal = -state.u * sin + state.v * cos
    radial = state.u * cos + state.v * sin
    return np.max(np.abs(azimuthal - couette_velocity(grid.t)[:, None])), np.max(np.abs(radial))


@pytest.mark.slow
def test_couette_converges_with_artificial_compressibility():
    coarse, _ = _couette_errors(20, ClosureMode.ARTIFICIAL_COMPRESSIBILITY, 1e-4)
    fine, _ = _couette_errors(40, ClosureMode.ARTIFICIAL_COMPRESSIBILITY, 1e-4)
    assert coarse <= 0.02
    assert coarse / fine >= 1.8


@pytest.mark.slow
def test_couette_with_pressure_poisson_closure():
    # the flow is axisymmetric, so a coarse theta grid keeps the run short
    azimuthal, radial = _couette_errors(20, ClosureMode.PRESSURE_POISSON, M=32)
    assert azimuthal <= 0.3
    assert radial <= 0.3
