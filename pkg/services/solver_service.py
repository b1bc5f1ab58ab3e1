import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

import config
from errors import InnerDivergence, ModeMismatch, NoConvergence
from models import (
    BoundaryData,
    ClosureMode,
    DomainGrid,
    FlowState,
    GeometryCoefficients,
    LineScheme,
    Quadrature,
    Scaling,
    SeedStrategy,
)
from operators import hat_d1, hat_d2, line_laplacian, theta_derivative_matrix
from schemas import SolveReport, SolverConfig
from services.residual_service import residual_service

logger = logging.getLogger(__name__)


@dataclass
class _LineFactor:
    lu: object
    size: int


@dataclass
class SolveSession:
    """Mutable state owned by one solve: the flow field and cached line factorizations."""

    state: FlowState
    geo: GeometryCoefficients
    grid: DomainGrid
    config: SolverConfig
    factors: Dict[int, _LineFactor] = field(default_factory=dict)
    inner_iterations_total: int = 0
    jacobian_refreshes: int = 0
    D1: Optional[sp.csr_matrix] = None
    D2: Optional[sp.csr_matrix] = None

    def __post_init__(self):
        M = self.grid.n_theta
        self.D1 = theta_derivative_matrix(M, 1, self.grid.dtheta)
        self.D2 = theta_derivative_matrix(M, 2, self.grid.dtheta)


class GmolSolverService:
    """Per-line contraction maps and the ordered sweep that couples them."""

    # Line maps as displayed: x + (d²/3)·R(x)

    def t_map_u(self, u_next, u_n, u_prev, v_n, P_n, P_prev, n: int,
                geo: GeometryCoefficients, grid: DomainGrid, nu: float, coupling: bool = True) -> np.ndarray:
        residual = line_laplacian(u_next, u_n, u_prev, n, geo, grid)
        if coupling:
            convection = u_n * hat_d1(u_n, u_prev, n, geo, grid) + v_n * hat_d2(u_n, u_prev, n, geo, grid)
            residual = residual - (convection + hat_d1(P_n, P_prev, n, geo, grid)) / nu
        return u_n + grid.d ** 2 * residual / 3.0

    def t_map_v(self, v_next, v_n, v_prev, u_n, P_n, P_prev, n: int,
                geo: GeometryCoefficients, grid: DomainGrid, nu: float, coupling: bool = True) -> np.ndarray:
        residual = line_laplacian(v_next, v_n, v_prev, n, geo, grid)
        if coupling:
            convection = u_n * hat_d1(v_n, v_prev, n, geo, grid) + v_n * hat_d2(v_n, v_prev, n, geo, grid)
            residual = residual - (convection + hat_d2(P_n, P_prev, n, geo, grid)) / nu
        return v_n + grid.d ** 2 * residual / 3.0

    def t_map_P(self, P_next, P_n, P_prev, u_n, u_prev, v_n, v_prev, n: int,
                geo: GeometryCoefficients, grid: DomainGrid,
                mode: ClosureMode = ClosureMode.PRESSURE_POISSON, epsilon: Optional[float] = None) -> np.ndarray:
        residual = line_laplacian(P_next, P_n, P_prev, n, geo, grid)
        d1u = hat_d1(u_n, u_prev, n, geo, grid)
        d2v = hat_d2(v_n, v_prev, n, geo, grid)
        if ClosureMode(mode) == ClosureMode.ARTIFICIAL_COMPRESSIBILITY:
            if epsilon is None:
                raise ModeMismatch("artificial_compressibility map needs epsilon")
            residual = residual + (d1u + d2v) / epsilon
        else:
            d2u = hat_d2(u_n, u_prev, n, geo, grid)
            d1v = hat_d1(v_n, v_prev, n, geo, grid)
            residual = residual + geo.h3 * (d1u ** 2 + d2v ** 2 + 2.0 * d2u * d1v)
        return P_n + grid.d ** 2 * residual / 3.0

    # Line residual R_n(x) with x = (u_n, v_n, P_n); its zeros are the fixed points of the maps

    def line_residual(self, n: int, x: Tuple[np.ndarray, np.ndarray, np.ndarray],
                      state: FlowState, geo: GeometryCoefficients, grid: DomainGrid,
                      config: SolverConfig) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
        u_n, v_n, P_n = x
        u, v, P = state.u, state.v, state.P
        nu = config.nu

        R_u = line_laplacian(u[n + 1], u_n, u[n - 1], n, geo, grid)
        R_v = line_laplacian(v[n + 1], v_n, v[n - 1], n, geo, grid)
        if not config.coupling:
            return R_u, R_v, None

        d1u = hat_d1(u_n, u[n - 1], n, geo, grid)
        d2u = hat_d2(u_n, u[n - 1], n, geo, grid)
        d1v = hat_d1(v_n, v[n - 1], n, geo, grid)
        d2v = hat_d2(v_n, v[n - 1], n, geo, grid)
        R_u -= (u_n * d1u + v_n * d2u + hat_d1(P_n, P[n - 1], n, geo, grid)) / nu
        R_v -= (u_n * d1v + v_n * d2v + hat_d2(P_n, P[n - 1], n, geo, grid)) / nu

        R_P = line_laplacian(P[n + 1], P_n, P[n - 1], n, geo, grid)
        if config.mode == ClosureMode.ARTIFICIAL_COMPRESSIBILITY:
            R_P += (d1u + d2v) / config.epsilon
        else:
            R_P += geo.h3 * (d1u ** 2 + d2v ** 2 + 2.0 * d2u * d1v)
        return R_u, R_v, R_P

    def line_jacobian(self, n: int, x, session: SolveSession) -> sp.csc_matrix:
        """Sparse Jacobian of line_residual with respect to the unknowns of line n."""
        geo, grid, cfg = session.geo, session.grid, session.config
        D1, D2 = session.D1, session.D2
        d, t = grid.d, grid.t[n]

        L_n = (sp.diags(-2.0 / d ** 2 + geo.f2 / (t * d))
               + sp.diags(geo.f3 / (t * d)) @ D1
               + sp.diags(geo.f4 / t ** 2) @ D2)
        if not cfg.coupling:
            return sp.csc_matrix(sp.block_diag([L_n, L_n]))

        u_n, v_n, _ = x
        u_prev, v_prev = session.state.u[n - 1], session.state.v[n - 1]
        G1 = sp.diags(geo.f5 / d) + sp.diags(geo.f6 / t) @ D1
        G2 = sp.diags(geo.f7 / d) + sp.diags(geo.f8 / t) @ D1
        d1u, d2u = G1 @ u_n - geo.f5 * u_prev / d, G2 @ u_n - geo.f7 * u_prev / d
        d1v, d2v = G1 @ v_n - geo.f5 * v_prev / d, G2 @ v_n - geo.f7 * v_prev / d
        nu = cfg.nu
        transport = sp.diags(u_n) @ G1 + sp.diags(v_n) @ G2

        Ruu = L_n - (transport + sp.diags(d1u)) / nu
        Ruv = -sp.diags(d2u) / nu
        RuP = -G1 / nu
        Rvu = -sp.diags(d1v) / nu
        Rvv = L_n - (transport + sp.diags(d2v)) / nu
        RvP = -G2 / nu
        if cfg.mode == ClosureMode.ARTIFICIAL_COMPRESSIBILITY:
            RPu = G1 / cfg.epsilon
            RPv = G2 / cfg.epsilon
        else:
            h3 = geo.h3
            RPu = sp.diags(2.0 * h3 * d1u) @ G1 + sp.diags(2.0 * h3 * d1v) @ G2
            RPv = sp.diags(2.0 * h3 * d2v) @ G2 + sp.diags(2.0 * h3 * d2u) @ G1
        return sp.csc_matrix(sp.bmat([[Ruu, Ruv, RuP], [Rvu, Rvv, RvP], [RPu, RPv, L_n]]))

    # Line solve

    def banach_line_solve(self, n: int, session: SolveSession,
                          changes: Optional[List[float]] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
        """Iterate line n to its fixed point with the neighbouring rows frozen.

        Returns (u_n, v_n, P_n, iterations). The seed is row n+1 for the
        outer-neighbour strategy and the current row otherwise.
        """
        state, geo, grid, cfg = session.state, session.geo, session.grid, session.config
        seed_row = n + 1 if cfg.seed == SeedStrategy.OUTER_NEIGHBOR else n
        u_n = state.u[seed_row].copy()
        v_n = state.v[seed_row].copy()
        P_n = state.P[seed_row].copy() if cfg.coupling else state.P[n].copy()

        previous = np.inf
        growth = 0
        iterations = 0
        for iterations in range(1, cfg.max_inner + 1):
            R_u, R_v, R_P = self.line_residual(n, (u_n, v_n, P_n), state, geo, grid, cfg)

            if cfg.line_scheme == LineScheme.EXPLICIT:
                scale = grid.d ** 2 / 3.0
                du, dv = scale * R_u, scale * R_v
                dP = scale * R_P if R_P is not None else None
            else:
                du, dv, dP = self._chord_step(n, (u_n, v_n, P_n), (R_u, R_v, R_P), session)

            u_n = u_n + du
            v_n = v_n + dv
            if dP is not None:
                P_n = P_n + dP
            change = max(np.max(np.abs(du)), np.max(np.abs(dv)), 0.0 if dP is None else np.max(np.abs(dP)))
            if changes is not None:
                changes.append(float(change))

            if not np.isfinite(change):
                raise InnerDivergence(n, iterations, float(change))
            if change <= cfg.inner_tol:
                break

            ratio = change / previous
            if cfg.line_scheme == LineScheme.CHORD and ratio > config.CHORD_REFRESH_RATIO:
                # stale Jacobian, rebuild at the current iterate
                session.factors.pop(n, None)
            growth = growth + 1 if change > previous else 0
            if growth >= config.DIVERGENCE_PATIENCE:
                raise InnerDivergence(n, iterations, float(change))
            previous = change
        else:
            logger.debug("line %d stopped at max_inner=%d", n, cfg.max_inner)

        session.inner_iterations_total += iterations
        return u_n, v_n, P_n, iterations

    def _chord_step(self, n: int, x, residuals, session: SolveSession):
        factor = session.factors.get(n)
        if factor is None:
            jacobian = self.line_jacobian(n, x, session)
            factor = _LineFactor(lu=splu(jacobian), size=jacobian.shape[0])
            session.factors[n] = factor
            session.jacobian_refreshes += 1

        R_u, R_v, R_P = residuals
        rhs = np.concatenate([R_u, R_v] + ([R_P] if R_P is not None else []))
        step = -factor.lu.solve(rhs)
        M = session.grid.n_theta
        dP = step[2 * M:] if R_P is not None else None
        return step[:M], step[M:2 * M], dP

    # Global coupling

    def initial_state(self, boundary: BoundaryData, grid: DomainGrid, config: SolverConfig) -> FlowState:
        N = grid.n_lines
        state = FlowState.zeros(grid)
        state.u[0], state.v[0] = boundary.u0, boundary.v0
        if boundary.P0 is not None:
            state.P[0] = boundary.P0
        if boundary.Pf is not None:
            state.P[N] = boundary.Pf

        if config.seed == SeedStrategy.LINEAR:
            s = (np.arange(N + 1) / N)[:, None]
            for values in (state.u, state.v, state.P):
                values[1:N] = ((1.0 - s) * values[0] + s * values[N])[1:N]
        else:
            for values in (state.u, state.v, state.P):
                values[1:N] = values[N]
        return state

    def sweep(self, session: SolveSession) -> float:
        """One ordered pass n = 1..N-1 with the newest neighbours; returns the sup change."""
        state, cfg = session.state, session.config
        omega = cfg.relaxation
        change = 0.0
        for n in range(1, session.grid.n_lines):
            u_n, v_n, P_n, _ = self.banach_line_solve(n, session)
            du = omega * (u_n - state.u[n])
            dv = omega * (v_n - state.v[n])
            dP = omega * (P_n - state.P[n])
            state.u[n] += du
            state.v[n] += dv
            state.P[n] += dP
            change = max(change, np.max(np.abs(du)), np.max(np.abs(dv)), np.max(np.abs(dP)))
        return float(change)

    def solve(self, boundary: BoundaryData, geo: GeometryCoefficients, grid: DomainGrid,
              config: SolverConfig) -> Tuple[FlowState, SolveReport]:
        if boundary.n_theta != grid.n_theta:
            raise ModeMismatch(f"boundary has {boundary.n_theta} samples, grid has {grid.n_theta}")
        if config.coupling and not boundary.has_pressure_rows:
            raise ModeMismatch(f"{config.mode.value} solve needs both pressure boundary rows")

        session = SolveSession(state=self.initial_state(boundary, grid, config), geo=geo, grid=grid, config=config)
        changes: List[float] = []
        for sweep in range(1, config.max_sweeps + 1):
            change = self.sweep(session)
            changes.append(change)
            if sweep % 100 == 0:
                logger.info("sweep %d: change %.3e", sweep, change)
            if change <= config.outer_tol:
                break

        report = self._report(session, changes)
        if not report.converged:
            raise NoConvergence(
                f"no convergence after {config.max_sweeps} sweeps (change {report.final_change:.3e})",
                report=report,
                state=session.state,
            )
        logger.info("solve converged in %d sweeps", report.sweeps)
        return session.state, report

    def _report(self, session: SolveSession, changes: List[float]) -> SolveReport:
        cfg = session.config
        final_change = changes[-1] if changes else 0.0
        ratio = 0.0
        if len(changes) >= 2 and changes[-2] > 0.0:
            ratio = changes[-1] / changes[-2]
        J_final = 0.0
        if cfg.coupling:
            J_final = residual_service.evaluate_J(
                session.state, session.geo, session.grid, cfg.nu,
                Quadrature.UNIT_WEIGHTED, Scaling.TRANSFORMED,
            ).J
        return SolveReport(
            sweeps=len(changes),
            inner_iterations_total=session.inner_iterations_total,
            final_change=final_change,
            contraction_ratio_estimate=ratio,
            J_final=J_final,
            converged=final_change <= cfg.outer_tol,
            mode=cfg.mode,
            line_scheme=cfg.line_scheme,
            jacobian_refreshes=session.jacobian_refreshes,
        )


# Global solver service instance
solver_service = GmolSolverService()
