import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

import config
from errors import GmolError, NoConvergence, ShapeMismatch, TargetNotReached
from models import (
    AnsatzCoefficients,
    BasisEvaluation,
    BoundaryData,
    ClosureMode,
    DomainGrid,
    FitResult,
    FlowState,
    GeometryCoefficients,
)
from operators import theta_derivative
from schemas import FitOptions, FitReport, SolverConfig
from services.residual_service import residual_service
from services.solver_service import solver_service

logger = logging.getLogger(__name__)

# Line expansions, one entry per coefficient column.
U_TERMS = ["cos", "u0", "cos*u0^2", "sin*u0*v0", "sin*u0*u0'", "cos*v0*u0'", "u0''", "sin", "sin*P0", "cos*P0", "1"]
# b6 mirrors the u pattern: cos*v0*v0'
V_TERMS = ["sin", "v0", "sin*v0^2", "cos*u0*v0", "sin*u0*v0'", "cos*v0*v0'", "v0''", "cos", "sin*P0", "cos*P0", "1"]
P_TERMS = ["1", "cos*u0", "sin*v0", "sin*u0'", "cos*v0'", "u0''", "v0''", "P0", "P0''"]
# column labels of the pressure coefficients; c8 is unused
P_INDICES = [1, 2, 3, 4, 5, 6, 7, 9, 10]
SIZES = (len(U_TERMS), len(V_TERMS), len(P_TERMS))

# half-width of the angular footprint of one P0 sample in the residual (P0'' then ∂θ)
P0_FOOTPRINT = 4


def coefficient_names(prefix: str) -> List[str]:
    if prefix == "a":
        return [f"a{k}:{term}" for k, term in enumerate(U_TERMS, start=1)]
    if prefix == "b":
        return [f"b{k}:{term}" for k, term in enumerate(V_TERMS, start=1)]
    return [f"c{k}:{term}" for k, term in zip(P_INDICES, P_TERMS)]


class _FitProblem:
    """Stacked unknown x = [a; b; c; P0] and its weighted residual vector."""

    def __init__(self, service: "AnsatzFitService", boundary: BoundaryData, geo: GeometryCoefficients,
                 grid: DomainGrid, nu: float, options: FitOptions):
        self.service = service
        self.boundary = boundary
        self.geo = geo
        self.grid = grid
        self.nu = nu
        self.options = options
        self.n_interior = grid.n_lines - 1
        self.n_coeffs = self.n_interior * sum(SIZES)
        self.size = self.n_coeffs + grid.n_theta
        self.weights = residual_service.cell_weights(geo, grid, options.quadrature)
        self.penalty_root = np.sqrt(config.P0_SMOOTHING)
        self.n_field_rows = 3 * self.n_interior * grid.n_theta
        self.groups = self._column_groups()

    def unpack(self, x: np.ndarray) -> Tuple[AnsatzCoefficients, np.ndarray]:
        coeffs = AnsatzCoefficients.from_vector(x[:self.n_coeffs], self.n_interior, SIZES)
        return coeffs, x[self.n_coeffs:]

    def state(self, x: np.ndarray) -> FlowState:
        coeffs, P0 = self.unpack(x)
        basis = self.service.assemble_basis(self.boundary, self.grid, P0)
        return self.service.evaluate_ansatz(coeffs, P0, basis, self.grid, self.boundary)

    def residual(self, x: np.ndarray) -> np.ndarray:
        fields = residual_service.residual_vector(
            self.state(x), self.geo, self.grid, self.nu, self.weights, self.options.scaling
        )
        P0 = x[self.n_coeffs:]
        penalty = self.penalty_root * theta_derivative(P0, 2, self.grid.dtheta)
        return np.concatenate([fields, penalty])

    def split_objective(self, r: np.ndarray) -> Tuple[float, float]:
        """(J, objective) where the objective adds the P0 smoothing penalty."""
        J = float(r[:self.n_field_rows] @ r[:self.n_field_rows])
        return J, float(r @ r)

    # Structural colouring of the Jacobian columns

    def _column_groups(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(columns, owner) pairs; owner[i] is the perturbed column that residual row i depends on, or -1."""
        grid = self.grid
        M, n_int = grid.n_theta, self.n_interior
        n_rows = self.n_field_rows + M
        residual_line = np.full(n_rows, -1)
        residual_line[:self.n_field_rows] = np.tile(np.repeat(np.arange(1, n_int + 1), M), 3)
        residual_col = np.concatenate([np.tile(np.arange(M), 3 * n_int), np.arange(M)])

        groups = []
        offset = 0
        for K in SIZES:
            for colour in range(3):
                lines = np.arange(1, n_int + 1)
                lines = lines[(lines - 1) % 3 == colour]
                if lines.size == 0:
                    continue
                # residual line m reads rows m-1, m, m+1
                owner_line = np.full(n_int + 2, -1)
                for n in lines:
                    owner_line[max(n - 1, 1):min(n + 1, n_int) + 1] = n
                line_of_row = np.where(residual_line > 0, owner_line[np.clip(residual_line, 0, n_int + 1)], -1)
                for k in range(K):
                    owner = np.where(line_of_row > 0, offset + (line_of_row - 1) * K + k, -1)
                    columns = offset + (lines - 1) * K + k
                    groups.append((columns, owner))
            offset += n_int * K

        spacing = next((m for m in range(2 * P0_FOOTPRINT + 1, M) if M % m == 0), M)
        for colour in range(spacing):
            samples = np.arange(colour, M, spacing)
            owner_sample = np.full(M, -1)
            for j in samples:
                near = (j + np.arange(-P0_FOOTPRINT, P0_FOOTPRINT + 1)) % M
                owner_sample[near] = j
            owner = np.where(owner_sample[residual_col] >= 0, self.n_coeffs + owner_sample[residual_col], -1)
            groups.append((self.n_coeffs + samples, owner))
        return groups

    def jacobian(self, x: np.ndarray, r0: np.ndarray, executor: Optional[ThreadPoolExecutor]) -> sp.csr_matrix:
        step = config.LM_JACOBIAN_STEP * (1.0 + np.abs(x))

        def column_block(group):
            columns, owner = group
            shifted = x.copy()
            shifted[columns] += step[columns]
            dr = self.residual(shifted) - r0
            rows = np.nonzero(owner >= 0)[0]
            cols = owner[rows]
            return rows, cols, dr[rows] / step[cols]

        blocks = list(executor.map(column_block, self.groups)) if executor else [column_block(g) for g in self.groups]
        rows = np.concatenate([b[0] for b in blocks])
        cols = np.concatenate([b[1] for b in blocks])
        vals = np.concatenate([b[2] for b in blocks])
        keep = vals != 0.0
        return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(r0.size, self.size))


class AnsatzFitService:
    """Line-by-line functional ansatz in the boundary data, fitted by minimizing J."""

    def assemble_basis(self, boundary: BoundaryData, grid: DomainGrid,
                       P0: Optional[np.ndarray] = None) -> BasisEvaluation:
        if boundary.n_theta != grid.n_theta:
            raise ShapeMismatch(f"boundary has {boundary.n_theta} samples, grid has {grid.n_theta}")
        cos, sin = np.cos(grid.theta), np.sin(grid.theta)
        one = np.ones(grid.n_theta)
        u0, v0 = boundary.u0, boundary.v0
        du0, d2u0 = boundary.u0_d1, boundary.u0_d2
        dv0, d2v0 = boundary.v0_d1, boundary.v0_d2
        P0 = np.zeros(grid.n_theta) if P0 is None else np.asarray(P0, dtype=float)
        if P0.shape != (grid.n_theta,):
            raise ShapeMismatch(f"P0 has shape {P0.shape}, expected ({grid.n_theta},)")
        d2P0 = theta_derivative(P0, 2, grid.dtheta)

        u_cols = [cos, u0, cos * u0 ** 2, sin * u0 * v0, sin * u0 * du0, cos * v0 * du0,
                  d2u0, sin, sin * P0, cos * P0, one]
        v_cols = [sin, v0, sin * v0 ** 2, cos * u0 * v0, sin * u0 * dv0, cos * v0 * dv0,
                  d2v0, cos, sin * P0, cos * P0, one]
        P_cols = [one, cos * u0, sin * v0, sin * du0, cos * dv0, d2u0, d2v0, P0, d2P0]
        return BasisEvaluation(
            u=np.column_stack(u_cols),
            v=np.column_stack(v_cols),
            P=np.column_stack(P_cols),
            u_names=coefficient_names("a"),
            v_names=coefficient_names("b"),
            P_names=coefficient_names("c"),
        )

    def evaluate_ansatz(self, coeffs: AnsatzCoefficients, P0: np.ndarray, basis: BasisEvaluation,
                        grid: DomainGrid, boundary: Optional[BoundaryData] = None) -> FlowState:
        N, M = grid.n_lines, grid.n_theta
        P0 = np.asarray(P0, dtype=float)
        expected = {"a": (N - 1, basis.u.shape[1]), "b": (N - 1, basis.v.shape[1]), "c": (N - 1, basis.P.shape[1])}
        for name, shape in expected.items():
            if getattr(coeffs, name).shape != shape:
                raise ShapeMismatch(f"coefficients {name} have shape {getattr(coeffs, name).shape}, expected {shape}")
        if basis.u.shape[0] != M or P0.shape != (M,):
            raise ShapeMismatch(f"basis/P0 sampled on {basis.u.shape[0]}/{P0.shape} nodes, grid has {M}")

        state = FlowState.zeros(grid)
        state.u[1:N] = coeffs.a @ basis.u.T
        state.v[1:N] = coeffs.b @ basis.v.T
        state.P[1:N] = coeffs.c @ basis.P.T
        # column 2 of each velocity basis is the inner boundary trace
        state.u[0] = basis.u[:, 1] if boundary is None else boundary.u0
        state.v[0] = basis.v[:, 1] if boundary is None else boundary.v0
        state.P[0] = P0
        if boundary is not None and boundary.Pf is not None:
            state.P[N] = boundary.Pf
        else:
            state.P[N] = 2.0 * state.P[N - 1] - state.P[N - 2]
        return state

    def project_state(self, state: FlowState, P0: np.ndarray, boundary: BoundaryData,
                      grid: DomainGrid) -> AnsatzCoefficients:
        """Least-squares coefficients of every interior line of a sampled state."""
        basis = self.assemble_basis(boundary, grid, P0)
        N = grid.n_lines
        fit_rows = lambda B, rows: scipy.linalg.lstsq(B, rows.T)[0].T
        return AnsatzCoefficients(
            a=fit_rows(basis.u, state.u[1:N]),
            b=fit_rows(basis.v, state.v[1:N]),
            c=fit_rows(basis.P, state.P[1:N]),
        )

    # Fit

    def fit(self, boundary: BoundaryData, geo: GeometryCoefficients, grid: DomainGrid, nu: float,
            options: Optional[FitOptions] = None) -> FitResult:
        """Minimize J over [a; b; c; P0] from each start in a fixed order; return the best.

        Raises TargetNotReached, carrying the best result, when no start
        gets J down to options.target.
        """
        options = options or FitOptions()
        problem = _FitProblem(self, boundary, geo, grid, nu, options)

        starts: List[Tuple[str, Callable[[], Optional[np.ndarray]]]] = [("zero", lambda: np.zeros(problem.size))]
        if options.seed_with_solver:
            starts.append(("solver", lambda: self.solver_start(boundary, geo, grid, nu)))

        best: Optional[FitResult] = None
        # GMOL_THREADS caps whatever the run configuration asks for
        threads = min(options.threads, config.GMOL_THREADS)
        executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
        try:
            for name, make_start in starts:
                x0 = make_start()
                if x0 is None:
                    continue
                result = self._levenberg_marquardt(problem, x0, name, executor)
                logger.info("start %s finished with J = %.3e after %d iterations", name, result.report.J, result.iterations)
                if best is None or result.report.J < best.report.J:
                    best = result
                if best.report.J <= options.target:
                    break
        finally:
            if executor:
                executor.shutdown()

        best.fit_report = FitReport(
            iterations=best.iterations,
            accepted_steps=len(best.history) - 1,
            best_start=best.start,
            target=options.target,
            target_reached=best.report.J <= options.target,
            J_final=best.report.J,
        )
        if best.report.J > options.target:
            raise TargetNotReached(f"best J {best.report.J:.3e} above target {options.target:.3e}", result=best)
        return best

    def solver_start(self, boundary: BoundaryData, geo: GeometryCoefficients, grid: DomainGrid,
                     nu: float) -> Optional[np.ndarray]:
        """Start vector projected from an artificial-compressibility solve with zero pressure rows."""
        seed_boundary = boundary.without_pressure()
        seed_boundary.P0 = np.zeros(grid.n_theta)
        seed_boundary.Pf = np.zeros(grid.n_theta)
        solver_config = SolverConfig(
            nu=nu,
            mode=ClosureMode.ARTIFICIAL_COMPRESSIBILITY,
            epsilon=config.SEED_EPSILON,
            outer_tol=config.SEED_OUTER_TOL,
            max_sweeps=config.SEED_MAX_SWEEPS,
        )
        try:
            state, _ = solver_service.solve(seed_boundary, geo, grid, solver_config)
        except NoConvergence as e:
            logger.warning("seed solve did not converge, using its last state: %s", e.detail)
            state = e.state
        except GmolError as e:
            logger.warning("seed solve failed, skipping solver start: %s", e.detail)
            return None

        # the solve pins P to zero on the inner line; extrapolate the interior trace instead
        P0 = 2.0 * state.P[1] - state.P[2]
        coeffs = self.project_state(state, P0, boundary, grid)
        return np.concatenate([coeffs.to_vector(), P0])

    def _levenberg_marquardt(self, problem: _FitProblem, x0: np.ndarray, start: str,
                             executor: Optional[ThreadPoolExecutor]) -> FitResult:
        options = problem.options
        x = x0.copy()
        r = problem.residual(x)
        J, objective = problem.split_objective(r)
        history = [objective]
        damping = config.LM_INITIAL_DAMPING
        iterations = 0

        while iterations < options.max_iterations and J > options.target:
            iterations += 1
            jac = problem.jacobian(x, r, executor)
            A = (jac.T @ jac).toarray()
            g = jac.T @ r
            scale = np.diag(A).copy()
            scale = np.maximum(scale, 1e-12 * max(float(scale.max()), 1.0))

            accepted = False
            while damping <= config.LM_MAX_DAMPING:
                delta = self._damped_step(A, g, damping * scale)
                x_try = x + delta
                r_try = problem.residual(x_try)
                J_try, objective_try = problem.split_objective(r_try)
                if np.isfinite(objective_try) and objective_try < objective:
                    x, r, J, objective = x_try, r_try, J_try, objective_try
                    damping = max(damping / config.LM_DAMPING_FACTOR, 1e-15)
                    accepted = True
                    break
                damping *= config.LM_DAMPING_FACTOR
            if not accepted:
                logger.info("start %s stalled at J = %.3e (damping %.1e)", start, J, damping)
                break
            history.append(objective)
            logger.debug("start %s iteration %d: J = %.6e damping = %.1e", start, iterations, J, damping)

        coeffs, P0 = problem.unpack(x)
        state = problem.state(x)
        report = residual_service.evaluate_J(state, problem.geo, problem.grid, problem.nu,
                                             options.quadrature, options.scaling)
        return FitResult(
            coeffs=AnsatzCoefficients(a=coeffs.a.copy(), b=coeffs.b.copy(), c=coeffs.c.copy()),
            P0=P0.copy(),
            state=state,
            report=report,
            history=history,
            start=start,
            iterations=iterations,
        )

    @staticmethod
    def _damped_step(A: np.ndarray, g: np.ndarray, damping: np.ndarray) -> np.ndarray:
        system = A + np.diag(damping)
        try:
            factor = scipy.linalg.cho_factor(system)
            return -scipy.linalg.cho_solve(factor, g)
        except np.linalg.LinAlgError:
            logger.warning("normal equations not positive definite, falling back to lstsq")
            return -scipy.linalg.lstsq(system, g)[0]


# Global ansatz fit service instance
ansatz_service = AnsatzFitService()
