import logging
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_trapezoid
from scipy.sparse.linalg import spsolve

import config
from errors import NotAGradient, SolveFailure
from models import AnalyticField, PotentialTriple, RectGrid
from schemas import CertificationOptions, CertificationReport

logger = logging.getLogger(__name__)

Trace = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def _const(value):
    return lambda x, y: np.full(np.broadcast(x, y).shape, value)


FIELD_PRESETS: Dict[str, AnalyticField] = {
    "zero": AnalyticField("zero", _zero, _zero, _zero, _zero, _zero, _zero),
    "xy": AnalyticField(
        "xy",
        f=lambda x, y: x * y,
        fx=lambda x, y: y + 0.0 * x,
        fy=lambda x, y: x + 0.0 * y,
        fxx=_zero, fyy=_zero,
        fxy=_const(1.0),
    ),
    "sin_sin": AnalyticField(
        "sin_sin",
        f=lambda x, y: np.sin(x) * np.sin(y),
        fx=lambda x, y: np.cos(x) * np.sin(y),
        fy=lambda x, y: np.sin(x) * np.cos(y),
        fxx=lambda x, y: -np.sin(x) * np.sin(y),
        fyy=lambda x, y: -np.sin(x) * np.sin(y),
        fxy=lambda x, y: np.cos(x) * np.cos(y),
    ),
    "x2": AnalyticField(
        "x2",
        f=lambda x, y: x ** 2 + 0.0 * y,
        fx=lambda x, y: 2.0 * x + 0.0 * y,
        fy=_zero,
        fxx=_const(2.0), fyy=_zero, fxy=_zero,
    ),
    "linear_x": AnalyticField(
        "linear_x",
        f=lambda x, y: x + 0.0 * y,
        fx=_const(1.0), fy=_zero,
        fxx=_zero, fyy=_zero, fxy=_zero,
    ),
}

# Dirichlet traces (w0, w2) paired with each w1 preset; both are exact smooth solutions
CASE_TRACES: Dict[str, Tuple[Trace, Trace]] = {
    "zero": (_zero, _zero),
    "xy": (lambda x, y: x ** 2 - y ** 2, lambda x, y: -(x ** 2 + y ** 2) / 2.0),
    # cos x cos y solves the w2 equation, e^x sin y is a harmonic addition
    "sin_sin": (_zero, lambda x, y: np.cos(x) * np.cos(y) + np.exp(x) * np.sin(y)),
}


def derivative_4th(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """4th-order first derivative, central inside and one-sided on the two outer nodes."""
    g = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.empty_like(g)
    out[2:-2] = (g[:-4] - 8.0 * g[1:-3] + 8.0 * g[3:-1] - g[4:]) / 12.0
    out[0] = (-25.0 * g[0] + 48.0 * g[1] - 36.0 * g[2] + 16.0 * g[3] - 3.0 * g[4]) / 12.0
    out[1] = (-3.0 * g[0] - 10.0 * g[1] + 18.0 * g[2] - 6.0 * g[3] + g[4]) / 12.0
    out[-2] = (3.0 * g[-1] + 10.0 * g[-2] - 18.0 * g[-3] + 6.0 * g[-4] - g[-5]) / 12.0
    out[-1] = (25.0 * g[-1] - 48.0 * g[-2] + 36.0 * g[-3] - 16.0 * g[-4] + 3.0 * g[-5]) / 12.0
    return np.moveaxis(out / h, 0, axis)


class PotentialService:
    """Velocity from three potentials, the identities it satisfies, and the pressure it implies."""

    def field(self, name: str) -> AnalyticField:
        if name in ("none", ""):
            name = "zero"
        try:
            return FIELD_PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown analytic field '{name}', expected one of {sorted(FIELD_PRESETS)}")

    def case(self, name: str) -> Tuple[AnalyticField, Trace, Trace]:
        if name not in CASE_TRACES:
            raise ValueError(f"unknown potential case '{name}', expected one of {sorted(CASE_TRACES)}")
        bc_w0, bc_w2 = CASE_TRACES[name]
        return FIELD_PRESETS[name], bc_w0, bc_w2

    # Poisson solves

    def laplacian_matrix(self, grid: RectGrid) -> sp.csc_matrix:
        """5-point stencil on the interior nodes, scaled by h² (diagonal 4)."""
        mx, my = grid.nx - 2, grid.ny - 2
        Tx = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(mx, mx))
        Ty = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(my, my))
        return sp.csc_matrix(sp.kron(Tx, sp.identity(my)) + sp.kron(sp.identity(mx), Ty))

    def solve_poisson(self, forcing: np.ndarray, boundary: np.ndarray, grid: RectGrid,
                      matrix: Optional[sp.csc_matrix] = None) -> np.ndarray:
        """Solve ∇²w = forcing with w = boundary on the rectangle edges."""
        A = self.laplacian_matrix(grid) if matrix is None else matrix
        h2 = grid.h ** 2
        w = np.array(boundary, dtype=float)
        rhs = -h2 * forcing[1:-1, 1:-1].copy()
        rhs[0, :] += w[0, 1:-1]
        rhs[-1, :] += w[-1, 1:-1]
        rhs[:, 0] += w[1:-1, 0]
        rhs[:, -1] += w[1:-1, -1]
        b = rhs.ravel()

        x = spsolve(A, b)
        residual = float(np.max(np.abs(A @ x - b)))
        if residual > config.POISSON_TOL:
            # one step of iterative refinement
            x = x + spsolve(A, b - A @ x)
            residual = float(np.max(np.abs(A @ x - b)))
        if not np.isfinite(residual) or residual > config.POISSON_TOL:
            raise SolveFailure(f"Poisson residual {residual:.3e} above {config.POISSON_TOL:.1e}")

        w[1:-1, 1:-1] = x.reshape(grid.nx - 2, grid.ny - 2)
        return w

    def solve_potentials(self, w1: AnalyticField, bc_w0: Trace, bc_w2: Trace, grid: RectGrid) -> PotentialTriple:
        X, Y = grid.mesh()
        mask = grid.boundary_mask()
        A = self.laplacian_matrix(grid)

        w2_boundary = np.where(mask, bc_w2(X, Y), 0.0)
        w0_boundary = np.where(mask, bc_w0(X, Y), 0.0)
        w2 = self.solve_poisson(-2.0 * w1.fxy(X, Y), w2_boundary, grid, A)
        w0 = self.solve_poisson(w1.fyy(X, Y) - w1.fxx(X, Y), w0_boundary, grid, A)
        logger.debug("potentials solved on %dx%d nodes", grid.nx, grid.ny)
        return PotentialTriple(w0=w0, w1=w1.f(X, Y), w2=w2)

    def potential_residuals(self, triple: PotentialTriple, w1: AnalyticField, grid: RectGrid) -> Tuple[float, float]:
        """Sup of the two 5-point equations the triple must satisfy, at interior nodes."""
        X, Y = grid.mesh()

        def lap5(w):
            return (w[2:, 1:-1] + w[:-2, 1:-1] + w[1:-1, 2:] + w[1:-1, :-2] - 4.0 * w[1:-1, 1:-1]) / grid.h ** 2

        inner = (slice(1, -1), slice(1, -1))
        r2 = lap5(triple.w2) + 2.0 * w1.fxy(X, Y)[inner]
        r0 = lap5(triple.w0) + w1.fxx(X, Y)[inner] - w1.fyy(X, Y)[inner]
        return float(np.max(np.abs(r2))), float(np.max(np.abs(r0)))

    # Velocity and its identities

    def velocity_from_potentials(self, triple: PotentialTriple, grid: RectGrid) -> Tuple[np.ndarray, np.ndarray]:
        h = grid.h
        dx = lambda w: derivative_4th(w, h, axis=0)
        dy = lambda w: derivative_4th(w, h, axis=1)
        u = dx(triple.w0) + dx(triple.w1) + dy(triple.w2)
        v = dy(triple.w0) - dy(triple.w1) - dx(triple.w2)
        return u, v

    def divergence(self, u: np.ndarray, v: np.ndarray, grid: RectGrid) -> np.ndarray:
        return derivative_4th(u, grid.h, 0) + derivative_4th(v, grid.h, 1)

    def convective_terms(self, u: np.ndarray, v: np.ndarray, grid: RectGrid) -> Tuple[np.ndarray, np.ndarray]:
        h = grid.h
        h1 = u * derivative_4th(u, h, 0) + v * derivative_4th(u, h, 1)
        h2 = u * derivative_4th(v, h, 0) + v * derivative_4th(v, h, 1)
        return h1, h2

    def convective_curl(self, u: np.ndarray, v: np.ndarray, grid: RectGrid) -> np.ndarray:
        h1, h2 = self.convective_terms(u, v, grid)
        return derivative_4th(h1, grid.h, 1) - derivative_4th(h2, grid.h, 0)

    # Pressure

    def _pressure_gradient(self, u, v, f: Optional[AnalyticField], nu: float, grid: RectGrid):
        h = grid.h
        X, Y = grid.mesh()
        lap = lambda w: derivative_4th(derivative_4th(w, h, 0), h, 0) + derivative_4th(derivative_4th(w, h, 1), h, 1)
        h1, h2 = self.convective_terms(u, v, grid)
        G1 = nu * lap(u) - h1
        G2 = nu * lap(v) - h2
        if f is not None:
            G1 = G1 + f.fx(X, Y)
            G2 = G2 + f.fy(X, Y)
        return G1, G2

    def recover_pressure(self, u: np.ndarray, v: np.ndarray, f: Optional[AnalyticField], nu: float,
                         grid: RectGrid, trace: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
        """Integrate the momentum balance from the lower-left corner along both path orders.

        Returns the averaged pressure (zero at the anchor) and the largest
        disagreement between the row-first and column-first integrals.
        """
        h = grid.h
        G1, G2 = self._pressure_gradient(u, v, f, nu, grid)

        along_x = cumulative_trapezoid(G1[:, 0], dx=h, initial=0.0)
        row_first = along_x[:, None] + cumulative_trapezoid(G2, dx=h, axis=1, initial=0.0)
        along_y = cumulative_trapezoid(G2[0, :], dx=h, initial=0.0)
        column_first = along_y[None, :] + cumulative_trapezoid(G1, dx=h, axis=0, initial=0.0)

        defect = float(np.max(np.abs(row_first - column_first)))
        P = 0.5 * (row_first + column_first)
        limit = config.GRADIENT_DEFECT_FACTOR * h ** 2
        if defect > limit:
            raise NotAGradient(defect, limit, pressure=P)
        if trace is not None:
            logger.info("pressure trace mismatch %.3e", self.trace_mismatch(P, trace, grid))
        return P, defect

    def momentum_residual(self, u, v, P, f: Optional[AnalyticField], nu: float, grid: RectGrid) -> float:
        G1, G2 = self._pressure_gradient(u, v, f, nu, grid)
        r1 = G1 - derivative_4th(P, grid.h, 0)
        r2 = G2 - derivative_4th(P, grid.h, 1)
        return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))

    def trace_mismatch(self, P: np.ndarray, trace: np.ndarray, grid: RectGrid) -> float:
        """Sup distance to a prescribed boundary trace, up to the free additive constant."""
        mask = grid.boundary_mask()
        diff = P[mask] - np.asarray(trace)[mask]
        return float(np.max(np.abs(diff - np.mean(diff))))

    # Certification

    def _defects(self, case: str, nodes: int) -> Tuple[float, float]:
        grid = RectGrid(nx=nodes, ny=nodes)
        w1, bc_w0, bc_w2 = self.case(case)
        u, v = self.velocity_from_potentials(self.solve_potentials(w1, bc_w0, bc_w2, grid), grid)
        return (float(np.max(np.abs(self.divergence(u, v, grid)))),
                float(np.max(np.abs(self.convective_curl(u, v, grid)))))

    def certify(self, options: Optional[CertificationOptions] = None) -> CertificationReport:
        options = options or CertificationOptions()
        grid = RectGrid(nx=options.nodes, ny=options.nodes)
        w1, bc_w0, bc_w2 = self.case(options.w1)
        forcing = self.field(options.forcing)

        triple = self.solve_potentials(w1, bc_w0, bc_w2, grid)
        u, v = self.velocity_from_potentials(triple, grid)
        P, defect = self.recover_pressure(u, v, forcing, options.nu, grid)

        pressure_error = None
        if options.w1 == "xy":
            X, Y = grid.mesh()
            exact = -2.0 * (X ** 2 + Y ** 2) + forcing.f(X, Y)
            exact = exact - exact[0, 0]
            pressure_error = float(np.max(np.abs(P - exact)))

        coarse, fine = options.refinement_nodes
        div_coarse, curl_coarse = self._defects("sin_sin", coarse)
        div_fine, curl_fine = self._defects("sin_sin", fine)
        ratio = (coarse - 1) / (fine - 1)
        order = lambda e_coarse, e_fine: float(np.log(e_coarse / e_fine) / np.log(1.0 / ratio))

        report = CertificationReport(
            w1=options.w1,
            forcing=forcing.name,
            nodes=options.nodes,
            h=grid.h,
            divergence_sup=float(np.max(np.abs(self.divergence(u, v, grid)))),
            curl_sup=float(np.max(np.abs(self.convective_curl(u, v, grid)))),
            path_defect=defect,
            momentum_residual_sup=self.momentum_residual(u, v, P, forcing, options.nu, grid),
            pressure_error_sup=pressure_error,
            potential_residual_sup=max(self.potential_residuals(triple, w1, grid)) * grid.h ** 2,
            divergence_order=order(div_coarse, div_fine),
            curl_order=order(curl_coarse, curl_fine),
        )
        logger.info("certification on %d nodes: div %.2e curl %.2e", options.nodes, report.divergence_sup, report.curl_sup)
        return report


# Global potential service instance
potential_service = PotentialService()
