import logging
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from errors import IncompleteState, ModeMismatch
from models import ClosureMode, DomainGrid, FlowState, GeometryCoefficients, Scaling

logger = logging.getLogger(__name__)

# 4th-order central stencils on offsets -2..2
FIRST_DERIVATIVE_STENCIL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
SECOND_DERIVATIVE_STENCIL = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
STENCIL_OFFSETS = (-2, -1, 0, 1, 2)


def _spacing(n_theta: int, dtheta: Optional[float]) -> float:
    return 2.0 * np.pi / n_theta if dtheta is None else dtheta


def theta_derivative(f: np.ndarray, order: int = 1, dtheta: Optional[float] = None) -> np.ndarray:
    """Periodic 4th-order derivative along the last axis."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    f = np.asarray(f, dtype=float)
    M = f.shape[-1]
    if M < 8:
        raise ValueError("periodic stencils need at least 8 nodes")
    h = _spacing(M, dtheta)
    stencil = FIRST_DERIVATIVE_STENCIL if order == 1 else SECOND_DERIVATIVE_STENCIL

    out = np.zeros_like(f)
    for weight, offset in zip(stencil, STENCIL_OFFSETS):
        if weight != 0.0:
            # np.roll(f, -k)[j] == f[j + k]
            out += weight * np.roll(f, -offset, axis=-1)
    return out / h ** order


def theta_derivative_matrix(n_theta: int, order: int = 1, dtheta: Optional[float] = None) -> sp.csr_matrix:
    """Circulant sparse matrix of the same stencil as theta_derivative."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    h = _spacing(n_theta, dtheta)
    stencil = FIRST_DERIVATIVE_STENCIL if order == 1 else SECOND_DERIVATIVE_STENCIL

    diagonals, offsets = [], []
    for weight, offset in zip(stencil, STENCIL_OFFSETS):
        if weight == 0.0:
            continue
        diagonals.append(weight)
        offsets.append(offset)
        if offset != 0:
            # wrap-around entry of the periodic grid
            diagonals.append(weight)
            offsets.append(offset - n_theta if offset > 0 else offset + n_theta)

    D = sp.diags(diagonals, offsets, shape=(n_theta, n_theta))
    return sp.csr_matrix(D / h ** order)


def hat_d1(u_n, u_prev, n: int, geo: GeometryCoefficients, grid: DomainGrid) -> np.ndarray:
    """Transformed ∂x on line n: f5 (u_n - u_prev)/d + (f6/t_n) ∂θ u_n."""
    return geo.f5 * (u_n - u_prev) / grid.d + (geo.f6 / grid.t[n]) * theta_derivative(u_n, 1, grid.dtheta)


def hat_d2(v_n, v_prev, n: int, geo: GeometryCoefficients, grid: DomainGrid) -> np.ndarray:
    """Transformed ∂y on line n: f7 (v_n - v_prev)/d + (f8/t_n) ∂θ v_n."""
    return geo.f7 * (v_n - v_prev) / grid.d + (geo.f8 / grid.t[n]) * theta_derivative(v_n, 1, grid.dtheta)


def line_laplacian(w_next, w_n, w_prev, n: int, geo: GeometryCoefficients, grid: DomainGrid) -> np.ndarray:
    """Transformed Laplacian on line n, one-sided in the first t-derivatives."""
    d, t = grid.d, grid.t[n]
    back = w_n - w_prev
    return (
        (w_next - 2.0 * w_n + w_prev) / d ** 2
        + (geo.f2 / t) * back / d
        + (geo.f3 / t) * theta_derivative(back, 1, grid.dtheta) / d
        + (geo.f4 / t ** 2) * theta_derivative(w_n, 2, grid.dtheta)
    )


# Whole-grid forms, rows 1..N-1 at once

def grid_hat_d1(field: np.ndarray, geo: GeometryCoefficients, grid: DomainGrid) -> np.ndarray:
    t = grid.interior_t[:, None]
    return geo.f5 * (field[1:-1] - field[:-2]) / grid.d + (geo.f6 / t) * theta_derivative(field[1:-1], 1, grid.dtheta)


def grid_hat_d2(field: np.ndarray, geo: GeometryCoefficients, grid: DomainGrid) -> np.ndarray:
    t = grid.interior_t[:, None]
    return geo.f7 * (field[1:-1] - field[:-2]) / grid.d + (geo.f8 / t) * theta_derivative(field[1:-1], 1, grid.dtheta)


def grid_laplacian(field: np.ndarray, geo: GeometryCoefficients, grid: DomainGrid) -> np.ndarray:
    d = grid.d
    t = grid.interior_t[:, None]
    back = field[1:-1] - field[:-2]
    return (
        (field[2:] - 2.0 * field[1:-1] + field[:-2]) / d ** 2
        + (geo.f2 / t) * back / d
        + (geo.f3 / t) * theta_derivative(back, 1, grid.dtheta) / d
        + (geo.f4 / t ** 2) * theta_derivative(field[1:-1], 2, grid.dtheta)
    )


def check_state(state: FlowState, grid: DomainGrid) -> None:
    expected = grid.shape
    for name in ("u", "v", "P"):
        values = getattr(state, name)
        if values is None:
            continue
        if np.shape(values) != expected:
            raise IncompleteState(f"field {name} has shape {np.shape(values)}, expected {expected}")
        if not np.all(np.isfinite(values)):
            raise IncompleteState(f"field {name} contains non-finite values")


def grid_residual_operators(
    state: FlowState,
    geo: GeometryCoefficients,
    grid: DomainGrid,
    nu: float,
    mode: ClosureMode = ClosureMode.CONTINUITY,
    epsilon: Optional[float] = None,
    scaling: Scaling = Scaling.TRANSFORMED,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Momentum-u, momentum-v and closure residuals at interior nodes, (N-1)×M each."""
    check_state(state, grid)
    mode = ClosureMode(mode)
    if state.P is None and mode != ClosureMode.CONTINUITY:
        raise ModeMismatch(f"mode {mode.value} needs a pressure field")
    if mode == ClosureMode.ARTIFICIAL_COMPRESSIBILITY and epsilon is None:
        raise ModeMismatch("artificial_compressibility residual needs epsilon")

    u, v = state.u, state.v
    u_mid, v_mid = u[1:-1], v[1:-1]
    d1u, d2u = grid_hat_d1(u, geo, grid), grid_hat_d2(u, geo, grid)
    d1v, d2v = grid_hat_d1(v, geo, grid), grid_hat_d2(v, geo, grid)

    momentum_u = nu * grid_laplacian(u, geo, grid) - u_mid * d1u - v_mid * d2u
    momentum_v = nu * grid_laplacian(v, geo, grid) - u_mid * d1v - v_mid * d2v
    if state.P is not None:
        momentum_u = momentum_u - grid_hat_d1(state.P, geo, grid)
        momentum_v = momentum_v - grid_hat_d2(state.P, geo, grid)

    if mode == ClosureMode.PRESSURE_POISSON:
        closure = grid_laplacian(state.P, geo, grid) + geo.h3 * (d1u ** 2 + d2v ** 2 + 2.0 * d2u * d1v)
    elif mode == ClosureMode.ARTIFICIAL_COMPRESSIBILITY:
        closure = epsilon * grid_laplacian(state.P, geo, grid) + d1u + d2v
    else:
        closure = d1u + d2v

    if Scaling(scaling) == Scaling.PHYSICAL:
        momentum_u, momentum_v, closure = geo.h3 * momentum_u, geo.h3 * momentum_v, geo.h3 * closure
    return momentum_u, momentum_v, closure
