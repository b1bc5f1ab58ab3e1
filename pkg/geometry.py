"""Star-shaped annulus r(θ) <= ρ <= 2 r(θ) and the coefficients of the (t, θ) transform.

With x = t r(θ) cos θ, y = t r(θ) sin θ the Laplacian multiplied by r²/f0 reads

    ∂tt + (f2/t) ∂t + (f3/t) ∂tθ + (f4/t²) ∂θθ

and the Cartesian derivatives multiplied by r²/f0 are

    ∂x -> f5 ∂t + (f6/t) ∂θ,    ∂y -> f7 ∂t + (f8/t) ∂θ.
"""
import logging
from typing import Tuple, Union

import numpy as np

import config
from errors import NonPositiveRadius
from models import DomainGrid, GeometryCoefficients
from schemas import BoundaryShape

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def make_grid(n_lines: int, n_theta: int, theta_offset: float = 0.0) -> DomainGrid:
    if n_lines < 2:
        raise ValueError("n_lines must be at least 2")
    if n_theta < 8:
        raise ValueError("n_theta must be at least 8")
    return DomainGrid(n_lines=n_lines, n_theta=n_theta, theta_offset=theta_offset)


def evaluate_radius(shape: BoundaryShape, theta: ArrayLike) -> Tuple[ArrayLike, ArrayLike, ArrayLike]:
    """Return r, r' and r'' of the Fourier boundary at theta (scalar or array)."""
    theta = np.asarray(theta, dtype=float)
    r = np.full_like(theta, shape.fourier_cosine[0])
    dr = np.zeros_like(theta)
    d2r = np.zeros_like(theta)

    for k, ck in enumerate(shape.fourier_cosine[1:], start=1):
        cos_k, sin_k = np.cos(k * theta), np.sin(k * theta)
        r += ck * cos_k
        dr -= ck * k * sin_k
        d2r -= ck * k * k * cos_k

    for k, sk in enumerate(shape.fourier_sine, start=1):
        cos_k, sin_k = np.cos(k * theta), np.sin(k * theta)
        r += sk * sin_k
        dr += sk * k * cos_k
        d2r -= sk * k * k * sin_k

    if r.ndim == 0:
        return float(r), float(dr), float(d2r)
    return r, dr, d2r


def check_radius(shape: BoundaryShape, n_theta: int) -> None:
    """Raise NonPositiveRadius unless r > 0 on a grid RADIUS_CHECK_OVERSAMPLING times finer."""
    dense = np.linspace(0.0, 2.0 * np.pi, config.RADIUS_CHECK_OVERSAMPLING * n_theta, endpoint=False)
    r, _, _ = evaluate_radius(shape, dense)
    r_min = float(np.min(r))
    if r_min <= 0.0:
        raise NonPositiveRadius(f"boundary radius reaches {r_min:.6g} at θ = {dense[np.argmin(r)]:.6f}")


def build_coefficients(shape: BoundaryShape, grid: DomainGrid) -> GeometryCoefficients:
    theta = grid.theta
    r, dr, d2r = evaluate_radius(shape, theta)
    if np.any(r <= 0.0):
        j = int(np.argmin(r))
        raise NonPositiveRadius(f"boundary radius {r[j]:.6g} at node {j} (θ = {theta[j]:.6f})")
    check_radius(shape, grid.n_theta)

    cos_t, sin_t = np.cos(theta), np.sin(theta)
    f1 = -dr / r
    df1 = -(d2r * r - dr ** 2) / r ** 2
    f0 = 1.0 + f1 ** 2
    f2 = 1.0 + df1 / f0
    f3 = 2.0 * f1 / f0
    f4 = 1.0 / f0

    fhat5 = cos_t / r + sin_t * dr / r ** 2
    fhat6 = -sin_t / r
    fhat7 = sin_t / r - cos_t * dr / r ** 2
    fhat8 = cos_t / r

    scale = r ** 2 / f0
    logger.debug("geometry built on %d nodes, r in [%.4f, %.4f]", grid.n_theta, r.min(), r.max())
    return GeometryCoefficients(
        r=r, dr=dr, d2r=d2r,
        f0=f0, f1=f1, f2=f2, f3=f3, f4=f4,
        fhat5=fhat5, fhat6=fhat6, fhat7=fhat7, fhat8=fhat8,
        f5=scale * fhat5, f6=scale * fhat6, f7=scale * fhat7, f8=scale * fhat8,
        h3=f0 / r ** 2,
    )


def cartesian_nodes(shape: BoundaryShape, grid: DomainGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Physical (x, y) of every grid node, shape (N+1, M)."""
    r, _, _ = evaluate_radius(shape, grid.theta)
    rho = grid.t[:, None] * r[None, :]
    return rho * np.cos(grid.theta)[None, :], rho * np.sin(grid.theta)[None, :]
