import logging
import os
from typing import Optional

import numpy as np
import pandas as pd

import config
from errors import ConfigValidationError, ShapeMismatch
from geometry import evaluate_radius
from models import BoundaryData, DomainGrid, FlowState, Provenance
from operators import theta_derivative
from schemas import BoundaryShape

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["theta", "u0", "v0"]
PRESSURE_COLUMNS = ["P0", "Pf"]


def couette_velocity(t):
    """Azimuthal speed of the circular Couette flow between radii 1 and 2 (1.5 inside, 0 outside)."""
    t = np.asarray(t, dtype=float)
    return -0.5 * t + 2.0 / t


def couette_pressure(t):
    t = np.asarray(t, dtype=float)
    return 0.125 * t ** 2 - 2.0 * np.log(t) - 2.0 / t ** 2


class BoundaryService:
    """Boundary data presets, CSV boundary files and closed-form reference flows."""

    def preset(self, name: str, grid: DomainGrid) -> BoundaryData:
        theta = grid.theta
        cos, sin = np.cos(theta), np.sin(theta)
        cos2, sin2 = np.cos(2.0 * theta), np.sin(2.0 * theta)
        M = grid.n_theta

        if name == "zero":
            z = np.zeros(M)
            return BoundaryData(z, z.copy(), z.copy(), z.copy(), z.copy(), z.copy(),
                                P0=z.copy(), Pf=z.copy(), name=name)
        if name in ("example1", "couette"):
            data = BoundaryData(
                u0=-1.5 * sin, v0=1.5 * cos,
                u0_d1=-1.5 * cos, u0_d2=1.5 * sin,
                v0_d1=-1.5 * sin, v0_d2=-1.5 * cos,
                name=name,
            )
            if name == "couette":
                data.P0 = np.full(M, float(couette_pressure(1.0)))
                data.Pf = np.full(M, float(couette_pressure(2.0)))
            return data
        if name == "example2":
            return BoundaryData(
                u0=-1.5 * sin2, v0=0.5 + 1.5 * cos2,
                u0_d1=-3.0 * cos2, u0_d2=6.0 * sin2,
                v0_d1=-3.0 * sin2, v0_d2=-6.0 * cos2,
                name=name,
            )
        raise ConfigValidationError("boundary", f"unknown preset '{name}', expected one of {config.BOUNDARY_PRESETS}")

    def load_csv(self, path: str, grid: DomainGrid) -> BoundaryData:
        """Read theta,u0,v0[,P0,Pf] samples; angular derivatives come from the periodic stencils."""
        try:
            df = pd.read_csv(path, float_precision="round_trip")
        except (OSError, pd.errors.ParserError) as e:
            raise ConfigValidationError("boundary", f"cannot read '{path}': {e}")

        missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
        if missing:
            raise ConfigValidationError("boundary", f"'{path}' lacks columns {missing}")
        if len(df) != grid.n_theta:
            raise ShapeMismatch(f"'{path}' has {len(df)} samples, grid has {grid.n_theta}")
        if not np.allclose(df["theta"].to_numpy(dtype=float), grid.theta, rtol=0.0, atol=1e-9):
            raise ShapeMismatch(f"theta column of '{path}' does not match the grid nodes")

        u0 = df["u0"].to_numpy(dtype=float)
        v0 = df["v0"].to_numpy(dtype=float)
        if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(v0))):
            raise ConfigValidationError("boundary", f"'{path}' contains non-finite samples")

        h = grid.dtheta
        data = BoundaryData(
            u0=u0, v0=v0,
            u0_d1=theta_derivative(u0, 1, h), u0_d2=theta_derivative(u0, 2, h),
            v0_d1=theta_derivative(v0, 1, h), v0_d2=theta_derivative(v0, 2, h),
            provenance=Provenance.FILE,
            name=os.path.basename(path),
        )
        if all(c in df.columns for c in PRESSURE_COLUMNS):
            data.P0 = df["P0"].to_numpy(dtype=float)
            data.Pf = df["Pf"].to_numpy(dtype=float)
        logger.info("loaded boundary data from %s (%d samples)", path, len(df))
        return data

    def load(self, source: str, grid: DomainGrid) -> BoundaryData:
        if source in config.BOUNDARY_PRESETS:
            return self.preset(source, grid)
        if os.path.isfile(source):
            return self.load_csv(source, grid)
        raise ConfigValidationError("boundary", f"'{source}' is neither a preset nor a readable file")

    # Reference flows

    def couette_state(self, grid: DomainGrid) -> FlowState:
        """Exact circular Couette flow sampled on the unit-circle annulus."""
        t = grid.t[:, None]
        cos, sin = np.cos(grid.theta)[None, :], np.sin(grid.theta)[None, :]
        speed = couette_velocity(t)
        return FlowState(
            u=-speed * sin,
            v=speed * cos,
            P=np.broadcast_to(couette_pressure(t), grid.shape).copy(),
        )

    def rigid_rotation_state(self, grid: DomainGrid, omega: float,
                             shape: Optional[BoundaryShape] = None) -> FlowState:
        """u = −ωy, v = ωx with the balancing pressure ω²(x² + y²)/2."""
        shape = shape or BoundaryShape.unit_circle()
        r, _, _ = evaluate_radius(shape, grid.theta)
        x = grid.t[:, None] * (r * np.cos(grid.theta))[None, :]
        y = grid.t[:, None] * (r * np.sin(grid.theta))[None, :]
        return FlowState(u=-omega * y, v=omega * x, P=0.5 * omega ** 2 * (x ** 2 + y ** 2))


# Global boundary service instance
boundary_service = BoundaryService()
