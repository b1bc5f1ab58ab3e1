import logging
from typing import Optional, Tuple

import numpy as np

from errors import IncompleteState
from models import ClosureMode, DomainGrid, FlowState, GeometryCoefficients, Quadrature, Scaling
from operators import check_state, grid_residual_operators
from schemas import ResidualReport

logger = logging.getLogger(__name__)


class ResidualService:
    """Residual fields of the discrete system and the functional J built from them."""

    def cell_weights(self, geo: GeometryCoefficients, grid: DomainGrid, quadrature: Quadrature) -> np.ndarray:
        """Quadrature weight of every interior node, shape (N-1)×M."""
        if Quadrature(quadrature) == Quadrature.UNIT_WEIGHTED:
            return np.ones((grid.n_lines - 1, grid.n_theta))
        # t dt dθ r(θ)² is the area element of the star-shaped annulus
        return grid.interior_t[:, None] * grid.d * grid.dtheta * (geo.r ** 2)[None, :]

    def residual_fields(
        self,
        state: FlowState,
        geo: GeometryCoefficients,
        grid: DomainGrid,
        nu: float,
        mode: ClosureMode = ClosureMode.CONTINUITY,
        epsilon: Optional[float] = None,
        scaling: Scaling = Scaling.TRANSFORMED,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if state.P is None:
            raise IncompleteState("residual evaluation needs the pressure field")
        return grid_residual_operators(state, geo, grid, nu, mode, epsilon, scaling)

    def evaluate_J(
        self,
        state: FlowState,
        geo: GeometryCoefficients,
        grid: DomainGrid,
        nu: float,
        quadrature: Quadrature = Quadrature.UNIT_WEIGHTED,
        scaling: Scaling = Scaling.TRANSFORMED,
    ) -> ResidualReport:
        if state.P is None:
            raise IncompleteState("J needs the pressure field")
        check_state(state, grid)
        # third term is raw continuity regardless of the closure used to solve
        momentum_u, momentum_v, continuity = grid_residual_operators(
            state, geo, grid, nu, ClosureMode.CONTINUITY, None, scaling
        )
        weights = self.cell_weights(geo, grid, quadrature)
        mu = float(np.sum(weights * momentum_u ** 2))
        mv = float(np.sum(weights * momentum_v ** 2))
        cont = float(np.sum(weights * continuity ** 2))
        return ResidualReport(
            J=mu + mv + cont,
            momentum_u_norm2=mu,
            momentum_v_norm2=mv,
            continuity_norm2=cont,
            quadrature=Quadrature(quadrature),
            scaling=Scaling(scaling),
            momentum_u_max=float(np.max(np.abs(momentum_u))),
            momentum_v_max=float(np.max(np.abs(momentum_v))),
            continuity_max=float(np.max(np.abs(continuity))),
        )

    def residual_vector(
        self,
        state: FlowState,
        geo: GeometryCoefficients,
        grid: DomainGrid,
        nu: float,
        weights: np.ndarray,
        scaling: Scaling = Scaling.TRANSFORMED,
    ) -> np.ndarray:
        """Stacked sqrt(w)·residual so that its squared norm equals J."""
        momentum_u, momentum_v, continuity = grid_residual_operators(
            state, geo, grid, nu, ClosureMode.CONTINUITY, None, scaling
        )
        root = np.sqrt(weights)
        return np.concatenate([(root * momentum_u).ravel(), (root * momentum_v).ravel(), (root * continuity).ravel()])


# Global residual service instance
residual_service = ResidualService()
