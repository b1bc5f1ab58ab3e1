import math
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

import config
from models import ClosureMode, LineScheme, Quadrature, Scaling, SeedStrategy

SOLVER_CLOSURES = (ClosureMode.PRESSURE_POISSON, ClosureMode.ARTIFICIAL_COMPRESSIBILITY)


# Geometry schemas
class BoundaryShape(BaseModel):
    """r(θ) = c0 + Σ c_k cos kθ + Σ s_k sin kθ; sine list starts at k = 1."""

    model_config = ConfigDict(frozen=True)

    fourier_cosine: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    fourier_sine: List[float] = Field(default_factory=list)

    @field_validator("fourier_cosine", "fourier_sine")
    @classmethod
    def finite_coefficients(cls, values: List[float]) -> List[float]:
        if not all(math.isfinite(v) for v in values):
            raise ValueError("Fourier coefficients must be finite")
        return values

    @classmethod
    def unit_circle(cls) -> "BoundaryShape":
        return cls(fourier_cosine=[1.0], fourier_sine=[])

    @property
    def order(self) -> int:
        return max(len(self.fourier_cosine) - 1, len(self.fourier_sine))

    def rotated(self, delta: float) -> "BoundaryShape":
        """Shape whose radius at θ is this shape's radius at θ - delta."""
        K = self.order
        cos_k = list(self.fourier_cosine) + [0.0] * (K + 1 - len(self.fourier_cosine))
        sin_k = [0.0] + list(self.fourier_sine) + [0.0] * (K - len(self.fourier_sine))
        new_cos = [cos_k[0]]
        new_sin = []
        for k in range(1, K + 1):
            ck, sk = math.cos(k * delta), math.sin(k * delta)
            new_cos.append(cos_k[k] * ck - sin_k[k] * sk)
            new_sin.append(cos_k[k] * sk + sin_k[k] * ck)
        return BoundaryShape(fourier_cosine=new_cos, fourier_sine=new_sin)


# Solver schemas
class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    nu: float = Field(..., gt=0)
    mode: ClosureMode = ClosureMode.PRESSURE_POISSON
    epsilon: Optional[float] = Field(None, gt=0)
    inner_tol: float = Field(config.INNER_TOL, gt=0)
    outer_tol: float = Field(config.OUTER_TOL, gt=0)
    max_inner: int = Field(config.MAX_INNER, ge=1)
    max_sweeps: int = Field(config.MAX_SWEEPS, ge=1)
    line_scheme: LineScheme = LineScheme.CHORD
    seed: SeedStrategy = SeedStrategy.LINEAR
    relaxation: float = Field(1.0, gt=0, lt=2)
    coupling: bool = True

    @model_validator(mode="after")
    def check_mode(self) -> "SolverConfig":
        if self.mode not in SOLVER_CLOSURES:
            raise ValueError(f"mode must be one of {[m.value for m in SOLVER_CLOSURES]}")
        if self.mode == ClosureMode.ARTIFICIAL_COMPRESSIBILITY and self.epsilon is None:
            raise ValueError("epsilon is required for artificial_compressibility")
        return self


class SolveReport(BaseModel):
    sweeps: int
    inner_iterations_total: int
    final_change: float
    contraction_ratio_estimate: float
    J_final: float
    converged: bool = True
    mode: ClosureMode = ClosureMode.PRESSURE_POISSON
    line_scheme: LineScheme = LineScheme.CHORD
    jacobian_refreshes: int = 0


# Residual schemas
class ResidualReport(BaseModel):
    J: float = Field(..., ge=0)
    momentum_u_norm2: float = Field(..., ge=0)
    momentum_v_norm2: float = Field(..., ge=0)
    continuity_norm2: float = Field(..., ge=0)
    quadrature: Quadrature
    scaling: Scaling
    momentum_u_max: float = 0.0
    momentum_v_max: float = 0.0
    continuity_max: float = 0.0


# Ansatz fit schemas
class FitOptions(BaseModel):
    target: float = Field(config.FIT_TARGET_J, gt=0)
    max_iterations: int = Field(config.FIT_MAX_ITERATIONS, ge=1)
    quadrature: Quadrature = Quadrature.CELL_AREA_WEIGHTED
    scaling: Scaling = Scaling.TRANSFORMED
    seed_with_solver: bool = True
    threads: int = Field(config.GMOL_THREADS, ge=1)


class FitReport(BaseModel):
    iterations: int
    accepted_steps: int
    best_start: str
    target: float
    target_reached: bool
    J_final: float


# Potential certification schemas
class CertificationOptions(BaseModel):
    nodes: int = Field(config.THEOREM_NODES, ge=16)
    w1: Literal["xy", "sin_sin", "zero"] = "xy"
    forcing: Literal["x2", "linear_x", "zero", "none"] = "x2"
    nu: float = Field(1.0, gt=0)
    refinement_nodes: List[int] = Field(default_factory=lambda: list(config.THEOREM_REFINEMENT_NODES))

    @field_validator("refinement_nodes")
    @classmethod
    def two_levels(cls, values: List[int]) -> List[int]:
        if len(values) != 2 or min(values) < 16:
            raise ValueError("refinement_nodes needs two node counts, each >= 16")
        return values


class CertificationReport(BaseModel):
    w1: str
    forcing: str
    nodes: int
    h: float
    divergence_sup: float
    curl_sup: float
    path_defect: float
    momentum_residual_sup: float
    pressure_error_sup: Optional[float] = None
    potential_residual_sup: float
    divergence_order: float
    curl_order: float
    refinement_case: str = "sin_sin"


# Run configuration
class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    shape: BoundaryShape = Field(default_factory=BoundaryShape.unit_circle)
    N: int = Field(20, ge=2)
    M: int = Field(150, ge=8)
    nu: float = Field(0.1, gt=0)
    mode: ClosureMode = ClosureMode.PRESSURE_POISSON
    epsilon: Optional[float] = Field(None, gt=0)
    boundary: str = "example1"
    fit: FitOptions = Field(default_factory=FitOptions)
    outputs: str = config.OUTPUT_DIR
    inner_tol: float = Field(config.INNER_TOL, gt=0)
    outer_tol: float = Field(config.OUTER_TOL, gt=0)
    max_inner: int = Field(config.MAX_INNER, ge=1)
    max_sweeps: int = Field(config.MAX_SWEEPS, ge=1)
    line_scheme: LineScheme = LineScheme.CHORD
    seed: SeedStrategy = SeedStrategy.LINEAR
    relaxation: float = Field(1.0, gt=0, lt=2)
    quadrature: Quadrature = Quadrature.UNIT_WEIGHTED
    scaling: Scaling = Scaling.TRANSFORMED
    theorem: CertificationOptions = Field(default_factory=CertificationOptions)

    @model_validator(mode="after")
    def check_mode(self) -> "RunConfig":
        if self.mode not in SOLVER_CLOSURES:
            raise ValueError(f"mode must be one of {[m.value for m in SOLVER_CLOSURES]}")
        if self.mode == ClosureMode.ARTIFICIAL_COMPRESSIBILITY and self.epsilon is None:
            raise ValueError("epsilon is required for artificial_compressibility")
        return self

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            nu=self.nu,
            mode=self.mode,
            epsilon=self.epsilon,
            inner_tol=self.inner_tol,
            outer_tol=self.outer_tol,
            max_inner=self.max_inner,
            max_sweeps=self.max_sweeps,
            line_scheme=self.line_scheme,
            seed=self.seed,
            relaxation=self.relaxation,
        )
