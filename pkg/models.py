from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional

import numpy as np


class ClosureMode(str, Enum):
    PRESSURE_POISSON = "pressure_poisson"
    ARTIFICIAL_COMPRESSIBILITY = "artificial_compressibility"
    CONTINUITY = "continuity"


class LineScheme(str, Enum):
    CHORD = "chord"
    EXPLICIT = "explicit"


class SeedStrategy(str, Enum):
    LINEAR = "linear"
    OUTER_NEIGHBOR = "outer_neighbor"


class Quadrature(str, Enum):
    CELL_AREA_WEIGHTED = "cell_area_weighted"
    UNIT_WEIGHTED = "unit_weighted"


class Scaling(str, Enum):
    TRANSFORMED = "transformed"
    PHYSICAL = "physical"


class Provenance(str, Enum):
    PRESET = "preset"
    FILE = "file"


class Command(str, Enum):
    SOLVE = "solve"
    FIT = "fit"
    VERIFY_THEOREM = "verify-theorem"
    REPORT = "report"


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DomainGrid:
    """Lines t_n = 1 + n/N (n = 0..N) crossed with M periodic angular nodes."""

    n_lines: int
    n_theta: int
    theta_offset: float = 0.0
    d: float = field(init=False)
    dtheta: float = field(init=False)
    theta: np.ndarray = field(init=False, repr=False)
    t: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = np.arange(self.n_lines + 1)
        j = np.arange(self.n_theta)
        object.__setattr__(self, "d", 1.0 / self.n_lines)
        object.__setattr__(self, "dtheta", 2.0 * np.pi / self.n_theta)
        # t_N == 2 exactly
        object.__setattr__(self, "t", _frozen(1.0 + n / self.n_lines))
        object.__setattr__(self, "theta", _frozen(self.theta_offset + 2.0 * np.pi * j / self.n_theta))

    @property
    def interior_t(self) -> np.ndarray:
        return self.t[1:-1]

    @property
    def shape(self):
        return (self.n_lines + 1, self.n_theta)


@dataclass(frozen=True)
class GeometryCoefficients:
    r: np.ndarray
    dr: np.ndarray
    d2r: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    f4: np.ndarray
    fhat5: np.ndarray
    fhat6: np.ndarray
    fhat7: np.ndarray
    fhat8: np.ndarray
    f5: np.ndarray
    f6: np.ndarray
    f7: np.ndarray
    f8: np.ndarray
    h3: np.ndarray

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass
class FlowState:
    """Samples of u, v, P on every line; rows 0 and N are the boundaries."""

    u: np.ndarray
    v: np.ndarray
    P: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, grid: DomainGrid, with_pressure: bool = True) -> "FlowState":
        P = np.zeros(grid.shape) if with_pressure else None
        return cls(u=np.zeros(grid.shape), v=np.zeros(grid.shape), P=P)

    @property
    def has_pressure(self) -> bool:
        return self.P is not None

    def copy(self) -> "FlowState":
        return FlowState(
            u=self.u.copy(),
            v=self.v.copy(),
            P=None if self.P is None else self.P.copy(),
        )

    def rolled(self, shift: int) -> "FlowState":
        """Relabel angular nodes: column j moves to column j + shift."""
        return FlowState(
            u=np.roll(self.u, shift, axis=-1),
            v=np.roll(self.v, shift, axis=-1),
            P=None if self.P is None else np.roll(self.P, shift, axis=-1),
        )

    def max_change(self, other: "FlowState") -> float:
        change = max(np.max(np.abs(self.u - other.u)), np.max(np.abs(self.v - other.v)))
        if self.P is not None and other.P is not None:
            change = max(change, np.max(np.abs(self.P - other.P)))
        return float(change)


@dataclass
class BoundaryData:
    """Inner/outer boundary samples with their angular derivatives."""

    u0: np.ndarray
    v0: np.ndarray
    u0_d1: np.ndarray
    u0_d2: np.ndarray
    v0_d1: np.ndarray
    v0_d2: np.ndarray
    P0: Optional[np.ndarray] = None
    Pf: Optional[np.ndarray] = None
    provenance: Provenance = Provenance.PRESET
    name: str = ""

    @property
    def n_theta(self) -> int:
        return len(self.u0)

    @property
    def has_pressure_rows(self) -> bool:
        return self.P0 is not None and self.Pf is not None

    def without_pressure(self) -> "BoundaryData":
        return BoundaryData(
            u0=self.u0, v0=self.v0,
            u0_d1=self.u0_d1, u0_d2=self.u0_d2,
            v0_d1=self.v0_d1, v0_d2=self.v0_d2,
            provenance=self.provenance, name=self.name,
        )

    def rolled(self, shift: int) -> "BoundaryData":
        def roll(a):
            return None if a is None else np.roll(a, shift)

        return BoundaryData(
            u0=roll(self.u0), v0=roll(self.v0),
            u0_d1=roll(self.u0_d1), u0_d2=roll(self.u0_d2),
            v0_d1=roll(self.v0_d1), v0_d2=roll(self.v0_d2),
            P0=roll(self.P0), Pf=roll(self.Pf),
            provenance=self.provenance, name=self.name,
        )


@dataclass
class AnsatzCoefficients:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, n_interior: int, sizes=(11, 11, 9)) -> "AnsatzCoefficients":
        return cls(
            a=np.zeros((n_interior, sizes[0])),
            b=np.zeros((n_interior, sizes[1])),
            c=np.zeros((n_interior, sizes[2])),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.a.ravel(), self.b.ravel(), self.c.ravel()])

    @classmethod
    def from_vector(cls, x: np.ndarray, n_interior: int, sizes=(11, 11, 9)) -> "AnsatzCoefficients":
        ka, kb, kc = sizes
        a_end = n_interior * ka
        b_end = a_end + n_interior * kb
        return cls(
            a=x[:a_end].reshape(n_interior, ka),
            b=x[a_end:b_end].reshape(n_interior, kb),
            c=x[b_end:b_end + n_interior * kc].reshape(n_interior, kc),
        )

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c)))


@dataclass
class BasisEvaluation:
    """Basis columns sampled on the angular grid, one matrix per field."""

    u: np.ndarray
    v: np.ndarray
    P: np.ndarray
    u_names: List[str]
    v_names: List[str]
    P_names: List[str]


@dataclass
class FitResult:
    coeffs: AnsatzCoefficients
    P0: np.ndarray
    state: FlowState
    report: object
    fit_report: Optional[object] = None
    history: List[float] = field(default_factory=list)
    start: str = "zero"
    iterations: int = 0


@dataclass(frozen=True)
class RectGrid:
    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0
    nx: int = 128
    ny: int = 128

    @property
    def h(self) -> float:
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x0, self.x1, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y0, self.y1, self.ny)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros((self.nx, self.ny), dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask


@dataclass
class PotentialTriple:
    w0: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


@dataclass(frozen=True)
class AnalyticField:
    """Closed-form scalar field with the derivatives the certifier needs."""

    name: str
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    fx: Callable[[np.ndarray, np.ndarray], np.ndarray]
    fy: Callable[[np.ndarray, np.ndarray], np.ndarray]
    fxx: Callable[[np.ndarray, np.ndarray], np.ndarray]
    fyy: Callable[[np.ndarray, np.ndarray], np.ndarray]
    fxy: Callable[[np.ndarray, np.ndarray], np.ndarray]
