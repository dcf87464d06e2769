"""Model parameters, regime classification, radial grids and fields."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gamma

from .errors import NonFiniteField, ValidationError

MASS_CRITICAL_TOL = 1e-12
DEFAULT_GRADING = 0.5


@dataclass(frozen=True)
class ModelParams:
    d: int
    b: float
    sigma: float
    c: float
    omega: float = 1.0

    @property
    def critical_coupling(self) -> float:
        """Sharp Hardy constant ((d-2)/2)^2."""
        return ((self.d - 2) / 2.0) ** 2

    @property
    def energy_critical_sigma(self) -> float:
        return (4.0 - 2.0 * self.b) / (self.d - 2)

    @property
    def mass_critical_sigma(self) -> float:
        return (4.0 - 2.0 * self.b) / self.d

    @property
    def dilation_exponent(self) -> float:
        """Power of lambda picked up by the potential term under L2 dilation."""
        return (self.d * self.sigma + 2.0 * self.b) / 2.0

    def replace(self, **changes) -> "ModelParams":
        values = {k: getattr(self, k) for k in ("d", "b", "sigma", "c", "omega")}
        values.update(changes)
        return ModelParams(**values)


def validate(params: ModelParams) -> ModelParams:
    """Check every admissibility bound; return ``params`` unchanged or raise."""
    d, b, sigma, c, omega = params.d, params.b, params.sigma, params.c, params.omega
    if int(d) != d or d < 3:
        raise ValidationError("d", f"dimension must be an integer >= 3, got {d}")
    if not 0.0 < b < 2.0:
        raise ValidationError("b", f"need 0 < b < 2, got {b}")
    upper = params.energy_critical_sigma
    if not 0.0 < sigma < upper:
        raise ValidationError("sigma", f"need 0 < sigma < (4-2b)/(d-2) = {upper:g}, got {sigma}")
    if c == 0.0:
        raise ValidationError("c", "inverse-square coupling must be nonzero")
    if not c < params.critical_coupling:
        raise ValidationError("c", f"need c < c(d) = {params.critical_coupling:g}, got {c}")
    if not omega > 0.0:
        raise ValidationError("omega", f"frequency must be positive, got {omega}")
    return params


class RegimeTag(str, enum.Enum):
    MASS_SUBCRITICAL = "MassSubcritical"
    MASS_CRITICAL = "MassCritical"
    INTERCRITICAL = "Intercritical"


@dataclass(frozen=True)
class Regime:
    tag: RegimeTag
    s_c: float


def classify(params: ModelParams) -> Regime:
    s_c = params.d / 2.0 - (2.0 - params.b) / params.sigma
    if abs(s_c) <= MASS_CRITICAL_TOL:
        tag = RegimeTag.MASS_CRITICAL
    elif s_c < 0:
        tag = RegimeTag.MASS_SUBCRITICAL
    else:
        tag = RegimeTag.INTERCRITICAL
    return Regime(tag, s_c)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / gamma(d / 2.0)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Nodes on (0, r_max] with d-dimensional quadrature weights.

    Nodes are images ``r(s_i)`` of a uniform computational grid ``s_i = i/n``.
    ``line_weights`` are the one-dimensional weights in ``r`` (trapezoid in
    ``s`` with a fourth-order Gregory correction at the outer end); the
    d-dimensional ``weights`` multiply them by ``|S^{d-1}| r^{d-1}``.
    ``intervals`` holds the n+1 cell lengths used by the kinetic form, the
    first running from the origin and the last to a ghost node where the
    reduced field is pinned to zero.
    """

    r_max: float
    n: int
    d: int
    scheme: str
    grading: float
    nodes: np.ndarray
    weights: np.ndarray
    line_weights: np.ndarray
    intervals: np.ndarray = field(repr=False)

    @property
    def r(self) -> np.ndarray:
        return self.nodes

    @property
    def surface(self) -> float:
        return sphere_area(self.d)

    @property
    def reduction(self) -> np.ndarray:
        """Factor r^{(d-1)/2} taking u to the reduced field w."""
        return self.nodes ** ((self.d - 1) / 2.0)

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))

    def refined(self, factor: int = 2) -> "RadialGrid":
        return make_grid(self.r_max, self.n * factor, self.scheme, d=self.d, grading=self.grading)

    def same_as(self, other: "RadialGrid") -> bool:
        return (
            self.n == other.n
            and self.d == other.d
            and self.scheme == other.scheme
            and self.r_max == other.r_max
            and self.grading == other.grading
        )


def make_grid(
    r_max: float,
    n: int,
    scheme: str = "graded",
    d: int = 3,
    grading: float = DEFAULT_GRADING,
) -> RadialGrid:
    """Build a radial grid.

    ``uniform`` places r_i = i r_max / n. ``graded`` uses the smooth map
    r(s) = a s^2 / (s + s0), a = r_max (1 + s0), whose node density grows
    like r^{-1/2} at the origin and levels off to uniform spacing for
    r >> a s0. ``grading`` is s0.
    """
    if not r_max > 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    if n < 16:
        raise ValueError(f"need at least 16 nodes, got {n}")
    if d < 3:
        raise ValueError(f"dimension must be >= 3, got {d}")
    ds = 1.0 / n
    s = ds * np.arange(1, n + 1)
    if scheme == "uniform":
        r = r_max * s
        jac = np.full(n, float(r_max))
        grading = 0.0
    elif scheme == "graded":
        if not grading > 0:
            raise ValueError(f"grading must be positive, got {grading}")
        a = r_max * (1.0 + grading)
        r = a * s * s / (s + grading)
        jac = a * s * (s + 2.0 * grading) / (s + grading) ** 2
        r[-1] = r_max
    else:
        raise ValueError(f"unknown grid scheme {scheme!r}")

    line = jac * ds
    # Gregory end correction; the origin end needs none because the
    # integrand r^{d-1} r'(s) vanishes there to high order.
    line[-3:] *= np.array([23.0 / 24.0, 7.0 / 6.0, 3.0 / 8.0])
    weights = sphere_area(d) * r ** (d - 1) * line
    padded = np.concatenate([[0.0], r, [2.0 * r[-1] - r[-2]]])
    return RadialGrid(
        r_max=float(r_max),
        n=int(n),
        d=int(d),
        scheme=scheme,
        grading=float(grading),
        nodes=_frozen(r),
        weights=_frozen(weights),
        line_weights=_frozen(line),
        intervals=_frozen(np.diff(padded)),
    )


@dataclass(frozen=True, eq=False)
class RadialField:
    """Complex radial profile u(r_i) on a grid."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteField("field contains non-finite values")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_function(cls, grid: RadialGrid, f: Callable[[np.ndarray], np.ndarray]) -> "RadialField":
        return cls(grid, f(grid.nodes))

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "RadialField":
        return cls(grid, np.zeros(grid.n))

    def with_values(self, values: np.ndarray) -> "RadialField":
        return RadialField(self.grid, values)

    def __mul__(self, scalar: complex) -> "RadialField":
        return RadialField(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __add__(self, other: "RadialField") -> "RadialField":
        return RadialField(self.grid, self.values + other.values)

    def __sub__(self, other: "RadialField") -> "RadialField":
        return RadialField(self.grid, self.values - other.values)

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def is_real(self) -> bool:
        return not np.any(self.values.imag)

    def tail_mass_fraction(self, r_from: float) -> float:
        """Fraction of the mass carried by nodes with r > r_from."""
        dens = self.grid.weights * np.abs(self.values) ** 2
        total = dens.sum()
        if total == 0:
            return 0.0
        return float(dens[self.grid.nodes > r_from].sum() / total)
