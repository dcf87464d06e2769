"""Scalar functionals, the action gradient, and dilation families.

All quadratic forms are evaluated on the reduced field ``w = r^{(d-1)/2} u``
where the radial Laplacian becomes ``-w'' + (d-1)(d-3)/(4 r^2) w``. The
kinetic form is the sum of squared differences of ``w`` over grid cells
(``w = 0`` at the origin and at a ghost node past ``r_max``), so every
functional here is an exact quadratic/polynomial function of the nodal
values and :func:`gradient_action` is its exact derivative.
"""

from __future__ import annotations

import functools
from dataclasses import asdict, dataclass
from typing import Iterable, NamedTuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DegenerateField, NonFiniteField, SupportLoss
from .model import ModelParams, RadialField, RadialGrid

SUPPORT_LOSS_TOL = 1e-8


@dataclass(frozen=True)
class FunctionalReport:
    mass: float
    dirichlet: float
    hardy_seminorm_sq: float
    h_omega: float
    potential: float
    energy: float
    action: float
    nehari: float
    virial_g: float

    def as_dict(self) -> dict:
        return asdict(self)


class Operators:
    """Tridiagonal pieces of the discrete Hardy operator on one grid.

    ``diag``/``off`` represent ``-d^2/dr^2 + (k_d - c)/r^2`` in the reduced
    variable, multiplied by the line weights (so the matrix is symmetric).
    """

    def __init__(self, grid: RadialGrid, c: float):
        r = grid.nodes
        ell = grid.intervals
        k_d = (grid.d - 1) * (grid.d - 3) / 4.0
        self.grid = grid
        self.c = c
        self.line = grid.line_weights
        self.inv_r2 = 1.0 / r**2
        self.stiff_diag = 1.0 / ell[:-1] + 1.0 / ell[1:]
        self.off = -1.0 / ell[1:-1]
        self.kin_diag = self.stiff_diag + k_d * self.line * self.inv_r2
        self.diag = self.kin_diag - c * self.line * self.inv_r2
        self.reduction = grid.reduction

    def apply(self, w: np.ndarray, diag: np.ndarray | None = None) -> np.ndarray:
        out = (self.diag if diag is None else diag) * w
        out[:-1] += self.off * w[1:]
        out[1:] += self.off * w[:-1]
        return out

    def banded(self, diag: np.ndarray, dtype=float) -> np.ndarray:
        """(3, n) banded storage for scipy.linalg.solve_banded."""
        ab = np.zeros((3, self.grid.n), dtype=dtype)
        ab[0, 1:] = self.off
        ab[1] = diag
        ab[2, :-1] = self.off
        return ab


@functools.lru_cache(maxsize=32)
def operators(grid: RadialGrid, c: float) -> Operators:
    return Operators(grid, c)


def _check(u: RadialField) -> np.ndarray:
    v = u.values
    if not np.all(np.isfinite(v)):
        raise NonFiniteField("field contains non-finite values")
    return v


def _kinetic(ops: Operators, w: np.ndarray) -> float:
    """Unnormalised sum of |w_{i+1}-w_i|^2 / cell plus the k_d/r^2 term."""
    padded = np.concatenate([[0.0], w, [0.0]])
    diffs = np.abs(np.diff(padded)) ** 2
    k_extra = ops.kin_diag - ops.stiff_diag
    return float(np.sum(diffs / ops.grid.intervals) + np.dot(k_extra, np.abs(w) ** 2))


def quadratic_parts(grid: RadialGrid, values: np.ndarray) -> tuple[float, float, float]:
    """(mass, ||grad u||^2, || u/|x| ||^2) from raw nodal values."""
    ops = operators(grid, 0.0)
    w = ops.reduction * values
    area = grid.surface
    mass = float(np.dot(grid.weights, np.abs(values) ** 2))
    dirichlet = area * _kinetic(ops, w)
    inv_sq = area * float(np.dot(ops.line * ops.inv_r2, np.abs(w) ** 2))
    return mass, dirichlet, inv_sq


def potential_values(grid: RadialGrid, params: ModelParams, values: np.ndarray) -> float:
    """P(u) = integral of |x|^{-b} |u|^{sigma+2}."""
    return float(np.dot(grid.weights * grid.nodes ** (-params.b), np.abs(values) ** (params.sigma + 2)))


def report_values(grid: RadialGrid, params: ModelParams, values: np.ndarray) -> FunctionalReport:
    mass, dirichlet, inv_sq = quadratic_parts(grid, values)
    hardy = dirichlet - params.c * inv_sq
    pot = potential_values(grid, params, values)
    s = params.sigma
    energy = 0.5 * hardy - pot / (s + 2.0)
    h_omega = hardy + params.omega * mass
    return FunctionalReport(
        mass=float(mass),
        dirichlet=float(dirichlet),
        hardy_seminorm_sq=float(hardy),
        h_omega=float(h_omega),
        potential=float(pot),
        energy=float(energy),
        action=float(energy + 0.5 * params.omega * mass),
        nehari=float(h_omega - pot),
        virial_g=float(hardy - params.dilation_exponent / (s + 2.0) * pot),
    )


def report(u: RadialField, params: ModelParams) -> FunctionalReport:
    """Every scalar functional of ``u`` under the grid quadrature."""
    return report_values(u.grid, params, _check(u))


def mass(u: RadialField) -> float:
    return float(np.dot(u.grid.weights, np.abs(_check(u)) ** 2))


def hdot1_norm(u: RadialField) -> float:
    """Plain gradient seminorm ||grad u||_{L2} (no Hardy term)."""
    return float(np.sqrt(quadratic_parts(u.grid, _check(u))[1]))


def h1_inner(u: RadialField, v: RadialField) -> complex:
    """Complex H^1 inner product <u, v> = int conj(u) v + int conj(u') v'."""
    grid = u.grid
    ops = operators(grid, 0.0)
    wu = ops.reduction * u.values
    wv = ops.reduction * v.values
    du = np.diff(np.concatenate([[0.0], wu, [0.0]]))
    dv = np.diff(np.concatenate([[0.0], wv, [0.0]]))
    k_extra = ops.kin_diag - ops.stiff_diag
    grad = np.sum(np.conj(du) * dv / grid.intervals) + np.sum(k_extra * np.conj(wu) * wv)
    return complex(grid.surface * grad + np.sum(grid.weights * np.conj(u.values) * v.values))


def h1_norm(u: RadialField) -> float:
    mass_, dirichlet, _ = quadratic_parts(u.grid, _check(u))
    return float(np.sqrt(mass_ + dirichlet))


def h1c_norm(u: RadialField, params: ModelParams) -> float:
    """||u||_{Hdot1_c} + ||u||_{L2}, the sum form (not root-sum-square)."""
    mass_, dirichlet, inv_sq = quadratic_parts(u.grid, _check(u))
    return float(np.sqrt(max(dirichlet - params.c * inv_sq, 0.0)) + np.sqrt(mass_))


def distance_to_orbit(u: RadialField, phi: RadialField) -> float:
    """min over theta of ||u - e^{i theta} phi||_{H^1}."""
    overlap = h1_inner(phi, u)
    phase = np.exp(1j * np.angle(overlap)) if overlap != 0 else 1.0
    return h1_norm(u - phi * phase)


def gradient_values(grid: RadialGrid, params: ModelParams, values: np.ndarray) -> np.ndarray:
    ops = operators(grid, params.c)
    w = ops.reduction * values
    linear = ops.apply(w) / (ops.line * ops.reduction)
    nonlinear = grid.nodes ** (-params.b) * np.abs(values) ** params.sigma * values
    return linear + params.omega * values - nonlinear


def gradient_action(u: RadialField, params: ModelParams) -> RadialField:
    """L2 gradient of the action: -Δu + ωu - c|x|^{-2}u - |x|^{-b}|u|^σ u.

    Exact derivative of the discrete action with respect to the weighted
    inner product Re sum_i W_i conj(h_i) g_i.
    """
    return RadialField(u.grid, gradient_values(u.grid, params, _check(u)))


def l2_inner(u: RadialField, v: RadialField) -> float:
    """Real L2 pairing Re <u, v> used for directional derivatives."""
    return float(np.real(np.sum(u.grid.weights * np.conj(u.values) * v.values)))


def l2_norm(u: RadialField) -> float:
    return float(np.sqrt(mass(u)))


# --- dilations --------------------------------------------------------------


def _resample(u: RadialField, points: np.ndarray) -> np.ndarray:
    r = u.grid.nodes
    inside = points <= r[-1]
    out = np.zeros(points.shape, dtype=np.complex128)
    clipped = np.clip(points[inside], 0.0, r[-1])
    # flat tails make scipy evaluate a discarded 1/0 branch of the slope mean
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        re = PchipInterpolator(r, u.values.real, extrapolate=True)(clipped)
        if u.is_real:
            out[inside] = re
        else:
            im = PchipInterpolator(r, u.values.imag, extrapolate=True)(clipped)
            out[inside] = re + 1j * im
    return out


def dilate(u: RadialField, lam: float) -> RadialField:
    """Mass-preserving dilation lam^{d/2} u(lam x) resampled on the same grid."""
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    if lam == 1.0:
        return u
    grid = u.grid
    total = mass(u)
    if total > 0 and lam < 1.0:
        lost = u.tail_mass_fraction(lam * grid.r_max)
        if lost > SUPPORT_LOSS_TOL:
            raise SupportLoss(f"dilation by {lam} pushes {lost:.2e} of the mass past r_max")
    values = lam ** (grid.d / 2.0) * _resample(u, lam * grid.nodes)
    return RadialField(grid, values)


def scale_amplitude_dilate(u: RadialField, mu: float, lam: float) -> RadialField:
    """mu lam^{d/2} u(lam x)."""
    if not mu > 0:
        raise ValueError(f"amplitude factor must be positive, got {mu}")
    return dilate(u, lam) * mu


class DilationPoint(NamedTuple):
    lam: float
    action: float
    nehari: float
    virial_g: float


def action_along_dilation(
    u: RadialField, params: ModelParams, lambdas: Iterable[float]
) -> list[DilationPoint]:
    """S, K and G of the dilated field from the three base scalars of ``u``.

    Closed form: no resampling, so no interpolation error enters a scan.
    """
    rep = report(u, params)
    if rep.mass == 0:
        raise DegenerateField("zero field has no dilation family")
    a = params.dilation_exponent
    s2 = params.sigma + 2.0
    out = []
    for lam in lambdas:
        lam = float(lam)
        kin = lam**2 * rep.hardy_seminorm_sq
        pot = lam**a * rep.potential
        action = 0.5 * kin + 0.5 * params.omega * rep.mass - pot / s2
        nehari = kin + params.omega * rep.mass - pot
        # G(u_lam) = lam * d/dlam S(u_lam)
        g = kin - a / s2 * pot
        out.append(DilationPoint(lam, action, nehari, g))
    return out


def dilation_derivative(u: RadialField, params: ModelParams, lam: float) -> float:
    """d/dlam S(u_lam) in closed form."""
    return action_along_dilation(u, params, [lam])[0].virial_g / lam


def dilation_critical_point(u: RadialField, params: ModelParams) -> float | None:
    """Unique lam > 0 where d/dlam S(u_lam) = 0, or None when mass-critical."""
    rep = report(u, params)
    a = params.dilation_exponent
    if abs(a - 2.0) < 1e-12:
        return None
    ratio = rep.hardy_seminorm_sq * (params.sigma + 2.0) / (a * rep.potential)
    return ratio ** (1.0 / (a - 2.0))


# --- localized virial -------------------------------------------------------


def theta(r: np.ndarray) -> np.ndarray:
    """Cutoff profile: r^2 on [0,1], (2-r)^2 on [1,2], 0 beyond."""
    r = np.asarray(r, dtype=float)
    return np.where(r <= 1.0, r * r, np.where(r < 2.0, (2.0 - r) ** 2, 0.0))


def theta_second_derivative(r: np.ndarray) -> np.ndarray:
    """Pointwise second derivative away from the kink at r = 1."""
    r = np.asarray(r, dtype=float)
    return np.where(r < 2.0, 2.0, 0.0)


@dataclass(frozen=True)
class CutoffProfile:
    R: float

    def __post_init__(self):
        if not self.R > 1:
            raise ValueError(f"cutoff radius must exceed 1, got {self.R}")

    def phi(self, r: np.ndarray) -> np.ndarray:
        return self.R**2 * theta(np.asarray(r) / self.R)


def localized_virial(u: RadialField, cutoff: CutoffProfile) -> float:
    """V(u) = integral of phi_R |u|^2."""
    grid = u.grid
    return float(np.dot(grid.weights * cutoff.phi(grid.nodes), np.abs(_check(u)) ** 2))


# --- Gagliardo-Nirenberg ----------------------------------------------------


def gn_exponents(params: ModelParams) -> tuple[float, float]:
    d, b, s = params.d, params.b, params.sigma
    return (d * s + 2 * b) / 2.0, (4 - 2 * b - s * (d - 2)) / 2.0


def gn_quotient(u: RadialField, params: ModelParams) -> float:
    """P(u) / (||u||_{Hdot1_c}^p ||u||_{L2}^q), scale and amplitude invariant."""
    rep = report(u, params)
    if rep.hardy_seminorm_sq <= 0:
        raise DegenerateField("Hardy seminorm vanishes")
    p, q = gn_exponents(params)
    return rep.potential / (rep.hardy_seminorm_sq ** (p / 2.0) * rep.mass ** (q / 2.0))
