"""Ground states by action minimisation on the Nehari manifold."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from . import functionals as fn
from .errors import CertificationFailure, DegenerateField, NoConvergence
from .model import ModelParams, RadialField, RadialGrid, make_grid, validate

log = logging.getLogger(__name__)

DEFAULT_R_MAX = 20.0
DEFAULT_N = 4096
HEADER = struct.Struct("<qddddqd")


@dataclass
class GroundStateResult:
    phi: RadialField
    params: ModelParams
    action_level: float
    residual: float
    nehari_defect: float
    pohozaev_defects: tuple[float, float]
    virial_defect: float
    iterations: int
    action_history: list[float] = field(default_factory=list, repr=False)


@dataclass
class CertificateReport:
    residual: float
    nehari_defect: float
    pohozaev_defects: tuple[float, float]
    dilation_peak_defect: float
    gn_estimate: float
    gn_max_trial: float
    gn_margin: float
    action_level: float
    refined_action_level: float
    grid_change: float
    refined_residual: float
    refined_pohozaev_defects: tuple[float, float]
    thresholds: dict
    failed: dict
    radial_ansatz: bool = True

    @property
    def passed(self) -> bool:
        return not self.failed

    def as_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def pohozaev_coefficients(params: ModelParams) -> tuple[float, float]:
    """Ratios omega*M / P and omega*M / ||u||^2_{Hdot1_c} for a stationary solution.

    The second ratio follows from the first together with K = 0; it carries
    ``4 - 2b - (d-2) sigma`` in the numerator.
    """
    d, b, s = params.d, params.b, params.sigma
    numer = 4.0 - 2.0 * b - (d - 2) * s
    return numer / (2.0 * (s + 2.0)), numer / (d * s + 2.0 * b)


def pohozaev_defects(u: RadialField, params: ModelParams) -> tuple[float, float]:
    rep = fn.report(u, params)
    lhs = params.omega * rep.mass
    c1, c2 = pohozaev_coefficients(params)
    return float(abs(lhs - c1 * rep.potential) / lhs), float(abs(lhs - c2 * rep.hardy_seminorm_sq) / lhs)


def nehari_project(u: RadialField, params: ModelParams) -> tuple[float, RadialField]:
    """Amplitude rescale placing ``u`` on K_omega = 0."""
    rep = fn.report(u, params)
    if rep.potential <= 0:
        raise DegenerateField("potential term vanishes; no Nehari projection")
    lam = (rep.h_omega / rep.potential) ** (1.0 / params.sigma)
    return lam, u * lam


def default_initial_guess(grid: RadialGrid) -> RadialField:
    """Unit-mass Gaussian."""
    u = RadialField.from_function(grid, lambda r: np.exp(-0.5 * r * r))
    return u * (1.0 / fn.l2_norm(u))


def _residual(grid: RadialGrid, params: ModelParams, values: np.ndarray) -> tuple[np.ndarray, float]:
    g = fn.gradient_values(grid, params, values)
    return g, float(np.sqrt(np.dot(grid.weights, np.abs(g) ** 2)))


def _project(grid: RadialGrid, params: ModelParams, values: np.ndarray) -> tuple[np.ndarray, fn.FunctionalReport]:
    rep = fn.report_values(grid, params, values)
    if rep.h_omega < 1e-14:
        raise DegenerateField("iterate collapsed to zero")
    if rep.potential <= 0:
        raise DegenerateField("potential term vanished during iteration")
    lam = (rep.h_omega / rep.potential) ** (1.0 / params.sigma)
    values = values * lam
    return values, fn.report_values(grid, params, values)


def solve_ground_state(
    params: ModelParams,
    init: RadialField | None = None,
    tol: float = 1e-8,
    max_iter: int = 50_000,
    grid: RadialGrid | None = None,
    newton_switch: float = 1e-3,
) -> GroundStateResult:
    """Minimise S_omega over the Nehari manifold.

    Projected gradient flow u <- P(|u - tau B^{-1} S'(u)|) with B the discrete
    -Δ - c|x|^{-2} + ω (a Sobolev gradient, which makes the step count grid
    independent) and P the Nehari projection; tau halves on any increase of
    the action and grows by 1.1 on success. Once the residual drops below
    ``newton_switch`` the iteration finishes with banded Newton steps.
    """
    validate(params)
    if init is None:
        grid = grid or make_grid(DEFAULT_R_MAX, DEFAULT_N, "graded", d=params.d)
        init = default_initial_guess(grid)
    grid = init.grid
    if grid.d != params.d:
        raise ValueError(f"grid dimension {grid.d} does not match d = {params.d}")

    ops = fn.operators(grid, params.c)
    line_red = ops.line * ops.reduction
    precond = ops.banded(ops.diag + params.omega * ops.line)
    rb = grid.nodes ** (-params.b)

    u = np.abs(np.asarray(init.values))
    if fn.potential_values(grid, params, u) <= 0:
        raise DegenerateField("initial field has zero potential term")
    u, rep = _project(grid, params, u)
    history = [rep.action]
    tau = 0.5
    g, res = _residual(grid, params, u)
    iterations = 0
    newton_failures = 0

    while res > tol:
        if iterations >= max_iter:
            raise NoConvergence(f"residual {res:.3e} after {iterations} iterations")
        iterations += 1
        if res < newton_switch:
            jac = ops.diag + params.omega * ops.line - ops.line * (params.sigma + 1.0) * rb * u**params.sigma
            try:
                dw = sla.solve_banded((1, 1), ops.banded(jac), line_red * g)
            except (np.linalg.LinAlgError, ValueError):
                dw = None
            if dw is not None:
                trial, trial_rep = _project(grid, params, np.abs(u - dw / ops.reduction))
                g_t, res_t = _residual(grid, params, trial)
                if res_t < res:
                    u, rep, g, res = trial, trial_rep, g_t, res_t
                    continue
            newton_failures += 1
            newton_switch /= 10.0
            log.debug("newton step rejected at residual %.3e", res)
            if newton_failures > 8:
                raise NoConvergence(f"Newton polish stalled at residual {res:.3e}")
            continue

        direction = sla.solve_banded((1, 1), precond, line_red * g) / ops.reduction
        trial, trial_rep = _project(grid, params, np.abs(u - tau * direction))
        if trial_rep.action <= rep.action:
            u, rep = trial, trial_rep
            history.append(rep.action)
            tau = min(1.1 * tau, 1.0)
            g, res = _residual(grid, params, u)
        else:
            tau *= 0.5
            if tau < 1e-14:
                raise NoConvergence(f"step size collapsed at residual {res:.3e}")

    phi = RadialField(grid, u)
    rep = fn.report(phi, params)
    return GroundStateResult(
        phi=phi,
        params=params,
        action_level=rep.action,
        residual=res,
        nehari_defect=abs(rep.nehari) / rep.h_omega,
        pohozaev_defects=pohozaev_defects(phi, params),
        virial_defect=abs(rep.virial_g) / rep.h_omega,
        iterations=iterations,
        action_history=history,
    )


def resample_to(u: RadialField, grid: RadialGrid) -> RadialField:
    """Monotone cubic transfer of a field to another grid (zero past r_max)."""
    return RadialField(grid, fn._resample(u, grid.nodes))


def gn_trial_fields(grid: RadialGrid, count: int = 100, seed: int = 0) -> list[RadialField]:
    """Seeded Gaussians times quadratic polynomials with varied widths."""
    rng = np.random.default_rng(seed)
    r = grid.nodes
    out = []
    for _ in range(count):
        width = rng.uniform(0.3, 3.0)
        a1, a2 = rng.uniform(-1.0, 2.0, size=2)
        x = r / width
        out.append(RadialField(grid, (1.0 + a1 * x + a2 * x * x) * np.exp(-0.5 * x * x)))
    return out


def dilation_peak_defect(u: RadialField, params: ModelParams) -> float:
    """|lam* - 1| for the critical point of lam -> S(u_lam).

    In the mass-critical case the dilation curve is lam^2 E + const and has no
    isolated critical point; the defect is then |G| / ||u||^2_{Hdot1_c}.
    """
    lam = fn.dilation_critical_point(u, params)
    if lam is None:
        rep = fn.report(u, params)
        return abs(rep.virial_g) / rep.hardy_seminorm_sq
    return abs(lam - 1.0)


def default_thresholds(tol: float) -> dict:
    return {
        "residual": 10.0 * tol,
        "nehari_defect": 10.0 * tol,
        "pohozaev": 1e-5,
        "dilation_peak_defect": 1e-4,
        "gn_margin": -1e-6,
    }


def certify(
    result: GroundStateResult,
    params: ModelParams,
    tol: float = 1e-8,
    trials: int = 100,
    seed: int = 0,
    thresholds: dict | None = None,
    raise_on_failure: bool = True,
) -> CertificateReport:
    """Check a computed ground state against its defining identities.

    The state is re-solved on a grid refined 2x (warm start from the
    resampled profile); residual and Pohozaev defects are reported on both
    grids and thresholds apply to the worse of the two.
    """
    thresholds = {**default_thresholds(tol), **(thresholds or {})}
    phi = result.phi
    fine_grid = phi.grid.refined(2)
    fine = solve_ground_state(params, init=resample_to(phi, fine_grid), tol=tol)

    j_phi = fn.gn_quotient(phi, params)
    j_trials = max(fn.gn_quotient(v, params) for v in gn_trial_fields(phi.grid, trials, seed))
    poh = pohozaev_defects(phi, params)
    fine_poh = fine.pohozaev_defects
    cert = CertificateReport(
        residual=result.residual,
        nehari_defect=result.nehari_defect,
        pohozaev_defects=poh,
        dilation_peak_defect=dilation_peak_defect(phi, params),
        gn_estimate=j_phi,
        gn_max_trial=j_trials,
        gn_margin=j_phi - j_trials,
        action_level=result.action_level,
        refined_action_level=fine.action_level,
        grid_change=abs(fine.action_level - result.action_level) / abs(result.action_level),
        refined_residual=fine.residual,
        refined_pohozaev_defects=fine_poh,
        thresholds=thresholds,
        failed={},
    )
    checks = {
        "residual": max(cert.residual, cert.refined_residual),
        "nehari_defect": max(cert.nehari_defect, fine.nehari_defect),
        "pohozaev": max(*poh, *fine_poh),
        "dilation_peak_defect": cert.dilation_peak_defect,
    }
    for key, value in checks.items():
        if value > thresholds[key]:
            cert.failed[key] = value
    if cert.gn_margin < thresholds["gn_margin"]:
        cert.failed["gn_margin"] = cert.gn_margin
    if cert.failed and raise_on_failure:
        raise CertificationFailure(cert.failed)
    return cert


# --- persistence ------------------------------------------------------------


def save_field(path: str | Path, u: RadialField, params: ModelParams) -> None:
    """Binary field file: little-endian header then n float64 amplitudes."""
    if not u.is_real:
        raise ValueError("field files store real profiles only")
    grid = u.grid
    header = HEADER.pack(params.d, params.b, params.sigma, params.c, params.omega, grid.n, grid.r_max)
    Path(path).write_bytes(header + u.values.real.astype("<f8").tobytes())


def load_field(path: str | Path, scheme: str = "graded", grading: float | None = None) -> tuple[RadialField, ModelParams]:
    """Inverse of :func:`save_field`. Grid scheme is not in the header; pass it
    (or read it from the certificate sidecar)."""
    raw = Path(path).read_bytes()
    d, b, sigma, c, omega, n, r_max = HEADER.unpack_from(raw)
    values = np.frombuffer(raw, dtype="<f8", offset=HEADER.size)
    if values.size != n:
        raise ValueError(f"field file declares {n} amplitudes but holds {values.size}")
    kwargs = {} if grading is None else {"grading": grading}
    grid = make_grid(r_max, n, scheme, d=d, **kwargs)
    return RadialField(grid, values.astype(float)), ModelParams(d, b, sigma, c, omega)


def write_certificate(path: str | Path, result: GroundStateResult, cert: CertificateReport | None = None) -> None:
    grid = result.phi.grid
    doc = {
        "params": asdict(result.params),
        "grid": {"r_max": grid.r_max, "n": grid.n, "scheme": grid.scheme, "grading": grid.grading},
        "action_level": result.action_level,
        "residual": result.residual,
        "nehari_defect": result.nehari_defect,
        "pohozaev_defects": list(result.pohozaev_defects),
        "virial_defect": result.virial_defect,
        "iterations": result.iterations,
        "radial_ansatz": True,
    }
    if cert is not None:
        doc["certificate"] = cert.as_dict()
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_with_sidecar(field_path: str | Path, sidecar_path: str | Path) -> tuple[RadialField, ModelParams]:
    meta = json.loads(Path(sidecar_path).read_text())["grid"]
    return load_field(field_path, scheme=meta["scheme"], grading=meta["grading"] or None)
