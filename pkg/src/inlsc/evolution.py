"""Radial time integration (d = 3) with conservation and blow-up monitors."""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from . import functionals as fn
from .errors import StepFailure
from .model import ModelParams, RadialField, RadialGrid, validate

TRACE_COLUMNS = ("t", "M", "E", "H_omega", "S_omega", "K_omega", "G", "hdot1", "dist_orbit", "b_member")


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    blowup_factor: float = 10.0
    blowup_hmax: float = 1e6
    sample_every: int = 100
    delta: float = 0.0
    # "relaxation" (linearly implicit, default) or "strang"
    scheme: str = "relaxation"
    mass_tol: float = 1e-9
    energy_tol: float = 1e-7
    dt_min: float = 1e-9

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.blowup_factor > 1:
            raise ValueError("blowup_factor must exceed 1")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        if self.scheme not in ("relaxation", "strang"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


class OutcomeKind(str, enum.Enum):
    COMPLETED_GLOBAL = "CompletedGlobal"
    BLOWUP_INDICATED = "BlowupIndicated"
    STEP_FAILURE = "StepFailure"


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    time: float | None = None

    def __str__(self) -> str:
        if self.time is None:
            return self.kind.value
        return f"{self.kind.value}({self.time:.6g})"


@dataclass
class EvolutionTrace:
    times: list[float] = field(default_factory=list)
    reports: list[fn.FunctionalReport] = field(default_factory=list)
    h1_norms: list[float] = field(default_factory=list)
    distance_to_orbit: list[float] | None = None
    b_omega_member: list[bool] | None = None
    mass_drift: list[float] = field(default_factory=list)
    energy_drift: list[float] = field(default_factory=list)
    boundary_ok: list[bool] = field(default_factory=list)
    outcome: Outcome = Outcome(OutcomeKind.COMPLETED_GLOBAL)
    final: RadialField | None = None
    steps: int = 0
    rejected_steps: int = 0
    dt_final: float = 0.0
    reference_action: float | None = None

    @property
    def blowup_indicated(self) -> bool:
        return self.outcome.kind is OutcomeKind.BLOWUP_INDICATED

    @property
    def max_mass_drift(self) -> float:
        return max(self.mass_drift)

    @property
    def max_energy_drift(self) -> float:
        return max(self.energy_drift)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.reports])


def _require_d3(params: ModelParams) -> None:
    if params.d != 3:
        raise ValueError("time integration supports d = 3 only")


class _LinearSystem:
    """Crank-Nicolson pieces M + i dt/2 A for the reduced field."""

    def __init__(self, grid: RadialGrid, params: ModelParams):
        self.ops = fn.operators(grid, params.c)
        self.rb = grid.nodes ** (-params.b)
        self.sigma = params.sigma

    def solve(self, w: np.ndarray, dt: float, diag: np.ndarray) -> np.ndarray:
        ops = self.ops
        half = 0.5j * dt
        rhs = ops.line * w - half * ops.apply(w, diag)
        ab = np.zeros((3, w.size), dtype=np.complex128)
        ab[0, 1:] = half * ops.off
        ab[1] = ops.line + half * diag
        ab[2, :-1] = half * ops.off
        try:
            out = sla.solve_banded((1, 1), ab, rhs, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise StepFailure(f"banded solve failed: {exc}") from exc
        if not np.all(np.isfinite(out)):
            raise StepFailure("non-finite values after linear solve")
        return out


def linear_step(u: RadialField, params: ModelParams, dt: float) -> RadialField:
    """Trapezoidal step for i u_t = -Δu - c|x|^{-2}u (unitary in the grid mass)."""
    _require_d3(params)
    sys_ = _LinearSystem(u.grid, params)
    w = sys_.ops.reduction * u.values
    return RadialField(u.grid, sys_.solve(w, dt, sys_.ops.diag) / sys_.ops.reduction)


def nonlinear_step(u: RadialField, params: ModelParams, dt: float) -> RadialField:
    """Exact flow of i u_t = -|x|^{-b}|u|^σ u: a pointwise phase rotation."""
    v = u.values
    phase = dt * u.grid.nodes ** (-params.b) * np.abs(v) ** params.sigma
    return RadialField(u.grid, v * np.exp(1j * phase))


def step(u: RadialField, params: ModelParams, dt: float) -> RadialField:
    """One Strang-split step: half nonlinear phase, linear CN, half phase."""
    _require_d3(params)
    if not dt > 0:
        raise ValueError("dt must be positive")
    try:
        half = nonlinear_step(u, params, 0.5 * dt)
        lin = linear_step(half, params, dt)
        return nonlinear_step(lin, params, 0.5 * dt)
    except ValueError as exc:
        raise StepFailure(str(exc)) from exc


class StrangStepper:
    def __init__(self, grid: RadialGrid, params: ModelParams):
        self.sys = _LinearSystem(grid, params)

    def reset(self) -> None:
        pass

    def _phase(self, w: np.ndarray, dt: float) -> np.ndarray:
        u_abs = np.abs(w) / self.sys.ops.reduction
        return w * np.exp(1j * dt * self.sys.rb * u_abs**self.sys.sigma)

    def advance(self, w: np.ndarray, dt: float) -> np.ndarray:
        w = self._phase(w, 0.5 * dt)
        w = self.sys.solve(w, dt, self.sys.ops.diag)
        return self._phase(w, 0.5 * dt)


class RelaxationStepper:
    """Linearly implicit relaxation Crank-Nicolson scheme.

    The nonlinear potential is carried by an auxiliary field psi living at
    half steps, psi^{n+1/2} = 2|u^n|^σ - psi^{n-1/2}; the step itself is a
    trapezoidal solve with the potential -|x|^{-b} psi^{n+1/2} folded into the
    tridiagonal operator, so it is unitary in the grid mass and keeps a
    standing wave on its orbit. psi restarts from |u|^σ after a reset.
    """

    def __init__(self, grid: RadialGrid, params: ModelParams):
        self.sys = _LinearSystem(grid, params)
        self.psi: np.ndarray | None = None
        self._dt: float | None = None

    def reset(self) -> None:
        self.psi = None
        self._dt = None

    def advance(self, w: np.ndarray, dt: float) -> np.ndarray:
        s = self.sys
        dens = (np.abs(w) / s.ops.reduction) ** s.sigma
        if self.psi is None or self._dt != dt:
            psi = dens
        else:
            psi = 2.0 * dens - self.psi
        diag = s.ops.diag - s.ops.line * s.rb * psi
        out = s.solve(w, dt, diag)
        self.psi = psi
        self._dt = dt
        return out


def _stepper(grid: RadialGrid, params: ModelParams, scheme: str):
    return RelaxationStepper(grid, params) if scheme == "relaxation" else StrangStepper(grid, params)


def _energy_scale(rep: fn.FunctionalReport, sigma: float) -> float:
    return 0.5 * abs(rep.hardy_seminorm_sq) + rep.potential / (sigma + 2.0)


def evolve(
    u0: RadialField,
    params: ModelParams,
    config: EvolutionConfig,
    reference: RadialField | None = None,
) -> EvolutionTrace:
    """Integrate from ``u0`` to ``config.t_end`` or until blow-up is indicated.

    A step is rejected and dt halved when it changes the mass by more than
    ``mass_tol`` or the energy by more than ``energy_tol`` (relative to the
    size of the energy terms). Blow-up is indicated when ||u||_{Hdot1} grows
    by ``blowup_factor``, exceeds ``blowup_hmax``, or when dt has been halved
    twice below ``dt_min``.
    """
    validate(params)
    _require_d3(params)
    grid = u0.grid
    red = grid.reduction
    stepper = _stepper(grid, params, config.scheme)

    rep0 = fn.report(u0, params)
    m0 = rep0.mass
    e0 = rep0.energy
    e_scale0 = max(_energy_scale(rep0, params.sigma), 1e-300)
    h0 = math.sqrt(rep0.dirichlet)

    trace = EvolutionTrace()
    ref_action = None
    if reference is not None:
        ref_action = fn.report(reference, params).action
        trace.distance_to_orbit = []
        trace.b_omega_member = []
        trace.reference_action = ref_action

    def sample(t: float, values: np.ndarray, rep: fn.FunctionalReport) -> None:
        trace.times.append(t)
        trace.reports.append(rep)
        trace.h1_norms.append(math.sqrt(rep.dirichlet))
        trace.mass_drift.append(abs(rep.mass - m0) / m0 if m0 else 0.0)
        trace.energy_drift.append(abs(rep.energy - e0) / max(abs(e0), 1e-300))
        peak = np.max(np.abs(values))
        trace.boundary_ok.append(bool(abs(values[-1]) < 1e-8 * peak) if peak > 0 else True)
        if reference is not None:
            trace.distance_to_orbit.append(fn.distance_to_orbit(RadialField(grid, values), reference))
            trace.b_omega_member.append(bool(rep.action < ref_action and rep.virial_g < 0))

    w = red * np.asarray(u0.values, dtype=np.complex128)
    values = u0.values
    rep = rep0
    sample(0.0, values, rep)

    t = 0.0
    dt = config.dt
    halvings_below_min = 0
    steps = 0
    rejected = 0
    last_sampled = 0
    outcome = Outcome(OutcomeKind.COMPLETED_GLOBAL)
    t_tol = 1e-12 * config.t_end

    while config.t_end - t > t_tol:
        h = min(dt, config.t_end - t)
        ok = True
        try:
            w_new = stepper.advance(w, h)
            v_new = w_new / red
            rep_new = fn.report_values(grid, params, v_new)
        except StepFailure:
            ok = False
        if ok:
            mass_change = abs(rep_new.mass - rep.mass) / rep.mass if rep.mass else 0.0
            scale = max(_energy_scale(rep, params.sigma), e_scale0)
            energy_change = abs(rep_new.energy - rep.energy) / scale
            ok = (
                math.isfinite(rep_new.energy)
                and mass_change <= config.mass_tol
                and energy_change <= config.energy_tol
            )
        if not ok:
            rejected += 1
            dt *= 0.5
            stepper.reset()
            if dt < config.dt_min:
                halvings_below_min += 1
                if halvings_below_min >= 2:
                    grown = math.sqrt(rep.dirichlet) > 2.0 * h0
                    kind = OutcomeKind.BLOWUP_INDICATED if grown else OutcomeKind.STEP_FAILURE
                    outcome = Outcome(kind, t)
                    break
            continue

        w, values, rep = w_new, v_new, rep_new
        t += h
        steps += 1
        hdot = math.sqrt(rep.dirichlet)
        if hdot >= config.blowup_factor * h0 or hdot >= config.blowup_hmax:
            sample(t, values, rep)
            last_sampled = steps
            outcome = Outcome(OutcomeKind.BLOWUP_INDICATED, t)
            break
        if steps % config.sample_every == 0:
            sample(t, values, rep)
            last_sampled = steps

    if last_sampled != steps:
        sample(t, values, rep)
    trace.outcome = outcome
    trace.final = RadialField(grid, values)
    trace.steps = steps
    trace.rejected_steps = rejected
    trace.dt_final = dt
    return trace


def monitor_g_criterion(trace: EvolutionTrace, delta: float) -> bool:
    """True iff G(u(t)) <= -delta at every sample."""
    if not trace.reports:
        raise ValueError("empty trace")
    return all(r.virial_g <= -delta for r in trace.reports)


def virial_bound_holds(trace: EvolutionTrace, slack: float = 1e-6) -> list[bool]:
    """Per-sample check of G(u) <= 2 (S(u) - S(phi)) (+ relative slack)."""
    if trace.reference_action is None:
        raise ValueError("trace has no reference ground state")
    s_ref = trace.reference_action
    out = []
    for r in trace.reports:
        bound = 2.0 * (r.action - s_ref)
        out.append(r.virial_g <= bound + slack * max(1.0, abs(r.h_omega)))
    return out


def write_trace(path: str | Path, trace: EvolutionTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for i, (t, rep) in enumerate(zip(trace.times, trace.reports)):
            dist = trace.distance_to_orbit[i] if trace.distance_to_orbit is not None else ""
            member = int(trace.b_omega_member[i]) if trace.b_omega_member is not None else ""
            writer.writerow(
                [
                    repr(float(t)),
                    repr(float(rep.mass)),
                    repr(float(rep.energy)),
                    repr(float(rep.h_omega)),
                    repr(float(rep.action)),
                    repr(float(rep.nehari)),
                    repr(float(rep.virial_g)),
                    repr(float(trace.h1_norms[i])),
                    repr(float(dist)) if dist != "" else "",
                    member,
                ]
            )


def read_trace(path: str | Path) -> list[dict]:
    """Rows of a trace file as dicts of floats (empty cells become None)."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({k: (float(v) if v != "" else None) for k, v in row.items()})
    return rows


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(
    path: str | Path,
    params: ModelParams,
    config: EvolutionConfig,
    grid: RadialGrid,
    trace: EvolutionTrace,
    inputs: dict[str, str | Path] | None = None,
) -> None:
    doc = {
        "params": asdict(params),
        "config": asdict(config),
        "grid": {"r_max": grid.r_max, "n": grid.n, "scheme": grid.scheme, "grading": grid.grading},
        "outcome": {"kind": trace.outcome.kind.value, "time": trace.outcome.time},
        "steps": trace.steps,
        "rejected_steps": trace.rejected_steps,
        "dt_final": trace.dt_final,
        "boundary_ok": all(trace.boundary_ok),
        "inputs": {name: file_digest(p) for name, p in (inputs or {}).items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))
