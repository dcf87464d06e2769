"""Experiment drivers, configuration and persistence."""

from __future__ import annotations

import enum
import functools
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import functionals as fn
from . import groundstate as gs
from .errors import RefusesRun, ValidationError
from .evolution import (
    EvolutionConfig,
    EvolutionTrace,
    evolve,
    virial_bound_holds,
    monitor_g_criterion,
    write_manifest,
    write_trace,
)
from .model import ModelParams, RadialField, RegimeTag, classify, make_grid, validate

log = logging.getLogger(__name__)

STABILITY_TOLERANCE = 0.1
CLOSED_FORM_TOL = 1e-4
# Entry conditions are strict inequalities; values within this band of zero
# (relative to H_omega(phi)) are treated as numerically undecided.
ENTRY_BAND = 1e-6
BUMPS = 8


class ExperimentKind(str, enum.Enum):
    STABILITY = "Stability"
    MASS_CRITICAL_BLOWUP = "MassCriticalBlowup"
    INTERCRITICAL_INSTABILITY = "IntercriticalInstability"
    GN_CONSTANT = "GNConstant"
    GROUND_STATE_ONLY = "GroundStateOnly"


_REQUIRED_REGIME = {
    ExperimentKind.STABILITY: RegimeTag.MASS_SUBCRITICAL,
    ExperimentKind.MASS_CRITICAL_BLOWUP: RegimeTag.MASS_CRITICAL,
    ExperimentKind.INTERCRITICAL_INSTABILITY: RegimeTag.INTERCRITICAL,
}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: ExperimentKind
    params: ModelParams
    eps_pert: float = 0.01
    mu0: float = 1.1
    lambda0: float = 1.1
    r_max: float = gs.DEFAULT_R_MAX
    n: int = gs.DEFAULT_N
    grid_scheme: str = "graded"
    dt: float = 1e-3
    t_end: float = 20.0
    seed: int = 0
    out_dir: Path = Path("inlsc-out")
    stability_tolerance: float = STABILITY_TOLERANCE
    gn_trials: int = 100
    sample_every: int = 100

    def check(self) -> "ExperimentSpec":
        """Kind-specific admissibility; raises ValidationError."""
        validate(self.params)
        need = _REQUIRED_REGIME.get(self.kind)
        if need is not None:
            got = classify(self.params).tag
            if got is not need:
                raise ValidationError("sigma", f"{self.kind.value} needs a {need.value} model, got {got.value}")
        if self.kind in (ExperimentKind.STABILITY, ExperimentKind.MASS_CRITICAL_BLOWUP, ExperimentKind.INTERCRITICAL_INSTABILITY):
            if self.params.d != 3:
                raise ValidationError("d", "time evolution is implemented for d = 3 only")
        if not self.eps_pert >= 0:
            raise ValidationError("eps_pert", f"must be >= 0, got {self.eps_pert}")
        for name in ("mu0", "lambda0"):
            if not getattr(self, name) > 0:
                raise ValidationError(name, f"must be positive, got {getattr(self, name)}")
        return self

    def grid(self):
        return make_grid(self.r_max, self.n, self.grid_scheme, d=self.params.d)

    def evolution_config(self, **overrides) -> EvolutionConfig:
        kw = {"dt": self.dt, "t_end": self.t_end, "sample_every": self.sample_every}
        kw.update(overrides)
        return EvolutionConfig(**kw)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["kind"] = self.kind.value
        out["out_dir"] = str(self.out_dir)
        return out

    def run_id(self) -> str:
        """Short content hash; identical specs map to the same directory."""
        doc = self.as_dict()
        doc.pop("out_dir")
        blob = json.dumps(doc, sort_keys=True).encode()
        return f"{self.kind.value.lower()}-{hashlib.sha256(blob).hexdigest()[:10]}"

    def run_dir(self) -> Path:
        return Path(self.out_dir) / self.run_id()


@dataclass
class ExperimentReport:
    kind: ExperimentKind
    inputs: dict
    headline: dict[str, bool] = field(default_factory=dict)
    scalars: dict[str, float] = field(default_factory=dict)
    paths: dict[str, str] = field(default_factory=dict)
    outcome: str = ""

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "inputs": self.inputs,
            "headline": self.headline,
            "scalars": self.scalars,
            "paths": self.paths,
            "outcome": self.outcome,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")


# --- shared pieces ------------------------------------------------------------


@functools.lru_cache(maxsize=16)
def _ground_state_cached(params: ModelParams, r_max: float, n: int, scheme: str) -> gs.GroundStateResult:
    grid = make_grid(r_max, n, scheme, d=params.d)
    return gs.solve_ground_state(params, grid=grid)


def ground_state(spec: ExperimentSpec, params: ModelParams | None = None) -> gs.GroundStateResult:
    return _ground_state_cached(params or spec.params, spec.r_max, spec.n, spec.grid_scheme)


def perturbation_direction(grid, seed: int) -> RadialField:
    """Seeded sum of 8 Gaussian bumps, unit norm in H^1."""
    rng = np.random.default_rng(seed)
    r = grid.nodes
    xi = np.zeros(grid.n)
    for _ in range(BUMPS):
        amp = rng.normal()
        centre = rng.uniform(0.0, 4.0)
        width = rng.uniform(0.5, 2.0)
        xi += amp * np.exp(-(((r - centre) / width) ** 2))
    xi = RadialField(grid, xi)
    return xi * (1.0 / fn.h1_norm(xi))


def _persist_run(
    run_dir: Path,
    spec: ExperimentSpec,
    params: ModelParams,
    result: gs.GroundStateResult,
    u0: RadialField | None,
    trace: EvolutionTrace | None,
    config: EvolutionConfig | None,
) -> dict[str, str]:
    run_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    phi_path = run_dir / "groundstate.bin"
    gs.save_field(phi_path, result.phi, params)
    gs.write_certificate(run_dir / "groundstate.json", result)
    paths["groundstate"] = str(phi_path)
    paths["groundstate_sidecar"] = str(run_dir / "groundstate.json")
    if u0 is not None and u0.is_real:
        gs.save_field(run_dir / "initial.bin", u0, params)
        paths["initial"] = str(run_dir / "initial.bin")
    if trace is not None:
        trace_path = run_dir / "trace.csv"
        write_trace(trace_path, trace)
        inputs = {"groundstate": phi_path}
        if "initial" in paths:
            inputs["initial"] = paths["initial"]
        write_manifest(run_dir / "manifest.json", params, config, result.phi.grid, trace, inputs)
        paths["trace"] = str(trace_path)
        paths["manifest"] = str(run_dir / "manifest.json")
    paths["report"] = str(run_dir / "report.json")
    return paths


def _finish(report: ExperimentReport) -> ExperimentReport:
    report.write(report.paths["report"])
    return report


# --- experiments ----------------------------------------------------------------


def run_stability(spec: ExperimentSpec) -> ExperimentReport:
    """Perturb the ground state by eps_pert ||phi||_{H^1} xi and track the orbit distance.

    ``stable`` compares the sup distance divided by ||phi||_{H^1} with
    ``stability_tolerance``; the absolute sup distance is reported alongside.
    """
    spec = spec.check()
    params = spec.params
    result = ground_state(spec)
    phi = result.phi
    phi_norm = fn.h1_norm(phi)
    u0 = phi
    if spec.eps_pert > 0:
        u0 = phi + perturbation_direction(phi.grid, spec.seed) * (spec.eps_pert * phi_norm)
    config = spec.evolution_config()
    trace = evolve(u0, params, config, reference=phi)
    sup_abs = max(trace.distance_to_orbit)
    sup_rel = sup_abs / phi_norm
    report = ExperimentReport(
        kind=spec.kind,
        inputs=spec.as_dict(),
        outcome=str(trace.outcome),
        headline={
            "stable": bool(trace.outcome.kind.value == "CompletedGlobal" and sup_rel <= spec.stability_tolerance),
            "invariants_held": bool(trace.max_mass_drift <= 1e-6 and trace.max_energy_drift <= 1e-5),
            "boundary_ok": bool(all(trace.boundary_ok)),
        },
        scalars={
            "sup_distance": sup_abs,
            "sup_distance_relative": sup_rel,
            "phi_h1_norm": phi_norm,
            "initial_distance": trace.distance_to_orbit[0],
            "stability_tolerance": spec.stability_tolerance,
            "max_mass_drift": trace.max_mass_drift,
            "max_energy_drift": trace.max_energy_drift,
            "action_level": result.action_level,
        },
    )
    report.paths = _persist_run(spec.run_dir(), spec, params, result, u0, trace, config)
    return _finish(report)


def stability_table(spec: ExperimentSpec, eps_values=(0.04, 0.02, 0.01)) -> list[tuple[float, float]]:
    """(eps_pert, relative sup distance) rows; an empirical table, not a law."""
    rows = []
    for eps in eps_values:
        rep = run_stability(replace(spec, eps_pert=eps))
        rows.append((eps, rep.scalars["sup_distance_relative"]))
    return rows


def masscritical_initial_data(phi: RadialField, params: ModelParams, mu: float, lam: float):
    """u0 = mu lam^{d/2} phi(lam x) with its energy and the closed-form prediction."""
    u0 = fn.scale_amplitude_dilate(phi, mu, lam)
    hc = fn.report(phi, params).hardy_seminorm_sq
    predicted = 0.5 * (1.0 - mu**params.sigma) * mu * mu * lam * lam * hc
    return u0, fn.report(u0, params).energy, predicted


def run_masscritical_blowup(spec: ExperimentSpec) -> ExperimentReport:
    spec = spec.check()
    params = spec.params
    result = ground_state(spec)
    phi = result.phi
    u0, energy, predicted = masscritical_initial_data(phi, params, spec.mu0, spec.lambda0)
    scale = fn.report(phi, params).h_omega
    if energy >= -ENTRY_BAND * scale:
        raise RefusesRun(f"E(u0) = {energy:.3e} is not negative; grid too coarse or (mu0, lambda0) too close to 1")
    rel_err = abs(energy - predicted) / abs(predicted)
    config = spec.evolution_config()
    trace = evolve(u0, params, config, reference=phi)
    report = ExperimentReport(
        kind=spec.kind,
        inputs=spec.as_dict(),
        outcome=str(trace.outcome),
        headline={
            "blowup_indicated": trace.blowup_indicated,
            "negative_energy": bool(energy < 0),
            "energy_matches_closed_form": bool(rel_err <= CLOSED_FORM_TOL),
            "invariants_held": bool(trace.max_mass_drift <= 1e-6),
            "boundary_ok": bool(all(trace.boundary_ok)),
        },
        scalars={
            "energy_u0": energy,
            "energy_closed_form": predicted,
            "energy_relative_error": rel_err,
            "distance_u0_phi": fn.h1_norm(u0 - phi),
            "blowup_time": trace.outcome.time if trace.outcome.time is not None else float("nan"),
            "hdot1_growth": trace.h1_norms[-1] / trace.h1_norms[0],
            "max_mass_drift": trace.max_mass_drift,
        },
    )
    report.paths = _persist_run(spec.run_dir(), spec, params, result, u0, trace, config)
    return _finish(report)


def run_intercritical_instability(spec: ExperimentSpec) -> ExperimentReport:
    spec = spec.check()
    params = spec.params
    result = ground_state(spec)
    phi = result.phi
    rep_phi = fn.report(phi, params)
    u0 = fn.dilate(phi, spec.lambda0)
    rep0 = fn.report(u0, params)
    band = ENTRY_BAND * rep_phi.h_omega
    gap = rep_phi.action - rep0.action
    if not (gap > band and rep0.virial_g < -band):
        raise RefusesRun(
            f"entry conditions fail: S(phi) - S(u0) = {gap:.3e}, G(u0) = {rep0.virial_g:.3e}"
        )
    delta = 2.0 * gap
    config = spec.evolution_config(delta=delta)
    trace = evolve(u0, params, config, reference=phi)
    member = all(trace.b_omega_member)
    bound_ok = all(virial_bound_holds(trace))
    g_crit = monitor_g_criterion(trace, delta * (1.0 - 1e-6))
    report = ExperimentReport(
        kind=spec.kind,
        inputs=spec.as_dict(),
        outcome=str(trace.outcome),
        headline={
            "blowup_indicated": trace.blowup_indicated,
            "entry_conditions": True,
            "b_omega_invariant": bool(member),
            "virial_bound": bool(bound_ok),
            "g_criterion": bool(g_crit),
            "invariants_held": bool(member and bound_ok and g_crit),
        },
        scalars={
            "action_gap": gap,
            "delta": delta,
            "virial_u0": rep0.virial_g,
            "max_virial": max(r.virial_g for r in trace.reports),
            "blowup_time": trace.outcome.time if trace.outcome.time is not None else float("nan"),
            "hdot1_growth": trace.h1_norms[-1] / trace.h1_norms[0],
            "max_mass_drift": trace.max_mass_drift,
        },
    )
    report.paths = _persist_run(spec.run_dir(), spec, params, result, u0, trace, config)
    return _finish(report)


def run_gn_constant(spec: ExperimentSpec) -> ExperimentReport:
    """Estimate the sharp GN constant as J(phi_1) and compare with seeded trials."""
    spec = replace(spec, params=spec.params.replace(omega=1.0)).check()
    params = spec.params
    result = ground_state(spec)
    phi = result.phi
    j_phi = fn.gn_quotient(phi, params)
    trials = gs.gn_trial_fields(phi.grid, spec.gn_trials, spec.seed)
    quotients = [fn.gn_quotient(v, params) for v in trials]
    j_max = max(quotients)
    j_dil = fn.gn_quotient(fn.dilate(trials[0], 1.3), params)
    dil_err = abs(j_dil - quotients[0]) / quotients[0]
    fine = _ground_state_cached(params, spec.r_max, 2 * spec.n, spec.grid_scheme)
    j_fine = fn.gn_quotient(fine.phi, params)
    grid_change = abs(j_fine - j_phi) / j_phi
    report = ExperimentReport(
        kind=spec.kind,
        inputs=spec.as_dict(),
        outcome="Completed",
        headline={
            "ground_state_optimal": bool(j_phi - j_max >= -1e-6),
            "dilation_invariant": bool(dil_err <= 1e-5),
            "grid_converged": bool(grid_change < 1e-4),
        },
        scalars={
            "gn_estimate": j_phi,
            "gn_max_trial": j_max,
            "gn_margin": j_phi - j_max,
            "dilation_check_error": dil_err,
            "gn_estimate_refined": j_fine,
            "grid_change": grid_change,
        },
    )
    report.paths = _persist_run(spec.run_dir(), spec, params, result, None, None, None)
    (spec.run_dir() / "gn_trials.csv").write_text(
        "trial,J\n" + "".join(f"{i},{q!r}\n" for i, q in enumerate(quotients))
    )
    report.paths["trials"] = str(spec.run_dir() / "gn_trials.csv")
    return _finish(report)


def run_ground_state(spec: ExperimentSpec, certify: bool = True) -> ExperimentReport:
    spec = spec.check()
    params = spec.params
    result = ground_state(spec)
    cert = gs.certify(result, params, trials=spec.gn_trials, seed=spec.seed, raise_on_failure=False) if certify else None
    run_dir = spec.run_dir()
    paths = _persist_run(run_dir, spec, params, result, None, None, None)
    gs.write_certificate(run_dir / "groundstate.json", result, cert)
    scalars = {
        "action_level": result.action_level,
        "residual": result.residual,
        "nehari_defect": result.nehari_defect,
        "pohozaev_defect_1": float(result.pohozaev_defects[0]),
        "pohozaev_defect_2": float(result.pohozaev_defects[1]),
        "virial_defect": result.virial_defect,
        "iterations": float(result.iterations),
    }
    headline = {}
    if cert is not None:
        headline["certified"] = cert.passed
        scalars.update(
            dilation_peak_defect=cert.dilation_peak_defect,
            gn_margin=cert.gn_margin,
            grid_change=cert.grid_change,
        )
    report = ExperimentReport(spec.kind, spec.as_dict(), headline, scalars, paths, outcome="Completed")
    return _finish(report)


RUNNERS = {
    ExperimentKind.STABILITY: run_stability,
    ExperimentKind.MASS_CRITICAL_BLOWUP: run_masscritical_blowup,
    ExperimentKind.INTERCRITICAL_INSTABILITY: run_intercritical_instability,
    ExperimentKind.GN_CONSTANT: run_gn_constant,
    ExperimentKind.GROUND_STATE_ONLY: run_ground_state,
}


def run(spec: ExperimentSpec) -> ExperimentReport:
    return RUNNERS[spec.kind](spec)


# --- invariant suite ------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool


def random_fields(grid, count: int, seed: int) -> list[RadialField]:
    """Seeded complex test fields: chirped Gaussians times quadratics."""
    rng = np.random.default_rng(seed)
    r = grid.nodes
    out = []
    for _ in range(count):
        w = rng.uniform(0.5, 3.0)
        a1, a2 = rng.uniform(-1.0, 1.0, size=2)
        chirp = rng.uniform(-0.5, 0.5)
        amp = rng.uniform(0.2, 2.0)
        x = r / w
        out.append(RadialField(grid, amp * (1 + a1 * x + a2 * x * x) * np.exp(-0.5 * x * x + 1j * chirp * r * r)))
    return out


def _identity_defect(u: RadialField, params: ModelParams) -> float:
    rep = fn.report(u, params)
    s = params.sigma
    form1 = 0.5 * rep.nehari + s / (2 * (s + 2)) * rep.potential
    form2 = rep.nehari / (s + 2) + s / (2 * (s + 2)) * rep.h_omega
    scale = max(abs(rep.action), rep.h_omega, rep.potential)
    return max(abs(form1 - rep.action), abs(form2 - rep.action)) / scale


def _virial_fd_defect(u: RadialField, params: ModelParams, h: float = 1e-5) -> float:
    pts = fn.action_along_dilation(u, params, [1 - h, 1.0, 1 + h])
    fd = (pts[2].action - pts[0].action) / (2 * h)
    return abs(fd - pts[1].virial_g) / max(1.0, abs(pts[1].virial_g))


def _gradient_defect(u: RadialField, h: RadialField, params: ModelParams, eps: float = 1e-5) -> float:
    exact = fn.l2_inner(fn.gradient_action(u, params), h)
    fd = (fn.report(u + h * eps, params).action - fn.report(u - h * eps, params).action) / (2 * eps)
    return abs(exact - fd) / (1.0 + abs(exact))


def verify_suite(spec: ExperimentSpec) -> list[Check]:
    """Fast invariant checks at the experiment's parameters."""
    params = validate(spec.params)
    grid = spec.grid()
    rows = []

    def add(name, value, tol, passed=None):
        rows.append(Check(name, float(value), float(tol), bool(value <= tol if passed is None else passed)))

    fields = random_fields(grid, 20, spec.seed)
    add("action identities (relative)", max(_identity_defect(u, params) for u in fields), 1e-12)
    add("G vs dilation derivative", max(_virial_fd_defect(u, params) for u in fields), 1e-8)
    add("gradient vs finite difference", max(_gradient_defect(u, h, params) for u, h in zip(fields[:10], fields[10:])), 1e-6)
    hardy = params.replace(c=0.9 * params.critical_coupling)
    add("Hardy positivity at 0.9 c(d)", -min(fn.report(u, hardy).h_omega for u in fields), 0.0)

    result = ground_state(spec)
    cert = gs.certify(result, params, trials=spec.gn_trials, seed=spec.seed, raise_on_failure=False)
    add("stationarity residual", max(cert.residual, cert.refined_residual), cert.thresholds["residual"])
    add("Nehari defect / H_omega", cert.nehari_defect, cert.thresholds["nehari_defect"])
    add("Pohozaev defects", max(*cert.pohozaev_defects, *cert.refined_pohozaev_defects), cert.thresholds["pohozaev"])
    add("dilation peak defect", cert.dilation_peak_defect, cert.thresholds["dilation_peak_defect"])
    add("GN margin (>= -1e-6)", cert.gn_margin, -1e-6, passed=cert.gn_margin >= -1e-6)
    add("action change under grid doubling", cert.grid_change, 1e-4)
    if classify(params).tag is RegimeTag.MASS_CRITICAL:
        rep = fn.report(result.phi, params)
        add("E(phi) / H_omega (mass-critical)", abs(rep.energy) / rep.h_omega, 1e-6)

    v = gs.gn_trial_fields(grid, 1, spec.seed)[0]
    add(
        "GN quotient dilation invariance",
        abs(fn.gn_quotient(fn.dilate(v, 1.25), params) / fn.gn_quotient(v, params) - 1.0),
        1e-5,
    )
    if params.d == 3:
        trace = evolve(result.phi, params, EvolutionConfig(dt=spec.dt, t_end=1.0), reference=result.phi)
        add("standing wave orbit distance, t<=1", max(trace.distance_to_orbit), 1e-4)
        add("standing wave mass drift", trace.max_mass_drift, 1e-10)
        add("standing wave energy drift", trace.max_energy_drift, 1e-6)
    return rows
