"""Acceptance criteria at their stated tolerances.

Each test records a one-line verdict that is printed in the terminal summary
(and to stdout when run with ``-s``).
"""

import numpy as np
import pytest

from inlsc import functionals as fn
from inlsc import groundstate as gs
from inlsc.evolution import EvolutionConfig, OutcomeKind, evolve
from inlsc.harness import (
    ExperimentKind,
    random_fields,
    run_intercritical_instability,
    run_masscritical_blowup,
    run_stability,
)
from inlsc.model import RadialField, make_grid

from conftest import ACCEPTANCE, SIGMAS, params_for, phi_for, spec_for

K = ExperimentKind


def record(num, label, ok, detail):
    ACCEPTANCE[num] = (label, bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {label}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def out_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def stability_runs(out_dir):
    return {
        eps: run_stability(spec_for(K.STABILITY, 0.5, out_dir, eps_pert=eps, t_end=20.0))
        for eps in (0.04, 0.02, 0.01)
    }


def test_01_functional_identities(grid):
    worst_id = worst_g = 0.0
    h = 1e-5
    for sigma in SIGMAS:
        p = params_for(sigma)
        s = p.sigma
        for u in random_fields(grid, 50, seed=100):
            rep = fn.report(u, p)
            scale = max(abs(rep.action), rep.h_omega)
            a = abs(rep.action - (0.5 * rep.nehari + s / (2 * (s + 2)) * rep.potential))
            b = abs(rep.action - (rep.nehari / (s + 2) + s / (2 * (s + 2)) * rep.h_omega))
            worst_id = max(worst_id, max(a, b) / scale)
            lo, hi = fn.action_along_dilation(u, p, [1 - h, 1 + h])
            fd = (hi.action - lo.action) / (2 * h)
            worst_g = max(worst_g, abs(fd - rep.virial_g) / max(1.0, abs(rep.virial_g)))
    ok = worst_id <= 1e-12 and worst_g <= 1e-8
    record(1, "functional identities", ok, f"action forms {worst_id:.1e} (<=1e-12), G vs FD {worst_g:.1e} (<=1e-8)")


def test_02_gradient_check(grid):
    eps = 1e-5
    worst = 0.0
    for sigma in SIGMAS:
        p = params_for(sigma)
        fields = random_fields(grid, 40, seed=200)
        for u, v in zip(fields[:20], fields[20:]):
            exact = fn.l2_inner(fn.gradient_action(u, p), v)
            fd = (fn.report(u + v * eps, p).action - fn.report(u - v * eps, p).action) / (2 * eps)
            worst = max(worst, abs(exact - fd) / (1 + abs(exact)))
    record(2, "gradient vs finite differences", worst <= 1e-6, f"20 pairs x 3 sigma, worst {worst:.1e} (<=1e-6)")


def test_03_ground_state_certificate():
    parts = []
    ok = True
    for sigma in SIGMAS:
        p = params_for(sigma)
        res = gs.solve_ground_state(p)
        peak = gs.dilation_peak_defect(res.phi, p)
        poh = max(res.pohozaev_defects)
        good = res.residual <= 1e-8 and res.nehari_defect <= 1e-8 and poh <= 1e-5 and peak <= 1e-4
        ok &= good
        parts.append(f"s={sigma}: res {res.residual:.1e} K {res.nehari_defect:.1e} Poh {poh:.1e} peak {peak:.1e}")
    record(3, "ground-state certificate", ok, "; ".join(parts))


def test_04_mass_critical_zero_energy():
    p = params_for(1.0)
    rep = fn.report(phi_for(1.0), p)
    ratio = abs(rep.energy) / rep.h_omega
    record(4, "mass-critical zero energy", ratio <= 1e-6, f"|E|/H_omega = {ratio:.1e} (<=1e-6)")


def test_05_gn_optimality(grid):
    ok = True
    parts = []
    worst_dil = 0.0
    for sigma in SIGMAS:
        p = params_for(sigma, omega=1.0)
        j_phi = fn.gn_quotient(phi_for(sigma), p)
        trials = gs.gn_trial_fields(grid, 100, seed=0)
        j = [fn.gn_quotient(v, p) for v in trials]
        margin = j_phi - max(j)
        ok &= margin >= -1e-6
        parts.append(f"s={sigma} margin {margin:.2e}")
        for v, jv in zip(trials[:20], j[:20]):
            for lam in (0.8, 1.25):
                worst_dil = max(worst_dil, abs(fn.gn_quotient(fn.dilate(v, lam), p) / jv - 1))
    ok &= worst_dil <= 1e-5
    record(5, "GN optimality", ok, "; ".join(parts) + f"; dilation invariance {worst_dil:.1e} (<=1e-5)")


def test_06_standing_wave_fidelity():
    ok = True
    parts = []
    for sigma in SIGMAS:
        p = params_for(sigma)
        phi = phi_for(sigma)
        tr = evolve(phi, p, EvolutionConfig(dt=1e-3, t_end=1.0, sample_every=10), reference=phi)
        dist = max(tr.distance_to_orbit)
        good = dist <= 1e-4 and tr.max_mass_drift <= 1e-10 and tr.max_energy_drift <= 1e-6
        ok &= good and tr.outcome.kind is OutcomeKind.COMPLETED_GLOBAL
        parts.append(f"s={sigma}: dist {dist:.1e} dM {tr.max_mass_drift:.1e} dE {tr.max_energy_drift:.1e}")
    record(6, "standing-wave fidelity", ok, "; ".join(parts))


def test_07_conservation(stability_runs):
    runs = [r for r in stability_runs.values() if r.outcome == "CompletedGlobal"]
    dm = max(r.scalars["max_mass_drift"] for r in runs)
    de = max(r.scalars["max_energy_drift"] for r in runs)
    ok = len(runs) == len(stability_runs) and dm <= 1e-6 and de <= 1e-5
    record(7, "conservation over t=20 runs", ok, f"{len(runs)} runs, mass {dm:.1e} (<=1e-6), energy {de:.1e} (<=1e-5)")


def test_08_stability(stability_runs):
    d = {eps: r.scalars["sup_distance_relative"] for eps, r in stability_runs.items()}
    monotone = d[0.04] >= d[0.02] >= d[0.01]
    ok = stability_runs[0.01].headline["stable"] and d[0.01] <= 0.1 and monotone
    table = ", ".join(f"eps {e}: {v:.4f}" for e, v in d.items())
    record(8, "orbital stability", ok, f"sup dist / ||phi||_H1 -> {table}; non-increasing {monotone}")


def test_09_mass_critical_instability(out_dir):
    reps = {
        mu: run_masscritical_blowup(spec_for(K.MASS_CRITICAL_BLOWUP, 1.0, out_dir, mu0=mu, lambda0=mu, t_end=20.0))
        for mu in (1.1, 1.05)
    }
    ok = True
    parts = []
    for mu, rep in reps.items():
        s = rep.scalars
        good = (
            s["energy_u0"] < 0
            and s["energy_relative_error"] <= 1e-4
            and rep.headline["blowup_indicated"]
            and s["hdot1_growth"] >= 10
            and s["blowup_time"] < 20
        )
        ok &= good
        parts.append(f"mu=lam={mu}: E {s['energy_u0']:.4f} (rel err {s['energy_relative_error']:.1e}) blowup t={s['blowup_time']:.3f} dist {s['distance_u0_phi']:.3f}")
    closer = reps[1.05].scalars["distance_u0_phi"] < reps[1.1].scalars["distance_u0_phi"]
    record(9, "mass-critical instability", ok and closer, "; ".join(parts))


def test_10_intercritical_instability(out_dir):
    rep = run_intercritical_instability(spec_for(K.INTERCRITICAL_INSTABILITY, 1.5, out_dir, lambda0=1.1, t_end=20.0))
    h = rep.headline
    ok = h["entry_conditions"] and h["b_omega_invariant"] and h["virial_bound"] and h["blowup_indicated"]
    ok &= rep.scalars["blowup_time"] < 20
    record(
        10,
        "intercritical instability",
        ok,
        f"entry ok, B_omega {h['b_omega_invariant']}, bound {h['virial_bound']}, blowup t={rep.scalars['blowup_time']:.4f}",
    )


def test_11_convergence_orders():
    grid = make_grid(30.0, 2048)
    p = params_for(1.0)
    u = RadialField.from_function(grid, lambda r: np.exp(-((r - 8.0) ** 2)))

    def run(dt):
        return evolve(u, p, EvolutionConfig(dt=dt, t_end=0.5, energy_tol=1.0)).final

    ref = run(5e-3 / 8)
    errs = [fn.l2_norm(run(dt) - ref) for dt in (2e-2, 1e-2, 5e-3)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    time_ok = all(3.5 <= q <= 4.5 for q in ratios)

    changes = []
    for sigma in SIGMAS:
        prm = params_for(sigma)
        coarse = gs.solve_ground_state(prm)
        fine = gs.solve_ground_state(prm, init=gs.resample_to(coarse.phi, coarse.phi.grid.refined(2)))
        changes.append(abs(fine.action_level - coarse.action_level) / coarse.action_level)
    grid_ok = max(changes) < 1e-4
    record(
        11,
        "convergence orders",
        time_ok and grid_ok,
        f"time error ratios {ratios[0]:.2f}, {ratios[1]:.2f} (~4); action change on grid doubling {max(changes):.1e} (<1e-4)",
    )
