import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inlsc import functionals as fn
from inlsc.evolution import (
    EvolutionConfig,
    OutcomeKind,
    evolve,
    file_digest,
    virial_bound_holds,
    linear_step,
    monitor_g_criterion,
    nonlinear_step,
    read_trace,
    step,
    write_manifest,
    write_trace,
    TRACE_COLUMNS,
)
from inlsc.model import RadialField, make_grid

from conftest import params_for, phi_for

P05 = params_for(0.5)


def shell(grid, centre=8.0):
    """Smooth data supported away from the singular origin."""
    return RadialField.from_function(grid, lambda r: np.exp(-((r - centre) ** 2)))


@pytest.fixture(scope="module")
def wide_grid():
    return make_grid(30.0, 2048)


# --- building blocks --------------------------------------------------------------


def test_linear_step_is_unitary(grid, rng):
    u = RadialField(grid, (1 + 0.3j) * np.exp(-grid.r**2 / 3) * (1 + rng.uniform(0, 0.1)))
    v = u
    for _ in range(20):
        v = linear_step(v, P05, 1e-2)
    assert fn.mass(v) == pytest.approx(fn.mass(u), rel=1e-12)


@given(dt=st.floats(1e-4, 1.0), amp=st.floats(0.1, 10.0))
@settings(max_examples=30, deadline=None)
def test_nonlinear_step_preserves_modulus(dt, amp):
    g = make_grid(10.0, 256)
    u = RadialField.from_function(g, lambda r: amp * np.exp(-r) * np.exp(1j * r))
    v = nonlinear_step(u, P05, dt)
    assert np.allclose(np.abs(v.values), np.abs(u.values), rtol=1e-14, atol=0)


def test_strang_step_keeps_mass(grid):
    u = phi_for(0.5)
    v = step(u, P05, 1e-3)
    assert fn.mass(v) == pytest.approx(fn.mass(u), rel=1e-12)
    with pytest.raises(ValueError):
        step(u, P05, 0.0)


def test_evolution_requires_three_dimensions():
    g = make_grid(10.0, 64, d=4)
    u = RadialField.from_function(g, lambda r: np.exp(-r * r))
    with pytest.raises(ValueError):
        evolve(u, params_for(0.5, d=4), EvolutionConfig(t_end=0.01))


@pytest.mark.parametrize(
    "kwargs", [dict(dt=0.0), dict(t_end=-1.0), dict(blowup_factor=1.0), dict(sample_every=0), dict(scheme="rk4")]
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        EvolutionConfig(**kwargs)


# --- dynamics ---------------------------------------------------------------------


@pytest.mark.parametrize("scheme", ["relaxation", "strang"])
def test_conservation_short_run(wide_grid, scheme):
    u = shell(wide_grid) * (1 + 0.5j)
    tr = evolve(u, P05, EvolutionConfig(dt=1e-3, t_end=0.5, scheme=scheme, sample_every=50))
    assert tr.outcome.kind is OutcomeKind.COMPLETED_GLOBAL
    assert tr.max_mass_drift <= 1e-10
    assert tr.max_energy_drift <= 1e-5
    assert tr.times[-1] == pytest.approx(0.5)


def test_standing_wave_stays_on_orbit():
    phi = phi_for(0.5)
    tr = evolve(phi, P05, EvolutionConfig(t_end=0.5), reference=phi)
    assert max(tr.distance_to_orbit) <= 1e-6
    # the phase advances at frequency omega
    phase = np.angle(tr.final.values[100] / phi.values[100])
    assert phase == pytest.approx(0.5, abs=1e-5)


def test_time_reversal(wide_grid):
    u = shell(wide_grid)
    cfg = EvolutionConfig(dt=1e-3, t_end=0.5)
    fwd = evolve(u, P05, cfg).final
    back = evolve(RadialField(wide_grid, np.conj(fwd.values)), P05, cfg).final
    err = fn.l2_norm(RadialField(wide_grid, np.conj(back.values)) - u) / fn.l2_norm(u)
    assert err <= 1e-5


@pytest.mark.parametrize("scheme", ["relaxation", "strang"])
def test_second_order_in_time(wide_grid, scheme):
    u = shell(wide_grid)
    p = params_for(1.0)

    def run(dt):
        return evolve(u, p, EvolutionConfig(dt=dt, t_end=0.5, energy_tol=1.0, scheme=scheme)).final

    ref = run(1e-2 / 8)
    errs = [fn.l2_norm(run(dt) - ref) for dt in (2e-2, 1e-2)]
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_blowup_flagged_for_mass_critical_data():
    p = params_for(1.0)
    phi = phi_for(1.0)
    u0 = fn.scale_amplitude_dilate(phi, 1.1, 1.1)
    tr = evolve(u0, p, EvolutionConfig(t_end=3.0), reference=phi)
    assert tr.blowup_indicated
    assert tr.h1_norms[-1] >= 10 * tr.h1_norms[0]
    assert tr.outcome.time < 3.0


def test_step_failure_outcome(wide_grid):
    # every step rejected: dt collapses without any growth of the solution
    u = shell(wide_grid)
    cfg = EvolutionConfig(dt=1e-3, t_end=0.1, energy_tol=1e-300, mass_tol=1e-300, dt_min=5e-4)
    tr = evolve(u, P05, cfg)
    assert tr.outcome.kind is OutcomeKind.STEP_FAILURE
    assert tr.steps == 0 and tr.rejected_steps >= 2


def test_adaptive_halving_recorded():
    p = params_for(1.5)
    phi = phi_for(1.5)
    tr = evolve(fn.dilate(phi, 1.1), p, EvolutionConfig(t_end=1.0))
    assert tr.blowup_indicated
    assert tr.rejected_steps > 0 and tr.dt_final < 1e-3


# --- monitors ---------------------------------------------------------------------


def test_intercritical_monitors():
    p = params_for(1.5)
    phi = phi_for(1.5)
    u0 = fn.dilate(phi, 1.1)
    gap = fn.report(phi, p).action - fn.report(u0, p).action
    tr = evolve(u0, p, EvolutionConfig(t_end=1.0, sample_every=20), reference=phi)
    assert all(tr.b_omega_member)
    assert all(virial_bound_holds(tr))
    assert monitor_g_criterion(tr, 2 * gap * (1 - 1e-6))
    assert not monitor_g_criterion(tr, -1.01 * fn.report(u0, p).virial_g)


def test_bound_check_needs_reference(wide_grid):
    tr = evolve(shell(wide_grid), P05, EvolutionConfig(t_end=0.01))
    with pytest.raises(ValueError):
        virial_bound_holds(tr)


# --- persistence ------------------------------------------------------------------


def test_trace_round_trip(tmp_path):
    phi = phi_for(0.5)
    cfg = EvolutionConfig(t_end=0.2, sample_every=50)
    tr = evolve(phi, P05, cfg, reference=phi)
    write_trace(tmp_path / "t.csv", tr)
    rows = read_trace(tmp_path / "t.csv")
    assert tuple(rows[0]) == TRACE_COLUMNS  # dict keys in column order
    assert len(rows) == len(tr.times)
    assert [r["t"] for r in rows] == tr.times
    assert [r["G"] for r in rows] == [rep.virial_g for rep in tr.reports]
    assert [r["dist_orbit"] for r in rows] == tr.distance_to_orbit

    write_manifest(tmp_path / "m.json", P05, cfg, phi.grid, tr, {"trace": tmp_path / "t.csv"})
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["outcome"]["kind"] == "CompletedGlobal"
    assert doc["inputs"]["trace"] == file_digest(tmp_path / "t.csv")


def test_evolution_is_deterministic(tmp_path):
    phi = phi_for(1.0)
    u0 = fn.scale_amplitude_dilate(phi, 1.1, 1.1)
    for name in ("a", "b"):
        write_trace(tmp_path / f"{name}.csv", evolve(u0, params_for(1.0), EvolutionConfig(t_end=0.3), reference=phi))
    assert file_digest(tmp_path / "a.csv") == file_digest(tmp_path / "b.csv")


def test_g_criterion_false_for_standing_wave():
    p = params_for(1.5)
    phi = phi_for(1.5)
    tr = evolve(phi, p, EvolutionConfig(t_end=0.2, sample_every=20), reference=phi)
    assert not monitor_g_criterion(tr, 1e-8)
