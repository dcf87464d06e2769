import numpy as np
import pytest

from inlsc.harness import ExperimentKind, ExperimentSpec, ground_state
from inlsc.model import ModelParams, make_grid

BASE = dict(d=3, b=0.5, c=0.1, omega=1.0)
SIGMAS = (0.5, 1.0, 1.5)

# criterion number -> (label, passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def params_for(sigma, **kw):
    return ModelParams(**{**BASE, "sigma": sigma, **kw})


def spec_for(kind, sigma, tmp_path=None, **kw):
    out = {"out_dir": tmp_path} if tmp_path is not None else {}
    return ExperimentSpec(kind=kind, params=params_for(sigma), **out, **kw)


def phi_for(sigma):
    return ground_state(spec_for(ExperimentKind.GROUND_STATE_ONLY, sigma)).phi


@pytest.fixture(scope="session")
def grid():
    return make_grid(20.0, 4096)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(20.0, 1024)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        label, ok, detail = ACCEPTANCE[num]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {label}: {detail}")
