"""Command-line front end.

Exit codes: 0 when a report is produced, 1 when an experiment refuses to
run, 2 on usage or internal errors.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

from . import functionals as fn
from . import groundstate as gs
from .errors import RefusesRun
from .evolution import EvolutionConfig, evolve, write_manifest, write_trace
from .harness import ExperimentKind, ExperimentReport, ExperimentSpec, run, stability_table, verify_suite
from .model import ModelParams

log = logging.getLogger("inlsc")

EXIT_OK, EXIT_REFUSED, EXIT_ERROR = 0, 1, 2
SECTION = "experiment"

DEFAULTS = {
    "d": "3",
    "b": "0.5",
    "c": "0.1",
    "omega": "1.0",
    "r_max": "20",
    "n": "4096",
    "grid_scheme": "graded",
    "dt": "1e-3",
    "t_end": "20",
    "mu0": "1.1",
    "lambda0": "1.1",
    "eps_pert": "0.01",
    "seed": "0",
    "out_dir": "inlsc-out",
}

# sigma default per subcommand: one representative of each regime
SIGMA_DEFAULT = {
    "groundstate": "1.0",
    "evolve": "0.5",
    "stability": "0.5",
    "blowup-critical": "1.0",
    "instability": "1.5",
    "gn": "1.0",
    "verify": "1.0",
}

KINDS = {
    "groundstate": ExperimentKind.GROUND_STATE_ONLY,
    "stability": ExperimentKind.STABILITY,
    "blowup-critical": ExperimentKind.MASS_CRITICAL_BLOWUP,
    "instability": ExperimentKind.INTERCRITICAL_INSTABILITY,
    "gn": ExperimentKind.GN_CONSTANT,
    "verify": ExperimentKind.GROUND_STATE_ONLY,
}

_FLOAT_KEYS = ("b", "sigma", "c", "omega", "r_max", "dt", "t_end", "mu0", "lambda0", "eps_pert")
_INT_KEYS = ("d", "n", "seed")
KEYS = set(DEFAULTS) | {"sigma"}


class ConfigError(Exception):
    pass


def read_config(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` file; '#' starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(f"[{SECTION}]\n" + path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    values = dict(parser[SECTION])
    unknown = sorted(set(values) - KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s) in {path}: {', '.join(unknown)}")
    return values


def build_spec(command: str, values: dict[str, str]) -> ExperimentSpec:
    merged = {**DEFAULTS, "sigma": SIGMA_DEFAULT[command], **values}
    try:
        typed = {k: float(merged[k]) for k in _FLOAT_KEYS}
        typed.update({k: int(merged[k]) for k in _INT_KEYS})
    except ValueError as exc:
        raise ConfigError(f"bad numeric value: {exc}") from exc
    params = ModelParams(typed["d"], typed["b"], typed["sigma"], typed["c"], typed["omega"])
    return ExperimentSpec(
        kind=KINDS.get(command, ExperimentKind.GROUND_STATE_ONLY),
        params=params,
        eps_pert=typed["eps_pert"],
        mu0=typed["mu0"],
        lambda0=typed["lambda0"],
        r_max=typed["r_max"],
        n=typed["n"],
        grid_scheme=merged["grid_scheme"],
        dt=typed["dt"],
        t_end=typed["t_end"],
        seed=typed["seed"],
        out_dir=Path(merged["out_dir"]),
    )


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inlsc", description="Ground states and dynamics of the radial INLS equation with inverse-square potential.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SIGMA_DEFAULT:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value file")
        for key in sorted(KEYS):
            p.add_argument("--" + key.replace("_", "-"), dest=key)
        if name == "stability":
            p.add_argument("--table", action="store_true", help="also run eps_pert in {0.04, 0.02, 0.01}")
        if name == "evolve":
            p.add_argument("--field", help="binary field file to evolve (default: ground state scaled by mu0, lambda0)")
            p.add_argument("--sidecar", help="JSON sidecar giving the grid scheme of --field")
    return parser


def _print_report(report: ExperimentReport) -> None:
    print(f"{report.kind.value}: {report.outcome}")
    for key, val in sorted(report.headline.items()):
        print(f"  {key:32s} {val}")
    for key, val in sorted(report.scalars.items()):
        print(f"  {key:32s} {val:.6g}")
    if "report" in report.paths:
        print(f"  report written to {report.paths['report']}")


def _cmd_verify(spec: ExperimentSpec) -> int:
    rows = verify_suite(spec)
    width = max(len(r.name) for r in rows)
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:{width}s}  {r.value:.3e}  (tol {r.tolerance:.1e})")
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    out = spec.out_dir / "verify.json"
    out.write_text(json.dumps([r.__dict__ for r in rows], indent=2) + "\n")
    print(f"{sum(r.passed for r in rows)}/{len(rows)} checks passed; table written to {out}")
    return EXIT_OK


def _cmd_evolve(spec: ExperimentSpec, field: str | None, sidecar: str | None) -> int:
    params = spec.params
    if field:
        u0, file_params = gs.load_with_sidecar(field, sidecar) if sidecar else gs.load_field(field)
        if file_params != params:
            log.warning("field file parameters %s override config", file_params)
            params = file_params
        phi = None
    else:
        phi = gs.solve_ground_state(params, grid=spec.grid()).phi
        u0 = fn.scale_amplitude_dilate(phi, spec.mu0, spec.lambda0)
    config = EvolutionConfig(dt=spec.dt, t_end=spec.t_end)
    trace = evolve(u0, params, config, reference=phi)
    run_dir = spec.out_dir / f"evolve-{spec.run_id().split('-', 1)[1]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    init_path = run_dir / "initial.bin"
    gs.save_field(init_path, u0, params)
    write_trace(run_dir / "trace.csv", trace)
    write_manifest(run_dir / "manifest.json", params, config, u0.grid, trace, {"initial": init_path})
    report = ExperimentReport(
        kind=spec.kind,
        inputs=spec.as_dict(),
        outcome=str(trace.outcome),
        headline={"blowup_indicated": trace.blowup_indicated, "boundary_ok": bool(all(trace.boundary_ok))},
        scalars={
            "max_mass_drift": trace.max_mass_drift,
            "max_energy_drift": trace.max_energy_drift,
            "steps": float(trace.steps),
            "final_hdot1": trace.h1_norms[-1],
        },
        paths={"trace": str(run_dir / "trace.csv"), "manifest": str(run_dir / "manifest.json"), "report": str(run_dir / "report.json")},
    )
    report.write(report.paths["report"])
    _print_report(report)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        values = read_config(args.config) if args.config else {}
        values.update({k: getattr(args, k) for k in KEYS if getattr(args, k) is not None})
        spec = build_spec(args.command, values)
        if args.command == "verify":
            return _cmd_verify(spec)
        if args.command == "evolve":
            return _cmd_evolve(spec, args.field, args.sidecar)
        report = run(spec)
        _print_report(report)
        if args.command == "stability" and args.table:
            print("  eps_pert  sup distance / ||phi||_H1")
            for eps, dist in stability_table(spec):
                print(f"  {eps:8.3g}  {dist:.4e}")
        return EXIT_OK
    except RefusesRun as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - reported as an internal failure
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
