"""Command-line interface.

    ersolve run --config case.json [--out DIR]
    ersolve verify SUITE [--levels N] [--seed S] [--quick] [--json] [--report FILE]
    ersolve export --run DIR [--format csv,vtk]
    ersolve default-config

Exit status: 0 success, 2 configuration error, 3 inadmissible model,
4 non-convergence or failed runtime check.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .config import ConfigError, ModelError, build_case, config_hash, default_config, load_config
from .export import export_fields, export_run, save_fields
from .models import ConstitutiveViolation, validate_constitutive
from .solver import penalty_continuation, solve, system_box

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_SOLVER = 0, 2, 3, 4
NORMAL_TOL = 1e-12
CONSTRAINT_TOL = 1e-10


def _err(msg: str) -> None:
    print(f"ersolve: {msg}", file=sys.stderr)


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def runtime_checks(system, report) -> dict:
    """Invariants every accepted run must satisfy."""
    checks = {
        "converged": bool(report.converged),
        "finite": bool(math.isfinite(report.z_norm)),
        "normal_velocity": bool(report.normal_velocity_max <= NORMAL_TOL),
    }
    if report.method == "mixed":
        checks["constraint"] = bool(report.constraint_l2 <= CONSTRAINT_TOL * report.z_norm + 1e-14)
    if report.a_priori is not None:
        checks["a_priori_bound"] = bool(report.a_priori["holds"])
    return checks


def cmd_run(args) -> int:
    try:
        cfg, base = load_config(args.config)
        case = build_case(cfg, base)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except ModelError as exc:
        _err(f"inadmissible model: {exc}")
        return EXIT_MODEL
    system = case.system
    try:
        bounds = validate_constitutive(system.viscosity, system.slip, system_box(system))
    except ConstitutiveViolation as exc:
        _err(f"inadmissible model: {exc}")
        return EXIT_MODEL
    system._cache["bounds"] = bounds

    out = Path(args.out or cfg.get("output", {}).get("dir") or "ersolve-run")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _err(f"cannot create output directory {out}: {exc.strerror}")
        return EXIT_CONFIG

    if case.solver.method == "penalty" and case.solver.alpha_schedule:
        runs = penalty_continuation(system, case.solver.alpha_schedule, case.solver)
        fields, report = runs[-1][1], runs[-1][2]
        history = [{"alpha": a, "div_l2": r.div_l2, "converged": r.converged} for a, _, r in runs]
    else:
        fields, report = solve(system, case.solver)
        history = None
    checks = runtime_checks(system, report)
    ok = all(checks.values())

    formats = cfg.get("output", {}).get("formats", ["csv"])
    save_fields(out, case.mesh, fields)
    export_fields(out, case.mesh, fields.velocity_coords, fields.velocity, fields.pressure, formats)
    rep = {"solver": report.as_dict(), "bounds": bounds.as_dict(), "checks": checks,
           "exit_status": EXIT_OK if ok else EXIT_SOLVER}
    if history is not None:
        rep["continuation"] = history
    _dump(out / "report.json", rep)
    _dump(out / "manifest.json", {
        "config_sha256": config_hash(cfg), "config": cfg, "seed": case.seed,
        "versions": {"ersolve": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "kernel_backend": kernels.BACKEND,
        "files": sorted(p.name for p in out.iterdir() if p.name != "manifest.json"),
    })
    if not ok:
        failed = [k for k, v in checks.items() if not v]
        _err(f"run failed checks {failed}: {report.message or 'see report.json'}")
        return EXIT_SOLVER
    print(f"converged in {report.outer_iterations} outer iteration(s); "
          f"z-norm {report.z_norm:.6g}; results in {out}")
    return EXIT_OK


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _table(report: dict) -> list[str]:
    parts = report["suites"] if report["suite"] == "all" else [report]
    lines = []
    for part in parts:
        lines.append(f"[{part['suite']}] {'PASS' if part['passed'] else 'FAIL'} "
                     f"({part.get('wall_time', 0.0):.1f} s)")
        for c in part["criteria"]:
            lines.append(f"  {'PASS' if c['passed'] else 'FAIL'}  {c['name']}: "
                         f"{_fmt(c['value'])} (required {_fmt(c['threshold'])})")
    return lines


def cmd_verify(args) -> int:
    from .solver import _jsonable
    from .verify import run_suite
    report = _jsonable(run_suite(args.suite, args.levels, args.seed, args.quick))
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print("\n".join(_table(report)))
    if args.report:
        _dump(Path(args.report), report)
    return EXIT_OK if report["passed"] else EXIT_SOLVER


def cmd_export(args) -> int:
    run = Path(args.run)
    if not (run / "fields.npz").is_file() or not (run / "mesh.txt").is_file():
        _err(f"{run} is not a run directory (fields.npz and mesh.txt expected)")
        return EXIT_CONFIG
    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    try:
        paths = export_run(run, formats)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(f"cannot write output: {exc}")
        return EXIT_CONFIG
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_default_config(args) -> int:
    print(json.dumps(default_config(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ersolve", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"ersolve {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve a case described by a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides output.dir)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=["infsup", "monotonicity", "convergence", "channel",
                                     "penalty-rate", "all"])
    v.add_argument("--levels", type=int)
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--quick", action="store_true", help="smaller meshes and fewer trials")
    v.add_argument("--json", action="store_true", help="print the JSON report instead of a table")
    v.add_argument("--report", help="also write the JSON report to this file")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("export", help="re-export fields of a finished run")
    e.add_argument("--run", required=True)
    e.add_argument("--format", default="csv,vtk")
    e.set_defaults(func=cmd_export)

    d = sub.add_parser("default-config", help="print the default case config")
    d.set_defaults(func=cmd_default_config)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
