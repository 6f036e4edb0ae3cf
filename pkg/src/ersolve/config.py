"""JSON case configuration: schema validation and object construction."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .assembly import DiscreteSystem, VectorSource
from .expressions import Expression, ExpressionError
from .mesh import Mesh, MeshError, load_mesh, rectangle_mesh, refine_uniform
from .models import ElectricField, ERSlip, ERViscosity, MuSettings
from .mollify import MollifierKernel
from .solver import SolverConfig


class ConfigError(ValueError):
    """Unreadable or schema-violating configuration (CLI exit status 2)."""


class ModelError(ValueError):
    """Inadmissible model parameters (CLI exit status 3)."""


def load_schema() -> dict:
    return json.loads(resources.files("ersolve").joinpath("schema/case.schema.json").read_text())


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def validate_config(cfg) -> dict:
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    sched = cfg.get("solver", {}).get("alpha_schedule")
    if sched and any(b >= a for a, b in zip(sched, sched[1:])):
        raise ConfigError("config invalid at solver/alpha_schedule: must be strictly decreasing")
    return cfg


def load_config(path) -> tuple[dict, Path]:
    """Read and validate a config file; returns (config, its directory)."""
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return validate_config(cfg), path.resolve().parent


@dataclass
class Case:
    """Objects built from a validated config."""

    config: dict
    mesh: Mesh
    system: DiscreteSystem
    solver: SolverConfig
    seed: int


def _resolve(base: Path, name: str) -> Path:
    p = Path(name)
    return p if p.is_absolute() else base / p


def build_mesh(spec: dict, base: Path) -> Mesh:
    if "file" in spec:
        path = _resolve(base, spec["file"])
        if not path.is_file():
            raise ConfigError(f"mesh file not found: {path}")
        try:
            m = load_mesh(path)
        except MeshError as exc:
            raise ConfigError(f"bad mesh file {path}: {exc}") from None
    else:
        r = dict(spec["rectangle"])
        try:
            m = rectangle_mesh(r.pop("nx"), r.pop("ny"), **r)
        except MeshError as exc:
            raise ConfigError(f"bad rectangle mesh: {exc}") from None
    for _ in range(spec.get("refine", 0)):
        m = refine_uniform(m)
    return m


def _nodal(value, mesh: Mesh, base: Path, what: str) -> np.ndarray:
    if isinstance(value, str):
        path = _resolve(base, value)
        if not path.is_file():
            raise ConfigError(f"{what}: nodal file not found: {path}")
        try:
            arr = np.loadtxt(path, delimiter=None if path.suffix != ".csv" else ",", ndmin=2)
        except ValueError as exc:
            raise ConfigError(f"{what}: cannot parse {path}: {exc}") from None
    else:
        arr = np.asarray(value, dtype=float)
    if arr.shape != (mesh.n_nodes, 2):
        raise ConfigError(f"{what}: nodal table needs {mesh.n_nodes} rows of 2 values, got {arr.shape}")
    return arr


def _exprs(pair, variables, what):
    try:
        return [Expression(e, variables) for e in pair]
    except ExpressionError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def build_vector(spec: dict | None, mesh: Mesh, base: Path, what: str, boundary: bool = False):
    if spec is None:
        return None
    if "constant" in spec:
        return VectorSource(value=spec["constant"])
    if "nodal" in spec:
        return VectorSource(nodal=_nodal(spec["nodal"], mesh, base, what))
    variables = ("x1", "x2", "n1", "n2") if boundary else ("x1", "x2")
    e1, e2 = _exprs(spec["expr"], variables, what)
    return VectorSource(func=lambda *a: (e1(*a), e2(*a)), uses_normal=boundary)


def build_efield(spec: dict | None, mesh: Mesh, base: Path) -> ElectricField | None:
    if spec is None:
        return None
    if "uniform" in spec:
        return ElectricField.uniform(spec["uniform"], mesh)
    if "nodal" in spec:
        return ElectricField.nodal(mesh, _nodal(spec["nodal"], mesh, base, "efield"))
    e1, e2 = _exprs(spec["expr"], ("x1", "x2"), "efield")
    return ElectricField.analytic(e1, e2, mesh)


def build_case(cfg: dict, base: Path | str = ".") -> Case:
    """Construct mesh, models and system from a validated config.

    Raises :class:`ConfigError` for input problems and :class:`ModelError`
    for parameter values the model families reject.
    """
    base = Path(base)
    mesh = build_mesh(cfg["mesh"], base)
    try:
        visc = ERViscosity(**cfg.get("viscosity", {}))
        slip = ERSlip(**cfg.get("slip", {}))
        mu = MuSettings(**{k: tuple(v) if k == "frame_velocity" else v
                           for k, v in cfg.get("mu", {}).items()})
    except ValueError as exc:
        raise ModelError(str(exc)) from None
    if any(mu.frame_velocity):
        raise ConfigError("mu/frame_velocity: a moving frame with slip walls is unsupported")
    kernel = MollifierKernel(cfg["mollifier"]["radius"]) if "radius" in cfg.get("mollifier", {}) else None
    system = DiscreteSystem(
        mesh, visc, slip, build_efield(cfg.get("efield"), mesh, base), mu, kernel,
        body_force=build_vector(cfg.get("body_force"), mesh, base, "body_force"),
        traction=build_vector(cfg.get("traction"), mesh, base, "traction", boundary=True))
    s = dict(cfg.get("solver", {}))
    if "alpha_schedule" in s:
        s["alpha_schedule"] = tuple(s["alpha_schedule"])
    try:
        solver = SolverConfig(**s)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None
    return Case(cfg, mesh, system, solver, int(cfg.get("seed", 0)))


def default_config() -> dict:
    """The documented default ER case on a 16 x 16 unit square."""
    return {
        "mesh": {"rectangle": {"nx": 16, "ny": 16,
                               "sides": {"bottom": "S1", "top": "S1", "left": "S2", "right": "S2"}}},
        "viscosity": {"psi0": 1.0, "k0": 1.0, "k1": 1.0, "k2": 0.5, "lam": 1.0},
        "slip": {"c0": 1.0, "c1": 1.0, "c2": 2.0, "s0": 1.0, "f0": 1.0},
        "efield": {"uniform": [0.0, 1.0]},
        "mu": {"alpha_reg": 1e-2},
        "body_force": {"constant": [1.0, 0.0]},
        "traction": {"constant": [0.0, 0.0]},
        "solver": {"method": "mixed", "tol_fp": 1e-8, "tol_newton": 1e-10, "damping": 1.0},
        "output": {"formats": ["csv", "vtk"]},
        "seed": 0,
    }
