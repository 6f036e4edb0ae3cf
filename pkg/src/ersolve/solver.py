"""Penalty and mixed solvers driven by a frozen-coefficient fixed point.

Each outer iteration freezes the angle function inside the viscosity and
the regularized normal traction inside the slip coefficient at the current
iterate.  The remaining nonlinearities (strain invariant, tangential speed)
are handled by damped Newton on the block system

    [ J   -B^T     ] [du]     [R_u]
    [ -B  -alpha Mp] [dp] = - [R_p]

with ``R_u = A(u) - B^T p - f`` and ``R_p = -B u - alpha Mp p``.  The mixed
method uses ``alpha = 0``; the penalty method uses ``alpha > 0``, which is
the same as adding ``alpha^-1 B^T Mp^-1 B`` to the velocity block and
recovering ``p = -alpha^-1 Mp^-1 B u``.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .assembly import DiscreteSystem
from .models import CertifiedBounds, ConstitutiveViolation, ValidationBox, validate_constitutive

ARMIJO = 1e-4
MAX_BACKTRACKS = 8
# smallest admissible |pivot| / max |pivot| of the mixed saddle factorization;
# regular Taylor-Hood systems sit near h^2, exact null modes near 1e-18
PIVOT_RTOL = 1e-12
SINGULAR_MIXED = "saddle system singular — check inf-sup (run verify.infsup_estimate)"
SINGULAR_PENALTY = "penalty matrix singular"


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings; ``damping`` is the outer relaxation factor theta."""

    method: str = "mixed"
    alpha: float = 1e-6
    alpha_schedule: tuple[float, ...] = ()
    tol_fp: float = 1e-8
    tol_newton: float = 1e-10
    max_outer: int = 100
    max_inner: int = 30
    damping: float = 1.0
    slip_variant: str = "traction"

    def __post_init__(self):
        if self.method not in ("mixed", "penalty"):
            raise ValueError("method must be 'mixed' or 'penalty'")
        if not (self.tol_fp > 0 and self.tol_newton > 0):
            raise ValueError("tolerances must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        sched = tuple(float(a) for a in self.alpha_schedule)
        if any(a <= 0 for a in sched):
            raise ValueError("alpha schedule entries must be positive")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("alpha schedule must be strictly decreasing")
        object.__setattr__(self, "alpha_schedule", sched)
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")
        if self.slip_variant not in ("traction", "mollified-velocity"):
            raise ValueError("slip_variant must be 'traction' or 'mollified-velocity'")


@dataclass(eq=False)
class SolutionFields:
    """Velocity at all velocity nodes (Cartesian) and P1 nodal pressure."""

    velocity: np.ndarray
    pressure: np.ndarray
    u_free: np.ndarray
    velocity_coords: np.ndarray
    pressure_coords: np.ndarray


@dataclass
class SolverReport:
    method: str
    alpha: float | None = None
    converged: bool = False
    message: str = ""
    outer_iterations: int = 0
    inner_iterations: list[int] = field(default_factory=list)
    residual_history: list[list[float]] = field(default_factory=list)
    fixed_point_history: list[dict] = field(default_factory=list)
    contraction_ratio: float | None = None
    damping_flagged: bool = False
    div_l2: float = math.nan
    constraint_l2: float = math.nan
    z_norm: float = math.nan
    achieved: dict = field(default_factory=dict)
    a_priori: dict | None = None
    normal_velocity_max: float = math.nan
    wall_time: float = 0.0

    def as_dict(self) -> dict:
        d = asdict(self)
        return _jsonable(d)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


class SolverError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# helpers


def system_box(system: DiscreteSystem) -> ValidationBox:
    """Validation box covering the field magnitudes seen by ``system``."""
    e = system.e_q
    return ValidationBox(e_max=float(e.max()), e_min=float(e.min()))


def certified_bounds(system: DiscreteSystem) -> CertifiedBounds | None:
    """Certified constants of the system's models, cached on the system."""
    if "bounds" not in system._cache:
        try:
            system._cache["bounds"] = validate_constitutive(system.viscosity, system.slip,
                                                            system_box(system))
        except ConstitutiveViolation:
            system._cache["bounds"] = None
    return system._cache["bounds"]


def frozen_is_constant(system: DiscreteSystem, slip_variant: str = "traction") -> bool:
    """True when the frozen coefficients cannot depend on the iterate."""
    if system.angle_dependent or system.traction_dependent:
        return False
    if slip_variant == "mollified-velocity":
        return not getattr(system.slip, "depends_on_speed", True)
    return True


def _fields(system: DiscreteSystem, u, p) -> SolutionFields:
    d = system.dofs
    return SolutionFields(d.to_full(u), np.asarray(p, dtype=float).copy(), np.asarray(u).copy(),
                          d.vspace.coords, d.pspace.coords)


class _Inner:
    """Newton solver for one frozen-coefficient problem."""

    def __init__(self, system: DiscreteSystem, alpha: float, cfg: SolverConfig):
        self.sys = system
        self.alpha = alpha
        self.cfg = cfg
        self.B = system.B
        self.f = system.load
        self.C = (alpha * system.pressure_mass).tocsr() if alpha > 0 else None
        self.nu = system.n_free

    def residual(self, x, frozen):
        u, p = x[: self.nu], x[self.nu:]
        ru, J = self.sys.operator(u, frozen)
        ru = ru - self.B.T @ p - self.f
        rp = -(self.B @ u)
        if self.C is not None:
            rp = rp - self.C @ p
        return np.concatenate([ru, rp]), J

    def jacobian(self, J):
        lower = -self.C if self.C is not None else None
        return sparse.bmat([[J, -self.B.T], [-self.B, lower]], format="csc")

    def solve(self, x0, frozen):
        cfg = self.cfg
        x = np.array(x0, dtype=float)
        r, J = self.residual(x, frozen)
        rn = float(np.linalg.norm(r))
        scale = float(np.linalg.norm(self.f)) or rn
        history = [rn]
        flagged = False
        it = 0
        while it < cfg.max_inner:
            if it > 0 and rn <= cfg.tol_newton * scale:
                break
            K = self.jacobian(J)
            try:
                lu = spla.splu(K)
            except RuntimeError as exc:
                raise SolverError(SINGULAR_PENALTY if self.C is not None else SINGULAR_MIXED) from exc
            if self.C is None:
                piv = np.abs(lu.U.diagonal())
                if piv.size and piv.min() <= PIVOT_RTOL * piv.max():
                    raise SolverError(SINGULAR_MIXED)
            dx = -lu.solve(r)
            if not np.all(np.isfinite(dx)):
                raise SolverError(SINGULAR_PENALTY if self.C is not None else SINGULAR_MIXED)
            t = 1.0
            for _ in range(MAX_BACKTRACKS + 1):
                xn = x + t * dx
                rn_new = math.inf
                try:
                    r_new, J_new = self.residual(xn, frozen)
                    rn_new = float(np.linalg.norm(r_new))
                except FloatingPointError:
                    pass
                if rn_new <= (1.0 - ARMIJO * t) * rn or rn == 0.0:
                    break
                t *= 0.5
            else:
                flagged = True
                if not math.isfinite(rn_new):
                    raise SolverError("non-finite residual in Newton step")
            x, r, J, rn = xn, r_new, J_new, rn_new
            history.append(rn)
            it += 1
        converged = rn <= cfg.tol_newton * scale or rn == 0.0
        return x, it, history, converged, flagged, rn / scale if scale else 0.0


def outer_fixed_point(system: DiscreteSystem, cfg: SolverConfig, alpha: float = 0.0,
                      u0=None, p0=None) -> tuple[SolutionFields, SolverReport]:
    """Damped fixed-point iteration over the frozen coefficients.

    ``alpha = 0`` gives the mixed method, ``alpha > 0`` the penalty method.
    """
    t0 = time.perf_counter()
    report = SolverReport(method="penalty" if alpha > 0 else "mixed", alpha=alpha if alpha > 0 else None)
    nu, npr = system.n_free, system.n_pressure
    u = np.zeros(nu) if u0 is None else np.array(u0, dtype=float)
    p = np.zeros(npr) if p0 is None else np.array(p0, dtype=float)
    inner = _Inner(system, alpha, cfg)
    theta = cfg.damping
    constant = frozen_is_constant(system, cfg.slip_variant)
    prev_dz = None
    newton_rel = 0.0
    try:
        for k in range(1, cfg.max_outer + 1):
            frozen = system.freeze(u, p, cfg.slip_variant)
            x, its, hist, ok, flagged, rel = inner.solve(np.concatenate([u, p]), frozen)
            report.inner_iterations.append(its)
            report.residual_history.append(hist)
            report.damping_flagged |= flagged
            newton_rel = rel
            if not ok:
                report.message = f"inner Newton did not converge in outer iteration {k}"
                report.outer_iterations = k
                break
            u_hat, p_hat = x[:nu], x[nu:]
            u_new = (1.0 - theta) * u + theta * u_hat
            p_new = (1.0 - theta) * p + theta * p_hat
            dz = system.z_norm(u_new - u)
            dp = system.pressure_l2(p_new - p)
            zu = system.z_norm(u)
            pu = system.pressure_l2(p)
            ratio = dz / prev_dz if prev_dz else None
            report.fixed_point_history.append({"dz": dz, "dp": dp, "ratio": ratio})
            if ratio is not None:
                report.contraction_ratio = ratio
            prev_dz = dz
            u, p = u_new, p_new
            report.outer_iterations = k
            if constant and theta == 1.0:
                report.converged = True
                break
            if dz <= cfg.tol_fp * max(1.0, zu) and dp <= cfg.tol_fp * max(1.0, pu):
                report.converged = True
                break
        else:
            report.message = (f"fixed point not converged in {cfg.max_outer} outer iterations; "
                              f"last contraction ratio {report.contraction_ratio}")
    except (SolverError, FloatingPointError) as exc:
        report.message = str(exc)
        report.converged = False

    last = report.fixed_point_history[-1] if report.fixed_point_history else {}
    report.achieved = {"fixed_point_dz": last.get("dz"), "fixed_point_dp": last.get("dp"),
                       "newton_relative_residual": newton_rel}
    _finish(system, report, u, p, t0)
    return _fields(system, u, p), report


def _finish(system: DiscreteSystem, report: SolverReport, u, p, t0):
    report.div_l2 = system.div_l2(u)
    report.constraint_l2 = system.constraint_l2(u)
    report.z_norm = system.z_norm(u)
    full = system.to_full(u)
    d = system.dofs
    slip = d.status > 0
    report.normal_velocity_max = float(np.abs(np.einsum("nc,nc->n", full[slip], d.node_normal[slip])).max()) \
        if slip.any() else 0.0
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p))):
        report.converged = False
        report.message = report.message or "non-finite solution"
    if report.converged:
        bounds = certified_bounds(system)
        if bounds is not None:
            dual = system.dual_norm(system.load)
            bound = dual / bounds.coercivity
            holds = report.z_norm <= bound * (1 + 1e-10) + 1e-14
            report.a_priori = {"z_norm": report.z_norm, "load_dual_norm": dual,
                               "coercivity": bounds.coercivity, "bound": bound, "holds": bool(holds)}
            if not holds:
                report.converged = False
                report.message = "a priori bound violated"
    report.wall_time = time.perf_counter() - t0


def solve_mixed(system: DiscreteSystem, cfg: SolverConfig = SolverConfig(), u0=None, p0=None):
    """Mixed Galerkin solve with exact discrete incompressibility."""
    if cfg.method != "mixed":
        raise ValueError("solve_mixed needs cfg.method == 'mixed'")
    return outer_fixed_point(system, cfg, 0.0, u0, p0)


def solve_penalty(system: DiscreteSystem, cfg: SolverConfig, alpha: float | None = None,
                  u0=None, p0=None):
    """Penalty solve; the pressure is ``-alpha^-1`` times the P1 projection of div u."""
    if cfg.method != "penalty":
        raise ValueError("solve_penalty needs cfg.method == 'penalty'")
    return outer_fixed_point(system, cfg, cfg.alpha if alpha is None else alpha, u0, p0)


def penalty_continuation(system: DiscreteSystem, schedule, cfg: SolverConfig | None = None,
                         reference: SolutionFields | None = None, warm: bool = True):
    """Run the penalty method over a decreasing alpha schedule.

    Each solve starts from the previous solution when ``warm``.  Returns a
    list of ``(alpha, fields, report)``; with a ``reference`` (mixed)
    solution each report also gets ``distance_to_reference``.
    """
    schedule = [float(a) for a in schedule]
    if any(b >= a for a, b in zip(schedule, schedule[1:])) or any(a <= 0 for a in schedule):
        raise ValueError("schedule must be positive and strictly decreasing")
    cfg = cfg or SolverConfig(method="penalty")
    out = []
    u0 = p0 = None
    for a in schedule:
        fields, report = solve_penalty(system, cfg, a, u0, p0)
        if reference is not None:
            report.achieved["distance_to_reference"] = system.z_norm(fields.u_free - reference.u_free)
        out.append((a, fields, report))
        if warm and report.converged:
            u0, p0 = fields.u_free, fields.pressure
    return out


def solve(system: DiscreteSystem, cfg: SolverConfig):
    """Dispatch on ``cfg.method``; a penalty schedule runs continuation."""
    if cfg.method == "mixed":
        return solve_mixed(system, cfg)
    if cfg.alpha_schedule:
        return penalty_continuation(system, cfg.alpha_schedule, cfg)[-1][1:]
    return solve_penalty(system, cfg)
