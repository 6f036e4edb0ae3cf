"""Verification battery.

* discrete inf-sup constant of a velocity/pressure pair,
* the analytic slip channel,
* manufactured solutions and mesh-convergence studies,
* monotonicity / Lipschitz probes of the frozen-coefficient operator,
* penalty-rate and penalty/mixed consistency runs,

plus :func:`run_suite`, which bundles them into pass/fail reports.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import sympy as sp
from scipy.sparse import bmat
from scipy.sparse import linalg as spla

from .assembly import DiscreteSystem, VectorSource
from .mesh import Mesh, rectangle_mesh, refine_uniform
from .models import ElectricField, ERSlip, ERViscosity, MuSettings
from .solver import SolverConfig, certified_bounds, penalty_continuation, solve_mixed, solve_penalty

# --------------------------------------------------------------------------
# default models

DEFAULT_VISCOSITY = dict(psi0=1.0, k0=1.0, k1=1.0, k2=0.5, lam=1.0)
DEFAULT_SLIP = dict(c0=1.0, c1=1.0, c2=2.0, s0=1.0, f0=1.0)
DEFAULT_FIELD = (0.0, 1.0)
DEFAULT_ALPHA_REG = 1e-2
DEFAULT_BODY_FORCE = (1.0, 0.0)


def default_er_system(m: Mesh, body_force=DEFAULT_BODY_FORCE, traction=None, **kw) -> DiscreteSystem:
    """The documented default ER model on ``m``."""
    return DiscreteSystem(m, ERViscosity(**DEFAULT_VISCOSITY), ERSlip(**DEFAULT_SLIP),
                          ElectricField.uniform(DEFAULT_FIELD), MuSettings(DEFAULT_ALPHA_REG),
                          body_force=body_force, traction=traction, **kw)


# --------------------------------------------------------------------------
# inf-sup


class InfSupStagnation(RuntimeError):
    """The eigen-iteration did not converge; ``residual`` is the last residual."""

    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (last residual {residual:.3e})")
        self.residual = residual


@dataclass
class InfSupResult:
    beta: float
    method: str
    n_velocity: int
    n_pressure: int
    residual: float = 0.0
    n_zero_modes: int = 0


DENSE_LIMIT = 600
DENSE_FALLBACK_LIMIT = 5000
ZERO_MODE_TOL = 1e-12


def _infsup_dense(B, G, Mp) -> tuple[float, int]:
    """Smallest nonzero generalized singular value and the number of null modes."""
    Bd = B.toarray()
    S = Bd @ np.linalg.solve(G.toarray(), Bd.T)
    lam = scipy.linalg.eigh(0.5 * (S + S.T), Mp.toarray(), eigvals_only=True)
    nonzero = lam > ZERO_MODE_TOL * max(lam[-1], 0.0)
    if not nonzero.any():
        return 0.0, len(lam)
    return math.sqrt(float(lam[nonzero][0])), int((~nonzero).sum())


def _infsup_sparse(B, G, Mp, tol: float = 1e-12):
    nv, npr = G.shape[0], B.shape[0]
    G_lu = spla.splu(G.tocsc())
    K_lu = spla.splu(bmat([[G, B.T], [B, None]], format="csc"))

    def schur(q):
        return B @ G_lu.solve(B.T @ q)

    def schur_inv(x):
        rhs = np.concatenate([np.zeros(nv), -np.asarray(x).ravel()])
        return K_lu.solve(rhs)[nv:]

    S = spla.LinearOperator((npr, npr), matvec=schur, dtype=float)
    Sinv = spla.LinearOperator((npr, npr), matvec=schur_inv, dtype=float)
    v0 = np.ones(npr)
    try:
        lam, vec = spla.eigsh(S, k=1, M=Mp.tocsc(), sigma=0.0, OPinv=Sinv, which="LM",
                              tol=tol, v0=v0, maxiter=2000)
    except spla.ArpackNoConvergence as exc:
        res = math.inf
        if len(exc.eigenvalues):
            q = exc.eigenvectors[:, 0]
            res = float(np.linalg.norm(schur(q) - exc.eigenvalues[0] * (Mp @ q)))
        raise InfSupStagnation("inf-sup eigen-iteration stagnated", res) from exc
    q = vec[:, 0]
    res = float(np.linalg.norm(schur(q) - lam[0] * (Mp @ q)) / max(np.linalg.norm(Mp @ q), 1e-300))
    return math.sqrt(max(float(lam[0]), 0.0)), res


def _infsup(B, G, Mp, method: str):
    npr = B.shape[0]
    if method == "dense" or (method == "auto" and npr <= DENSE_LIMIT):
        beta, nz = _infsup_dense(B, G, Mp)
        return beta, "dense", 0.0, nz
    try:
        beta, res = _infsup_sparse(B, G, Mp)
        return beta, "sparse", res, 0
    except RuntimeError as exc:
        # singular saddle matrix: B has pressure null modes; they are excluded
        if isinstance(exc, InfSupStagnation) or npr > DENSE_FALLBACK_LIMIT:
            raise
        beta, nz = _infsup_dense(B, G, Mp)
        return beta, "dense", 0.0, nz


def infsup_from_operators(B, G, Mp, method: str = "auto") -> float:
    """``beta^2`` = smallest nonzero eigenvalue of ``Mp^-1 B G^-1 B^T``."""
    return _infsup(B, G, Mp, method)[0]


def infsup_system(m: Mesh, velocity_degree: int = 2) -> DiscreteSystem:
    """System carrying only the spaces (models are irrelevant for B, G, Mp)."""
    return DiscreteSystem(m, ERViscosity(), ERSlip(), velocity_degree=velocity_degree)


def infsup_estimate(m: Mesh, velocity_degree: int = 2, method: str = "auto") -> InfSupResult:
    """Discrete inf-sup constant of vector P``k``/P1 with the slip constraint.

    ``method`` is ``"dense"`` (generalized symmetric eigensolver on the Schur
    complement), ``"sparse"`` (shift-invert Lanczos using the factorized
    saddle matrix) or ``"auto"``.  Pressure modes annihilated by ``B`` (the
    spurious modes of unstable pairs) are excluded and counted.
    """
    s = infsup_system(m, velocity_degree)
    beta, used, res, nz = _infsup(s.B, s.gram, s.pressure_mass, method)
    return InfSupResult(beta, used, s.n_free, s.n_pressure, res, nz)


def infsup_study(m0: Mesh, levels: int = 3, velocity_degree: int = 2, method: str = "auto") -> list[dict]:
    """inf-sup constants on ``levels`` nested uniform refinements of ``m0``."""
    rows = []
    m = m0
    for level in range(levels):
        r = infsup_estimate(m, velocity_degree, method)
        rows.append({"level": level, "n_triangles": m.n_triangles, "beta": r.beta,
                     "method": r.method, "residual": r.residual, "n_zero_modes": r.n_zero_modes})
        if level + 1 < levels:
            m = refine_uniform(m)
    return rows


# --------------------------------------------------------------------------
# slip channel


def channel_slip_oracle(G: float, eta: float, b: float, H: float, y):
    """Streamwise velocity of pressure-driven flow between Navier-slip walls."""
    y = np.asarray(y, dtype=float)
    return G / (2.0 * eta) * y * (H - y) + G * H / (2.0 * b)


# --------------------------------------------------------------------------
# manufactured solutions

X1, X2, N1, N2 = sp.symbols("x1 x2 n1 n2", real=True)


def _lam(expr, args=(X1, X2)):
    f = sp.lambdify(args, expr, "numpy")

    def g(*a):
        return np.broadcast_to(np.asarray(f(*a), dtype=float), np.broadcast(*a).shape)
    return g


def _vec(exprs, args=(X1, X2)):
    fs = [_lam(e, args) for e in exprs]
    return lambda *a: tuple(f(*a) for f in fs)


def _sym_viscosity(visc: ERViscosity, u, I, efield_value, mu: MuSettings):
    if efield_value is None:
        e2 = sp.Integer(0)
        mu_expr = sp.Integer(0)
    else:
        E1, E2 = (sp.nsimplify(v) for v in efield_value)
        e2 = E1 ** 2 + E2 ** 2
        a = sp.nsimplify(mu.alpha_reg)
        top = (a + u[0]) * E1 + (a + u[1]) * E2
        den = (a * sp.sqrt(2) + sp.sqrt(u[0] ** 2 + u[1] ** 2)) ** 2 * e2
        mu_expr = top ** 2 / den
    b = visc.k0 + visc.k1 * e2 * (1 - visc.k2 * mu_expr)
    return visc.psi0 + b / sp.sqrt(visc.lam + I)


@dataclass
class VerificationCase:
    """A manufactured or analytic case with exact fields and derived loads."""

    case_id: str
    nx0: int
    ny0: int
    bounds: tuple[float, float, float, float]
    sides: dict
    viscosity: object
    slip: object
    efield: ElectricField | None
    mu: MuSettings
    u_exact: Callable
    grad_exact: Callable
    p_exact: Callable
    body_force: VectorSource | None
    traction: VectorSource
    slip_load: VectorSource | None
    compensated: bool
    description: str
    symbolic: dict = field(default_factory=dict, repr=False)

    def mesh(self, nx: int, ny: int | None = None) -> Mesh:
        x0, x1, y0, y1 = self.bounds
        return rectangle_mesh(nx, ny or nx, x0=x0, x1=x1, y0=y0, y1=y1, sides=self.sides)

    def system(self, nx: int, ny: int | None = None, **kw) -> DiscreteSystem:
        return DiscreteSystem(self.mesh(nx, ny), self.viscosity, self.slip, self.efield, self.mu,
                              body_force=self.body_force, traction=self.traction,
                              slip_load=self.slip_load, **kw)

    def errors(self, system: DiscreteSystem, u_free, p) -> dict:
        """Z-norm velocity error and L2 pressure error against the exact fields."""
        pts = system.geom.points
        g = self.grad_exact(pts[..., 0], pts[..., 1])
        r2 = math.sqrt(2.0)
        eps_ex = np.stack([g[0][0], g[1][1], (g[0][1] + g[1][0]) / r2], axis=-1)
        d = system.strain_at_points(u_free) - eps_ex
        vol = float(np.sum(system.geom.wdet * np.sum(d * d, axis=-1)))
        bq = system.s1
        ue = self.u_exact(bq.points[..., 0], bq.points[..., 1])
        ut = ue[0] * bq.tangents[:, None, 0] + ue[1] * bq.tangents[:, None, 1]
        dt = system.tangential_at_points(u_free) - ut
        bnd = float(np.sum(bq.weights * dt * dt))
        ph = system.dofs.pspace.at_points(np.asarray(p, float), system.geom)
        pe = self.p_exact(pts[..., 0], pts[..., 1])
        perr = math.sqrt(float(np.sum(system.geom.wdet * (ph - pe) ** 2)))
        return {"z_error": math.sqrt(vol + bnd), "p_error": perr}


def _build_case(case_id, u, p, visc, slip, efield_value, mu, nx0, bounds, sides, description,
                compensate=True):
    if getattr(slip, "c1", 0.0) != 0.0:
        raise ValueError("manufactured slip loads need a traction-independent slip (c1 = 0)")
    grad = [[sp.diff(u[i], v) for v in (X1, X2)] for i in range(2)]
    eps = [[(grad[i][j] + grad[j][i]) / 2 for j in range(2)] for i in range(2)]
    I = sum(eps[i][j] ** 2 for i in range(2) for j in range(2))
    phi = _sym_viscosity(visc, u, I, efield_value, mu)
    sigma = [[-p * int(i == j) + 2 * phi * eps[i][j] for j in range(2)] for i in range(2)]
    K = [-(sp.diff(sigma[i][0], X1) + sp.diff(sigma[i][1], X2)) for i in range(2)]
    F = [sigma[i][0] * N1 + sigma[i][1] * N2 for i in range(2)]
    tau = (N2, -N1)
    Ft = F[0] * tau[0] + F[1] * tau[1]
    ut = u[0] * tau[0] + u[1] * tau[1]
    chi = slip.c0 + slip.c2 / (1 + ut ** 2 / slip.s0)
    g_t = Ft + chi * ut
    args4 = (X1, X2, N1, N2)
    K_zero = all(sp.simplify(k) == 0 for k in K) if case_id == "slip-channel" else False
    efield = ElectricField.uniform(efield_value) if efield_value is not None else None
    return VerificationCase(
        case_id=case_id, nx0=nx0, ny0=nx0, bounds=bounds, sides=sides,
        viscosity=visc, slip=slip, efield=efield, mu=mu,
        u_exact=_vec(u), grad_exact=lambda x, y, _g=[[_lam(e) for e in row] for row in grad]:
            [[f(x, y) for f in row] for row in _g],
        p_exact=_lam(p),
        body_force=None if K_zero else VectorSource(func=_vec(K)),
        traction=VectorSource(func=_vec(F, args4), uses_normal=True),
        slip_load=VectorSource(func=_vec([g_t * tau[0], g_t * tau[1]], args4), uses_normal=True)
        if compensate else None,
        compensated=compensate, description=description,
        symbolic={"u": u, "p": p, "K": K, "F": F, "g_tau": g_t, "div": sp.diff(u[0], X1) + sp.diff(u[1], X2)})


CASES = ("stokes-trig", "er-shear", "slip-channel")


def manufactured_case(case_id: str, **params) -> VerificationCase:
    """Built-in verification cases.

    ``stokes-trig``: constant viscosity, trigonometric divergence-free
    velocity; ``er-shear``: the full ER viscosity with a uniform field and a
    polynomial velocity; ``slip-channel``: the analytic Navier-slip channel.
    For the first two the slip wall gets a compensating load so that the
    exact fields satisfy the slip condition (``compensated = True``).
    """
    pi = sp.pi
    slip_sides = {"bottom": "S1", "top": "S1", "left": "S2", "right": "S2"}
    if case_id == "stokes-trig":
        eta = params.get("eta", 1.0)
        u = (sp.sin(pi * X1) * sp.cos(pi * X2), -sp.cos(pi * X1) * sp.sin(pi * X2))
        p = sp.cos(pi * X1) * sp.cos(pi * X2)
        return _build_case(case_id, u, p, ERViscosity(psi0=eta, k0=0.0, k1=0.0),
                           ERSlip(c0=params.get("b", 1.0)), None, MuSettings(),
                           params.get("nx0", 4), (0.0, 1.0, 0.0, 1.0), slip_sides,
                           "constant viscosity, compensated slip-wall load")
    if case_id == "er-shear":
        visc = ERViscosity(**{**DEFAULT_VISCOSITY, **{k: params[k] for k in DEFAULT_VISCOSITY
                                                       if k in params}})
        slip = ERSlip(c0=params.get("c0", 1.0), c1=0.0, c2=params.get("c2", 2.0),
                      s0=params.get("s0", 1.0))
        efield = tuple(params.get("efield", DEFAULT_FIELD))
        u = (1 + X1 * (2 * X2 - 6 * X2 ** 2 + 4 * X2 ** 3), -X2 ** 2 * (1 - X2) ** 2)
        p = X1 * X2 - sp.Rational(1, 4)
        return _build_case(case_id, u, p, visc, slip, efield,
                           MuSettings(params.get("alpha_reg", DEFAULT_ALPHA_REG)),
                           params.get("nx0", 4), (0.0, 1.0, 0.0, 1.0), slip_sides,
                           "ER viscosity with uniform field, speed-dependent slip, "
                           "compensated slip-wall load")
    if case_id == "slip-channel":
        G = params.get("G", 2.0)
        eta = params.get("eta", 1.0)
        b = params.get("b", 1.0)
        H = params.get("H", 1.0)
        Gs, es, bs, Hs = (sp.nsimplify(v) for v in (G, eta, b, H))
        u = (Gs / (2 * es) * X2 * (Hs - X2) + Gs * Hs / (2 * bs), sp.Integer(0))
        p = Gs * (1 - X1)
        return _build_case(case_id, u, p, ERViscosity(psi0=eta, k0=0.0, k1=0.0), ERSlip(c0=b),
                           None, MuSettings(), params.get("nx0", 4), (0.0, 1.0, 0.0, H),
                           slip_sides, "pressure-driven channel with Navier slip on both walls",
                           compensate=False)
    raise ValueError(f"unknown case {case_id!r}; expected one of {CASES}")


# --------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceTable:
    case_id: str
    rows: list[dict]
    z_rates: list[float]
    p_rates: list[float]
    aborted: bool = False
    message: str = ""

    def as_dict(self) -> dict:
        return {"case": self.case_id, "rows": self.rows, "z_rates": self.z_rates,
                "p_rates": self.p_rates, "aborted": self.aborted, "message": self.message}


def _rates(errors):
    return [math.log2(a / b) if a > 0 and b > 0 else math.nan for a, b in zip(errors, errors[1:])]


def convergence_study(case: VerificationCase | str, levels: int = 4, nx0: int | None = None,
                      cfg: SolverConfig | None = None) -> ConvergenceTable:
    """Errors and observed rates of the mixed solution under uniform refinement."""
    if isinstance(case, str):
        case = manufactured_case(case)
    cfg = cfg or SolverConfig()
    nx = nx0 or case.nx0
    rows = []
    aborted, message = False, ""
    for level in range(levels):
        n = nx * 2 ** level
        system = case.system(n)
        fields, report = solve_mixed(system, cfg)
        err = case.errors(system, fields.u_free, fields.pressure)
        rows.append({"level": level, "nx": n, "h": 1.0 / n, "n_dofs": system.n_free + system.n_pressure,
                     **err, "outer_iterations": report.outer_iterations,
                     "converged": report.converged, "a_priori": report.a_priori})
        if not report.converged:
            aborted, message = True, f"level {level}: {report.message}"
            break
    return ConvergenceTable(case.case_id, rows, _rates([r["z_error"] for r in rows]),
                            _rates([r["p_error"] for r in rows]), aborted, message)


# --------------------------------------------------------------------------
# monotonicity / Lipschitz probe


@dataclass
class ProbeResult:
    min_r1: float
    max_r2: float
    mu1: float | None
    mu2: float | None
    trials: int
    resampled: int
    r1: list[float] = field(repr=False, default_factory=list)
    r2: list[float] = field(repr=False, default_factory=list)

    def passed(self, slack: float = 1e-10) -> bool:
        if self.mu1 is None or self.mu2 is None:
            return False
        return self.min_r1 >= self.mu1 * (1 - slack) and self.max_r2 <= self.mu2 * (1 + slack)


def _random_field(system: DiscreteSystem, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal(system.n_free)
    return g * (10.0 ** rng.uniform(-3.0, 1.0) / system.z_norm(g))


def monotonicity_probe(system: DiscreteSystem, trials: int = 100, seed: int = 42, frozen=None,
                       state=None, slip_variant: str = "traction") -> ProbeResult:
    """Rayleigh and Lipschitz quotients of the frozen operator over random pairs.

    The frozen coefficients come from ``frozen``, else from ``state = (u, p)``,
    else from a mixed solve of ``system``.
    """
    if frozen is None:
        if state is None:
            fields, _ = solve_mixed(system, SolverConfig(slip_variant=slip_variant))
            state = (fields.u_free, fields.pressure)
        frozen = system.freeze(state[0], state[1], slip_variant)
    rng = np.random.default_rng(seed)
    r1s, r2s = [], []
    resampled = 0
    while len(r1s) < trials:
        u = _random_field(system, rng)
        w = _random_field(system, rng)
        dz = system.z_norm(u - w)
        if dz < 1e-14:
            resampled += 1
            continue
        du = system.operator(u, frozen, jacobian=False)[0] - system.operator(w, frozen, jacobian=False)[0]
        r1s.append(float(du @ (u - w)) / dz ** 2)
        r2s.append(system.dual_norm(du) / dz)
    bounds = certified_bounds(system)
    return ProbeResult(min(r1s), max(r2s), bounds.mu1 if bounds else None,
                       bounds.mu2 if bounds else None, trials, resampled, r1s, r2s)


# --------------------------------------------------------------------------
# slip channel and penalty runs


def slip_channel_system(nx: int = 16, ny: int | None = None, G: float = 2.0, eta: float = 1.0,
                        b: float = 1.0, H: float = 1.0) -> DiscreteSystem:
    return manufactured_case("slip-channel", G=G, eta=eta, b=b, H=H).system(nx, ny)


def channel_check(nx: int = 8, G: float = 2.0, eta: float = 1.0, b: float = 1.0, H: float = 1.0) -> dict:
    """Mixed solve of the slip channel against the analytic profile."""
    system = slip_channel_system(nx, nx, G, eta, b, H)
    fields, report = solve_mixed(system)
    x = fields.velocity_coords
    exact = channel_slip_oracle(G, eta, b, H, x[:, 1])
    err = np.max(np.abs(fields.velocity - np.column_stack([exact, np.zeros_like(exact)])))
    return {"max_relative_error": float(err / np.max(np.abs(exact))),
            "slip_velocity": float(G * H / (2 * b)), "converged": report.converged,
            "a_priori_holds": bool(report.a_priori and report.a_priori["holds"]),
            "wall_time": report.wall_time}


def penalty_rate(system: DiscreteSystem, alphas=(1e-2, 1e-3, 1e-4, 1e-5), cfg: SolverConfig | None = None,
                 reference=None) -> dict:
    """``||div u_alpha||`` over a decreasing schedule and its log-log slope."""
    runs = penalty_continuation(system, alphas, cfg or SolverConfig(method="penalty"), reference)
    div = [r.div_l2 for _, _, r in runs]
    slope = float(np.polyfit(np.log(alphas), np.log(div), 1)[0])
    return {"alphas": list(alphas), "div_l2": div, "slope": slope,
            "strictly_decreasing": all(b < a for a, b in zip(div, div[1:])),
            "converged": all(r.converged for _, _, r in runs),
            "a_priori_holds": all(bool(r.a_priori and r.a_priori["holds"]) for _, _, r in runs),
            "distance_to_reference": [r.achieved.get("distance_to_reference") for _, _, r in runs],
            "inner_iterations": [sum(r.inner_iterations) for _, _, r in runs]}


def penalty_mixed_consistency(nx: int = 16, alpha: float = 1e-6) -> dict:
    system = slip_channel_system(nx)
    mixed, rm = solve_mixed(system)
    pen, rp = solve_penalty(system, SolverConfig(method="penalty", alpha=alpha))
    dist = system.z_norm(pen.u_free - mixed.u_free)
    return {"alpha": alpha, "distance": dist, "z_mixed": system.z_norm(mixed.u_free),
            "relative": dist / system.z_norm(mixed.u_free),
            "converged": rm.converged and rp.converged,
            "a_priori_holds": bool(rm.a_priori and rm.a_priori["holds"] and rp.a_priori
                                   and rp.a_priori["holds"])}


# --------------------------------------------------------------------------
# suites

SUITES = ("infsup", "monotonicity", "convergence", "channel", "penalty-rate")


def _criterion(name, passed, value, threshold):
    return {"name": name, "passed": bool(passed), "value": value, "threshold": threshold}


def suite_infsup(levels: int = 4, quick: bool = False) -> dict:
    m0 = rectangle_mesh(2, 2)
    th = infsup_study(m0, levels, 2)
    p1 = infsup_study(m0, levels, 1)
    b = [r["beta"] for r in th]
    spread = max(b) / min(b) - 1 if min(b) > 0 else math.inf
    q = [r["beta"] for r in p1]
    drops = [1 - c / a if a > 0 else 0.0 for a, c in zip(q, q[1:])]
    return {"tables": {"taylor_hood": th, "p1_p1": p1},
            "criteria": [_criterion("taylor-hood beta positive", min(b) > 0, min(b), "> 0"),
                         _criterion("taylor-hood spread", spread < 0.2, spread, "< 0.2"),
                         _criterion("p1/p1 decrease per refinement", min(drops) >= 0.3,
                                    min(drops), ">= 0.3")]}


def suite_monotonicity(seed: int = 42, quick: bool = False) -> dict:
    m = refine_uniform(refine_uniform(rectangle_mesh(4, 4)))
    if quick:
        m = refine_uniform(rectangle_mesh(4, 4))
    system = default_er_system(m)
    r = monotonicity_probe(system, 20 if quick else 100, seed)
    return {"tables": {"probe": {"min_r1": r.min_r1, "max_r2": r.max_r2, "mu1": r.mu1,
                                 "mu2": r.mu2, "trials": r.trials}},
            "criteria": [_criterion("monotonicity r1 >= mu1", r.mu1 is not None
                                    and r.min_r1 >= r.mu1 * (1 - 1e-10), r.min_r1, r.mu1),
                         _criterion("lipschitz r2 <= mu2", r.mu2 is not None
                                    and r.max_r2 <= r.mu2 * (1 + 1e-10), r.max_r2, r.mu2)]}


def suite_convergence(levels: int = 4, quick: bool = False) -> dict:
    levels = 3 if quick else levels
    st = convergence_study("stokes-trig", levels)
    er = convergence_study("er-shear", levels)
    sc = convergence_study("slip-channel", min(levels, 2))
    zr, pr, er_r = st.z_rates[-1], st.p_rates[-1], er.z_rates[-1]
    sc_err = max(r["z_error"] for r in sc.rows)
    return {"tables": {t.case_id: t.as_dict() for t in (st, er, sc)},
            "criteria": [_criterion("stokes-trig velocity rate", abs(zr - 2.0) <= 0.2 and not st.aborted,
                                    zr, "2.0 +- 0.2"),
                         _criterion("stokes-trig pressure rate", pr >= 1.7 and not st.aborted, pr, ">= 1.7"),
                         _criterion("er-shear velocity rate", er_r >= 1.8 and not er.aborted, er_r, ">= 1.8"),
                         _criterion("slip-channel exact", sc_err <= 1e-8, sc_err, "<= 1e-8")]}


def suite_channel(quick: bool = False) -> dict:
    r = channel_check(8)
    return {"tables": {"channel": r},
            "criteria": [_criterion("channel max relative error", r["max_relative_error"] <= 1e-8,
                                    r["max_relative_error"], "<= 1e-8")]}


def suite_penalty_rate(quick: bool = False) -> dict:
    nx = 8 if quick else 16
    system = slip_channel_system(nx)
    mixed, _ = solve_mixed(system)
    r = penalty_rate(system, reference=mixed)
    c = penalty_mixed_consistency(nx)
    return {"tables": {"penalty_rate": r, "consistency": c},
            "criteria": [_criterion("div slope", r["slope"] >= 0.9, r["slope"], ">= 0.9"),
                         _criterion("div strictly decreasing", r["strictly_decreasing"],
                                    r["div_l2"], "strictly decreasing"),
                         _criterion("penalty/mixed consistency", c["relative"] <= 1e-4,
                                    c["relative"], "<= 1e-4")]}


def run_suite(name: str, levels: int | None = None, seed: int = 42, quick: bool = False) -> dict:
    """Run one suite (or ``"all"``) and return a JSON-ready report."""
    if name == "all":
        parts = [run_suite(s, levels, seed, quick) for s in SUITES]
        return {"suite": "all", "passed": all(p["passed"] for p in parts), "suites": parts}
    t0 = time.perf_counter()
    if name == "infsup":
        out = suite_infsup(levels or 4, quick)
    elif name == "monotonicity":
        out = suite_monotonicity(seed, quick)
    elif name == "convergence":
        out = suite_convergence(levels or 4, quick)
    elif name == "channel":
        out = suite_channel(quick)
    elif name == "penalty-rate":
        out = suite_penalty_rate(quick)
    else:
        raise ValueError(f"unknown suite {name!r}")
    out.update(suite=name, passed=all(c["passed"] for c in out["criteria"]),
               wall_time=time.perf_counter() - t0)
    return out
