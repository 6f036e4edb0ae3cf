"""Constitutive ingredients: strain invariant, angle function, viscosity, slip.

The default viscosity family is

    phi(I, e, mu) = psi0 + (k0 + k1 e^2 (1 - k2 mu)) (lam + I)^(-1/2)

with ``I`` the squared Frobenius norm of the rate of strain, ``e = |E|`` and
``mu`` the squared cosine between velocity and field.  The default slip
family is

    chi(F, s) = c0 + c1 / (1 + exp(F / f0)) + c2 / (1 + s / s0)

with ``F`` the (regularized) normal traction and ``s = |u_tau|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .expressions import Expression
from .mesh import Mesh, locate_points

# --------------------------------------------------------------------------
# kinematics


def strain(G):
    """Symmetric part of velocity gradients ``G[..., i, j] = du_i/dx_j``."""
    G = np.asarray(G, dtype=float)
    return 0.5 * (G + np.swapaxes(G, -1, -2))


def invariant_I(G):
    """Second invariant sum_ij eps_ij^2 of the rate of strain."""
    eps = strain(G)
    return np.sum(eps * eps, axis=(-2, -1))


@dataclass(frozen=True)
class MuSettings:
    """Regularization of the angle function.

    ``alpha_reg`` shifts the velocity by ``alpha_reg * (1, 1)`` and the norm by
    ``alpha_reg * sqrt(2)`` so the angle stays defined at ``u = 0``;
    ``frame_velocity`` is a constant offset for a uniformly moving frame.
    """

    alpha_reg: float = 0.0
    frame_velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.alpha_reg < 0:
            raise ValueError("alpha_reg must be non-negative")


def mu_angle(u, E, s: MuSettings = MuSettings()):
    """Squared cosine between the (shifted) velocity and the field direction.

    Vectorized over leading axes; the last axis has length 2.  Points with
    ``alpha_reg = 0`` and ``u + frame_velocity = 0`` give nan.
    """
    u = np.asarray(u, dtype=float)
    E = np.asarray(E, dtype=float)
    enorm = np.hypot(E[..., 0], E[..., 1])
    if np.any(enorm == 0):
        raise ValueError("mu undefined at E=0")
    w = u + np.asarray(s.frame_velocity, dtype=float)
    top = s.alpha_reg + w
    wnorm = np.hypot(w[..., 0], w[..., 1])
    den = s.alpha_reg * math.sqrt(2.0) + wnorm
    with np.errstate(invalid="ignore", divide="ignore"):
        c = (top[..., 0] * E[..., 0] + top[..., 1] * E[..., 1]) / (den * enorm)
    return np.clip(c * c, 0.0, 1.0)


# --------------------------------------------------------------------------
# viscosity


@dataclass(frozen=True)
class ERViscosity:
    """Default field-dependent viscosity family (see module docstring)."""

    psi0: float = 1.0
    k0: float = 1.0
    k1: float = 0.0
    k2: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if min(self.psi0, self.k0, self.k1) < 0:
            raise ValueError("psi0, k0, k1 must be non-negative")
        if not 0.0 <= self.k2 <= 1.0:
            raise ValueError("k2 must lie in [0, 1]")

    def field_coefficient(self, e, mu):
        e = np.asarray(e, dtype=float)
        return self.k0 + self.k1 * e * e * (1.0 - self.k2 * np.asarray(mu, dtype=float))

    def __call__(self, I, e, mu):
        """Return ``(phi, dphi/dI)``."""
        I = np.asarray(I, dtype=float)
        b = self.field_coefficient(e, mu)
        r = 1.0 / np.sqrt(self.lam + I)
        return self.psi0 + b * r, -0.5 * b * r ** 3

    @property
    def depends_on_angle(self) -> bool:
        return self.k1 * self.k2 != 0.0

    @property
    def is_constant(self) -> bool:
        return self.k0 == 0.0 and self.k1 == 0.0

    def analytic_bounds(self, box: "ValidationBox") -> dict:
        b_min = self.k0 + self.k1 * box.e_min ** 2 * (1.0 - self.k2)
        b_max = self.k0 + self.k1 * box.e_max ** 2
        lam, imax = self.lam, box.I_max
        if math.isinf(imax):
            a1 = a3 = self.psi0
        else:
            a1 = self.psi0 + b_min / math.sqrt(lam + imax)
            a3 = self.psi0 + b_min * lam * (lam + imax) ** -1.5
        a2 = self.psi0 + b_max / math.sqrt(lam)
        i_star = min(2.0 * lam, imax)
        a4 = 0.5 * b_max * i_star * (lam + i_star) ** -1.5
        return {"a1": a1, "a2": a2, "a3": a3, "a4": a4,
                "witness": {"a1": {"I": imax, "e": box.e_min, "mu": 1.0},
                            "a3": {"I": imax, "e": box.e_min, "mu": 1.0}}}


@dataclass(frozen=True)
class CallableViscosity:
    """User-supplied viscosity ``func(I, e, mu) -> (phi, dphi/dI)``.

    Only empirically validated.
    """

    func: Callable
    depends_on_angle: bool = True
    is_constant: bool = False

    def __call__(self, I, e, mu):
        return self.func(np.asarray(I, float), np.asarray(e, float), np.asarray(mu, float))


def viscosity(m, I, e, mu):
    """Viscosity and its derivative in ``I``."""
    return m(I, e, mu)


# --------------------------------------------------------------------------
# slip


@dataclass(frozen=True)
class ERSlip:
    """Default slip family (see module docstring)."""

    c0: float = 1.0
    c1: float = 0.0
    c2: float = 0.0
    s0: float = 1.0
    f0: float = 1.0

    def __post_init__(self):
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be non-negative")
        if self.s0 <= 0 or self.f0 <= 0:
            raise ValueError("s0 and f0 must be positive")

    def __call__(self, F, s):
        """Return ``(chi, dchi/ds)``."""
        F = np.asarray(F, dtype=float)
        s = np.asarray(s, dtype=float)
        q = 1.0 / (1.0 + s / self.s0)
        chi = self.c0 + self.c1 * expit(-F / self.f0) + self.c2 * q
        return chi, -self.c2 / self.s0 * q * q

    @property
    def depends_on_traction(self) -> bool:
        return self.c1 != 0.0

    @property
    def depends_on_speed(self) -> bool:
        return self.c2 != 0.0

    def analytic_bounds(self, box: "ValidationBox") -> dict:
        sig_lo = 0.0 if math.isinf(box.F_max) else float(expit(-box.F_max / self.f0))
        sig_hi = 1.0 if math.isinf(box.F_min) else float(expit(-box.F_min / self.f0))
        tmax = box.s_max / self.s0
        q_lo = 0.0 if math.isinf(tmax) else 1.0 / (1.0 + tmax)
        t3 = min(3.0, tmax)
        t1 = min(1.0, tmax)
        b1 = self.c0 + self.c1 * sig_lo + self.c2 * q_lo
        b2 = self.c0 + self.c1 * sig_hi + self.c2
        b3 = self.c0 + self.c1 * sig_lo + self.c2 * (1.0 - t3) / (1.0 + t3) ** 2
        b4 = self.c2 * t1 / (1.0 + t1) ** 2
        f_w = box.F_max if not math.isinf(box.F_max) else 50.0 * self.f0
        return {"b1": b1, "b2": b2, "b3": b3, "b4": b4,
                "witness": {"b1": {"F": f_w, "s": box.s_max},
                            "b3": {"F": f_w, "s": t3 * self.s0}}}


@dataclass(frozen=True)
class CallableSlip:
    """User-supplied slip ``func(F, s) -> (chi, dchi/ds)``; empirical only."""

    func: Callable
    depends_on_traction: bool = True
    depends_on_speed: bool = True

    def __call__(self, F, s):
        return self.func(np.asarray(F, float), np.asarray(s, float))


def slip_coefficient(m, F, s):
    """Slip coefficient and its derivative in ``s = |u_tau|^2``."""
    return m(F, s)


# --------------------------------------------------------------------------
# electric field


class ElectricField:
    """A given electric field E(x) in R^2.

    Use the constructors :meth:`uniform`, :meth:`analytic` and :meth:`nodal`.
    """

    def __init__(self, kind: str, *, value=None, exprs=None, mesh: Mesh | None = None,
                 values=None):
        self.kind = kind
        self.value = None if value is None else np.asarray(value, dtype=float)
        self.exprs = exprs
        self.mesh = mesh
        self.values = None if values is None else np.asarray(values, dtype=float)

    @classmethod
    def uniform(cls, value, mesh: Mesh | None = None):
        v = np.asarray(value, dtype=float)
        if v.shape != (2,):
            raise ValueError("uniform field needs two components")
        return cls("uniform", value=v, mesh=mesh)

    @classmethod
    def analytic(cls, e1, e2, mesh: Mesh | None = None):
        """Components given as expression strings or callables of (x1, x2)."""
        exprs = tuple(e if callable(e) else Expression(e) for e in (e1, e2))
        return cls("analytic", exprs=exprs, mesh=mesh)

    @classmethod
    def nodal(cls, mesh: Mesh, values):
        vals = np.asarray(values, dtype=float)
        if vals.shape != (mesh.n_nodes, 2):
            raise ValueError("nodal field needs one 2-vector per mesh node")
        return cls("nodal", mesh=mesh, values=vals)

    @property
    def is_zero(self) -> bool:
        if self.kind == "uniform":
            return not np.any(self.value)
        if self.kind == "nodal":
            return not np.any(self.values)
        return False

    def at(self, points, elem=None, bary=None) -> np.ndarray:
        """Evaluate at points of shape (..., 2) without a domain check.

        For the nodal kind, ``elem`` and ``bary`` (containing triangle and
        barycentric coordinates) skip the point location step.
        """
        pts = np.asarray(points, dtype=float)
        if self.kind == "uniform":
            return np.broadcast_to(self.value, pts.shape).copy()
        if self.kind == "analytic":
            x, y = pts[..., 0], pts[..., 1]
            out = np.empty(pts.shape)
            for k, f in enumerate(self.exprs):
                out[..., k] = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape)
            return out
        flat = pts.reshape(-1, 2)
        if elem is None:
            elem, bary = locate_points(self.mesh, flat)
            if np.any(elem < 0):
                raise ValueError("point outside the domain")
        else:
            elem = np.asarray(elem).reshape(-1)
            bary = np.asarray(bary).reshape(-1, 3)
        tri = self.mesh.triangles[elem]
        vals = np.einsum("pk,pkc->pc", bary, self.values[tri])
        return vals.reshape(pts.shape)


def eval_field_E(E: ElectricField, x, mesh: Mesh | None = None) -> np.ndarray:
    """Field value at ``x``; raises ValueError if ``x`` lies outside the domain."""
    domain = mesh if mesh is not None else E.mesh
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if domain is not None:
        elem, bary = locate_points(domain, pts)
        if np.any(elem < 0):
            raise ValueError(f"point outside the domain: {pts[elem < 0][0].tolist()}")
        if E.kind == "nodal" and domain is E.mesh:
            out = E.at(pts, elem, bary)
        else:
            out = E.at(pts)
    else:
        out = E.at(pts)
    return out[0] if np.ndim(x) == 1 else out


# --------------------------------------------------------------------------
# certification of the structural inequalities


INEQUALITIES = {
    "viscosity_bounds": "a1 <= phi <= a2 with a1 > 0",
    "viscosity_monotonicity": "phi + 2 I dphi/dI >= a3 > 0",
    "viscosity_growth": "|dphi/dI| I <= a4",
    "slip_bounds": "b1 <= chi <= b2 with b1 > 0",
    "slip_monotonicity": "chi + 2 s dchi/ds >= b3 > 0",
    "slip_growth": "|dchi/ds| s <= b4",
}


class ConstitutiveViolation(ValueError):
    """A structural inequality fails; carries the inequality and a witness."""

    def __init__(self, inequality: str, witness: dict, detail: str = ""):
        self.inequality = inequality
        self.witness = witness
        msg = f"{inequality} violated ({INEQUALITIES[inequality]})"
        if detail:
            msg += f": {detail}"
        msg += f"; witness {witness}"
        super().__init__(msg)


@dataclass(frozen=True)
class ValidationBox:
    """Argument ranges over which the inequalities are certified."""

    e_max: float = 0.0
    e_min: float = 0.0
    I_max: float = math.inf
    F_min: float = -math.inf
    F_max: float = math.inf
    s_max: float = math.inf


@dataclass(frozen=True)
class CertifiedBounds:
    a1: float
    a2: float
    a3: float
    a4: float
    b1: float
    b2: float
    b3: float
    b4: float
    empirical: bool = False

    @property
    def mu1(self) -> float:
        """Strong monotonicity constant of the frozen operator."""
        return min(2 * self.a1, 2 * self.a3, self.b1, self.b3)

    @property
    def mu2(self) -> float:
        """Lipschitz constant of the frozen operator."""
        return 2 * self.a2 + 4 * self.a4 + self.b2 + 2 * self.b4

    @property
    def coercivity(self) -> float:
        return min(2 * self.a1, self.b1)

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4")}
        d.update(empirical=self.empirical, mu1=self.mu1, mu2=self.mu2)
        return d


N_SCAN = 10_000
N_AXIS = 100
SLACK = 1e-12


def _finite(lo, hi, scale, span=1e8):
    lo = -span * scale if math.isinf(lo) else lo
    hi = span * scale if math.isinf(hi) else hi
    return lo, hi


def _axis(lo, hi, n, scale):
    """Sample [lo, hi] with both linear and logarithmic coverage."""
    lo, hi = _finite(lo, hi, scale)
    lin = np.linspace(lo, hi, n // 2)
    if hi > 0:
        start = max(lo, 0.0)
        logpart = start + np.logspace(-6, math.log10(max(hi - start, 1e-300) / scale), n - n // 2) * scale
        logpart = logpart[logpart <= hi]
    else:
        logpart = np.zeros(0)
    return np.unique(np.concatenate([lin, logpart, [lo, hi]]))


def _samples(box: ValidationBox, visc_scale: float, f_scale: float, s_scale: float):
    I1 = _axis(0.0, box.I_max, N_SCAN, visc_scale)
    e1 = np.linspace(box.e_min, box.e_max, N_SCAN)
    mu1 = np.linspace(0.0, 1.0, N_SCAN)
    F1 = np.unique(np.concatenate([np.linspace(*_finite(box.F_min, box.F_max, f_scale, 60.0), N_SCAN)]))
    s1 = _axis(0.0, box.s_max, N_SCAN, s_scale)
    return I1, e1, mu1, F1, s1


def _check(name, values, bound, lower, witness_of):
    slack = SLACK * max(1.0, abs(bound))
    bad = values < bound - slack if lower else values > bound + slack
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ConstitutiveViolation(name, witness_of(k), f"sampled value {values[k]!r} vs bound {bound!r}")


def _empirical_viscosity(visc, box, scale):
    I1, e1, mu1, _, _ = _samples(box, scale, 1.0, 1.0)
    grids = []
    emid = np.array([box.e_min, box.e_max])
    for e in emid:
        for mu in (0.0, 1.0):
            grids.append((I1, np.full_like(I1, e), np.full_like(I1, mu)))
    Ia = I1[:: max(1, len(I1) // N_AXIS)]
    ea = np.linspace(box.e_min, box.e_max, N_AXIS)
    ma = np.linspace(0.0, 1.0, N_AXIS)
    for X, Y, Z in (np.meshgrid(Ia, ea, [0.0, 1.0]), np.meshgrid(Ia, [box.e_max], ma),
                    np.meshgrid([0.0], ea, ma)):
        grids.append((X.ravel(), Y.ravel(), Z.ravel()))
    I = np.concatenate([g[0] for g in grids])
    e = np.concatenate([g[1] for g in grids])
    mu = np.concatenate([g[2] for g in grids])
    phi, dphi = visc(I, e, mu)
    return I, e, mu, np.asarray(phi, float), np.asarray(dphi, float)


def _empirical_slip(slip, box, f_scale, s_scale):
    _, _, _, F1, s1 = _samples(box, 1.0, f_scale, s_scale)
    Fa = F1[:: max(1, len(F1) // N_AXIS)]
    sa = s1[:: max(1, len(s1) // N_AXIS)]
    X, Y = np.meshgrid(Fa, sa)
    fmid = float(np.clip(0.0, *_finite(box.F_min, box.F_max, f_scale, 60.0)))
    F = np.concatenate([F1, np.full_like(s1, fmid), np.full_like(s1, F1[-1]), X.ravel()])
    s = np.concatenate([np.zeros_like(F1), s1, s1, Y.ravel()])
    chi, dchi = slip(F, s)
    return F, s, np.asarray(chi, float), np.asarray(dchi, float)


def validate_constitutive(visc, slip, box: ValidationBox = ValidationBox()) -> CertifiedBounds:
    """Certify the structural inequalities for a viscosity/slip pair.

    Default families get closed-form bounds, then every inequality is
    confirmed by dense sampling of the box.  Other models get bounds from the
    samples alone and are flagged ``empirical``.

    Raises
    ------
    ConstitutiveViolation
        naming the failed inequality and a witness point.
    """
    empirical = False
    lam = getattr(visc, "lam", 1.0)
    I, e, mu, phi, dphi = _empirical_viscosity(visc, box, lam)
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(dphi))):
        raise ConstitutiveViolation("viscosity_bounds", {}, "non-finite viscosity")
    mono = phi + 2.0 * dphi * I
    growth = np.abs(dphi) * I
    if hasattr(visc, "analytic_bounds"):
        ab = visc.analytic_bounds(box)
        a1, a2, a3, a4 = ab["a1"], ab["a2"], ab["a3"], ab["a4"]
        if a1 <= 0:
            raise ConstitutiveViolation("viscosity_bounds", ab["witness"]["a1"], f"a1 = {a1!r}")
        if a3 <= 0:
            raise ConstitutiveViolation("viscosity_monotonicity", ab["witness"]["a3"], f"a3 = {a3!r}")
    else:
        empirical = True
        a1, a2 = float(phi.min()), float(phi.max())
        a3, a4 = float(mono.min()), float(growth.max())
        if a1 <= 0:
            k = int(np.argmin(phi))
            raise ConstitutiveViolation("viscosity_bounds", {"I": I[k], "e": e[k], "mu": mu[k]})
        if a3 <= 0:
            k = int(np.argmin(mono))
            raise ConstitutiveViolation("viscosity_monotonicity", {"I": I[k], "e": e[k], "mu": mu[k]})

    def vw(k):
        return {"I": float(I[k]), "e": float(e[k]), "mu": float(mu[k])}

    _check("viscosity_bounds", phi, a1, True, vw)
    _check("viscosity_bounds", phi, a2, False, vw)
    _check("viscosity_monotonicity", mono, a3, True, vw)
    _check("viscosity_growth", growth, a4, False, vw)

    f_scale = getattr(slip, "f0", 1.0)
    s_scale = getattr(slip, "s0", 1.0)
    F, s, chi, dchi = _empirical_slip(slip, box, f_scale, s_scale)
    if not (np.all(np.isfinite(chi)) and np.all(np.isfinite(dchi))):
        raise ConstitutiveViolation("slip_bounds", {}, "non-finite slip coefficient")
    smono = chi + 2.0 * dchi * s
    sgrowth = np.abs(dchi) * s
    if hasattr(slip, "analytic_bounds"):
        sb = slip.analytic_bounds(box)
        b1, b2, b3, b4 = sb["b1"], sb["b2"], sb["b3"], sb["b4"]
        if b1 <= 0:
            raise ConstitutiveViolation("slip_bounds", sb["witness"]["b1"], f"b1 = {b1!r}")
        if b3 <= 0:
            raise ConstitutiveViolation("slip_monotonicity", sb["witness"]["b3"], f"b3 = {b3!r}")
    else:
        empirical = True
        b1, b2 = float(chi.min()), float(chi.max())
        b3, b4 = float(smono.min()), float(sgrowth.max())
        if b1 <= 0:
            k = int(np.argmin(chi))
            raise ConstitutiveViolation("slip_bounds", {"F": F[k], "s": s[k]})
        if b3 <= 0:
            k = int(np.argmin(smono))
            raise ConstitutiveViolation("slip_monotonicity", {"F": F[k], "s": s[k]})

    def sw(k):
        return {"F": float(F[k]), "s": float(s[k])}

    _check("slip_bounds", chi, b1, True, sw)
    _check("slip_bounds", chi, b2, False, sw)
    _check("slip_monotonicity", smono, b3, True, sw)
    _check("slip_growth", sgrowth, b4, False, sw)
    return CertifiedBounds(*(float(v) for v in (a1, a2, a3, a4, b1, b2, b3, b4)),
                           empirical=empirical)
