"""Kernel smoothing of finite-element fields and the regularized normal traction.

The smoothing operator averages a field against the bump

    omega(r) = C exp(-1 / (1 - (r/a)^2)),   r < a,

using the volume quadrature points as sources.  Weights are renormalized over
the part of the ball that lies inside the domain (Shepard normalization), so
constants are reproduced exactly and no values outside the domain are needed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, sparse
from scipy.spatial import cKDTree

from . import kernels
from .fem import BoundaryQuadrature, Geometry, ScalarSpace
from .mesh import Mesh
from .models import MuSettings, mu_angle

MIN_POINTS = 6
E_CUTOFF = 1e-14


class KernelUnderresolved(UserWarning):
    pass


@dataclass(frozen=True)
class MollifierKernel:
    """Compactly supported smooth radial bump with unit integral over R^2."""

    radius: float
    normalization: float = field(init=False, repr=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("kernel radius must be positive")
        mass, _ = integrate.quad(lambda t: t * math.exp(-1.0 / (1.0 - t * t)), 0.0, 1.0)
        object.__setattr__(self, "normalization", 1.0 / (2.0 * math.pi * mass * self.radius ** 2))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        z = (r / self.radius) ** 2
        out = np.zeros(r.shape)
        inside = z < 1.0
        out[inside] = self.normalization * np.exp(-1.0 / (1.0 - z[inside]))
        return out if out.ndim else float(out)


def kernel_weight(k: MollifierKernel, r):
    return k(r)


def default_radius(mesh: Mesh) -> float:
    """Twice the mean boundary edge length."""
    return 2.0 * float(mesh.edge_lengths().mean())


class MollifierOperator:
    """Sparse matrix taking values at source points to smoothed target values.

    Row ``i`` holds the normalized weights ``w_q omega(|x_i - x_q|)``.  Targets
    whose ball contains fewer than ``min_points`` sources are flagged in
    ``underresolved``; :meth:`apply` substitutes a fallback value there.
    """

    def __init__(self, sources, src_weights, targets, kernel: MollifierKernel,
                 min_points: int = MIN_POINTS, backend: str | None = None):
        sources = np.asarray(sources, dtype=float).reshape(-1, 2)
        targets = np.asarray(targets, dtype=float).reshape(-1, 2)
        self.kernel = kernel
        self.n_sources = len(sources)
        self.n_targets = len(targets)
        tree = cKDTree(sources)
        lists = tree.query_ball_point(targets, kernel.radius)
        counts = np.array([len(c) for c in lists], dtype=np.int64)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        # fixed (sorted) summation order keeps results bitwise reproducible
        indices = (np.concatenate([np.sort(np.asarray(c, dtype=np.int64)) for c in lists])
                   if counts.sum() else np.zeros(0, dtype=np.int64))
        data, support = kernels.mollifier_weights(
            targets, sources, np.asarray(src_weights, dtype=float).ravel(),
            indptr, indices, kernel.radius, backend=backend)
        self.matrix = sparse.csr_matrix((data, indices, indptr),
                                        shape=(self.n_targets, self.n_sources))
        self.support = support
        self.underresolved = support < min_points

    def apply(self, values, fallback=None):
        values = np.asarray(values, dtype=float)
        tail = values.shape[1:]
        out = (self.matrix @ values.reshape(self.n_sources, -1)).reshape((self.n_targets,) + tail)
        if self.underresolved.any():
            if fallback is None:
                raise ValueError("kernel underresolved and no fallback given")
            fb = np.asarray(fallback, dtype=float).reshape(out.shape)
            out[self.underresolved] = fb[self.underresolved]
        return out


def _volume_sources(mesh: Mesh, order: int):
    key = ("geometry", order)
    if key not in mesh._cache:
        mesh._cache[key] = Geometry.build(mesh, order)
    geom = mesh._cache[key]
    return geom, geom.points.reshape(-1, 2), geom.wdet.ravel()


def mollify_nodal_field(mesh: Mesh, f, kernel: MollifierKernel, order: int = 4):
    """Smooth a nodal P1 or P2 field and return it at the same nodes.

    The field degree is inferred from its length.  Nodes whose kernel ball
    is underresolved keep their value and trigger a warning.
    """
    f = np.asarray(f, dtype=float)
    if len(f) == mesh.n_nodes:
        space = ScalarSpace(mesh, 1)
    else:
        space = ScalarSpace(mesh, 2)
        if len(f) != space.n_dofs:
            raise ValueError("field length matches neither P1 nor P2 nodes")
    geom, src, w = _volume_sources(mesh, order)
    op = MollifierOperator(src, w, space.coords, kernel)
    if op.underresolved.any():
        warnings.warn(f"kernel underresolved at {int(op.underresolved.sum())} node(s)",
                      KernelUnderresolved, stacklevel=2)
    vals = space.at_points(f, geom).reshape((-1,) + f.shape[1:])
    return op.apply(vals, fallback=f)


@dataclass(frozen=True, eq=False)
class TractionTrace:
    """Regularized normal traction at the slip-wall Gauss points."""

    points: np.ndarray         # (E1, ng, 2)
    values: np.ndarray         # (E1, ng)
    underresolved: np.ndarray  # (E1, ng) bool


class TractionEvaluator:
    """Precomputed smoothing data for the slip-wall Gauss points.

    Evaluates ``-P p + 2 phi(I(Pu), |E|, mu(Pu, E)) (eps(Pu) nu . nu)`` where
    the strain of the smoothed velocity is taken as the symmetric part of
    the smoothed velocity gradient.
    """

    def __init__(self, mesh: Mesh, velocity_space: ScalarSpace, pressure_space: ScalarSpace,
                 viscosity, efield, mu: MuSettings, kernel: MollifierKernel,
                 order: int = 4, backend: str | None = None):
        self.mesh = mesh
        self.vspace = velocity_space
        self.pspace = pressure_space
        self.viscosity = viscosity
        self.mu = mu
        self.geom, src, w = _volume_sources(mesh, order)
        self.bq = BoundaryQuadrature.build(mesh, mesh.tagged("S1"))
        targets = self.bq.points.reshape(-1, 2)
        self.op = MollifierOperator(src, w, targets, kernel, backend=backend)
        if efield is None:
            self.E = np.zeros(self.bq.points.shape)
        elif efield.kind == "nodal" and efield.mesh is mesh:
            elem = np.repeat(self.bq.parent, self.bq.points.shape[1])
            self.E = efield.at(self.bq.points, elem, self.bq.bary)
        else:
            self.E = efield.at(self.bq.points)
        self.e = np.hypot(self.E[..., 0], self.E[..., 1])
        self.shape = self.bq.points.shape[:2]

    @property
    def underresolved(self) -> np.ndarray:
        return self.op.underresolved.reshape(self.shape)

    def smoothed_velocity(self, u):
        """P u at the Gauss points, (E1, ng, 2)."""
        uq = self.vspace.at_points(u, self.geom).reshape(-1, 2)
        fb = self.bq.eval_in_parent(self.vspace, u).reshape(-1, 2)
        return self.op.apply(uq, fb).reshape(self.shape + (2,))

    def __call__(self, u, p) -> TractionTrace:
        u = np.asarray(u, dtype=float)
        p = np.asarray(p, dtype=float)
        pq = self.pspace.at_points(p, self.geom).reshape(-1)
        Gq = self.vspace.grads_at_points(u, self.geom).reshape(-1, 2, 2)
        Pp = self.op.apply(pq, self.bq.eval_in_parent(self.pspace, p).reshape(-1))
        PG = self.op.apply(Gq, self.bq.grads_in_parent(self.vspace, u, self.geom).reshape(-1, 2, 2))
        Pu = self.smoothed_velocity(u).reshape(-1, 2)
        eps = 0.5 * (PG + np.swapaxes(PG, 1, 2))
        I = np.sum(eps * eps, axis=(1, 2))
        E = self.E.reshape(-1, 2)
        e = self.e.reshape(-1)
        mu = np.zeros_like(e)
        live = e > E_CUTOFF * max(e.max(initial=0.0), 1e-300)
        if np.any(live):
            mu[live] = mu_angle(Pu[live], E[live], self.mu)
        mu = np.nan_to_num(mu)
        phi, _ = self.viscosity(I, e, mu)
        nu = np.repeat(self.bq.normals, self.shape[1], axis=0)
        enn = np.einsum("pi,pij,pj->p", nu, eps, nu)
        F = -Pp + 2.0 * phi * enn
        return TractionTrace(self.bq.points, F.reshape(self.shape), self.underresolved)


def regularized_normal_traction(p, u, viscosity, efield, mu: MuSettings,
                                kernel: MollifierKernel, mesh: Mesh, order: int = 4) -> TractionTrace:
    """Regularized normal traction of nodal fields on the slip wall.

    ``p`` is a P1 nodal pressure, ``u`` an (n, 2) nodal velocity on P1 or P2
    nodes.
    """
    u = np.asarray(u, dtype=float)
    vdeg = 1 if len(u) == mesh.n_nodes else 2
    ev = TractionEvaluator(mesh, ScalarSpace(mesh, vdeg), ScalarSpace(mesh, 1),
                           viscosity, efield, mu, kernel, order)
    if ev.underresolved.any():
        warnings.warn("kernel underresolved on the slip wall", KernelUnderresolved, stacklevel=2)
    return ev(u, p)
