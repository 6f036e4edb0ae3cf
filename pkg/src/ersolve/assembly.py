"""Function spaces and weak-form operators on the slip-constrained space.

Velocities live in vector P2 (or P1 for the inf-sup control pair) and
pressures in P1.  At slip-wall nodes the normal component is eliminated by a
local rotation: the free unknown is the tangential component.  Nodes where two
slip edges with different normals meet are pinned.  The prolongation matrix
``T`` maps free unknowns to Cartesian nodal components, so every operator is
assembled in Cartesian form and reduced as ``T^T A T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from . import kernels
from .fem import BoundaryQuadrature, Geometry, ScalarSpace, basis, edge_basis
from .mesh import Mesh
from .models import MuSettings, mu_angle
from .mollify import E_CUTOFF, MollifierKernel, TractionEvaluator, default_radius

FREE, SLIP, PINNED = 0, 1, 2


class DofMap:
    """Velocity/pressure numbering with the slip constraint built in."""

    def __init__(self, mesh: Mesh, velocity_degree: int = 2):
        self.mesh = mesh
        self.vspace = ScalarSpace(mesh, velocity_degree)
        self.pspace = ScalarSpace(mesh, 1)
        n = self.vspace.n_dofs

        s1 = mesh.tagged("S1")
        nodes = self.vspace.edge_dofs[s1]
        normals = np.repeat(mesh.normals()[s1], nodes.shape[1], axis=0)
        nodes = nodes.ravel()
        status = np.zeros(n, dtype=np.int8)
        node_normal = np.zeros((n, 2))
        first = np.full(n, -1)
        for k, (i, nu) in enumerate(zip(nodes, normals)):
            if first[i] < 0:
                first[i] = k
                status[i] = SLIP
                node_normal[i] = nu
            elif status[i] == SLIP:
                n0 = node_normal[i]
                if abs(nu[0] * n0[1] - nu[1] * n0[0]) > 1e-10 or nu @ n0 < 0:
                    status[i] = PINNED
        self.status = status
        self.node_normal = node_normal

        ncols = np.where(status == FREE, 2, np.where(status == SLIP, 1, 0))
        col0 = np.concatenate([[0], np.cumsum(ncols)[:-1]])
        rows, cols, vals = [], [], []
        free = np.flatnonzero(status == FREE)
        rows += [2 * free, 2 * free + 1]
        cols += [col0[free], col0[free] + 1]
        vals += [np.ones(len(free)), np.ones(len(free))]
        slip = np.flatnonzero(status == SLIP)
        tau = np.column_stack([node_normal[slip, 1], -node_normal[slip, 0]])
        rows += [2 * slip, 2 * slip + 1]
        cols += [col0[slip], col0[slip]]
        vals += [tau[:, 0], tau[:, 1]]
        self.n_free = int(ncols.sum())
        self.T = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                   shape=(2 * n, self.n_free))
        self.n_constrained = int((status == SLIP).sum() + 2 * (status == PINNED).sum())

        cd = self.vspace.cell_dofs
        self.cell_vdofs = np.stack([2 * cd, 2 * cd + 1], axis=2).reshape(len(cd), -1)

    @property
    def n_velocity_nodes(self) -> int:
        return self.vspace.n_dofs

    @property
    def n_pressure(self) -> int:
        return self.pspace.n_dofs

    def to_full(self, u_free) -> np.ndarray:
        """Free unknowns -> (n, 2) Cartesian nodal velocity."""
        return (self.T @ np.asarray(u_free, dtype=float)).reshape(-1, 2)

    def to_free(self, u_nodal) -> np.ndarray:
        """Restrict an (n, 2) nodal field to the admissible space.

        Columns of ``T`` are orthonormal, so this drops the normal component
        at slip nodes and everything at pinned nodes.
        """
        return self.T.T @ np.asarray(u_nodal, dtype=float).reshape(-1)


def build_dof_map(m: Mesh, velocity_degree: int = 2) -> DofMap:
    return DofMap(m, velocity_degree)


# --------------------------------------------------------------------------
# loads


class VectorSource:
    """A vector field used as body force, traction or slip-wall load.

    Either a constant, a callable ``f(x1, x2)`` (``f(x1, x2, n1, n2)`` when
    ``uses_normal``) returning two components, or P1 nodal values.
    """

    def __init__(self, value=None, func=None, nodal=None, uses_normal: bool = False):
        self.value = None if value is None else np.asarray(value, dtype=float)
        self.func = func
        self.nodal = None if nodal is None else np.asarray(nodal, dtype=float)
        self.uses_normal = uses_normal

    @classmethod
    def coerce(cls, spec) -> "VectorSource | None":
        if spec is None or isinstance(spec, VectorSource):
            return spec
        if callable(spec):
            return cls(func=spec)
        return cls(value=spec)

    @property
    def is_zero(self) -> bool:
        if self.value is not None:
            return not np.any(self.value)
        if self.nodal is not None:
            return not np.any(self.nodal)
        return False

    def _call(self, pts, normals=None):
        if self.value is not None:
            return np.broadcast_to(self.value, pts.shape).copy()
        x, y = pts[..., 0], pts[..., 1]
        if self.uses_normal:
            nx = np.broadcast_to(normals[..., 0], x.shape)
            ny = np.broadcast_to(normals[..., 1], x.shape)
            out = self.func(x, y, nx, ny)
        else:
            out = self.func(x, y)
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), x.shape) for c in out], axis=-1)

    def volume(self, mesh: Mesh, geom: Geometry) -> np.ndarray:
        if self.nodal is not None:
            N, _ = basis(1, geom.quad.points)
            return np.einsum("qb,tbc->tqc", N, self.nodal[mesh.triangles])
        return self._call(geom.points)

    def boundary(self, mesh: Mesh, bq: BoundaryQuadrature) -> np.ndarray:
        if self.nodal is not None:
            be = mesh.boundary_edges[bq.edges]
            N = edge_basis(1, bq.s)
            return np.einsum("gk,ekc->egc", N, self.nodal[be])
        return self._call(bq.points, bq.normals[:, None, :])


# --------------------------------------------------------------------------
# the discrete system


@dataclass
class FrozenCoefficients:
    """Coefficients held fixed during one inner solve.

    ``mu``: angle function at volume quadrature points (T, nq).
    ``traction``: regularized normal traction at slip-wall Gauss points.
    ``slip_speed``: squared smoothed tangential speed, only for the
    mollified-velocity slip variant.
    """

    mu: np.ndarray
    traction: np.ndarray
    slip_speed: np.ndarray | None = None


class DiscreteSystem:
    """Mesh, models, loads and the assembled weak-form operators."""

    def __init__(self, mesh: Mesh, viscosity, slip, efield=None, mu: MuSettings = MuSettings(),
                 kernel: MollifierKernel | None = None, body_force=None, traction=None,
                 slip_load=None, velocity_degree: int = 2, quad_order: int = 4):
        if any(mu.frame_velocity):
            raise NotImplementedError("a moving frame with slip walls is not supported")
        self.mesh = mesh
        self.dofs = DofMap(mesh, velocity_degree)
        self.viscosity = viscosity
        self.slip = slip
        self.efield = efield
        self.mu_settings = mu
        self.kernel = kernel if kernel is not None else MollifierKernel(default_radius(mesh))
        self.body_force = VectorSource.coerce(body_force)
        self.traction = VectorSource.coerce(traction)
        self.slip_load = VectorSource.coerce(slip_load)
        self.quad_order = quad_order

        self.geom = Geometry.build(mesh, quad_order)
        vs = self.dofs.vspace
        N, dN = vs.tabulate(self.geom.quad.points)
        self._N = N
        g = self.geom.physical_grads(dN)  # (T, nq, nb, 2)
        T_, nq, nb, _ = g.shape
        S = np.zeros((T_, nq, 3, 2 * nb))
        S[:, :, 0, 0::2] = g[..., 0]
        S[:, :, 1, 1::2] = g[..., 1]
        S[:, :, 2, 0::2] = g[..., 1] / math.sqrt(2.0)
        S[:, :, 2, 1::2] = g[..., 0] / math.sqrt(2.0)
        self._S = S
        D = np.zeros((T_, nq, 2 * nb))
        D[:, :, 0::2] = g[..., 0]
        D[:, :, 1::2] = g[..., 1]
        self._D = D

        if efield is None:
            self.E_q = np.zeros(self.geom.points.shape)
        elif efield.kind == "nodal" and efield.mesh is mesh:
            ref = self.geom.quad.points
            bary = np.column_stack([1.0 - ref.sum(axis=1), ref])
            elem = np.repeat(np.arange(mesh.n_triangles), len(ref))
            self.E_q = efield.at(self.geom.points, elem, np.tile(bary, (mesh.n_triangles, 1)))
        else:
            self.E_q = efield.at(self.geom.points)
        self.e_q = np.hypot(self.E_q[..., 0], self.E_q[..., 1])

        self.s1 = BoundaryQuadrature.build(mesh, mesh.tagged("S1"))
        edofs = vs.edge_dofs[mesh.tagged("S1")]
        self._s1_vdofs = np.stack([2 * edofs, 2 * edofs + 1], axis=2).reshape(len(edofs), -1)
        Ne = edge_basis(vs.degree, self.s1.s)  # (ng, ne)
        tau = self.s1.tangents
        Tr = np.einsum("gk,ec->egkc", Ne, tau).reshape(len(edofs), len(self.s1.s), -1)
        self._Tr = Tr[:, :, None, :]  # (E1, ng, 1, 2ne)

        self._traction_eval = None
        self._cache: dict = {}

    # ---- sizes and conversions ----------------------------------------

    @property
    def n_free(self) -> int:
        return self.dofs.n_free

    @property
    def n_pressure(self) -> int:
        return self.dofs.n_pressure

    def to_full(self, u_free):
        return self.dofs.to_full(u_free)

    def interpolate(self, func) -> np.ndarray:
        """Free unknowns of the nodal interpolant of ``func(x1, x2) -> (u1, u2)``."""
        x = self.dofs.vspace.coords
        vals = np.column_stack([np.broadcast_to(np.asarray(c, float), x[:, 0].shape)
                                for c in func(x[:, 0], x[:, 1])])
        return self.dofs.to_free(vals)

    def interpolate_pressure(self, func) -> np.ndarray:
        x = self.dofs.pspace.coords
        return np.broadcast_to(np.asarray(func(x[:, 0], x[:, 1]), float), x[:, 0].shape).copy()

    # ---- scatter helpers -------------------------------------------------

    def _scatter(self, dofs, res_loc, jac_loc):
        n = 2 * self.dofs.n_velocity_nodes
        T = self.dofs.T
        res = np.bincount(dofs.ravel(), weights=res_loc.ravel(), minlength=n)
        nd = dofs.shape[1]
        rows = np.repeat(dofs, nd, axis=1).ravel()
        cols = np.tile(dofs, (1, nd)).ravel()
        J = sparse.csr_matrix((jac_loc.ravel(), (rows, cols)), shape=(n, n))
        return T.T @ res, (T.T @ J @ T).tocsr()

    def _scatter_residual(self, dofs, res_loc):
        n = 2 * self.dofs.n_velocity_nodes
        return self.dofs.T.T @ np.bincount(dofs.ravel(), weights=res_loc.ravel(), minlength=n)

    def _local(self, u_free, dofs):
        flat = (self.dofs.T @ np.asarray(u_free, dtype=float))
        return flat[dofs]

    # ---- frozen coefficients -------------------------------------------

    @property
    def traction_evaluator(self) -> TractionEvaluator:
        if self._traction_eval is None:
            self._traction_eval = TractionEvaluator(
                self.mesh, self.dofs.vspace, self.dofs.pspace, self.viscosity, self.efield,
                self.mu_settings, self.kernel, self.quad_order)
        return self._traction_eval

    @property
    def angle_dependent(self) -> bool:
        visc = getattr(self.viscosity, "depends_on_angle", True)
        return bool(visc and self.efield is not None and not self.efield.is_zero)

    @property
    def traction_dependent(self) -> bool:
        return bool(getattr(self.slip, "depends_on_traction", True))

    def angle_at_points(self, u_free) -> np.ndarray:
        """Angle function of a velocity at the volume quadrature points."""
        if not self.angle_dependent:
            return np.zeros(self.e_q.shape)
        uq = self.dofs.vspace.at_points(self.to_full(u_free), self.geom)
        mu = np.zeros(self.e_q.shape)
        live = self.e_q > E_CUTOFF * max(self.e_q.max(), 1e-300)
        mu[live] = mu_angle(uq[live], self.E_q[live], self.mu_settings)
        # angle undefined where u = 0 and alpha_reg = 0
        return np.nan_to_num(mu, nan=0.0)

    def freeze(self, u_free, p, slip_variant: str = "traction") -> FrozenCoefficients:
        """Evaluate the coefficients frozen by the outer iteration at (u, p)."""
        if slip_variant not in ("traction", "mollified-velocity"):
            raise ValueError(f"unknown slip variant {slip_variant!r}")
        mu = self.angle_at_points(u_free)
        if self.traction_dependent:
            F = self.traction_evaluator(self.to_full(u_free), p).values
        else:
            F = np.zeros(self.s1.points.shape[:2])
        speed = None
        if slip_variant == "mollified-velocity":
            Pu = self.traction_evaluator.smoothed_velocity(self.to_full(u_free))
            speed = np.einsum("egc,ec->eg", Pu, self.s1.tangents) ** 2
        return FrozenCoefficients(mu, F, speed)

    def zero_frozen(self) -> FrozenCoefficients:
        return self.freeze(np.zeros(self.n_free), np.zeros(self.n_pressure))

    # ---- operators -------------------------------------------------------

    def strain_at_points(self, u_free) -> np.ndarray:
        """Weighted strain vectors (eps11, eps22, sqrt2 eps12), (T, nq, 3)."""
        return np.einsum("tqkd,td->tqk", self._S, self._local(u_free, self.dofs.cell_vdofs))

    def viscous(self, u_free, frozen_mu, backend=None, jacobian: bool = True):
        """Residual and Jacobian of ``2 int phi(I(u), |E|, mu) eps(u):eps(h)``.

        With ``jacobian=False`` only the residual is assembled (second item
        is None).
        """
        eps = self.strain_at_points(u_free)
        I = np.sum(eps * eps, axis=2)
        phi, dphi = self.viscosity(I, self.e_q, frozen_mu)
        phi = np.broadcast_to(phi, I.shape)
        dphi = np.broadcast_to(dphi, I.shape)
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(dphi))):
            t = int(np.argmax(~np.isfinite(phi).all(axis=1) | ~np.isfinite(dphi).all(axis=1)))
            raise FloatingPointError(f"non-finite viscosity in triangle {t}")
        if not jacobian:
            return self._scatter_residual(self.dofs.cell_vdofs, np.einsum(
                "tq,tqkd,tqk->td", self.geom.wdet * 2.0 * phi, self._S, eps)), None
        res, jac = kernels.strain_local(self._S, self.geom.wdet, 2.0 * phi, 4.0 * dphi, eps,
                                        backend=backend)
        return self._scatter(self.dofs.cell_vdofs, res, jac)

    def tangential_at_points(self, u_free) -> np.ndarray:
        """Tangential velocity component at slip-wall Gauss points, (E1, ng)."""
        loc = self._local(u_free, self._s1_vdofs)
        return np.einsum("egkd,ed->eg", self._Tr, loc)

    def slip_terms(self, u_free, traction, slip_speed=None, backend=None, jacobian: bool = True):
        """Residual and Jacobian of ``int_S1 chi(F, |u_tau|^2) u_tau . h_tau``.

        With ``slip_speed`` given (mollified-velocity variant) the second
        argument of chi is frozen and the operator is linear.
        """
        w = self.tangential_at_points(u_free)
        if slip_speed is None:
            chi, dchi = self.slip(traction, w * w)
            c2 = 2.0 * np.broadcast_to(dchi, w.shape)
        else:
            chi, _ = self.slip(traction, slip_speed)
            c2 = np.zeros(w.shape)
        chi = np.broadcast_to(chi, w.shape)
        if not jacobian:
            return self._scatter_residual(self._s1_vdofs, np.einsum(
                "eg,egkd,eg->ed", self.s1.weights * chi, self._Tr, w)), None
        res, jac = kernels.strain_local(self._Tr, self.s1.weights, chi, c2, w[..., None],
                                        backend=backend)
        return self._scatter(self._s1_vdofs, res, jac)

    def operator(self, u_free, frozen: FrozenCoefficients, jacobian: bool = True):
        """Frozen-coefficient operator (viscous + slip): residual and Jacobian."""
        rv, Jv = self.viscous(u_free, frozen.mu, jacobian=jacobian)
        rs, Js = self.slip_terms(u_free, frozen.traction, frozen.slip_speed, jacobian=jacobian)
        if not jacobian:
            return rv + rs, None
        return rv + rs, (Jv + Js).tocsr()

    @property
    def B(self) -> sparse.csr_matrix:
        """Divergence operator: pressure rows, free velocity columns."""
        if "B" not in self._cache:
            psi, _ = basis(1, self.geom.quad.points)  # (nq, 3)
            loc = np.einsum("tq,qi,tqd->tid", self.geom.wdet, psi, self._D)
            pd = self.dofs.pspace.cell_dofs
            vd = self.dofs.cell_vdofs
            rows = np.repeat(pd[:, :, None], vd.shape[1], axis=2).ravel()
            cols = np.repeat(vd[:, None, :], 3, axis=1).ravel()
            Bf = sparse.csr_matrix((loc.ravel(), (rows, cols)),
                                   shape=(self.n_pressure, 2 * self.dofs.n_velocity_nodes))
            self._cache["B"] = (Bf @ self.dofs.T).tocsr()
        return self._cache["B"]

    @property
    def pressure_mass(self) -> sparse.csr_matrix:
        if "Mp" not in self._cache:
            psi, _ = basis(1, self.geom.quad.points)
            loc = np.einsum("tq,qi,qj->tij", self.geom.wdet, psi, psi)
            pd = self.dofs.pspace.cell_dofs
            rows = np.repeat(pd, 3, axis=1).ravel()
            cols = np.tile(pd, (1, 3)).ravel()
            n = self.n_pressure
            self._cache["Mp"] = sparse.csr_matrix((loc.ravel(), (rows, cols)), shape=(n, n))
        return self._cache["Mp"]

    @property
    def gram(self) -> sparse.csr_matrix:
        """Matrix of the Z inner product int eps(u):eps(v) + int_S1 u_tau v_tau."""
        if "G" not in self._cache:
            ones = np.ones(self.geom.wdet.shape)
            _, Jv = self._scatter(self.dofs.cell_vdofs, *kernels.strain_local(
                self._S, self.geom.wdet, ones, np.zeros_like(ones), np.zeros(ones.shape + (3,))))
            bones = np.ones(self.s1.weights.shape)
            _, Jb = self._scatter(self._s1_vdofs, *kernels.strain_local(
                self._Tr, self.s1.weights, bones, np.zeros_like(bones),
                np.zeros(bones.shape + (1,))))
            self._cache["G"] = (Jv + Jb).tocsr()
        return self._cache["G"]

    def _gram_lu(self):
        if "G_lu" not in self._cache:
            self._cache["G_lu"] = spla.splu(self.gram.tocsc())
        return self._cache["G_lu"]

    def _mass_lu(self):
        if "Mp_lu" not in self._cache:
            self._cache["Mp_lu"] = spla.splu(self.pressure_mass.tocsc())
        return self._cache["Mp_lu"]

    def z_norm(self, u_free) -> float:
        u = np.asarray(u_free, dtype=float)
        return math.sqrt(max(float(u @ (self.gram @ u)), 0.0))

    def dual_norm(self, f) -> float:
        """Norm of a free-DOF functional in the dual of the Z norm."""
        f = np.asarray(f, dtype=float)
        return math.sqrt(max(float(f @ self._gram_lu().solve(f)), 0.0))

    def riesz(self, f) -> np.ndarray:
        return self._gram_lu().solve(np.asarray(f, dtype=float))

    def pressure_l2(self, p) -> float:
        p = np.asarray(p, dtype=float)
        return math.sqrt(max(float(p @ (self.pressure_mass @ p)), 0.0))

    def div_l2(self, u_free) -> float:
        """L2 norm of the divergence of the discrete velocity."""
        div = np.einsum("tqd,td->tq", self._D, self._local(u_free, self.dofs.cell_vdofs))
        return math.sqrt(float(np.sum(self.geom.wdet * div * div)))

    def constraint_l2(self, u_free) -> float:
        """L2 norm of the P1 projection of div u."""
        r = self.B @ np.asarray(u_free, dtype=float)
        return math.sqrt(max(float(r @ self._mass_lu().solve(r)), 0.0))

    def pressure_from_divergence(self, u_free, alpha: float) -> np.ndarray:
        """P1 projection of ``-div(u) / alpha``."""
        return -self._mass_lu().solve(self.B @ np.asarray(u_free, dtype=float)) / alpha

    @property
    def load(self) -> np.ndarray:
        if "f" not in self._cache:
            self._cache["f"] = self.assemble_load(self.body_force, self.traction, self.slip_load)
        return self._cache["f"]

    def assemble_load(self, body_force=None, traction=None, slip_load=None) -> np.ndarray:
        """Free-DOF load vector of ``int K.h + int_S2 F.h (+ int_S1 g.h)``."""
        n = 2 * self.dofs.n_velocity_nodes
        full = np.zeros(n)
        vs = self.dofs.vspace
        body_force = VectorSource.coerce(body_force)
        traction = VectorSource.coerce(traction)
        slip_load = VectorSource.coerce(slip_load)
        if body_force is not None and not body_force.is_zero:
            K = body_force.volume(self.mesh, self.geom)  # (T, nq, 2)
            loc = np.einsum("tq,qb,tqc->tbc", self.geom.wdet, self._N, K).reshape(len(K), -1)
            full += np.bincount(self.dofs.cell_vdofs.ravel(), loc.ravel(), minlength=n)
        for src, tag in ((traction, "S2"), (slip_load, "S1")):
            if src is None or src.is_zero:
                continue
            which = self.mesh.tagged(tag)
            bq = self.s1 if tag == "S1" else BoundaryQuadrature.build(self.mesh, which)
            F = src.boundary(self.mesh, bq)  # (Eb, ng, 2)
            Ne = edge_basis(vs.degree, bq.s)
            loc = np.einsum("eg,gk,egc->ekc", bq.weights, Ne, F).reshape(len(F), -1)
            ed = vs.edge_dofs[which]
            vd = np.stack([2 * ed, 2 * ed + 1], axis=2).reshape(len(ed), -1)
            full += np.bincount(vd.ravel(), loc.ravel(), minlength=n)
        return self.dofs.T.T @ full


# --------------------------------------------------------------------------
# module-level operations


def z_norm(system: DiscreteSystem, u_free) -> float:
    return system.z_norm(u_free)


def assemble_viscous(system: DiscreteSystem, u_free, frozen_mu):
    return system.viscous(u_free, frozen_mu)


def assemble_slip(system: DiscreteSystem, u_free, traction, slip_speed=None):
    values = getattr(traction, "values", traction)
    return system.slip_terms(u_free, values, slip_speed)


def assemble_div(system: DiscreteSystem) -> sparse.csr_matrix:
    return system.B


def assemble_load(system: DiscreteSystem, body_force=None, traction=None, slip_load=None):
    return system.assemble_load(body_force, traction, slip_load)
