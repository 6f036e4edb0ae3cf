"""Reference elements, quadrature and per-mesh geometry for P1/P2 triangles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

# --------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class Quadrature:
    points: np.ndarray   # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,), sum = 1/2 for triangles, 1 for edges

    @property
    def n(self) -> int:
        return len(self.weights)


def triangle_rule(order: int = 4) -> Quadrature:
    """Symmetric Gauss rules on the reference triangle (degree 1, 2 or 4)."""
    if order <= 1:
        return Quadrature(np.array([[1 / 3, 1 / 3]]), np.array([0.5]))
    if order == 2:
        p = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        return Quadrature(p, np.full(3, 1 / 6))
    if order <= 4:
        a, b = 0.445948490915965, 0.091576213509771
        wa, wb = 0.223381589678011, 0.109951743655322
        p = np.array([[a, a], [1 - 2 * a, a], [a, 1 - 2 * a],
                      [b, b], [1 - 2 * b, b], [b, 1 - 2 * b]])
        return Quadrature(p, 0.5 * np.array([wa, wa, wa, wb, wb, wb]))
    raise ValueError(f"no triangle rule of order {order}")


def edge_rule() -> Quadrature:
    """3-point Gauss-Legendre on [0, 1] (exact to degree 5)."""
    r = np.sqrt(3 / 5) / 2
    return Quadrature(np.array([0.5 - r, 0.5, 0.5 + r]), np.array([5 / 18, 8 / 18, 5 / 18]))


# --------------------------------------------------------------------------
# Lagrange basis on the reference triangle


def basis(degree: int, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values (nq, nb) and reference gradients (nq, nb, 2).

    Local order: vertices 0, 1, 2, then midpoints of edges 01, 12, 20.
    """
    ref = np.atleast_2d(ref)
    xi, eta = ref[:, 0], ref[:, 1]
    L = np.stack([1 - xi - eta, xi, eta], axis=1)
    dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    nq = len(ref)
    if degree == 1:
        return L, np.broadcast_to(dL, (nq, 3, 2)).copy()
    if degree != 2:
        raise ValueError("only P1 and P2 are supported")
    val = np.empty((nq, 6))
    grad = np.empty((nq, 6, 2))
    for i in range(3):
        val[:, i] = L[:, i] * (2 * L[:, i] - 1)
        grad[:, i] = (4 * L[:, i] - 1)[:, None] * dL[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        val[:, 3 + k] = 4 * L[:, i] * L[:, j]
        grad[:, 3 + k] = 4 * (L[:, j][:, None] * dL[i] + L[:, i][:, None] * dL[j])
    return val, grad


def edge_basis(degree: int, s: np.ndarray) -> np.ndarray:
    """Values along an edge parametrized by s in [0, 1].

    Columns follow the edge node order (start, [midpoint,] end).
    """
    s = np.asarray(s, dtype=float)
    if degree == 1:
        return np.column_stack([1 - s, s])
    return np.column_stack([(1 - s) * (1 - 2 * s), 4 * s * (1 - s), s * (2 * s - 1)])


# --------------------------------------------------------------------------
# geometry and spaces


@dataclass(frozen=True, eq=False)
class Geometry:
    """Affine maps of all triangles evaluated on a quadrature rule."""

    quad: Quadrature
    det: np.ndarray      # (T,) = 2 * area
    inv_jac: np.ndarray  # (T, 2, 2)
    points: np.ndarray   # (T, nq, 2) physical quadrature points
    wdet: np.ndarray     # (T, nq) quadrature weight times |det J|

    @classmethod
    def build(cls, mesh: Mesh, order: int = 4) -> "Geometry":
        quad = triangle_rule(order)
        p = mesh.nodes[mesh.triangles]
        v0 = p[:, 0]
        J = np.stack([p[:, 1] - v0, p[:, 2] - v0], axis=2)  # columns
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        pts = v0[:, None, :] + np.einsum("tij,qj->tqi", J, quad.points)
        wdet = np.abs(det)[:, None] * quad.weights[None, :]
        return cls(quad, det, inv, pts, wdet)

    def physical_grads(self, ref_grads: np.ndarray) -> np.ndarray:
        """(nq, nb, 2) reference gradients -> (T, nq, nb, 2) physical ones."""
        return np.einsum("tji,qbj->tqbi", self.inv_jac, ref_grads)


class ScalarSpace:
    """Continuous Lagrange space of degree 1 or 2 on a mesh.

    P2 nodes are the mesh vertices followed by one node per unique edge.
    """

    def __init__(self, mesh: Mesh, degree: int):
        if degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        self.mesh = mesh
        self.degree = degree
        nv = mesh.n_nodes
        if degree == 1:
            self.cell_dofs = mesh.triangles.copy()
            self.coords = mesh.nodes.copy()
            self.edge_dofs = mesh.boundary_edges.copy()
        else:
            edges, tri_edges = mesh.edges()
            self.cell_dofs = np.hstack([mesh.triangles, tri_edges + nv])
            mids = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
            self.coords = np.vstack([mesh.nodes, mids])
            be = mesh.boundary_edges
            keys = np.sort(be, axis=1)
            ekey = edges[:, 0].astype(np.int64) * (nv + 1) + edges[:, 1]
            pos = np.searchsorted(ekey, keys[:, 0].astype(np.int64) * (nv + 1) + keys[:, 1])
            self.edge_dofs = np.column_stack([be[:, 0], pos + nv, be[:, 1]])
        self.n_dofs = len(self.coords)
        self.n_local = self.cell_dofs.shape[1]

    def tabulate(self, ref: np.ndarray):
        return basis(self.degree, ref)

    def at_points(self, values: np.ndarray, geom: Geometry) -> np.ndarray:
        """Interpolant at the quadrature points, shape (T, nq, ...)."""
        N, _ = self.tabulate(geom.quad.points)
        return np.einsum("qb,tb...->tq...", N, values[self.cell_dofs])

    def grads_at_points(self, values: np.ndarray, geom: Geometry) -> np.ndarray:
        """Gradient of the interpolant at quadrature points.

        For scalar ``values`` the result is (T, nq, 2); for vector nodal
        values of shape (n, 2) it is (T, nq, 2, 2) with ``[..., i, j] = du_i/dx_j``.
        """
        _, dN = self.tabulate(geom.quad.points)
        g = geom.physical_grads(dN)
        return np.einsum("tqbj,tb...->tq...j", g, values[self.cell_dofs])


@dataclass(frozen=True, eq=False)
class BoundaryQuadrature:
    """Gauss points on a subset of boundary edges."""

    edges: np.ndarray     # (Eb,) boundary edge indices
    points: np.ndarray    # (Eb, ng, 2)
    weights: np.ndarray   # (Eb, ng) Gauss weight times edge length
    normals: np.ndarray   # (Eb, 2)
    tangents: np.ndarray  # (Eb, 2)
    s: np.ndarray         # (ng,) edge parameters
    parent: np.ndarray    # (Eb,) parent triangle
    bary: np.ndarray      # (Eb, ng, 3) barycentric coordinates in the parent

    @classmethod
    def build(cls, mesh: Mesh, which: np.ndarray) -> "BoundaryQuadrature":
        rule = edge_rule()
        be = mesh.boundary_edges[which]
        a = mesh.nodes[be[:, 0]]
        b = mesh.nodes[be[:, 1]]
        pts = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
        length = np.hypot(*(b - a).T)
        parent = mesh.edge_parent[which]
        tri = mesh.triangles[parent]
        bary = np.zeros((len(which), rule.n, 3))
        for k in range(3):
            bary[:, :, k] += np.where((tri[:, k] == be[:, 0])[:, None], 1 - rule.points[None, :], 0.0)
            bary[:, :, k] += np.where((tri[:, k] == be[:, 1])[:, None], rule.points[None, :], 0.0)
        return cls(np.asarray(which), pts, length[:, None] * rule.weights[None, :],
                   mesh.normals()[which], mesh.tangents()[which], rule.points, parent, bary)

    @property
    def ref_points(self) -> np.ndarray:
        """Reference (xi, eta) coordinates inside the parent triangle."""
        return self.bary[..., 1:]

    def eval_in_parent(self, space: ScalarSpace, values: np.ndarray) -> np.ndarray:
        """Interpolant of nodal ``values`` at the points, (Eb, ng, ...)."""
        ref = self.ref_points.reshape(-1, 2)
        N, _ = basis(space.degree, ref)
        N = N.reshape(len(self.edges), -1, space.n_local)
        return np.einsum("egb,eb...->eg...", N, values[space.cell_dofs[self.parent]])

    def grads_in_parent(self, space: ScalarSpace, values: np.ndarray, geom: Geometry) -> np.ndarray:
        """Gradient (from the parent triangle) of nodal vector ``values``."""
        ref = self.ref_points.reshape(-1, 2)
        _, dN = basis(space.degree, ref)
        dN = dN.reshape(len(self.edges), -1, space.n_local, 2)
        inv = geom.inv_jac[self.parent]
        g = np.einsum("eji,egbj->egbi", inv, dN)
        return np.einsum("egbj,eb...->eg...j", g, values[space.cell_dofs[self.parent]])
