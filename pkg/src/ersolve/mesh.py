"""Triangular meshes with a tagged boundary.

The boundary is split into slip walls (``S1``) and traction boundaries
(``S2``).  Tags live on boundary edges; every boundary edge carries exactly
one tag and both tag sets must be non-empty.

Text format (one record per line, ``#`` starts a comment)::

    node <id> <x> <y>
    tri  <id> <n1> <n2> <n3>
    bedge <n1> <n2> <S1|S2>
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TAGS = ("S1", "S2")


class MeshError(ValueError):
    """Base class for mesh problems."""


class MeshParseError(MeshError):
    pass


class MeshTopologyError(MeshError):
    pass


@dataclass(frozen=True)
class EdgeFrame:
    """Outward unit normal and tangent of a straight boundary edge.

    The tangent is the normal rotated by -90 degrees.
    """

    normal: np.ndarray
    tangent: np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable 2D triangulation.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (T, 3) int array, counterclockwise
    boundary_edges : (E, 2) int array
    edge_tags : (E,) array of ``"S1"`` / ``"S2"``
    edge_parent : (E,) int array, index of the triangle owning each edge
    reoriented : number of triangles flipped to counterclockwise on load
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    edge_parent: np.ndarray
    reoriented: int = 0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self) -> float:
        return float(self.signed_areas().sum())

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and the triangle-to-edge map.

        Returns ``(edges, tri_edges)`` where ``edges`` is (M, 2) with sorted
        endpoints in lexicographic order and ``tri_edges[t, k]`` is the edge
        between local vertices ``k`` and ``k+1 (mod 3)``.
        """
        if "edges" not in self._cache:
            self._cache["edges"] = _unique_edges(self.triangles)
        return self._cache["edges"]

    def tagged(self, tag: str) -> np.ndarray:
        """Indices of boundary edges carrying ``tag``."""
        return np.flatnonzero(self.edge_tags == tag)

    def edge_lengths(self, which: np.ndarray | None = None) -> np.ndarray:
        be = self.boundary_edges if which is None else self.boundary_edges[which]
        d = self.nodes[be[:, 1]] - self.nodes[be[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def normals(self) -> np.ndarray:
        """Outward unit normals of the boundary edges, shape (E, 2)."""
        if "normals" not in self._cache:
            self._cache["normals"] = _outward_normals(self)
        return self._cache["normals"]

    def tangents(self) -> np.ndarray:
        n = self.normals()
        return np.column_stack([n[:, 1], -n[:, 0]])

    def translated(self, shift) -> "Mesh":
        return _replace_nodes(self, self.nodes + np.asarray(shift, dtype=float))

    def rotated(self, angle: float) -> "Mesh":
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        return _replace_nodes(self, self.nodes @ rot.T)


def _replace_nodes(m: Mesh, nodes: np.ndarray) -> Mesh:
    return Mesh(nodes, m.triangles.copy(), m.boundary_edges.copy(),
                m.edge_tags.copy(), m.edge_parent.copy())


def _unique_edges(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    local = np.array([[0, 1], [1, 2], [2, 0]])
    all_edges = np.sort(triangles[:, local].reshape(-1, 2), axis=1)
    edges, inverse = np.unique(all_edges, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


def _edge_keys(pairs: np.ndarray, n_nodes: int) -> np.ndarray:
    s = np.sort(pairs, axis=1).astype(np.int64)
    return s[:, 0] * (n_nodes + 1) + s[:, 1]


def _find_parents(triangles: np.ndarray, bedges: np.ndarray, n_nodes: int) -> np.ndarray:
    local = np.array([[0, 1], [1, 2], [2, 0]])
    tri_keys = _edge_keys(triangles[:, local].reshape(-1, 2), n_nodes)
    order = np.argsort(tri_keys, kind="stable")
    sorted_keys = tri_keys[order]
    keys = _edge_keys(bedges, n_nodes)
    pos = np.searchsorted(sorted_keys, keys)
    pos = np.minimum(pos, len(sorted_keys) - 1)
    found = sorted_keys[pos] == keys
    parents = np.where(found, order[pos] // 3, -1)
    return parents.astype(np.int64)


def _outward_normals(m: Mesh) -> np.ndarray:
    be = m.boundary_edges
    d = m.nodes[be[:, 1]] - m.nodes[be[:, 0]]
    length = np.hypot(d[:, 0], d[:, 1])
    n = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    centroid = m.nodes[m.triangles[m.edge_parent]].mean(axis=1)
    mid = 0.5 * (m.nodes[be[:, 0]] + m.nodes[be[:, 1]])
    flip = np.einsum("ij,ij->i", n, centroid - mid) > 0
    n[flip] *= -1.0
    return n


def make_mesh(nodes, triangles, boundary_edges, edge_tags, *, check: bool = True) -> Mesh:
    """Build a mesh, fixing clockwise triangles and locating edge parents.

    Raises :class:`MeshTopologyError` if ``check`` is set and
    :func:`validate_mesh` reports anything.
    """
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 2)
    tris = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    bedges = np.array(boundary_edges, dtype=np.int64).reshape(-1, 2)
    tags = np.array([str(t) for t in edge_tags], dtype="<U2")
    if len(tags) != len(bedges):
        raise MeshError("one tag per boundary edge required")
    if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
        raise MeshTopologyError("triangle references a missing node")
    if bedges.size and (bedges.min() < 0 or bedges.max() >= len(nodes)):
        raise MeshTopologyError("boundary edge references a missing node")

    p = nodes[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    signed = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    cw = signed < 0
    n_flipped = int(cw.sum())
    if n_flipped:
        tris[cw] = tris[cw][:, [0, 2, 1]]
        warnings.warn(f"{n_flipped} clockwise triangle(s) reoriented", stacklevel=2)

    parents = _find_parents(tris, bedges, len(nodes)) if len(bedges) else np.zeros(0, np.int64)
    mesh = Mesh(nodes, tris, bedges, tags, parents, reoriented=n_flipped)
    if check:
        problems = validate_mesh(mesh)
        if problems:
            raise MeshTopologyError("; ".join(problems))
    return mesh


def validate_mesh(m: Mesh) -> list[str]:
    """List every violated mesh invariant; an empty list means valid."""
    report: list[str] = []
    n = m.n_nodes
    areas = m.signed_areas()
    for t in np.flatnonzero(areas <= 0):
        report.append(f"non-positive area in triangle {t}")

    sorted_tris = np.sort(m.triangles, axis=1)
    _, counts = np.unique(sorted_tris, axis=0, return_counts=True)
    if np.any(counts > 1):
        report.append("non-manifold edge: duplicated triangle")

    local = np.array([[0, 1], [1, 2], [2, 0]])
    keys = _edge_keys(m.triangles[:, local].reshape(-1, 2), n)
    ukeys, ecount = np.unique(keys, return_counts=True)
    for k in ukeys[ecount > 2]:
        report.append(f"non-manifold edge ({k // (n + 1)}, {k % (n + 1)})")
    topo_boundary = ukeys[ecount == 1]

    bkeys = _edge_keys(m.boundary_edges, n) if len(m.boundary_edges) else np.zeros(0, np.int64)
    bk_unique, bk_count = np.unique(bkeys, return_counts=True)
    for k in bk_unique[bk_count > 1]:
        report.append(f"boundary edge ({k // (n + 1)}, {k % (n + 1)}) tagged more than once")
    for k in np.setdiff1d(topo_boundary, bkeys):
        report.append(f"uncovered boundary: edge ({k // (n + 1)}, {k % (n + 1)}) has no tag")
    for k in np.setdiff1d(bkeys, topo_boundary):
        report.append(f"tagged edge ({k // (n + 1)}, {k % (n + 1)}) is not a boundary edge")

    bad_tags = set(np.unique(m.edge_tags)) - set(TAGS)
    if bad_tags:
        report.append(f"unknown boundary tags {sorted(bad_tags)}")
    for tag in TAGS:
        if not np.any(m.edge_tags == tag):
            report.append(f"{tag} empty")

    # closed polygonal loop: every boundary vertex has exactly two boundary edges
    if len(topo_boundary):
        ends = np.concatenate([topo_boundary // (n + 1), topo_boundary % (n + 1)])
        deg = np.bincount(ends, minlength=n)
        if np.any((deg != 0) & (deg != 2)):
            report.append("boundary is not a closed polygonal loop")
        # hanging nodes sit strictly inside an edge that looks like boundary
        a = m.nodes[topo_boundary // (n + 1)]
        b = m.nodes[topo_boundary % (n + 1)]
        bverts = np.flatnonzero(deg > 0)
        for ia, ib, key in zip(a, b, topo_boundary):
            d = ib - ia
            ll = d @ d
            q = m.nodes[bverts] - ia
            t = q @ d / ll
            perp = np.abs(q[:, 0] * d[1] - q[:, 1] * d[0]) / np.sqrt(ll)
            inside = (t > 1e-12) & (t < 1 - 1e-12) & (perp < 1e-12 * np.sqrt(ll))
            if np.any(inside):
                report.append(f"hanging node {bverts[inside][0]} on edge "
                              f"({key // (n + 1)}, {key % (n + 1)})")

    used = np.zeros(n, bool)
    used[m.triangles.ravel()] = True
    if not used.all():
        report.append(f"{int((~used).sum())} node(s) not used by any triangle")
    if len(m.edge_parent) and np.any(m.edge_parent < 0):
        report.append("boundary edge without parent triangle")
    return report


def load_mesh(path) -> Mesh:
    """Read a mesh from the line-oriented text format."""
    node_ids: dict[int, int] = {}
    coords: list[tuple[float, float]] = []
    tris: list[tuple[int, int, int]] = []
    bedges: list[tuple[int, int]] = []
    tags: list[str] = []
    raw_tris: list[tuple[int, tuple[int, int, int]]] = []
    raw_edges: list[tuple[int, tuple[int, int]]] = []

    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "node" and len(parts) == 4:
                nid = int(parts[1])
                if nid in node_ids:
                    raise MeshParseError(f"line {lineno}: duplicate node id {nid}")
                node_ids[nid] = len(coords)
                coords.append((float(parts[2]), float(parts[3])))
            elif kind == "tri" and len(parts) == 5:
                raw_tris.append((lineno, (int(parts[2]), int(parts[3]), int(parts[4]))))
            elif kind == "bedge" and len(parts) == 4:
                if parts[3] not in TAGS:
                    raise MeshParseError(f"line {lineno}: unknown tag {parts[3]!r}")
                raw_edges.append((lineno, (int(parts[1]), int(parts[2]))))
                tags.append(parts[3])
            else:
                raise MeshParseError(f"line {lineno}: malformed record {line!r}")
        except ValueError as exc:
            if isinstance(exc, MeshParseError):
                raise
            raise MeshParseError(f"line {lineno}: malformed record {line!r}") from exc

    for lineno, ids in raw_tris:
        try:
            tris.append(tuple(node_ids[i] for i in ids))
        except KeyError as exc:
            raise MeshTopologyError(f"line {lineno}: triangle references missing node {exc.args[0]}")
    for lineno, ids in raw_edges:
        try:
            bedges.append(tuple(node_ids[i] for i in ids))
        except KeyError as exc:
            raise MeshTopologyError(f"line {lineno}: edge references missing node {exc.args[0]}")
    return make_mesh(coords, tris, bedges, tags)


def write_mesh(m: Mesh, path) -> None:
    lines = [f"# {m.n_nodes} nodes, {m.n_triangles} triangles"]
    lines += [f"node {i} {x!r} {y!r}" for i, (x, y) in enumerate(m.nodes.tolist())]
    lines += [f"tri {i} {a} {b} {c}" for i, (a, b, c) in enumerate(m.triangles.tolist())]
    lines += [f"bedge {a} {b} {t}" for (a, b), t in zip(m.boundary_edges.tolist(), m.edge_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def refine_uniform(m: Mesh) -> Mesh:
    """Split every triangle into four through its edge midpoints.

    Old nodes keep their indices; midpoint ``k`` of the sorted unique edge
    list gets index ``n_nodes + k``.
    """
    edges, tri_edges = m.edges()
    n = m.n_nodes
    mids = 0.5 * (m.nodes[edges[:, 0]] + m.nodes[edges[:, 1]])
    nodes = np.vstack([m.nodes, mids])
    a, b, c = m.triangles.T
    mab, mbc, mca = (tri_edges + n).T
    tris = np.concatenate([
        np.column_stack([a, mab, mca]),
        np.column_stack([mab, b, mbc]),
        np.column_stack([mca, mbc, c]),
        np.column_stack([mab, mbc, mca]),
    ])
    # keep children of one parent together for locality
    tris = tris.reshape(4, -1, 3).transpose(1, 0, 2).reshape(-1, 3)

    ekeys = _edge_keys(edges, n)
    bkeys = _edge_keys(m.boundary_edges, n)
    pos = np.searchsorted(ekeys, bkeys)
    bm = pos + n
    be = m.boundary_edges
    new_edges = np.stack([np.column_stack([be[:, 0], bm]),
                          np.column_stack([bm, be[:, 1]])], axis=1).reshape(-1, 2)
    new_tags = np.repeat(m.edge_tags, 2)
    parents = _find_parents(tris, new_edges, len(nodes))
    return Mesh(nodes, tris, new_edges, new_tags, parents)


def boundary_frames(m: Mesh) -> dict[int, EdgeFrame]:
    """Map each boundary edge index to its outward frame."""
    n = m.normals()
    t = m.tangents()
    return {i: EdgeFrame(n[i].copy(), t[i].copy()) for i in range(len(n))}


def rectangle_mesh(nx: int, ny: int, *, x0: float = 0.0, x1: float = 1.0,
                   y0: float = 0.0, y1: float = 1.0, sides: dict | None = None) -> Mesh:
    """Structured rectangle split into ``2*nx*ny`` triangles.

    ``sides`` maps ``bottom``/``right``/``top``/``left`` to a tag; the default
    puts slip walls at the bottom and top (a channel).
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be positive")
    tags = {"bottom": "S1", "top": "S1", "left": "S2", "right": "S2"}
    if sides:
        unknown = set(sides) - set(tags)
        if unknown:
            raise MeshError(f"unknown sides {sorted(unknown)}")
        tags.update(sides)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I, J = I.ravel(), J.ravel()
    n00, n10, n11, n01 = idx(I, J), idx(I + 1, J), idx(I + 1, J + 1), idx(I, J + 1)
    tris = np.stack([np.column_stack([n00, n10, n11]),
                     np.column_stack([n00, n11, n01])], axis=1).reshape(-1, 3)

    edges, etags = [], []
    for i in range(nx):
        edges.append((idx(i, 0), idx(i + 1, 0)))
        etags.append(tags["bottom"])
    for j in range(ny):
        edges.append((idx(nx, j), idx(nx, j + 1)))
        etags.append(tags["right"])
    for i in range(nx, 0, -1):
        edges.append((idx(i, ny), idx(i - 1, ny)))
        etags.append(tags["top"])
    for j in range(ny, 0, -1):
        edges.append((idx(0, j), idx(0, j - 1)))
        etags.append(tags["left"])
    return make_mesh(nodes, tris, edges, etags)


def locate_points(m: Mesh, points, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Find a containing triangle and barycentric coordinates for each point.

    Returns ``(elem, bary)``; ``elem`` is -1 for points outside the mesh.
    Brute force over triangles, in chunks.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = m.nodes[m.triangles]
    v0 = p[:, 0]
    d1 = p[:, 1] - v0
    d2 = p[:, 2] - v0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    elem = np.full(len(pts), -1, dtype=np.int64)
    bary = np.zeros((len(pts), 3))
    chunk = max(1, 200_000 // max(1, m.n_triangles))
    for s in range(0, len(pts), chunk):
        q = pts[s:s + chunk, None, :] - v0[None]
        l1 = (q[..., 0] * d2[:, 1] - q[..., 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * q[..., 1] - d1[:, 1] * q[..., 0]) / det
        l0 = 1.0 - l1 - l2
        ok = (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol)
        hit = ok.any(axis=1)
        first = ok.argmax(axis=1)
        rows = np.arange(len(q))
        elem[s:s + chunk] = np.where(hit, first, -1)
        bary[s:s + chunk] = np.column_stack([l0[rows, first], l1[rows, first], l2[rows, first]])
    return elem, bary
