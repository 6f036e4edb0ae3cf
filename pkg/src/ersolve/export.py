"""Field export: CSV, legacy ASCII VTK and a reloadable npz bundle.

Numbers are written with ``repr`` so files round-trip exactly and identical
fields always give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fem import ScalarSpace
from .mesh import Mesh, load_mesh, write_mesh

VTK_QUADRATIC_TRIANGLE = 22
VTK_TRIANGLE = 5


def pressure_at_velocity_nodes(mesh: Mesh, velocity_coords, pressure) -> np.ndarray:
    """P1 pressure evaluated at every velocity node (vertices, then edge midpoints)."""
    pressure = np.asarray(pressure, dtype=float)
    n = len(velocity_coords)
    if n == mesh.n_nodes:
        return pressure.copy()
    edges, _ = mesh.edges()
    return np.concatenate([pressure, 0.5 * (pressure[edges[:, 0]] + pressure[edges[:, 1]])])


def _num(x: float) -> str:
    x = float(x)
    return "0" if x == 0.0 else repr(x)  # folds -0.0 into 0


def write_csv(path, coords, velocity, p_nodes) -> Path:
    lines = ["node_id,x,y,u1,u2,p"]
    for i, ((x, y), (u1, u2), p) in enumerate(zip(np.asarray(coords).tolist(),
                                                   np.asarray(velocity).tolist(),
                                                   np.asarray(p_nodes).tolist())):
        lines.append(",".join([str(i), _num(x), _num(y), _num(u1), _num(u2), _num(p)]))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_vtk(path, mesh: Mesh, coords, velocity, p_nodes, title: str = "ersolve solution") -> Path:
    coords = np.asarray(coords)
    quadratic = len(coords) != mesh.n_nodes
    if quadratic:
        cells = ScalarSpace(mesh, 2).cell_dofs
        ctype = VTK_QUADRATIC_TRIANGLE
    else:
        cells = mesh.triangles
        ctype = VTK_TRIANGLE
    nper = cells.shape[1]
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(coords)} double"]
    out += [f"{_num(x)} {_num(y)} 0" for x, y in coords.tolist()]
    out.append(f"CELLS {len(cells)} {len(cells) * (nper + 1)}")
    out += [" ".join([str(nper)] + [str(i) for i in c]) for c in cells.tolist()]
    out.append(f"CELL_TYPES {len(cells)}")
    out += [str(ctype)] * len(cells)
    out.append(f"POINT_DATA {len(coords)}")
    out.append("VECTORS u double")
    out += [f"{_num(a)} {_num(b)} 0" for a, b in np.asarray(velocity).tolist()]
    out += ["SCALARS p double 1", "LOOKUP_TABLE default"]
    out += [_num(p) for p in np.asarray(p_nodes).tolist()]
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


def save_fields(run_dir, mesh: Mesh, fields) -> None:
    """Store mesh and fields so that :func:`export_run` can re-export later."""
    run_dir = Path(run_dir)
    write_mesh(mesh, run_dir / "mesh.txt")
    np.savez(run_dir / "fields.npz", velocity=fields.velocity, pressure=fields.pressure,
             velocity_coords=fields.velocity_coords, pressure_coords=fields.pressure_coords,
             u_free=fields.u_free)


def export_fields(out_dir, mesh: Mesh, coords, velocity, pressure, formats=("csv",)) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    p_nodes = pressure_at_velocity_nodes(mesh, coords, pressure)
    written = []
    for fmt in formats:
        if fmt == "csv":
            written.append(write_csv(out_dir / "solution.csv", coords, velocity, p_nodes))
        elif fmt == "vtk":
            written.append(write_vtk(out_dir / "solution.vtk", mesh, coords, velocity, p_nodes))
        else:
            raise ValueError(f"unknown export format {fmt!r}")
    return written


def export_run(run_dir, formats=("csv", "vtk")) -> list[Path]:
    """Re-export a finished run directory."""
    run_dir = Path(run_dir)
    mesh = load_mesh(run_dir / "mesh.txt")
    with np.load(run_dir / "fields.npz") as data:
        return export_fields(run_dir, mesh, data["velocity_coords"], data["velocity"],
                             data["pressure"], formats)
