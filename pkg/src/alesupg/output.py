"""File writers: legacy ASCII VTK snapshots and CSV time series."""
import csv
from pathlib import Path

import numpy as np


def snapshot_name(name, step):
    return f"{name}_t{step:06d}.vtk"


def visualization_mesh(space, coords):
    """Points, triangles and DOF ordering used to draw a field.

    P1 fields are drawn on the mesh itself; P2 fields on the submesh
    that splits each cell into four through its edge DOFs.
    """
    if space.degree == 1:
        return np.asarray(coords, dtype=float), space.mesh.cells
    pts = space.dof_coords(coords)
    d = space.cell_dofs  # v0 v1 v2 m01 m12 m20
    tris = np.concatenate(
        [
            d[:, [0, 3, 5]],
            d[:, [3, 1, 4]],
            d[:, [5, 4, 2]],
            d[:, [3, 4, 5]],
        ]
    )
    return pts, tris


def format_vtk(u, space, coords, title="alesupg field", field_name="u"):
    u = np.asarray(u, dtype=float)
    if u.shape != (space.n_dofs,):
        raise ValueError(f"field has {u.shape} entries, space has {space.n_dofs} DOFs")
    pts, tris = visualization_mesh(space, coords)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(pts)} double")
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in pts]
    lines.append(f"CELLS {len(tris)} {4 * len(tris)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tris]
    lines.append(f"CELL_TYPES {len(tris)}")
    lines += ["5"] * len(tris)
    lines.append(f"POINT_DATA {len(pts)}")
    lines.append(f"SCALARS {field_name} double 1")
    lines.append("LOOKUP_TABLE default")
    lines += [f"{v:.17g}" for v in u]
    return "\n".join(lines) + "\n"


def write_vtk(u, space, coords, path, title="alesupg field"):
    path = Path(path)
    path.write_text(format_vtk(u, space, coords, title))
    return path


def write_rows(path, header, rows):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(r)
    return path


def _num(v):
    return "nan" if v is None else f"{float(v):.17e}"


def write_l2_series(path, series):
    """series: iterable of (step, t, l2)."""
    return write_rows(path, ("step", "t", "l2"), [(s, _num(t), _num(v)) for s, t, v in series])


def write_line_sample(path, samples):
    """samples: iterable of (x, value or None); absent values as nan."""
    return write_rows(path, ("x", "value"), [(_num(x), _num(v)) for x, v in samples])


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]
