"""Legacy-ASCII VTK export of cell fields on unstructured meshes.

2D meshes are written as polygons (cell corner points ordered by angle
around the centroid), 3D meshes as face-stream polyhedra, so arbitrary
loaded meshes export without requiring canonical vertex orderings.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh

_VTK_POLYGON = 7
_VTK_POLYHEDRON = 42


def _fmt(x) -> str:
    return f"{float(x):.12g}"


def _cell_faces(mesh: Mesh):
    faces = [[] for _ in range(mesh.n_cells)]
    for f in range(mesh.n_faces):
        faces[mesh.owner[f]].append(f)
        if f < mesh.n_internal:
            faces[mesh.neighbour[f]].append(f)
    return faces


def write_vtk(path, mesh: Mesh, cell_data: dict, title="fvrom fields"):
    """cell_data maps names to (n_cells,) scalars or (n_cells, 3) vectors."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(mesh.points)} double")
    for p in mesh.points:
        lines.append(" ".join(_fmt(c) for c in p))

    faces_of = _cell_faces(mesh)
    conn: list[list[int]] = []
    types: list[int] = []
    if mesh.dimension == 2:
        for c in range(mesh.n_cells):
            pts = np.unique(np.concatenate([mesh.face_points(f)
                                            for f in faces_of[c]]))
            rel = mesh.points[pts] - mesh.cell_centers[c]
            order = np.argsort(np.arctan2(rel[:, 1], rel[:, 0]))
            poly = pts[order]
            conn.append([len(poly)] + list(poly))
            types.append(_VTK_POLYGON)
    else:
        for c in range(mesh.n_cells):
            stream = [len(faces_of[c])]
            for f in faces_of[c]:
                fp = mesh.face_points(f)
                stream.append(len(fp))
                stream.extend(int(p) for p in fp)
            conn.append([len(stream)] + stream)
            types.append(_VTK_POLYHEDRON)
    total = sum(len(c) for c in conn)
    lines.append(f"CELLS {mesh.n_cells} {total}")
    for c in conn:
        lines.append(" ".join(str(i) for i in c))
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend(str(t) for t in types)

    lines.append(f"CELL_DATA {mesh.n_cells}")
    for name in sorted(cell_data):
        values = np.asarray(cell_data[name], dtype=float)
        if values.ndim == 1:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in values)
        else:
            lines.append(f"VECTORS {name} double")
            for row in values:
                lines.append(" ".join(_fmt(v) for v in row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
