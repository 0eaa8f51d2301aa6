"""Cell-centered fields with per-patch boundary conditions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
ZERO_GRADIENT = "zerogradient"


@dataclass
class BoundaryCondition:
    """One boundary condition for one patch.

    value: Dirichlet boundary value or Neumann normal-gradient value; a
    scalar, a component vector, or a per-face array.
    """

    kind: str
    value: object = 0.0

    def face_values(self, count, ncomp):
        shape = (count,) if ncomp == 1 else (count, ncomp)
        return np.broadcast_to(np.asarray(self.value, dtype=float), shape)


def dirichlet(value=0.0) -> BoundaryCondition:
    return BoundaryCondition(DIRICHLET, value)


def neumann(gradient=0.0) -> BoundaryCondition:
    return BoundaryCondition(NEUMANN, gradient)


def zero_gradient() -> BoundaryCondition:
    return BoundaryCondition(ZERO_GRADIENT)


class CellField:
    """Scalar or 3-vector field over mesh cells.

    values: (n_cells,) scalar or (n_cells, 3) vector array. Vector fields on
    2D meshes keep a zero third component. bcs maps every patch name to one
    BoundaryCondition.
    """

    def __init__(self, mesh: Mesh, values, bcs):
        self.mesh = mesh
        values = np.asarray(values, dtype=float)
        if values.shape not in ((mesh.n_cells,), (mesh.n_cells, 3)):
            raise ValueError(f"bad field shape {values.shape}")
        self.values = values
        self.bcs = dict(bcs)
        for p in mesh.patches:
            if p.name not in self.bcs:
                raise ValueError(f"missing boundary condition for patch '{p.name}'")

    @property
    def ncomp(self):
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def copy(self) -> "CellField":
        return CellField(self.mesh, self.values.copy(), dict(self.bcs))

    def with_values(self, values) -> "CellField":
        return CellField(self.mesh, values, dict(self.bcs))


def scalar_field(mesh, value=0.0, bcs=None) -> CellField:
    vals = np.full(mesh.n_cells, float(value))
    return CellField(mesh, vals, bcs or default_bcs(mesh))
def vector_field(mesh, value=(0.0, 0.0, 0.0), bcs=None) -> CellField:
    vals = np.tile(np.asarray(value, dtype=float), (mesh.n_cells, 1))
    return CellField(mesh, vals, bcs or default_bcs(mesh))


def default_bcs(mesh) -> dict:
    return {p.name: zero_gradient() for p in mesh.patches}


def homogenized_bcs(bcs) -> dict:
    """Dirichlet patches become homogeneous; gradient conditions unchanged."""
    out = {}
    for name, bc in bcs.items():
        if bc.kind == DIRICHLET:
            out[name] = dirichlet(0.0)
        else:
            out[name] = BoundaryCondition(bc.kind, bc.value)
    return out
