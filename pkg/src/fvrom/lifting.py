"""Divergence-free lifting (control) fields and snapshot homogenization.

A lifting field carries the unit-amplitude inhomogeneous Dirichlet data so
that snapshots can be made boundary-homogeneous before basis extraction.
Discrete divergence-freedom is obtained by running the analytic inflow
extension through one tiny-radius differential-filter solve, which projects
it onto the solver's divergence-free space while pinning the inlet trace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import CellField, dirichlet, zero_gradient
from .fom import FilterParams, FlowSolver, FluidProperties, SolverControls
from .fvops import divergence, face_flux
from .mesh import Mesh


@dataclass
class LiftingField:
    field: CellField      # unit-amplitude carrier with its Dirichlet data
    flux: np.ndarray      # divergence-free face fluxes of the carrier


@dataclass
class LiftingSet:
    fields: list

    def __len__(self):
        return len(self.fields)

    def cell_matrix(self):
        """(n_cells, 3, n_bc) stacked carrier values."""
        return np.stack([lf.field.values for lf in self.fields], axis=2)


def build_lifting(mesh: Mesh, inflow_profile, radius_fraction=1e-3,
                  controls: SolverControls | None = None) -> LiftingSet:
    """Construct the lifting field for one inlet profile.

    The profile is extended along the stream direction (valid for profiles
    depending on cross-stream coordinates only), then filtered with radius
    radius_fraction * h_min so the result is discretely divergence-free on
    any mesh while keeping the exact inlet trace.
    """
    bcs = {}
    for p in mesh.patches:
        if p.kind == "inlet":
            centers = mesh.face_centers[p.start:p.start + p.count]
            bcs[p.name] = dirichlet(inflow_profile(centers))
        elif p.kind == "outlet":
            bcs[p.name] = zero_gradient()
        else:
            bcs[p.name] = dirichlet(np.zeros(3))
    extension = CellField(mesh, inflow_profile(mesh.cell_centers), bcs)
    if not np.any(extension.values) and all(
            not np.any(bc.value) for bc in bcs.values() if bc.kind == "dirichlet"):
        return LiftingSet([LiftingField(extension, np.zeros(mesh.n_faces))])

    controls = controls or SolverControls(simplec_rtol=1e-9,
                                          simplec_maxiter=400,
                                          divergence_tol=1e-8)
    solver = FlowSolver(mesh, FluidProperties(rho=1.0, mu=1.0), controls)
    pseudo_dt = 1.0
    filt = FilterParams(radius_fraction * mesh.min_spacing())
    mu_bar = filt.filter_viscosity(1.0, pseudo_dt)
    pres_bcs = {p.name: dirichlet(0.0) if p.kind == "outlet" else zero_gradient()
                for p in mesh.patches}
    field, _, flux = solver.generalized_stokes(
        extension.values, face_flux(extension), bcs, pres_bcs, mu_bar,
        1.0 / pseudo_dt, step_index="lifting")
    return LiftingSet([LiftingField(field, flux)])


def lifting_divergence(mesh: Mesh, lifting: LiftingSet) -> float:
    """Largest volume-normalized divergence over the carriers."""
    worst = 0.0
    for lf in lifting.fields:
        worst = max(worst, float(np.abs(divergence(mesh, lf.flux)).max()))
    return worst


def homogenize(values, lifting: LiftingSet, amplitudes) -> np.ndarray:
    """Subtract amplitude-weighted carriers from one velocity field."""
    amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=float))
    if len(amplitudes) != len(lifting.fields):
        raise ValueError("one amplitude per lifting field required")
    out = np.asarray(values, dtype=float).copy()
    for a, lf in zip(amplitudes, lifting.fields):
        out -= a * lf.field.values
    return out


def reapply_lifting(values, lifting: LiftingSet, amplitudes) -> np.ndarray:
    """Exact inverse of homogenize for matching amplitudes."""
    amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=float))
    if len(amplitudes) != len(lifting.fields):
        raise ValueError("one amplitude per lifting field required")
    out = np.asarray(values, dtype=float).copy()
    for a, lf in zip(amplitudes, lifting.fields):
        out += a * lf.field.values
    return out


def homogenized_trace(mesh: Mesh, snapshot_bcs, lifting: LiftingSet,
                      amplitudes) -> float:
    """Largest Dirichlet-face magnitude left after subtracting the
    amplitude-weighted lifting boundary data from the snapshot's data."""
    amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=float))
    worst = 0.0
    for p in mesh.patches:
        bc = snapshot_bcs[p.name]
        if bc.kind != "dirichlet":
            continue
        resid = np.array(bc.face_values(p.count, 3), dtype=float)
        for a, lf in zip(amplitudes, lifting.fields):
            lbc = lf.field.bcs[p.name]
            if lbc.kind == "dirichlet":
                resid -= a * lbc.face_values(p.count, 3)
        worst = max(worst, float(np.abs(resid).max()))
    return worst
