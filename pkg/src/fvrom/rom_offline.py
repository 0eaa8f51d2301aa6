"""Galerkin projection of the finite-volume operators onto POD bases.

Every reduced entry is the volume-weighted inner product of a mode with a
discrete operator applied to another mode, evaluated with the same face
interpolations and boundary handling as the full solver. Boundary integrals
(pressure-Poisson curl and normal-flux terms) use one-sided owner-cell
reconstructions with boundary-condition-consistent face values.

The lifting carrier enters the online system through additional projected
vectors and matrices multiplying the known inflow amplitude; those are
assembled here as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arrayio import load_archive, save_archive
from .fields import CellField
from .fvops import (boundary_face_values, convection_apply, face_flux,
                    green_gauss_gradient, interpolate_to_faces,
                    laplacian_apply)
from .mesh import Mesh
from .pod import PODBasis


@dataclass
class Bases:
    """POD bases plus the homogeneous boundary conditions their modes obey."""

    velocity: PODBasis
    filtered_velocity: PODBasis
    pressure: PODBasis
    filter_pressure: PODBasis
    vel_bcs: dict
    pres_bcs: dict

    def vector_mode(self, basis, i, mesh) -> CellField:
        return CellField(mesh, basis.modes[:, i].reshape(-1, 3), self.vel_bcs)

    def scalar_mode(self, basis, i, mesh) -> CellField:
        return CellField(mesh, basis.modes[:, i], self.pres_bcs)


@dataclass
class ReducedOperators:
    # momentum-step blocks
    mass: np.ndarray             # (phi_i, phi_j)
    cross_mass: np.ndarray       # (phi_i, phibar_j)
    laplacian: np.ndarray        # (phi_i, lap phi_j)
    grad_coupling: np.ndarray    # (phi_i, grad psi_j)
    div_coupling: np.ndarray     # (psi_i, div phi_j), divergence diagnostic
    conv_tensor: np.ndarray      # (phi_i, div(phi_j x phibar_k))
    # filter-step blocks
    filt_mass: np.ndarray
    filt_laplacian: np.ndarray
    filt_grad_coupling: np.ndarray
    filt_div_coupling: np.ndarray
    # pressure-Poisson blocks
    ppe_laplacian: np.ndarray    # (grad psi_i, grad psi_j)
    ppe_curl: np.ndarray         # boundary (n x grad psi_i, curl phi_j)
    ppe_flux_v: np.ndarray       # boundary (psi_i, n . phi_j)
    ppe_flux_u: np.ndarray       # boundary (psi_i, n . phibar_j)
    ppe_conv_tensor: np.ndarray  # (grad psi_i, div(phi_j x phibar_k))
    ppe_filt_laplacian: np.ndarray
    ppe_filt_curl: np.ndarray
    # lifting contributions (amplitude-weighted online)
    lift_mass: np.ndarray            # (phi_i, chi)
    lift_laplacian: np.ndarray       # (phi_i, lap chi)
    lift_filt_laplacian: np.ndarray  # (phibar_i, lap chi)
    lift_conv_by_lift: np.ndarray    # (phi_i, div(phi_j x chi))
    lift_transported: np.ndarray     # (phi_i, div(chi x phibar_k))
    lift_lift: np.ndarray            # (phi_i, div(chi x chi))
    lift_ppe_conv_by_lift: np.ndarray
    lift_ppe_transported: np.ndarray
    lift_ppe_lift: np.ndarray
    lift_ppe_curl: np.ndarray        # (n x grad psi_i, curl chi)
    lift_ppe_filt_curl: np.ndarray
    lift_ppe_flux: np.ndarray        # (psi_i, n . chi)
    meta: dict = field(default_factory=dict)

    @property
    def ranks(self):
        return (self.mass.shape[0], self.filt_mass.shape[0],
                self.ppe_laplacian.shape[0], self.ppe_filt_laplacian.shape[0])

    def save(self, path):
        arrays = {k: v for k, v in self.__dict__.items() if k != "meta"}
        save_archive(path, arrays, meta=self.meta)

    @classmethod
    def load(cls, path) -> "ReducedOperators":
        arrays, meta = load_archive(path)
        return cls(**arrays, meta=meta)

    def check_invariants(self, tol=1e-10):
        """Mass blocks must be SPD, PPE Laplacians symmetric PSD."""
        for name in ("mass", "filt_mass"):
            m = getattr(self, name)
            if np.abs(m - m.T).max() > tol * max(1.0, np.abs(m).max()):
                raise ValueError(f"{name} not symmetric")
            if m.size and np.linalg.eigvalsh(m).min() <= 0:
                raise ValueError(f"{name} not positive definite")
        for name in ("ppe_laplacian", "ppe_filt_laplacian"):
            d = getattr(self, name)
            if np.abs(d - d.T).max() > tol * max(1.0, np.abs(d).max()):
                raise ValueError(f"{name} not symmetric")
            if d.size and np.linalg.eigvalsh(d).min() < -tol * max(
                    1.0, np.abs(d).max()):
                raise ValueError(f"{name} not positive semidefinite")


# -- building blocks -----------------------------------------------------------


def weighted_dot(weights, a, b) -> float:
    return float(np.sum(weights * a.ravel() * b.ravel()))


def _vector_modes(mesh, basis, bcs):
    return [CellField(mesh, basis.modes[:, i].reshape(-1, 3), bcs)
            for i in range(basis.rank)]


def _scalar_modes(mesh, basis, bcs):
    return [CellField(mesh, basis.modes[:, i], bcs)
            for i in range(basis.rank)]


def _curl(field: CellField) -> np.ndarray:
    g = green_gauss_gradient(field)  # (n, comp, dx)
    out = np.zeros((field.mesh.n_cells, 3))
    out[:, 0] = g[:, 2, 1] - g[:, 1, 2]
    out[:, 1] = g[:, 0, 2] - g[:, 2, 0]
    out[:, 2] = g[:, 1, 0] - g[:, 0, 1]
    return out


def _boundary_data(mesh):
    ni = mesh.n_internal
    areas = mesh.face_areas[ni:]
    mags = mesh.face_area_mags[ni:]
    normals = areas / mags[:, None]
    owners = mesh.owner[ni:]
    return owners, areas, mags, normals


def mass_matrix(mesh, rows, cols, weights) -> np.ndarray:
    out = np.zeros((len(rows), len(cols)))
    for i, fi in enumerate(rows):
        for j, fj in enumerate(cols):
            out[i, j] = weighted_dot(weights, fi.values, fj.values)
    return out


def laplacian_matrix(mesh, rows, cols) -> np.ndarray:
    """(row_i, lap col_j): the volume weights cancel against the integrated
    operator, leaving a plain dot product."""
    out = np.zeros((len(rows), len(cols)))
    for j, fj in enumerate(cols):
        L = laplacian_apply(fj, 1.0)
        for i, fi in enumerate(rows):
            out[i, j] = float(np.sum(fi.values * L))
    return out


def gradient_coupling_matrix(mesh, vec_rows, scal_cols, weights) -> np.ndarray:
    out = np.zeros((len(vec_rows), len(scal_cols)))
    for j, pj in enumerate(scal_cols):
        g = green_gauss_gradient(pj)
        for i, fi in enumerate(vec_rows):
            out[i, j] = weighted_dot(weights, fi.values, g)
    return out


def divergence_coupling_matrix(mesh, scal_rows, vec_cols) -> np.ndarray:
    """(psi_i, div phi_j): integrated face-flux sums dotted with the scalar."""
    out = np.zeros((len(scal_rows), len(vec_cols)))
    for j, fj in enumerate(vec_cols):
        flux = face_flux(fj)
        div_int = np.zeros(mesh.n_cells)
        np.add.at(div_int, mesh.owner, flux)
        np.add.at(div_int, mesh.neighbour, -flux[:mesh.n_internal])
        for i, pi in enumerate(scal_rows):
            out[i, j] = float(np.sum(pi.values * div_int))
    return out


def convection_tensor(mesh, rows, transported, convecting_fluxes) -> np.ndarray:
    """T[i, j, k] = (row_i, div(transported_j x convecting_k)).

    rows may be vector modes (weighted by nothing: volume cancels) or
    gradients of scalar modes (pass row values directly).
    """
    out = np.zeros((len(rows), len(transported), len(convecting_fluxes)))
    for k, flux in enumerate(convecting_fluxes):
        for j, fj in enumerate(transported):
            conv = convection_apply(fj, flux)
            for i, ri in enumerate(rows):
                out[i, j, k] = float(np.sum(ri * conv))
    return out


def ppe_curl_matrix(mesh, scal_rows, vec_cols) -> np.ndarray:
    """Boundary integral (n x grad psi_i) . (curl phi_j) over all patches."""
    owners, _, mags, normals = _boundary_data(mesh)
    out = np.zeros((len(scal_rows), len(vec_cols)))
    n_cross_grads = []
    for pi in scal_rows:
        g = green_gauss_gradient(pi)[owners]
        n_cross_grads.append(np.cross(normals, g))
    for j, fj in enumerate(vec_cols):
        curl_b = _curl(fj)[owners]
        for i in range(len(scal_rows)):
            out[i, j] = float(np.sum(
                mags * np.einsum("ij,ij->i", n_cross_grads[i], curl_b)))
    return out


def ppe_flux_matrix(mesh, scal_rows, vec_cols) -> np.ndarray:
    """Boundary integral (psi_i, n . phi_j) with BC-consistent face values."""
    out = np.zeros((len(scal_rows), len(vec_cols)))
    areas = mesh.face_areas[mesh.n_internal:]
    for j, fj in enumerate(vec_cols):
        vb = boundary_face_values(fj)
        flux_b = np.einsum("ij,ij->i", vb, areas)
        for i, pi in enumerate(scal_rows):
            pb = boundary_face_values(pi)
            out[i, j] = float(np.sum(pb * flux_b))
    return out


# -- top-level assembly ---------------------------------------------------------


def assemble_velocity_matrices(mesh, bases: Bases, weights):
    v = _vector_modes(mesh, bases.velocity, bases.vel_bcs)
    u = _vector_modes(mesh, bases.filtered_velocity, bases.vel_bcs)
    q = _scalar_modes(mesh, bases.pressure, bases.pres_bcs)
    return {
        "mass": mass_matrix(mesh, v, v, weights),
        "cross_mass": mass_matrix(mesh, v, u, weights),
        "laplacian": laplacian_matrix(mesh, v, v),
        "grad_coupling": gradient_coupling_matrix(mesh, v, q, weights),
        "div_coupling": divergence_coupling_matrix(mesh, q, v),
    }


def assemble_filter_matrices(mesh, bases: Bases, weights):
    u = _vector_modes(mesh, bases.filtered_velocity, bases.vel_bcs)
    qb = _scalar_modes(mesh, bases.filter_pressure, bases.pres_bcs)
    return {
        "filt_mass": mass_matrix(mesh, u, u, weights),
        "filt_laplacian": laplacian_matrix(mesh, u, u),
        "filt_grad_coupling": gradient_coupling_matrix(mesh, u, qb, weights),
        "filt_div_coupling": divergence_coupling_matrix(mesh, qb, u),
    }


def assemble_convection_tensor(mesh, bases: Bases):
    v = _vector_modes(mesh, bases.velocity, bases.vel_bcs)
    u = _vector_modes(mesh, bases.filtered_velocity, bases.vel_bcs)
    fluxes = [face_flux(f) for f in u]
    rows = [f.values for f in v]
    return convection_tensor(mesh, rows, v, fluxes)


def assemble_ppe_matrices(mesh, bases: Bases, weights_scalar):
    v = _vector_modes(mesh, bases.velocity, bases.vel_bcs)
    u = _vector_modes(mesh, bases.filtered_velocity, bases.vel_bcs)
    q = _scalar_modes(mesh, bases.pressure, bases.pres_bcs)
    qb = _scalar_modes(mesh, bases.filter_pressure, bases.pres_bcs)
    grads_q = [green_gauss_gradient(p) for p in q]
    grads_qb = [green_gauss_gradient(p) for p in qb]
    W = weights_scalar[:, None]

    def grad_dot(ga, gb):
        return float(np.sum(W * ga * gb))

    D = np.array([[grad_dot(ga, gb) for gb in grads_q] for ga in grads_q])
    Db = np.array([[grad_dot(ga, gb) for gb in grads_qb] for ga in grads_qb])
    fluxes_u = [face_flux(f) for f in u]
    # the volume weight cancels against the integrated convection sums
    rows_gq = grads_q
    return {
        "ppe_laplacian": D,
        "ppe_curl": ppe_curl_matrix(mesh, q, v),
        "ppe_flux_v": ppe_flux_matrix(mesh, q, v),
        "ppe_flux_u": ppe_flux_matrix(mesh, q, u),
        "ppe_conv_tensor": convection_tensor(mesh, rows_gq, v, fluxes_u),
        "ppe_filt_laplacian": Db,
        "ppe_filt_curl": ppe_curl_matrix(mesh, qb, u),
    }


def assemble_lifting_blocks(mesh, bases: Bases, lifting, weights_vec,
                            weights_scalar):
    nv = bases.velocity.rank
    nu = bases.filtered_velocity.rank
    nq = bases.pressure.rank
    nqb = bases.filter_pressure.rank
    if lifting is None or not len(lifting.fields):
        return {
            "lift_mass": np.zeros(nv), "lift_laplacian": np.zeros(nv),
            "lift_filt_laplacian": np.zeros(nu),
            "lift_conv_by_lift": np.zeros((nv, nv)),
            "lift_transported": np.zeros((nv, nu)),
            "lift_lift": np.zeros(nv),
            "lift_ppe_conv_by_lift": np.zeros((nq, nv)),
            "lift_ppe_transported": np.zeros((nq, nu)),
            "lift_ppe_lift": np.zeros(nq),
            "lift_ppe_curl": np.zeros(nq),
            "lift_ppe_filt_curl": np.zeros(nqb),
            "lift_ppe_flux": np.zeros(nq),
        }
    chi = lifting.fields[0]
    chi_field, chi_flux = chi.field, chi.flux
    v = _vector_modes(mesh, bases.velocity, bases.vel_bcs)
    u = _vector_modes(mesh, bases.filtered_velocity, bases.vel_bcs)
    q = _scalar_modes(mesh, bases.pressure, bases.pres_bcs)
    qb = _scalar_modes(mesh, bases.filter_pressure, bases.pres_bcs)
    fluxes_u = [face_flux(f) for f in u]
    grads_q = [green_gauss_gradient(p) for p in q]
    rows_v = [f.values for f in v]
    rows_gq = grads_q
    lap_chi = laplacian_apply(chi_field, 1.0)

    conv_by_lift = convection_tensor(mesh, rows_v, v, [chi_flux])[:, :, 0]
    transported = np.array(
        [[float(np.sum(rv * convection_apply(chi_field, fu)))
          for fu in fluxes_u] for rv in rows_v])
    lift_lift = np.array([float(np.sum(rv * convection_apply(chi_field, chi_flux)))
                          for rv in rows_v])
    ppe_conv_by_lift = convection_tensor(mesh, rows_gq, v, [chi_flux])[:, :, 0]
    ppe_transported = np.array(
        [[float(np.sum(rg * convection_apply(chi_field, fu)))
          for fu in fluxes_u] for rg in rows_gq])
    ppe_lift = np.array(
        [float(np.sum(rg * convection_apply(chi_field, chi_flux)))
         for rg in rows_gq])
    return {
        "lift_mass": np.array([weighted_dot(weights_vec, f.values,
                                            chi_field.values) for f in v]),
        "lift_laplacian": np.array([float(np.sum(f.values * lap_chi))
                                    for f in v]),
        "lift_filt_laplacian": np.array([float(np.sum(f.values * lap_chi))
                                         for f in u]),
        "lift_conv_by_lift": conv_by_lift,
        "lift_transported": transported,
        "lift_lift": lift_lift,
        "lift_ppe_conv_by_lift": ppe_conv_by_lift,
        "lift_ppe_transported": ppe_transported,
        "lift_ppe_lift": ppe_lift,
        "lift_ppe_curl": ppe_curl_matrix(mesh, q, [chi_field])[:, 0],
        "lift_ppe_filt_curl": ppe_curl_matrix(mesh, qb, [chi_field])[:, 0],
        "lift_ppe_flux": ppe_flux_matrix(mesh, q, [chi_field])[:, 0],
    }


def assemble_reduced_operators(mesh: Mesh, bases: Bases, lifting=None,
                               meta=None) -> ReducedOperators:
    wv = np.repeat(mesh.cell_volumes, 3)
    ws = mesh.cell_volumes
    blocks = {}
    blocks.update(assemble_velocity_matrices(mesh, bases, wv))
    blocks.update(assemble_filter_matrices(mesh, bases, wv))
    blocks["conv_tensor"] = assemble_convection_tensor(mesh, bases)
    blocks.update(assemble_ppe_matrices(mesh, bases, ws))
    blocks.update(assemble_lifting_blocks(mesh, bases, lifting, wv, ws))
    meta = dict(meta or {})
    meta.setdefault("ranks", {
        "velocity": bases.velocity.rank,
        "filtered_velocity": bases.filtered_velocity.rank,
        "pressure": bases.pressure.rank,
        "filter_pressure": bases.filter_pressure.rank,
    })
    ops = ReducedOperators(**blocks, meta=meta)
    ops.check_invariants()
    return ops
