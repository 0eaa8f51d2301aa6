"""Discrete finite-volume operators on collocated cell data.

All assembled matrices are in integrated (volume-multiplied) form: a row is
the surface sum over the faces of that cell. Face values use second-order
central differencing with distance weights; boundary faces take their values
from the field's boundary conditions. Explicit `*_apply` helpers evaluate the
same operators on known fields and agree with `matrix @ x + rhs` exactly.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .fields import DIRICHLET, NEUMANN, ZERO_GRADIENT, CellField
from .mesh import Mesh

# -- cached mesh helpers -----------------------------------------------------


def interp_weights(mesh: Mesh) -> np.ndarray:
    """Owner weight per internal face for central interpolation."""
    w = mesh._cache.get("interp_weights")
    if w is None:
        ni = mesh.n_internal
        df_n = np.linalg.norm(
            mesh.cell_centers[mesh.neighbour] - mesh.face_centers[:ni], axis=1)
        df_o = np.linalg.norm(
            mesh.face_centers[:ni] - mesh.cell_centers[mesh.owner[:ni]], axis=1)
        w = df_n / (df_o + df_n)
        mesh._cache["interp_weights"] = w
    return w


def normal_gradient_coeffs(mesh: Mesh):
    """(g_int, g_bnd, d_bnd): two-point normal-gradient factors |A|^2/(A.d).

    g_int couples owner/neighbour across internal faces; g_bnd couples a
    boundary face value to its owner cell; d_bnd is the owner->face distance
    along the face normal (used by Neumann conditions).
    """
    got = mesh._cache.get("normal_gradient_coeffs")
    if got is None:
        ni = mesh.n_internal
        d = mesh.cell_centers[mesh.neighbour] - mesh.cell_centers[mesh.owner[:ni]]
        g_int = mesh.face_area_mags[:ni] ** 2 / np.einsum(
            "ij,ij->i", mesh.face_areas[:ni], d)
        db = mesh.face_centers[ni:] - mesh.cell_centers[mesh.owner[ni:]]
        adotd = np.einsum("ij,ij->i", mesh.face_areas[ni:], db)
        g_bnd = mesh.face_area_mags[ni:] ** 2 / adotd
        d_bnd = adotd / mesh.face_area_mags[ni:]
        got = (g_int, g_bnd, d_bnd)
        mesh._cache["normal_gradient_coeffs"] = got
    return got


def nonorth_vectors(mesh: Mesh) -> np.ndarray:
    """Per internal face: A - g*d, the over-relaxed non-orthogonal remainder."""
    t = mesh._cache.get("nonorth_vectors")
    if t is None:
        ni = mesh.n_internal
        d = mesh.cell_centers[mesh.neighbour] - mesh.cell_centers[mesh.owner[:ni]]
        g_int, _, _ = normal_gradient_coeffs(mesh)
        t = mesh.face_areas[:ni] - g_int[:, None] * d
        mesh._cache["nonorth_vectors"] = t
    return t


def is_orthogonal(mesh: Mesh) -> bool:
    b = mesh._cache.get("is_orthogonal")
    if b is None:
        t = nonorth_vectors(mesh)
        amax = mesh.face_area_mags[:mesh.n_internal]
        b = bool(t.size == 0 or np.abs(t).max() <= 1e-12 * max(amax.max(), 1e-300))
        mesh._cache["is_orthogonal"] = b
    return b


# -- face values and first-order operators -----------------------------------


def boundary_face_values(field: CellField):
    """Face values on all boundary faces, resolved from the BCs."""
    mesh = field.mesh
    ni = mesh.n_internal
    nb = mesh.n_faces - ni
    shape = (nb,) if field.ncomp == 1 else (nb, field.ncomp)
    out = np.zeros(shape)
    _, _, d_bnd = normal_gradient_coeffs(mesh)
    for p in mesh.patches:
        bc = field.bcs[p.name]
        sl = slice(p.start - ni, p.start - ni + p.count)
        own = field.values[mesh.owner[p.start:p.start + p.count]]
        if bc.kind == DIRICHLET:
            out[sl] = bc.face_values(p.count, field.ncomp)
        elif bc.kind == ZERO_GRADIENT:
            out[sl] = own
        elif bc.kind == NEUMANN:
            grad = bc.face_values(p.count, field.ncomp)
            dist = d_bnd[sl] if field.ncomp == 1 else d_bnd[sl, None]
            out[sl] = own + grad * dist
        else:
            raise ValueError(f"unknown BC kind '{bc.kind}'")
    return out


def interpolate_to_faces(field: CellField):
    """Central-difference face values; boundary faces from the BCs."""
    mesh = field.mesh
    ni = mesh.n_internal
    w = interp_weights(mesh)
    wshape = w if field.ncomp == 1 else w[:, None]
    vals_int = (wshape * field.values[mesh.owner[:ni]]
                + (1.0 - wshape) * field.values[mesh.neighbour])
    return np.concatenate([vals_int, boundary_face_values(field)], axis=0)


def face_flux(field: CellField) -> np.ndarray:
    """phi_f = (interpolated vector field) . A_f, one scalar per face."""
    fv = interpolate_to_faces(field)
    return np.einsum("ij,ij->i", fv, field.mesh.face_areas)


def divergence(mesh: Mesh, flux) -> np.ndarray:
    """Per cell: (1/V) * signed sum of face fluxes."""
    acc = np.zeros(mesh.n_cells)
    np.add.at(acc, mesh.owner, flux)
    np.add.at(acc, mesh.neighbour, -flux[:mesh.n_internal])
    return acc / mesh.cell_volumes


def green_gauss_gradient(field: CellField) -> np.ndarray:
    """Cell gradients (1/V) sum_f value_f A_f.

    Scalar fields give (n_cells, 3); vector fields give (n_cells, 3, 3) with
    grad[c, i, j] = d(component i)/d(x_j).
    """
    mesh = field.mesh
    fv = interpolate_to_faces(field)
    if field.ncomp == 1:
        acc = np.zeros((mesh.n_cells, 3))
        np.add.at(acc, mesh.owner, fv[:, None] * mesh.face_areas)
        np.add.at(acc, mesh.neighbour,
                  -(fv[:mesh.n_internal, None] * mesh.face_areas[:mesh.n_internal]))
        return acc / mesh.cell_volumes[:, None]
    acc = np.zeros((mesh.n_cells, 3, 3))
    outer = fv[:, :, None] * mesh.face_areas[:, None, :]
    np.add.at(acc, mesh.owner, outer)
    np.add.at(acc, mesh.neighbour, -outer[:mesh.n_internal])
    return acc / mesh.cell_volumes[:, None, None]


def pressure_gradient_integral(field: CellField) -> np.ndarray:
    """sum_f p_f A_f per cell: the integrated pressure-gradient term."""
    mesh = field.mesh
    fv = interpolate_to_faces(field)
    acc = np.zeros((mesh.n_cells, 3))
    np.add.at(acc, mesh.owner, fv[:, None] * mesh.face_areas)
    np.add.at(acc, mesh.neighbour,
              -(fv[:mesh.n_internal, None] * mesh.face_areas[:mesh.n_internal]))
    return acc


# -- implicit operator assembly ----------------------------------------------


class SystemBuilder:
    """Accumulates COO triplets and a (possibly multi-column) right-hand side."""

    def __init__(self, n, ncomp=1):
        self.n = n
        self.ncomp = ncomp
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.rhs = np.zeros((n, ncomp)) if ncomp > 1 else np.zeros(n)

    def add(self, rows, cols, vals):
        self.rows.append(np.asarray(rows, dtype=np.int64))
        self.cols.append(np.asarray(cols, dtype=np.int64))
        self.vals.append(np.asarray(vals, dtype=float))

    def add_diagonal(self, vals):
        idx = np.arange(self.n)
        self.add(idx, idx, vals)

    def matrix(self) -> sp.csr_matrix:
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, dtype=np.int64)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, dtype=np.int64)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        return sp.coo_matrix((vals, (rows, cols)), shape=(self.n, self.n)).tocsr()


def add_convection(builder: SystemBuilder, mesh: Mesh, bcs, flux, coeff=1.0):
    """Implicit CD convection of the unknown by the frozen face flux.

    Row contribution: coeff * sum_f flux_f * value_f. Dirichlet faces carry
    their boundary value to the rhs; zero-gradient faces are implicit in the
    owner cell.
    """
    ni = mesh.n_internal
    w = interp_weights(mesh)
    o, nb = mesh.owner[:ni], mesh.neighbour
    fi = coeff * flux[:ni]
    builder.add(o, o, fi * w)
    builder.add(o, nb, fi * (1.0 - w))
    builder.add(nb, o, -fi * w)
    builder.add(nb, nb, -fi * (1.0 - w))
    _, _, d_bnd = normal_gradient_coeffs(mesh)
    for p in mesh.patches:
        bc = bcs[p.name]
        faces = np.arange(p.start, p.start + p.count)
        own = mesh.owner[faces]
        fb = coeff * flux[faces]
        if bc.kind == DIRICHLET:
            vals = bc.face_values(p.count, builder.ncomp)
            if builder.ncomp == 1:
                np.add.at(builder.rhs, own, -fb * vals)
            else:
                np.add.at(builder.rhs, own, -fb[:, None] * vals)
        elif bc.kind == ZERO_GRADIENT:
            builder.add(own, own, fb)
        elif bc.kind == NEUMANN:
            builder.add(own, own, fb)
            grad = bc.face_values(p.count, builder.ncomp)
            contrib = grad * (d_bnd[faces - ni][:, None] if builder.ncomp > 1
                              else d_bnd[faces - ni])
            if builder.ncomp == 1:
                np.add.at(builder.rhs, own, -fb * contrib)
            else:
                np.add.at(builder.rhs, own, -fb[:, None] * contrib)
        else:
            raise ValueError(f"unknown BC kind '{bc.kind}'")


def add_diffusion(builder: SystemBuilder, mesh: Mesh, bcs, mu_face, coeff=1.0,
                  explicit_field: CellField | None = None):
    """Laplacian-like term: coeff * sum_f mu_f (grad value)_f . A_f.

    The orthogonal two-point part is implicit. On non-orthogonal meshes the
    over-relaxed remainder is added explicitly (deferred correction) from the
    Green-Gauss gradient of `explicit_field`, when given.
    """
    ni = mesh.n_internal
    mu_face = np.broadcast_to(np.asarray(mu_face, dtype=float), (mesh.n_faces,))
    g_int, g_bnd, d_bnd = normal_gradient_coeffs(mesh)
    o, nb = mesh.owner[:ni], mesh.neighbour
    gi = coeff * mu_face[:ni] * g_int
    builder.add(o, o, -gi)
    builder.add(o, nb, gi)
    builder.add(nb, nb, -gi)
    builder.add(nb, o, gi)
    for p in mesh.patches:
        bc = bcs[p.name]
        faces = np.arange(p.start, p.start + p.count)
        own = mesh.owner[faces]
        gb = coeff * mu_face[faces] * g_bnd[faces - ni]
        if bc.kind == DIRICHLET:
            builder.add(own, own, -gb)
            vals = bc.face_values(p.count, builder.ncomp)
            if builder.ncomp == 1:
                np.add.at(builder.rhs, own, -gb * vals)
            else:
                np.add.at(builder.rhs, own, -gb[:, None] * vals)
        elif bc.kind == ZERO_GRADIENT:
            pass  # zero normal gradient: no flux
        elif bc.kind == NEUMANN:
            grad = bc.face_values(p.count, builder.ncomp)
            area = mesh.face_area_mags[faces]
            flux = coeff * mu_face[faces] * area
            if builder.ncomp == 1:
                np.add.at(builder.rhs, own, -flux * grad)
            else:
                np.add.at(builder.rhs, own, -flux[:, None] * grad)
        else:
            raise ValueError(f"unknown BC kind '{bc.kind}'")
    if explicit_field is not None and not is_orthogonal(mesh):
        corr = diffusion_nonorth_correction(mesh, mu_face, explicit_field)
        builder.rhs -= coeff * corr


def diffusion_nonorth_correction(mesh: Mesh, mu_face, field: CellField):
    """Explicit non-orthogonal part of the diffusive surface sum, per cell
    (positive into the owner, negative into the neighbour)."""
    ni = mesh.n_internal
    t = nonorth_vectors(mesh)
    w = interp_weights(mesh)
    shape = (mesh.n_cells, field.ncomp) if field.ncomp > 1 else (mesh.n_cells,)
    out = np.zeros(shape)
    if ni == 0 or t.size == 0:
        return out
    mu_face = np.broadcast_to(np.asarray(mu_face, dtype=float), (mesh.n_faces,))
    if field.ncomp == 1:
        grad = green_gauss_gradient(field)
        gf = (w[:, None] * grad[mesh.owner[:ni]]
              + (1.0 - w[:, None]) * grad[mesh.neighbour])
        corr = mu_face[:ni] * np.einsum("ij,ij->i", gf, t)
    else:
        grad = green_gauss_gradient(field)  # (n, comp, 3)
        gf = (w[:, None, None] * grad[mesh.owner[:ni]]
              + (1.0 - w[:, None, None]) * grad[mesh.neighbour])
        corr = mu_face[:ni, None] * np.einsum("icj,ij->ic", gf, t)
    np.add.at(out, mesh.owner[:ni], corr)
    np.add.at(out, mesh.neighbour, -corr)
    return out


def diffusive_face_flux(mesh: Mesh, bcs, mu_face, field: CellField) -> np.ndarray:
    """Per-face diffusive flux mu_f (grad value)_f . A_f matching add_diffusion.

    The signed cell sums of the result equal the assembled operator applied
    to the field, which keeps corrected face fluxes exactly consistent with
    the pressure equation they were solved from.
    """
    ni = mesh.n_internal
    mu_face = np.broadcast_to(np.asarray(mu_face, dtype=float), (mesh.n_faces,))
    g_int, g_bnd, _ = normal_gradient_coeffs(mesh)
    out = np.zeros(mesh.n_faces)
    out[:ni] = mu_face[:ni] * g_int * (
        field.values[mesh.neighbour] - field.values[mesh.owner[:ni]])
    if not is_orthogonal(mesh):
        t = nonorth_vectors(mesh)
        w = interp_weights(mesh)
        grad = green_gauss_gradient(field)
        gf = (w[:, None] * grad[mesh.owner[:ni]]
              + (1.0 - w[:, None]) * grad[mesh.neighbour])
        out[:ni] += mu_face[:ni] * np.einsum("ij,ij->i", gf, t)
    for p in mesh.patches:
        bc = field.bcs[p.name] if bcs is None else bcs[p.name]
        faces = np.arange(p.start, p.start + p.count)
        own = mesh.owner[faces]
        if bc.kind == DIRICHLET:
            vals = bc.face_values(p.count, 1)
            out[faces] = mu_face[faces] * g_bnd[faces - ni] * (vals - field.values[own])
        elif bc.kind == NEUMANN:
            grad = bc.face_values(p.count, 1)
            out[faces] = mu_face[faces] * mesh.face_area_mags[faces] * grad
        # zero-gradient: zero flux
    return out


# -- explicit operator applications ------------------------------------------


def convection_apply(field: CellField, flux) -> np.ndarray:
    """Integrated convection sum_f flux_f value_f per cell (BC-aware)."""
    mesh = field.mesh
    fv = interpolate_to_faces(field)
    shape = (mesh.n_cells, field.ncomp) if field.ncomp > 1 else (mesh.n_cells,)
    out = np.zeros(shape)
    contrib = fv * flux[:, None] if field.ncomp > 1 else fv * flux
    np.add.at(out, mesh.owner, contrib)
    np.add.at(out, mesh.neighbour, -contrib[:mesh.n_internal])
    return out


def laplacian_apply(field: CellField, mu_face=1.0) -> np.ndarray:
    """Integrated diffusion sum_f mu_f (grad value)_f . A_f per cell.

    Matches the implicit assembly: orthogonal two-point part plus the
    explicit non-orthogonal correction evaluated on the field itself.
    """
    mesh = field.mesh
    ni = mesh.n_internal
    mu_face = np.broadcast_to(np.asarray(mu_face, dtype=float), (mesh.n_faces,))
    g_int, g_bnd, d_bnd = normal_gradient_coeffs(mesh)
    shape = (mesh.n_cells, field.ncomp) if field.ncomp > 1 else (mesh.n_cells,)
    out = np.zeros(shape)
    o, nb = mesh.owner[:ni], mesh.neighbour
    diff = field.values[nb] - field.values[o]
    gi = mu_face[:ni]
    contrib = (gi * g_int)[:, None] * diff if field.ncomp > 1 else gi * g_int * diff
    np.add.at(out, o, contrib)
    np.add.at(out, nb, -contrib)
    for p in mesh.patches:
        bc = field.bcs[p.name]
        faces = np.arange(p.start, p.start + p.count)
        own = mesh.owner[faces]
        if bc.kind == DIRICHLET:
            vals = bc.face_values(p.count, field.ncomp)
            gb = mu_face[faces] * g_bnd[faces - ni]
            diffb = vals - field.values[own]
            c = gb[:, None] * diffb if field.ncomp > 1 else gb * diffb
            np.add.at(out, own, c)
        elif bc.kind == NEUMANN:
            grad = bc.face_values(p.count, field.ncomp)
            fluxb = mu_face[faces] * mesh.face_area_mags[faces]
            c = fluxb[:, None] * grad if field.ncomp > 1 else fluxb * grad
            np.add.at(out, own, c)
        # zero-gradient: no flux
    if not is_orthogonal(mesh):
        out += diffusion_nonorth_correction(mesh, mu_face, field)
    return out
