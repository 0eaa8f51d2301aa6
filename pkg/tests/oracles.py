"""Brute-force reference implementations used as test oracles.

Everything here is written as plain per-cell/per-face Python loops straight
from the definitions, independent of the vectorized library code paths.
"""

import numpy as np


def interp_weight(mesh, f):
    o, n = mesh.owner[f], mesh.neighbour[f]
    df_n = np.linalg.norm(mesh.cell_centers[n] - mesh.face_centers[f])
    df_o = np.linalg.norm(mesh.face_centers[f] - mesh.cell_centers[o])
    return df_n / (df_o + df_n)


def face_value(mesh, values, bcs, f):
    """Central face value / boundary value from the BC, one face."""
    if f < mesh.n_internal:
        w = interp_weight(mesh, f)
        return w * values[mesh.owner[f]] + (1 - w) * values[mesh.neighbour[f]]
    patch = next(p for p in mesh.patches
                 if p.start <= f < p.start + p.count)
    bc = bcs[patch.name]
    own = values[mesh.owner[f]]
    ncomp = 1 if np.ndim(values) == 1 else values.shape[1]
    if bc.kind == "dirichlet":
        vals = bc.face_values(patch.count, ncomp)
        return np.array(vals[f - patch.start], dtype=float) if ncomp > 1 \
            else float(np.asarray(vals).reshape(-1)[f - patch.start])
    if bc.kind == "zerogradient":
        return own
    if bc.kind == "neumann":
        d = mesh.face_centers[f] - mesh.cell_centers[mesh.owner[f]]
        a = mesh.face_areas[f]
        dist = float(a @ d / np.linalg.norm(a))
        grad = bc.face_values(patch.count, ncomp)
        g = np.array(grad[f - patch.start]) if ncomp > 1 else \
            float(np.asarray(grad).reshape(-1)[f - patch.start])
        return own + g * dist
    raise ValueError(bc.kind)


def cell_faces(mesh, c):
    """(face, sign) pairs: +1 when the cell owns the face."""
    out = []
    for f in range(mesh.n_faces):
        if mesh.owner[f] == c:
            out.append((f, 1.0))
        if f < mesh.n_internal and mesh.neighbour[f] == c:
            out.append((f, -1.0))
    return out


def gradient(mesh, values, bcs, c):
    acc = np.zeros(3)
    for f, s in cell_faces(mesh, c):
        acc += s * face_value(mesh, values, bcs, f) * mesh.face_areas[f]
    return acc / mesh.cell_volumes[c]


def divergence(mesh, flux, c):
    acc = 0.0
    for f, s in cell_faces(mesh, c):
        acc += s * flux[f]
    return acc / mesh.cell_volumes[c]


def vector_face_flux(mesh, values, bcs, f):
    return float(np.dot(face_value(mesh, values, bcs, f),
                        mesh.face_areas[f]))


def convection(mesh, values, bcs, conv_flux, c):
    """Integrated sum_f flux_f value_f for one cell."""
    ncomp = 1 if np.ndim(values) == 1 else values.shape[1]
    acc = np.zeros(ncomp) if ncomp > 1 else 0.0
    for f, s in cell_faces(mesh, c):
        acc = acc + s * conv_flux[f] * face_value(mesh, values, bcs, f)
    return acc


def orthogonal_flux_coeff(mesh, f):
    a = mesh.face_areas[f]
    if f < mesh.n_internal:
        d = mesh.cell_centers[mesh.neighbour[f]] - mesh.cell_centers[mesh.owner[f]]
    else:
        d = mesh.face_centers[f] - mesh.cell_centers[mesh.owner[f]]
    return float(a @ a) / float(a @ d)


def laplacian(mesh, values, bcs, mu_face, c):
    """Integrated sum_f mu_f (grad value)_f . A_f for one cell, including the
    deferred non-orthogonal correction from central gradients."""
    mu_face = np.broadcast_to(np.asarray(mu_face, dtype=float), (mesh.n_faces,))
    ncomp = 1 if np.ndim(values) == 1 else values.shape[1]
    acc = np.zeros(ncomp) if ncomp > 1 else 0.0
    # detect orthogonality face by face (matches the library's global switch
    # on Cartesian meshes used in the tests)
    for f, s in cell_faces(mesh, c):
        g = orthogonal_flux_coeff(mesh, f)
        if f < mesh.n_internal:
            o, n = mesh.owner[f], mesh.neighbour[f]
            flux = mu_face[f] * g * (values[n] - values[o])
            a = mesh.face_areas[f]
            d = mesh.cell_centers[n] - mesh.cell_centers[o]
            t = a - g * d
            if np.abs(t).max() > 1e-12 * np.linalg.norm(a):
                w = interp_weight(mesh, f)
                go = np.array([gradient(mesh, values[..., k] if ncomp > 1
                                        else values, bcs, o)
                               for k in range(max(1, ncomp))])
                gn = np.array([gradient(mesh, values[..., k] if ncomp > 1
                                        else values, bcs, n)
                               for k in range(max(1, ncomp))])
                gf = w * go + (1 - w) * gn
                corr = mu_face[f] * gf @ t
                flux = flux + (corr if ncomp > 1 else float(corr[0]))
            acc = acc + s * flux
        else:
            patch = next(p for p in mesh.patches
                         if p.start <= f < p.start + p.count)
            bc = bcs[patch.name]
            if bc.kind == "dirichlet":
                vals = bc.face_values(patch.count, ncomp)
                vb = np.array(vals[f - patch.start]) if ncomp > 1 else \
                    float(np.asarray(vals).reshape(-1)[f - patch.start])
                acc = acc + s * mu_face[f] * g * (vb - values[mesh.owner[f]])
            elif bc.kind == "neumann":
                grad = bc.face_values(patch.count, ncomp)
                gb = np.array(grad[f - patch.start]) if ncomp > 1 else \
                    float(np.asarray(grad).reshape(-1)[f - patch.start])
                acc = acc + s * mu_face[f] * np.linalg.norm(
                    mesh.face_areas[f]) * gb
            # zero-gradient: no flux
    return acc


# -- reduced-operator entry oracles -------------------------------------------


def w_dot(weights, a, b):
    return float(np.sum(np.asarray(weights) * np.asarray(a).ravel()
                        * np.asarray(b).ravel()))


def mass_entry(mesh, fi, fj, weights):
    return w_dot(weights, fi, fj)


def laplacian_entry(mesh, fi, fj, bcs):
    """(f_i, lap f_j): volume weights cancel against the integrated sums."""
    total = 0.0
    for c in range(mesh.n_cells):
        total += float(np.dot(np.atleast_1d(fi[c]),
                              np.atleast_1d(laplacian(mesh, fj, bcs, 1.0, c))))
    return total


def gradient_coupling_entry(mesh, fi, pj, bcs_p, weights_scalar):
    total = 0.0
    for c in range(mesh.n_cells):
        total += weights_scalar[c] * float(
            np.dot(fi[c], gradient(mesh, pj, bcs_p, c)))
    return total


def div_coupling_entry(mesh, pi, fj, bcs_v):
    total = 0.0
    for c in range(mesh.n_cells):
        acc = 0.0
        for f, s in cell_faces(mesh, c):
            acc += s * vector_face_flux(mesh, fj, bcs_v, f)
        total += pi[c] * acc
    return total


def convection_tensor_entry(mesh, fi, fj, fk, bcs_v):
    """(f_i, div(f_j x f_k)) with the convecting flux interpolated from f_k."""
    flux = np.array([vector_face_flux(mesh, fk, bcs_v, f)
                     for f in range(mesh.n_faces)])
    total = 0.0
    for c in range(mesh.n_cells):
        total += float(np.dot(fi[c], convection(mesh, fj, bcs_v, flux, c)))
    return total


def ppe_laplacian_entry(mesh, pi, pj, bcs_p, weights_scalar):
    total = 0.0
    for c in range(mesh.n_cells):
        total += weights_scalar[c] * float(
            np.dot(gradient(mesh, pi, bcs_p, c),
                   gradient(mesh, pj, bcs_p, c)))
    return total


def vector_gradient(mesh, values, bcs, c):
    """g[comp, d] = d values_comp / d x_d by the Green-Gauss rule."""
    acc = np.zeros((3, 3))
    for f, s in cell_faces(mesh, c):
        fv = np.asarray(face_value(mesh, values, bcs, f), dtype=float)
        acc += s * np.outer(fv, mesh.face_areas[f])
    return acc / mesh.cell_volumes[c]


def curl(mesh, values, bcs, c):
    g = vector_gradient(mesh, values, bcs, c)
    return np.array([g[2, 1] - g[1, 2], g[0, 2] - g[2, 0], g[1, 0] - g[0, 1]])


def ppe_curl_entry(mesh, pi, fj, bcs_p, bcs_v):
    total = 0.0
    for f in range(mesh.n_internal, mesh.n_faces):
        o = mesh.owner[f]
        area = np.linalg.norm(mesh.face_areas[f])
        nrm = mesh.face_areas[f] / area
        gp = gradient(mesh, pi, bcs_p, o)
        total += area * float(np.dot(np.cross(nrm, gp),
                                     curl(mesh, fj, bcs_v, o)))
    return total


def ppe_flux_entry(mesh, pi, fj, bcs_p, bcs_v):
    total = 0.0
    for f in range(mesh.n_internal, mesh.n_faces):
        pf = face_value(mesh, pi, bcs_p, f)
        vf = face_value(mesh, fj, bcs_v, f)
        total += float(pf) * float(np.dot(vf, mesh.face_areas[f]))
    return total


def ppe_conv_tensor_entry(mesh, pi, fj, fk, bcs_p, bcs_v, weights_scalar):
    flux = np.array([vector_face_flux(mesh, fk, bcs_v, f)
                     for f in range(mesh.n_faces)])
    total = 0.0
    for c in range(mesh.n_cells):
        conv = convection(mesh, fj, bcs_v, flux, c) / mesh.cell_volumes[c]
        total += weights_scalar[c] * float(
            np.dot(gradient(mesh, pi, bcs_p, c), conv))
    return total
