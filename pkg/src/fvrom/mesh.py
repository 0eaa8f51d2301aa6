"""Finite-volume mesh data model, channel/cylinder generators and quality checks.

A mesh is a set of polygonal (2D) or polyhedral (3D) cells described by faces.
Faces are ordered internal-first; each internal face has an owner and a
neighbour cell, each boundary face only an owner and a patch. Face area
vectors point from owner to neighbour (owner has the lower cell index) and
outward on the boundary. 2D meshes use edge faces with a unit out-of-plane
depth folded into areas and volumes, so every downstream operator works on
3-vectors regardless of dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PATCH_KINDS = ("inlet", "outlet", "wall", "cylinder")


class MeshValidationError(ValueError):
    """A constructed or loaded mesh violates a structural invariant."""


@dataclass(frozen=True)
class Patch:
    name: str
    kind: str
    start: int
    count: int

    @property
    def faces(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.count)


@dataclass
class ChannelGeometry:
    """Rectangular channel with an interior circular cylinder."""

    length: float
    height: float
    cylinder_center: tuple[float, float]
    cylinder_radius: float
    depth: float | None = None  # None: 2D channel

    def validate(self):
        if self.length <= 0 or self.height <= 0:
            raise ValueError("channel sides must be positive")
        if self.depth is not None and self.depth <= 0:
            raise ValueError("channel depth must be positive")
        if self.cylinder_radius <= 0:
            raise ValueError("cylinder radius must be positive")
        cx, cy = self.cylinder_center
        r = self.cylinder_radius
        if cx - r <= 0 or cx + r >= self.length or cy - r <= 0 or cy + r >= self.height:
            raise ValueError("cylinder must lie strictly inside the channel")


@dataclass
class QualityReport:
    max_non_orthogonality: float  # degrees
    avg_non_orthogonality: float
    max_skewness: float
    max_aspect_ratio: float
    cell_count: int

    def __str__(self):
        return (
            f"cells: {self.cell_count}\n"
            f"non-orthogonality max/avg: {self.max_non_orthogonality:.3f} / "
            f"{self.avg_non_orthogonality:.3f} deg\n"
            f"max skewness: {self.max_skewness:.4f}\n"
            f"max aspect ratio: {self.max_aspect_ratio:.3f}"
        )


class Mesh:
    """Immutable cell/face mesh with precomputed geometry.

    Parameters
    ----------
    points : (n_points, 3) float array. 2D meshes keep z = 0.
    face_nodes, face_ptr : CSR-style face->point connectivity. 2D faces are
        point pairs (edges), 3D faces are planar polygons ordered so that the
        right-hand normal points owner->neighbour (outward on the boundary).
    owner : (n_faces,) cell index per face.
    neighbour : (n_internal,) cell index per internal face; internal faces
        come first in the face numbering.
    patches : boundary patches partitioning faces [n_internal, n_faces).
    dimension : 2 or 3.
    """

    def __init__(self, points, face_nodes, face_ptr, owner, neighbour, patches,
                 dimension, n_cells=None, validate=True):
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.face_nodes = np.asarray(face_nodes, dtype=np.int64)
        self.face_ptr = np.asarray(face_ptr, dtype=np.int64)
        self.owner = np.asarray(owner, dtype=np.int64)
        self.neighbour = np.asarray(neighbour, dtype=np.int64)
        self.patches = list(patches)
        self.dimension = int(dimension)
        self.n_faces = len(self.owner)
        self.n_internal = len(self.neighbour)
        if n_cells is None:
            n_cells = int(max(self.owner.max(initial=-1),
                              self.neighbour.max(initial=-1))) + 1
        self.n_cells = int(n_cells)
        self._compute_geometry()
        if validate:
            self._validate()
        self._cache: dict = {}
        for arr in (self.points, self.face_nodes, self.face_ptr, self.owner,
                    self.neighbour, self.face_centers, self.face_areas,
                    self.face_area_mags, self.cell_centers, self.cell_volumes):
            arr.setflags(write=False)

    # -- geometry ----------------------------------------------------------

    def face_points(self, f) -> np.ndarray:
        return self.face_nodes[self.face_ptr[f]:self.face_ptr[f + 1]]

    def _compute_geometry(self):
        nf = self.n_faces
        centers = np.zeros((nf, 3))
        areas = np.zeros((nf, 3))
        if self.dimension == 2:
            a = self.points[self.face_nodes[self.face_ptr[:-1]]]
            b = self.points[self.face_nodes[self.face_ptr[:-1] + 1]]
            centers[:] = 0.5 * (a + b)
            d = b - a
            # edge rotated -90 deg: unit-depth area vector
            areas[:, 0] = d[:, 1]
            areas[:, 1] = -d[:, 0]
        else:
            for f in range(nf):
                pts = self.points[self.face_points(f)]
                centers[f], areas[f] = _polygon_center_area(pts)
        self.face_centers = centers
        self.face_areas = areas
        self.face_area_mags = np.linalg.norm(areas, axis=1)

        vols = np.zeros(self.n_cells)
        ctrs = np.zeros((self.n_cells, 3))
        # reference point per cell: average of its face centers
        ref = np.zeros((self.n_cells, 3))
        nfc = np.zeros(self.n_cells)
        np.add.at(ref, self.owner, centers)
        np.add.at(nfc, self.owner, 1.0)
        np.add.at(ref, self.neighbour, centers[:self.n_internal])
        np.add.at(nfc, self.neighbour, 1.0)
        ref /= np.maximum(nfc, 1.0)[:, None]
        dim = float(self.dimension)
        for sign, cells, faces in (
            (1.0, self.owner, np.arange(nf)),
            (-1.0, self.neighbour, np.arange(self.n_internal)),
        ):
            rel = centers[faces] - ref[cells]
            pyr = sign * np.einsum("ij,ij->i", rel, areas[faces]) / dim
            # pyramid centroid sits dim/(dim+1) of the way to the face center
            cpyr = ref[cells] + (dim / (dim + 1.0)) * rel
            np.add.at(vols, cells, pyr)
            np.add.at(ctrs, cells, pyr[:, None] * cpyr)
        with np.errstate(invalid="ignore", divide="ignore"):
            ctrs = np.where(vols[:, None] > 0, ctrs / vols[:, None], ref)
        self.cell_volumes = vols
        self.cell_centers = ctrs

    def _validate(self):
        nf, ni, nc = self.n_faces, self.n_internal, self.n_cells
        if np.any(self.owner < 0) or np.any(self.owner >= nc):
            raise MeshValidationError("owner cell index out of range")
        if ni and (np.any(self.neighbour < 0) or np.any(self.neighbour >= nc)):
            raise MeshValidationError("neighbour cell index out of range")
        if ni and np.any(self.owner[:ni] == self.neighbour):
            raise MeshValidationError("internal face with owner == neighbour")
        if np.any(self.face_nodes < 0) or np.any(self.face_nodes >= len(self.points)):
            raise MeshValidationError("face references point index out of range")
        covered = np.zeros(nf, dtype=int)
        for p in self.patches:
            if p.kind not in PATCH_KINDS:
                raise MeshValidationError(f"unknown patch kind '{p.kind}'")
            if p.start < ni or p.start + p.count > nf:
                raise MeshValidationError(f"patch '{p.name}' face range invalid")
            covered[p.start:p.start + p.count] += 1
        if np.any(covered[ni:] != 1):
            raise MeshValidationError("boundary faces not partitioned by patches")
        if np.any(covered[:ni] != 0):
            raise MeshValidationError("patch overlaps internal faces")
        if np.any(self.cell_volumes <= 0):
            raise MeshValidationError("non-positive cell volume")
        # orientation: owner->neighbour internally, outward on the boundary
        d_int = self.cell_centers[self.neighbour] - self.cell_centers[self.owner[:ni]]
        if ni and np.any(np.einsum("ij,ij->i", d_int, self.face_areas[:ni]) <= 0):
            raise MeshValidationError("internal face area vector not owner->neighbour")
        d_bnd = self.face_centers[ni:] - self.cell_centers[self.owner[ni:]]
        if nf > ni and np.any(np.einsum("ij,ij->i", d_bnd, self.face_areas[ni:]) <= 0):
            raise MeshValidationError("boundary face area vector not outward")
        closure = self.cell_closure_residual()
        if np.any(closure > 1e-12):
            raise MeshValidationError("cell surface vectors do not close")

    def cell_closure_residual(self) -> np.ndarray:
        """Per cell: |sum of outward face area vectors| / (sum of face areas)."""
        acc = np.zeros((self.n_cells, 3))
        tot = np.zeros(self.n_cells)
        np.add.at(acc, self.owner, self.face_areas)
        np.add.at(tot, self.owner, self.face_area_mags)
        np.add.at(acc, self.neighbour, -self.face_areas[:self.n_internal])
        np.add.at(tot, self.neighbour, self.face_area_mags[:self.n_internal])
        return np.linalg.norm(acc, axis=1) / tot

    # -- lookups -----------------------------------------------------------

    def patch(self, name) -> Patch:
        for p in self.patches:
            if p.name == name:
                return p
        raise KeyError(f"mesh has no patch named '{name}'")

    def patch_of_kind(self, kind) -> list[Patch]:
        return [p for p in self.patches if p.kind == kind]

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.arange(self.n_internal, self.n_faces)

    def min_spacing(self) -> float:
        """Smallest owner-neighbour centroid distance (h_min proxy)."""
        if self.n_internal == 0:
            return float(self.cell_volumes.min() ** (1.0 / self.dimension))
        d = (self.cell_centers[self.neighbour]
             - self.cell_centers[self.owner[:self.n_internal]])
        return float(np.linalg.norm(d, axis=1).min())

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            self.dimension == other.dimension
            and self.n_cells == other.n_cells
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.face_nodes, other.face_nodes)
            and np.array_equal(self.face_ptr, other.face_ptr)
            and np.array_equal(self.owner, other.owner)
            and np.array_equal(self.neighbour, other.neighbour)
            and self.patches == other.patches
        )


def _polygon_center_area(pts: np.ndarray):
    """Area-weighted centroid and area vector of a planar polygon (fan rule)."""
    mid = pts.mean(axis=0)
    ctr = np.zeros(3)
    area = np.zeros(3)
    total = 0.0
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        tri_area = 0.5 * np.cross(a - mid, b - mid)
        mag = np.linalg.norm(tri_area)
        area += tri_area
        ctr += mag * (a + b + mid) / 3.0
        total += mag
    if total > 0:
        ctr /= total
    else:
        ctr = mid
    return ctr, area


# -- structured generators --------------------------------------------------


def generate_channel_mesh(length, height, target_h, depth=None) -> Mesh:
    """Uniform Cartesian channel mesh without an obstacle.

    2D when depth is None; inlet at x=0, outlet at x=length, remaining
    boundary faces on the 'wall' patch.
    """
    return _generate_box(length, height, depth, target_h, hole=None)


def generate_channel_cylinder_mesh(geom: ChannelGeometry, target_h) -> Mesh:
    """Channel mesh with the cylinder carved out by stair-step cell deletion.

    Cells whose center falls inside the cylinder are removed; faces exposed
    by the removal form the 'cylinder' patch. Deterministic for fixed inputs.
    """
    geom.validate()
    if target_h > geom.cylinder_radius:
        raise ValueError("target_h must not exceed the cylinder radius")
    cx, cy = geom.cylinder_center
    r = geom.cylinder_radius

    def hole(x, y):
        return (x - cx) ** 2 + (y - cy) ** 2 < r ** 2

    return _generate_box(geom.length, geom.height, geom.depth, target_h, hole=hole)


def _generate_box(length, height, depth, target_h, hole):
    if target_h <= 0:
        raise ValueError("target_h must be positive")
    nx = max(1, round(length / target_h))
    ny = max(1, round(height / target_h))
    nz = max(1, round(depth / target_h)) if depth is not None else 1
    dim = 2 if depth is None else 3
    hx, hy = length / nx, height / ny
    hz = (depth / nz) if depth is not None else 1.0

    active = np.ones((nx, ny, nz), dtype=bool)
    if hole is not None:
        xc = (np.arange(nx) + 0.5) * hx
        yc = (np.arange(ny) + 0.5) * hy
        active &= ~hole(xc[:, None], yc[None, :])[:, :, None]
        if not active.any():
            raise ValueError("obstacle removes every cell")
    cell_id = -np.ones((nx, ny, nz), dtype=np.int64)
    cell_id[active] = np.arange(int(active.sum()))

    nz1 = (nz + 1) if dim == 3 else 1

    def pid(i, j, k):
        return (i * (ny + 1) + j) * nz1 + k

    # quad corner orderings per axis giving +axis right-hand normals
    def face_quad(axis, i, j, k):
        if axis == 0:
            return [pid(i, j, k), pid(i, j + 1, k), pid(i, j + 1, k + 1), pid(i, j, k + 1)]
        if axis == 1:
            return [pid(i, j, k), pid(i, j, k + 1), pid(i + 1, j, k + 1), pid(i + 1, j, k)]
        return [pid(i, j, k), pid(i + 1, j, k), pid(i + 1, j + 1, k), pid(i, j + 1, k)]

    def face_edge(axis, i, j):
        # 2D: edges with +axis normals (z indices unused)
        if axis == 0:
            return [pid(i, j, 0), pid(i, j + 1, 0)]
        return [pid(i + 1, j, 0), pid(i, j, 0)]

    def face_nodes_for(axis, i, j, k, flip):
        nodes = face_edge(axis, i, j) if dim == 2 else face_quad(axis, i, j, k)
        return nodes[::-1] if flip else nodes

    internal, boundary = [], {"inlet": [], "outlet": [], "wall": [], "cylinder": []}
    axes = (0, 1) if dim == 2 else (0, 1, 2)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not active[i, j, k]:
                    continue
                me = cell_id[i, j, k]
                for axis in axes:
                    for side in (-1, 1):
                        ii, jj, kk = i, j, k
                        if axis == 0:
                            ii += side
                        elif axis == 1:
                            jj += side
                        else:
                            kk += side
                        fi, fj, fk = (i + (side > 0) if axis == 0 else i,
                                      j + (side > 0) if axis == 1 else j,
                                      k + (side > 0) if axis == 2 else k)
                        inside = 0 <= ii < nx and 0 <= jj < ny and 0 <= kk < nz
                        if inside and active[ii, jj, kk]:
                            other = cell_id[ii, jj, kk]
                            if other > me:  # emit once, owner = lower index
                                internal.append((me, other, axis, fi, fj, fk, False))
                            continue
                        nodes_flip = side < 0
                        if inside:  # neighbour removed by the obstacle
                            boundary["cylinder"].append((me, axis, fi, fj, fk, nodes_flip))
                        elif axis == 0 and side < 0:
                            boundary["inlet"].append((me, axis, fi, fj, fk, nodes_flip))
                        elif axis == 0 and side > 0:
                            boundary["outlet"].append((me, axis, fi, fj, fk, nodes_flip))
                        else:
                            boundary["wall"].append((me, axis, fi, fj, fk, nodes_flip))

    face_nodes, face_ptr, owner, neighbour = [], [0], [], []

    def push(nodes, own):
        face_nodes.extend(nodes)
        face_ptr.append(len(face_nodes))
        owner.append(own)

    for me, other, axis, fi, fj, fk, flip in internal:
        push(face_nodes_for(axis, fi, fj, fk, flip), me)
        neighbour.append(other)
    patches = []
    for name in ("inlet", "outlet", "wall", "cylinder"):
        faces = boundary[name]
        if not faces:
            continue
        patches.append(Patch(name, name, len(owner), len(faces)))
        for me, axis, fi, fj, fk, flip in faces:
            push(face_nodes_for(axis, fi, fj, fk, flip), me)

    xs = np.arange(nx + 1) * hx
    ys = np.arange(ny + 1) * hy
    zs = np.arange(nz + 1) * hz if dim == 3 else np.zeros(1)
    pts = np.zeros(((nx + 1) * (ny + 1) * (nz + 1), 3))
    grid = np.stack(np.meshgrid(xs, ys, zs if dim == 3 else [0.0], indexing="ij"), axis=-1)
    pts = grid.reshape(-1, 3)

    # drop unused points, renumber
    face_nodes = np.asarray(face_nodes, dtype=np.int64)
    used = np.unique(face_nodes)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    mesh = Mesh(pts[used], remap[face_nodes], np.asarray(face_ptr),
                np.asarray(owner), np.asarray(neighbour), patches,
                dimension=dim, n_cells=int(active.sum()))
    return mesh


# -- quality ----------------------------------------------------------------


def mesh_quality(mesh: Mesh) -> QualityReport:
    """OpenFOAM-style quality measures.

    non-orthogonality: angle between the internal face area vector and the
        owner->neighbour centroid vector.
    skewness: offset between the face center and the intersection of the
        owner->neighbour line with the face plane, over the centroid distance.
    aspect ratio: per cell, largest over smallest bounding-box extent taken
        over the active coordinate directions.
    """
    ni = mesh.n_internal
    if ni:
        d = mesh.cell_centers[mesh.neighbour] - mesh.cell_centers[mesh.owner[:ni]]
        a = mesh.face_areas[:ni]
        cosang = np.einsum("ij,ij->i", d, a) / (
            np.linalg.norm(d, axis=1) * mesh.face_area_mags[:ni])
        cosang = np.clip(cosang, -1.0, 1.0)
        ang = np.degrees(np.arccos(cosang))
        # intersection of owner->neighbour line with the face plane
        co = mesh.cell_centers[mesh.owner[:ni]]
        nrm = a / mesh.face_area_mags[:ni][:, None]
        t = np.einsum("ij,ij->i", mesh.face_centers[:ni] - co, nrm) / np.einsum(
            "ij,ij->i", d, nrm)
        xi = co + t[:, None] * d
        skew = np.linalg.norm(mesh.face_centers[:ni] - xi, axis=1) / np.linalg.norm(
            d, axis=1)
        max_no, avg_no, max_skew = float(ang.max()), float(ang.mean()), float(skew.max())
    else:
        max_no = avg_no = max_skew = 0.0

    ndim = mesh.dimension
    lo = np.full((mesh.n_cells, 3), np.inf)
    hi = np.full((mesh.n_cells, 3), -np.inf)
    for f in range(mesh.n_faces):
        pts = mesh.points[mesh.face_points(f)]
        c = mesh.owner[f]
        lo[c] = np.minimum(lo[c], pts.min(axis=0))
        hi[c] = np.maximum(hi[c], pts.max(axis=0))
        if f < ni:
            c = mesh.neighbour[f]
            lo[c] = np.minimum(lo[c], pts.min(axis=0))
            hi[c] = np.maximum(hi[c], pts.max(axis=0))
    ext = (hi - lo)[:, :ndim]
    aspect = ext.max(axis=1) / ext.min(axis=1)
    return QualityReport(max_no, avg_no, max_skew, float(aspect.max()), mesh.n_cells)
