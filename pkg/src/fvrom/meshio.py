"""Text mesh format reader/writer.

Whitespace-delimited UTF-8, '#' starts a comment anywhere on a line.
Sections, in order:

    DIMENSION d
    CELLS n
    POINTS n          followed by n lines: index x y z
    FACES n           followed by n lines: index point-count point-indices...
    OWNER n           followed by n lines: index cell
    NEIGHBOUR n       followed by n lines: index cell   (internal faces only)
    PATCHES n         followed by n lines: name kind first-face face-count

Floats are written with shortest round-trip representation, so
load(save(mesh)) reproduces coordinates exactly.
"""

from __future__ import annotations

import numpy as np

from .mesh import Mesh, MeshValidationError, Patch


class MeshFormatError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def save_mesh(mesh: Mesh, path):
    lines = ["# fvrom mesh"]
    lines.append(f"DIMENSION {mesh.dimension}")
    lines.append(f"CELLS {mesh.n_cells}")
    lines.append(f"POINTS {len(mesh.points)}")
    for i, p in enumerate(mesh.points):
        lines.append(f"{i} {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}")
    lines.append(f"FACES {mesh.n_faces}")
    for f in range(mesh.n_faces):
        nodes = " ".join(str(n) for n in mesh.face_points(f))
        lines.append(f"{f} {mesh.face_ptr[f + 1] - mesh.face_ptr[f]} {nodes}")
    lines.append(f"OWNER {mesh.n_faces}")
    for f, c in enumerate(mesh.owner):
        lines.append(f"{f} {c}")
    lines.append(f"NEIGHBOUR {mesh.n_internal}")
    for f, c in enumerate(mesh.neighbour):
        lines.append(f"{f} {c}")
    lines.append(f"PATCHES {len(mesh.patches)}")
    for p in mesh.patches:
        lines.append(f"{p.name} {p.kind} {p.start} {p.count}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


class _Tokens:
    """Token stream that remembers source line numbers."""

    def __init__(self, path):
        self.items: list[tuple[str, int]] = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                text = raw.split("#", 1)[0]
                for tok in text.split():
                    self.items.append((tok, lineno))
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.items):
            last = self.items[-1][1] if self.items else 0
            raise MeshFormatError(f"unexpected end of file, expected {what}", last)
        tok, line = self.items[self.pos]
        self.pos += 1
        self.line = line
        return tok

    def next_int(self, what):
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise MeshFormatError(f"expected integer {what}, got '{tok}'", self.line)

    def next_float(self, what):
        tok = self.next(what)
        try:
            return float(tok)
        except ValueError:
            raise MeshFormatError(f"expected number {what}, got '{tok}'", self.line)

    def expect(self, keyword):
        tok = self.next(f"'{keyword}'")
        if tok != keyword:
            raise MeshFormatError(f"expected section '{keyword}', got '{tok}'", self.line)


def load_mesh(path) -> Mesh:
    """Parse and validate a mesh file; raises MeshFormatError or
    MeshValidationError with the failing detail."""
    tk = _Tokens(path)
    tk.expect("DIMENSION")
    dim = tk.next_int("dimension")
    if dim not in (2, 3):
        raise MeshFormatError(f"dimension must be 2 or 3, got {dim}", tk.line)
    tk.expect("CELLS")
    n_cells = tk.next_int("cell count")
    tk.expect("POINTS")
    n_points = tk.next_int("point count")
    points = np.zeros((n_points, 3))
    for i in range(n_points):
        idx = tk.next_int("point index")
        if idx != i:
            raise MeshFormatError(f"point index {idx}, expected {i}", tk.line)
        points[i] = [tk.next_float("x"), tk.next_float("y"), tk.next_float("z")]
    tk.expect("FACES")
    n_faces = tk.next_int("face count")
    face_nodes, face_ptr = [], [0]
    for f in range(n_faces):
        idx = tk.next_int("face index")
        if idx != f:
            raise MeshFormatError(f"face index {idx}, expected {f}", tk.line)
        cnt = tk.next_int("point count")
        if cnt < 2:
            raise MeshFormatError("face needs at least 2 points", tk.line)
        for _ in range(cnt):
            face_nodes.append(tk.next_int("point index"))
        face_ptr.append(len(face_nodes))
    tk.expect("OWNER")
    if tk.next_int("owner count") != n_faces:
        raise MeshFormatError("OWNER count must equal face count", tk.line)
    owner = np.zeros(n_faces, dtype=np.int64)
    for f in range(n_faces):
        idx = tk.next_int("face index")
        if idx != f:
            raise MeshFormatError(f"owner face index {idx}, expected {f}", tk.line)
        owner[f] = tk.next_int("owner cell")
    tk.expect("NEIGHBOUR")
    n_int = tk.next_int("neighbour count")
    if n_int > n_faces:
        raise MeshFormatError("more internal faces than faces", tk.line)
    neighbour = np.zeros(n_int, dtype=np.int64)
    for f in range(n_int):
        idx = tk.next_int("face index")
        if idx != f:
            raise MeshFormatError(f"neighbour face index {idx}, expected {f}", tk.line)
        neighbour[f] = tk.next_int("neighbour cell")
    tk.expect("PATCHES")
    n_patches = tk.next_int("patch count")
    patches = []
    for _ in range(n_patches):
        name = tk.next("patch name")
        kind = tk.next("patch kind")
        start = tk.next_int("patch first face")
        count = tk.next_int("patch face count")
        patches.append(Patch(name, kind, start, count))
    if tk.pos != len(tk.items):
        tok, line = tk.items[tk.pos]
        raise MeshFormatError(f"trailing content '{tok}'", line)

    if n_cells <= 0:
        raise MeshValidationError("cell count must be positive")
    if owner.max(initial=-1) >= n_cells or neighbour.max(initial=-1) >= n_cells:
        raise MeshValidationError("face references cell index out of range")
    return Mesh(points, face_nodes, face_ptr, owner, neighbour, patches,
                dimension=dim, n_cells=n_cells)
