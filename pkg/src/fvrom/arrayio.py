"""Deterministic single-file container for named arrays plus metadata.

Layout: an 8-byte magic, an 8-digit header length, a canonical JSON header
(sorted keys, no whitespace variance) listing each array's dtype, shape,
offset and sha256, followed by the raw C-order bytes. Writing the same
content twice produces byte-identical files, which the pipeline manifests
rely on.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

MAGIC = b"FVROMAR1"


class ArchiveError(ValueError):
    pass


def save_archive(path, arrays: dict, meta: dict | None = None):
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        blob = arr.tobytes()
        entries.append({
            "name": name,
            "dtype": arr.dtype.str,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(blob),
            "sha256": hashlib.sha256(blob).hexdigest(),
        })
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"arrays": entries, "meta": meta or {}},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(f"{len(header):08d}".encode("ascii"))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_archive(path):
    """Returns (arrays dict, meta dict); verifies per-array checksums."""
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ArchiveError(f"{path}: not an fvrom archive")
        hlen = int(fh.read(8).decode("ascii"))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    arrays = {}
    for e in header["arrays"]:
        blob = payload[e["offset"]:e["offset"] + e["nbytes"]]
        if hashlib.sha256(blob).hexdigest() != e["sha256"]:
            raise ArchiveError(f"{path}: checksum mismatch for '{e['name']}'")
        arrays[e["name"]] = np.frombuffer(blob, dtype=e["dtype"]).reshape(
            e["shape"]).copy()
    return arrays, header["meta"]


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
