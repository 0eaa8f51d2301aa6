"""Snapshot storage: homogenized solution columns with sampling metadata."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arrayio import load_archive, save_archive

FIELD_NAMES = ("velocity", "filtered_velocity", "pressure", "filter_pressure")
VECTOR_FIELDS = ("velocity", "filtered_velocity")


@dataclass
class SnapshotSet:
    """Column-per-sample matrices for the four solution fields.

    Vector fields are stored flattened (cell-major, 3 components per cell).
    `params` records the filter radius of the run each column came from,
    `amplitudes` the inflow amplitude used to homogenize it.
    """

    fields: dict
    times: np.ndarray
    params: np.ndarray
    amplitudes: np.ndarray
    scalar_weights: np.ndarray   # cell volumes
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ns = {name: m.shape[1] for name, m in self.fields.items()}
        if len(set(ns.values())) > 1:
            raise ValueError(f"inconsistent column counts: {ns}")
        self.n_samples = next(iter(ns.values())) if ns else 0
        for arr_name in ("times", "params", "amplitudes"):
            if len(getattr(self, arr_name)) != self.n_samples:
                raise ValueError(f"{arr_name} length != column count")

    @property
    def vector_weights(self) -> np.ndarray:
        return np.repeat(self.scalar_weights, 3)

    def weights_for(self, name) -> np.ndarray:
        return self.vector_weights if name in VECTOR_FIELDS else self.scalar_weights

    def save(self, path):
        arrays = {f"field_{k}": v for k, v in self.fields.items()}
        arrays.update(times=self.times, params=self.params,
                      amplitudes=self.amplitudes,
                      scalar_weights=self.scalar_weights)
        save_archive(path, arrays, meta=self.meta)

    @classmethod
    def load(cls, path) -> "SnapshotSet":
        arrays, meta = load_archive(path)
        fields = {k[len("field_"):]: v for k, v in arrays.items()
                  if k.startswith("field_")}
        return cls(fields, arrays["times"], arrays["params"],
                   arrays["amplitudes"], arrays["scalar_weights"], meta)


def pool_snapshots(sets) -> SnapshotSet:
    """Concatenate snapshot sets (e.g. one per training parameter)."""
    sets = list(sets)
    base = sets[0]
    fields = {k: np.concatenate([s.fields[k] for s in sets], axis=1)
              for k in base.fields}
    meta = dict(base.meta)
    if len(sets) > 1:
        meta["pooled_from"] = len(sets)
    return SnapshotSet(
        fields,
        np.concatenate([s.times for s in sets]),
        np.concatenate([s.params for s in sets]),
        np.concatenate([s.amplitudes for s in sets]),
        base.scalar_weights, meta)
